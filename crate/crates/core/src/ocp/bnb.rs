use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::backend::{BackendSolution, BackendStatus, ConvexBackend};
use super::build::RiskAverseProblem;
use super::OcpError;
use crate::model::ControlInput;

/// Default relative optimality gap.
pub const DEFAULT_GAP: f64 = 1e-6;
/// Largest registry accepted by [`enumerate_binaries_solve`].
pub const MAX_ENUMERATED_BINARIES: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveOptions {
    #[serde(default = "default_gap")]
    pub gap_tolerance: f64,
    #[serde(default = "default_integrality")]
    pub integrality_tolerance: f64,
    #[serde(default)]
    pub node_limit: Option<usize>,
    #[serde(default)]
    pub time_limit_secs: Option<f64>,
    /// Preferred value per registry entry, tried as an initial incumbent.
    #[serde(skip)]
    pub warm_start: Option<Vec<Option<f64>>>,
}

fn default_gap() -> f64 {
    DEFAULT_GAP
}

fn default_integrality() -> f64 {
    1e-6
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            gap_tolerance: DEFAULT_GAP,
            integrality_tolerance: default_integrality(),
            node_limit: None,
            time_limit_secs: None,
            warm_start: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    /// Stopped once the gap fell under a tolerance looser than the default.
    GapLimit,
    NodeLimit,
    TimeLimit,
    Failed(String),
}

impl SolveStatus {
    /// Whether the report carries a feasible point.
    pub fn has_solution(&self) -> bool {
        matches!(
            self,
            SolveStatus::Optimal | SolveStatus::GapLimit | SolveStatus::NodeLimit | SolveStatus::TimeLimit
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub status: SolveStatus,
    /// Incumbent objective (`+∞` when none was found).
    pub objective: f64,
    /// Proven lower bound.
    pub bound: f64,
    pub gap: f64,
    pub x: Vec<f64>,
    /// Incumbent values of the binary registry, rounded.
    pub binaries: Vec<f64>,
    /// Root input `v^(0)` of the incumbent.
    pub decision: Option<ControlInput>,
    pub nodes: usize,
    pub wall_time: Duration,
}

impl SolveReport {
    fn empty(status: SolveStatus, nodes: usize, start: Instant) -> Self {
        Self {
            status,
            objective: f64::INFINITY,
            bound: f64::INFINITY,
            gap: f64::INFINITY,
            x: Vec::new(),
            binaries: Vec::new(),
            decision: None,
            nodes,
            wall_time: start.elapsed(),
        }
    }
}

pub fn relative_gap(upper: f64, lower: f64) -> f64 {
    if !upper.is_finite() {
        return f64::INFINITY;
    }
    ((upper - lower) / upper.abs().max(1.0)).max(0.0)
}

struct Incumbent {
    objective: f64,
    x: Vec<f64>,
    binaries: Vec<f64>,
}

fn better(obj: f64, bins: &[f64], inc: &Option<Incumbent>) -> bool {
    match inc {
        None => true,
        Some(cur) => {
            let tie = 1e-9 * cur.objective.abs().max(1.0);
            if obj < cur.objective - tie {
                true
            } else if obj <= cur.objective + tie {
                bins.iter()
                    .zip(&cur.binaries)
                    .find(|(a, b)| a != b)
                    .is_some_and(|(a, b)| a < b)
            } else {
                false
            }
        }
    }
}

/// Open subproblem; `fixed[k]` pins registry entry `k`.
struct Node {
    bound: f64,
    seq: usize,
    fixed: Vec<Option<f64>>,
    x: Vec<f64>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // Max-heap: lowest bound first, then oldest.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

struct Search<'a> {
    problem: &'a RiskAverseProblem,
    backend: &'a dyn ConvexBackend,
    solves: usize,
}

impl Search<'_> {
    fn relax(&mut self, fixed: &[Option<f64>]) -> BackendSolution {
        self.solves += 1;
        let mut p = self.problem.program.clone();
        for (k, f) in fixed.iter().enumerate() {
            if let Some(v) = f {
                let j = self.problem.binaries[k];
                p.lower[j] = *v;
                p.upper[j] = *v;
            }
        }
        self.backend.solve(&p)
    }

    fn relax_pair(&mut self, a: &[Option<f64>], b: &[Option<f64>]) -> (BackendSolution, BackendSolution) {
        let (problem, backend) = (self.problem, self.backend);
        let run = |fixed: &[Option<f64>]| {
            let mut s = Search {
                problem,
                backend,
                solves: 0,
            };
            s.relax(fixed)
        };
        self.solves += 2;
        rayon::join(|| run(a), || run(b))
    }

    fn binaries_of(&self, x: &[f64]) -> Vec<f64> {
        self.problem.binaries.iter().map(|&j| x[j]).collect()
    }

    /// Solves with every binary pinned to `values` and offers the result.
    fn try_assignment(&mut self, values: Vec<f64>, inc: &mut Option<Incumbent>) -> bool {
        let fixed: Vec<Option<f64>> = values.iter().map(|&v| Some(v)).collect();
        let mut s = self.relax(&fixed);
        if s.status != BackendStatus::Optimal {
            return false;
        }
        for (&j, &v) in self.problem.binaries.iter().zip(&values) {
            s.x[j] = v;
        }
        if better(s.objective, &values, inc) {
            *inc = Some(Incumbent {
                objective: s.objective,
                x: s.x,
                binaries: values,
            });
        }
        true
    }
}

impl Search<'_> {
    /// Rounds switch states one stage at a time, re-solving in between, and
    /// completes the renewable modes from the final setpoints.
    fn dive(
        &mut self,
        start: &[Option<f64>],
        x: &[f64],
        stages: &[usize],
        modes: &[bool],
        inc: &mut Option<Incumbent>,
    ) {
        let mut fixed = start.to_vec();
        let mut x = x.to_vec();
        let last = stages.iter().copied().max().unwrap_or(0);
        for s in 0..=last {
            let vals = self.binaries_of(&x);
            let open: Vec<usize> = (0..fixed.len())
                .filter(|&k| !modes[k] && stages[k] == s && fixed[k].is_none())
                .collect();
            if open.is_empty() {
                continue;
            }
            let rules: [&dyn Fn(f64) -> f64; 3] = [
                &round01,
                &|v| if v > 1e-6 { 1.0 } else { 0.0 },
                &|_| 1.0,
            ];
            let mut next = None;
            for rule in rules {
                let mut trial = fixed.clone();
                for &k in &open {
                    trial[k] = Some(rule(vals[k]));
                }
                let sol = self.relax(&trial);
                if sol.status == BackendStatus::Optimal {
                    next = Some((trial, sol.x));
                    break;
                }
            }
            let Some((f, nx)) = next else { return };
            fixed = f;
            x = nx;
        }
        for s in 0..=last {
            let implied = self.problem.implied_binaries(&x);
            let open: Vec<usize> = (0..fixed.len())
                .filter(|&k| modes[k] && stages[k] == s && fixed[k].is_none())
                .collect();
            if open.is_empty() {
                continue;
            }
            let mut trial = fixed.clone();
            for &k in &open {
                trial[k] = Some(implied[k]);
            }
            let sol = self.relax(&trial);
            let next = if sol.status == BackendStatus::Optimal {
                Some((trial, sol.x))
            } else {
                self.lower_thresholds(&fixed, &x, s)
            };
            let Some((f, nx)) = next else { return };
            fixed = f;
            x = nx;
        }
        let values: Vec<f64> = fixed.iter().map(|f| f.expect("all binaries fixed")).collect();
        self.try_assignment(values, inc);
    }
}

impl Search<'_> {
    /// Fixes the renewable modes of stage `s` parent by parent. Each parent
    /// starts from the modes implied by its setpoint and moves children to
    /// setpoint-following mode, highest available power first, until the
    /// relaxation is feasible.
    fn lower_thresholds(
        &mut self,
        fixed: &[Option<f64>],
        x: &[f64],
        s: usize,
    ) -> Option<(Vec<Option<f64>>, Vec<f64>)> {
        let p = self.problem;
        let pos: std::collections::HashMap<usize, usize> =
            p.binaries.iter().enumerate().map(|(k, &v)| (v, k)).collect();
        let mut fixed = fixed.to_vec();
        let mut x = x.to_vec();
        for i in (0..p.tree.len()).filter(|&i| p.tree.stage(i) + 1 == s) {
            for r in 0..p.nodes[i].u_r.len() {
                let mut kids: Vec<usize> = p.tree.children(i).to_vec();
                kids.sort_by(|&a, &b| p.tree.value(a)[r].total_cmp(&p.tree.value(b)[r]).then(a.cmp(&b)));
                let u = x[p.nodes[i].u_r[r]];
                let start = kids.iter().filter(|&&c| u >= p.tree.value(c)[r] - 1e-9).count();
                let mut found = false;
                for t in (0..=start).rev() {
                    let mut trial = fixed.clone();
                    for (n, &c) in kids.iter().enumerate() {
                        trial[pos[&p.nodes[c].delta_r[r]]] = Some(if n < t { 1.0 } else { 0.0 });
                    }
                    let sol = self.relax(&trial);
                    if sol.status == BackendStatus::Optimal {
                        fixed = trial;
                        x = sol.x;
                        found = true;
                        break;
                    }
                }
                if !found {
                    return None;
                }
            }
        }
        Some((fixed, x))
    }
}

fn most_fractional(vals: &[f64], fixed: &[Option<f64>], tol: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (k, &v) in vals.iter().enumerate() {
        if fixed[k].is_some() {
            continue;
        }
        let frac = (v - v.round()).abs();
        if frac > tol && best.map_or(true, |(_, f)| frac > f) {
            best = Some((k, frac));
        }
    }
    best.map(|(k, _)| k)
}

/// Branching candidate: the earliest-stage fractional switch state, then
/// the most fractional renewable mode.
fn branch_variable(
    vals: &[f64],
    fixed: &[Option<f64>],
    modes: &[bool],
    stages: &[usize],
    tol: f64,
) -> Option<usize> {
    let frac = |k: usize| (vals[k] - vals[k].round()).abs();
    let open = |k: &usize| fixed[*k].is_none() && frac(*k) > tol;
    let switch = (0..vals.len())
        .filter(|k| !modes[*k])
        .filter(open)
        .min_by(|&a, &b| stages[a].cmp(&stages[b]).then(frac(b).total_cmp(&frac(a))));
    switch.or_else(|| {
        (0..vals.len())
            .filter(|k| modes[*k])
            .filter(open)
            .max_by(|&a, &b| frac(a).total_cmp(&frac(b)).then(b.cmp(&a)))
    })
}

fn key(values: &[f64]) -> Vec<bool> {
    values.iter().map(|&v| v >= 0.5).collect()
}

fn round01(v: f64) -> f64 {
    if v >= 0.5 {
        1.0
    } else {
        0.0
    }
}

/// Best-first branch-and-bound over the binary registry of `problem`.
pub fn solve(
    problem: &RiskAverseProblem,
    backend: &dyn ConvexBackend,
    options: &SolveOptions,
) -> Result<SolveReport, OcpError> {
    let start = Instant::now();
    if !problem.initial_state_feasible {
        return Ok(SolveReport::empty(SolveStatus::Infeasible, 0, start));
    }
    let nb = problem.binaries.len();
    if let Some(h) = &options.warm_start {
        if h.len() != nb {
            return Err(OcpError::Assembly(format!(
                "warm start has {} entries, registry has {nb}",
                h.len()
            )));
        }
    }
    let tol = options.integrality_tolerance;
    let time_limit = options.time_limit_secs.map(Duration::from_secs_f64);
    let mut search = Search {
        problem,
        backend,
        solves: 0,
    };

    let root_fixed = vec![None; nb];
    let root = search.relax(&root_fixed);
    match root.status {
        BackendStatus::Optimal => {}
        BackendStatus::Infeasible => {
            return Ok(SolveReport::empty(SolveStatus::Infeasible, search.solves, start))
        }
        BackendStatus::Unbounded => {
            return Ok(SolveReport::empty(
                SolveStatus::Failed("relaxation unbounded".into()),
                search.solves,
                start,
            ))
        }
        BackendStatus::Failed(e) => {
            return Ok(SolveReport::empty(SolveStatus::Failed(e), search.solves, start))
        }
    }

    let mut inc: Option<Incumbent> = None;
    let root_bins = search.binaries_of(&root.x);
    if let Some(h) = &options.warm_start {
        let vals = h
            .iter()
            .zip(&root_bins)
            .map(|(h, r)| h.map(round01).unwrap_or_else(|| round01(*r)))
            .collect();
        search.try_assignment(vals, &mut inc);
    }
    let modes = problem.renewable_mode_mask();
    let stages = problem.binary_stages();
    let mut tried = HashSet::new();
    let candidates: Vec<Vec<f64>> = vec![
        root_bins.iter().map(|&v| round01(v)).collect(),
        problem.implied_binaries(&root.x),
        // Rounded switches with every renewable unit following its setpoint.
        root_bins
            .iter()
            .zip(&modes)
            .map(|(v, m)| if *m { 0.0 } else { round01(*v) })
            .collect(),
        modes.iter().map(|m| if *m { 0.0 } else { 1.0 }).collect(),
    ];
    for c in candidates {
        if tried.insert(key(&c)) {
            search.try_assignment(c, &mut inc);
        }
    }
    search.dive(&root_fixed, &root.x, &stages, &modes, &mut inc);
    let mut heap = BinaryHeap::new();
    let mut seq = 0;
    heap.push(Node {
        bound: root.objective,
        seq,
        fixed: root_fixed,
        x: root.x,
    });
    let default_tol = options.gap_tolerance <= DEFAULT_GAP;
    let mut stop: Option<SolveStatus> = None;

    while let Some(node) = heap.peek() {
        let lower = node.bound;
        if let Some(cur) = &inc {
            if relative_gap(cur.objective, lower) <= options.gap_tolerance {
                break;
            }
        }
        if options.node_limit.is_some_and(|l| search.solves >= l) {
            stop = Some(SolveStatus::NodeLimit);
            break;
        }
        if time_limit.is_some_and(|l| start.elapsed() >= l) {
            stop = Some(SolveStatus::TimeLimit);
            break;
        }
        let node = heap.pop().expect("peeked");
        log::debug!(
            "b&b: {} solves, bound {:.9}, incumbent {:?}, open {}",
            search.solves,
            node.bound,
            inc.as_ref().map(|c| c.objective),
            heap.len() + 1
        );
        let vals = search.binaries_of(&node.x);
        let implied: Vec<f64> = problem
            .implied_binaries(&node.x)
            .into_iter()
            .zip(&node.fixed)
            .map(|(v, f)| f.unwrap_or(v))
            .collect();
        if tried.insert(key(&implied)) {
            search.try_assignment(implied, &mut inc);
        }
        let branch = branch_variable(&vals, &node.fixed, &modes, &stages, tol);
        let k = match branch {
            Some(k) => k,
            None => {
                let rounded: Vec<f64> = vals
                    .iter()
                    .zip(&node.fixed)
                    .map(|(v, f)| f.unwrap_or_else(|| round01(*v)))
                    .collect();
                if search.try_assignment(rounded, &mut inc) {
                    continue;
                }
                // Rounding broke feasibility; branch on the largest residue.
                match most_fractional(&vals, &node.fixed, 0.0) {
                    Some(k) => k,
                    None => continue,
                }
            }
        };
        let mut lo = node.fixed.clone();
        lo[k] = Some(0.0);
        let mut hi = node.fixed;
        hi[k] = Some(1.0);
        let (a, b) = search.relax_pair(&lo, &hi);
        for (fixed, s) in [(lo, a), (hi, b)] {
            if s.status != BackendStatus::Optimal {
                continue;
            }
            let bound = s.objective.max(node.bound);
            if inc
                .as_ref()
                .is_some_and(|c| relative_gap(c.objective, bound) <= options.gap_tolerance)
            {
                continue;
            }
            seq += 1;
            heap.push(Node {
                bound,
                seq,
                fixed,
                x: s.x,
            });
        }
    }

    let Some(inc) = inc else {
        let status = stop.unwrap_or(SolveStatus::Infeasible);
        return Ok(SolveReport::empty(status, search.solves, start));
    };
    let bound = heap
        .peek()
        .map(|n| n.bound.min(inc.objective))
        .unwrap_or(inc.objective);
    let gap = relative_gap(inc.objective, bound);
    let status = stop.unwrap_or(if default_tol || gap <= DEFAULT_GAP {
        SolveStatus::Optimal
    } else {
        SolveStatus::GapLimit
    });
    Ok(SolveReport {
        status,
        objective: inc.objective,
        bound,
        gap,
        decision: Some(problem.decision(0, &inc.x)),
        x: inc.x,
        binaries: inc.binaries,
        nodes: search.solves,
        wall_time: start.elapsed(),
    })
}

/// Exhaustive search over every binary assignment. Used as a reference for
/// small problems.
pub fn enumerate_binaries_solve(
    problem: &RiskAverseProblem,
    backend: &dyn ConvexBackend,
) -> Result<SolveReport, OcpError> {
    let start = Instant::now();
    let nb = problem.binaries.len();
    if nb > MAX_ENUMERATED_BINARIES {
        return Err(OcpError::Capacity {
            max: MAX_ENUMERATED_BINARIES,
            got: nb,
        });
    }
    if !problem.initial_state_feasible {
        return Ok(SolveReport::empty(SolveStatus::Infeasible, 0, start));
    }
    let count = 1usize << nb;
    // Mask bit (nb − 1 − k) holds entry k, so masks run in lexicographic order.
    let results: Vec<(Vec<f64>, BackendSolution)> = (0..count)
        .into_par_iter()
        .map(|mask| {
            let vals: Vec<f64> = (0..nb)
                .map(|k| ((mask >> (nb - 1 - k)) & 1) as f64)
                .collect();
            let mut p = problem.program.clone();
            for (k, &j) in problem.binaries.iter().enumerate() {
                p.lower[j] = vals[k];
                p.upper[j] = vals[k];
            }
            (vals, backend.solve(&p))
        })
        .collect();
    let mut inc: Option<Incumbent> = None;
    for (vals, mut s) in results {
        if s.status == BackendStatus::Optimal && better(s.objective, &vals, &inc) {
            for (&j, &v) in problem.binaries.iter().zip(&vals) {
                s.x[j] = v;
            }
            inc = Some(Incumbent {
                objective: s.objective,
                x: s.x,
                binaries: vals,
            });
        }
    }
    let Some(inc) = inc else {
        return Ok(SolveReport::empty(SolveStatus::Infeasible, count, start));
    };
    Ok(SolveReport {
        status: SolveStatus::Optimal,
        objective: inc.objective,
        bound: inc.objective,
        gap: 0.0,
        decision: Some(problem.decision(0, &inc.x)),
        x: inc.x,
        binaries: inc.binaries,
        nodes: count,
        wall_time: start.elapsed(),
    })
}
