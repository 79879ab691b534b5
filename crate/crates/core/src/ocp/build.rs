use serde::{Deserialize, Serialize};

use super::backend::{ConvexProgram, LinearRow, QuadraticRow, SquaredTerm};
use super::OcpError;
use crate::cost::{node_cost, CostWeights};
use crate::model::{assemble_constraints, AuxiliaryVars, ControlInput, MicrogridSpec};
use crate::risk::{avar_constraint_block, RiskLevel};
use crate::uncertainty::ScenarioTree;

/// How the stage costs of the tree are aggregated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formulation {
    /// Nested AV@R through per-node epigraph blocks.
    #[default]
    NestedRisk,
    /// Minimize the largest scenario cost.
    WorstCasePaths,
    /// Minimize the expected cost.
    Expectation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildOptions {
    /// Switch states of nodes at this stage or later are relaxed to `[0, 1]`.
    pub relax_stage: usize,
    #[serde(default)]
    pub formulation: Formulation,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            relax_stage: 4,
            formulation: Formulation::NestedRisk,
        }
    }
}

/// Program variable indices owned by one tree node. Input fields are filled
/// for non-leaf nodes, state and auxiliary fields for non-root nodes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NodeVars {
    pub u_t: Vec<usize>,
    pub u_s: Vec<usize>,
    pub u_r: Vec<usize>,
    pub delta_t: Vec<usize>,
    pub t: Option<usize>,
    pub x: Vec<usize>,
    pub p_t: Vec<usize>,
    pub p_s: Vec<usize>,
    pub p_r: Vec<usize>,
    pub delta_r: Vec<usize>,
    pub rho: Option<usize>,
    pub xi: Option<usize>,
    /// Epigraph of the quadratic part of the stage cost.
    pub sigma_q: Option<usize>,
    pub sigma_lo: Vec<usize>,
    pub sigma_hi: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct RiskAverseProblem {
    pub program: ConvexProgram,
    /// Branching registry: every binary variable exactly once, in node order.
    pub binaries: Vec<usize>,
    pub nodes: Vec<NodeVars>,
    /// Linear expression of each node's cost variable `Z` (empty at the root).
    pub cost_exprs: Vec<Vec<(usize, f64)>>,
    pub tree: ScenarioTree,
    pub spec: MicrogridSpec,
    pub weights: CostWeights,
    pub alpha: RiskLevel,
    pub x0: Vec<f64>,
    pub delta_prev: Vec<f64>,
    pub options: BuildOptions,
    /// False when the measured state already violates the state bounds.
    pub initial_state_feasible: bool,
}

fn vars(p: &mut ConvexProgram, n: usize, lo: impl Fn(usize) -> f64, hi: impl Fn(usize) -> f64) -> Vec<usize> {
    (0..n).map(|i| p.add_var(lo(i), hi(i))).collect()
}

pub fn build_problem(
    tree: &ScenarioTree,
    spec: &MicrogridSpec,
    weights: &CostWeights,
    alpha: RiskLevel,
    x0: &[f64],
    delta_prev: &[f64],
    options: BuildOptions,
) -> Result<RiskAverseProblem, OcpError> {
    spec.validate()?;
    let d = spec.dims();
    weights
        .validate(d)
        .map_err(|e| OcpError::Assembly(e.to_string()))?;
    if x0.len() != d.s || delta_prev.len() != d.t {
        return Err(OcpError::Assembly(format!(
            "initial state/switch dimensions ({}, {}) do not match ({}, {})",
            x0.len(),
            delta_prev.len(),
            d.s,
            d.t
        )));
    }
    if tree.r() != d.r || tree.d() != d.d {
        return Err(OcpError::Assembly(format!(
            "tree carries {}+{} disturbances, model expects {}+{}",
            tree.r(),
            tree.d(),
            d.r,
            d.d
        )));
    }
    if tree.horizon() == 0 {
        return Err(OcpError::Assembly("tree has no stages".into()));
    }
    let initial_state_feasible = x0
        .iter()
        .zip(&spec.x_max)
        .all(|(x, hi)| (0.0..=*hi).contains(x));

    let mu = tree.len();
    let mut p = ConvexProgram::new(0);
    let mut nodes = vec![NodeVars::default(); mu];
    let mut binaries = Vec::new();
    let inf = f64::INFINITY;

    for i in 0..mu {
        let n = &mut nodes[i];
        if !tree.is_leaf(i) {
            n.u_t = vars(&mut p, d.t, |_| 0.0, |k| spec.p_t_max[k]);
            n.u_s = vars(&mut p, d.s, |k| spec.p_s_min[k], |k| spec.p_s_max[k]);
            n.u_r = vars(&mut p, d.r, |k| spec.p_r_min[k], |k| spec.p_r_max[k]);
            n.delta_t = vars(&mut p, d.t, |_| 0.0, |_| 1.0);
            if tree.stage(i) < options.relax_stage {
                binaries.extend(&n.delta_t);
            }
        }
        if i > 0 {
            n.x = vars(&mut p, d.s, |_| 0.0, |k| spec.x_max[k]);
            n.p_t = vars(&mut p, d.t, |_| 0.0, |k| spec.p_t_max[k]);
            n.p_s = vars(&mut p, d.s, |k| spec.p_s_min[k], |k| spec.p_s_max[k]);
            n.p_r = vars(&mut p, d.r, |k| spec.p_r_min[k], |k| spec.p_r_max[k]);
            n.delta_r = vars(&mut p, d.r, |_| 0.0, |_| 1.0);
            binaries.extend(&n.delta_r);
            n.rho = Some(p.add_var(-inf, inf));
            n.sigma_q = Some(p.add_var(0.0, inf));
            n.sigma_lo = vars(&mut p, d.s, |_| 0.0, |_| inf);
            n.sigma_hi = vars(&mut p, d.s, |_| 0.0, |_| inf);
        }
        if options.formulation == Formulation::NestedRisk {
            if !tree.is_leaf(i) {
                n.t = Some(p.add_var(-inf, inf));
            }
            if i > 0 {
                n.xi = Some(p.add_var(0.0, inf));
            }
        }
    }

    let mut cost_exprs = vec![Vec::new(); mu];
    for j in 1..mu {
        let i = tree.ancestor(j).expect("non-root node has an ancestor");
        let (vi, vj) = (&nodes[i], &nodes[j]);
        let w = tree.disturbance(j);
        let sys = assemble_constraints(spec, &w)?;
        let l = sys.layout;
        let wvals = w.to_vec();
        // Column of `[v; q; w]` to program variable, or the fixed disturbance.
        let map = |c: usize| -> Result<usize, f64> {
            let nv = l.nv();
            let nq = l.nq();
            if c < nv {
                let k = c;
                Ok(if k < d.t {
                    vi.u_t[k]
                } else if k < d.t + d.s {
                    vi.u_s[k - d.t]
                } else if k < d.t + d.s + d.r {
                    vi.u_r[k - d.t - d.s]
                } else {
                    vi.delta_t[k - d.t - d.s - d.r]
                })
            } else if c < nv + nq {
                let k = c - nv;
                Ok(if k < d.t {
                    vj.p_t[k]
                } else if k < d.t + d.s {
                    vj.p_s[k - d.t]
                } else if k < d.t + d.s + d.r {
                    vj.p_r[k - d.t - d.s]
                } else if k < d.t + d.s + 2 * d.r {
                    vj.delta_r[k - d.t - d.s - d.r]
                } else {
                    vj.rho.expect("non-root node has rho")
                })
            } else {
                Err(wvals[c - nv - nq])
            }
        };
        let first_child = tree.children(i)[0] == j;
        let to_row = |row: nalgebra::DVectorView<f64>, rhs: f64| -> (Vec<(usize, f64)>, f64, bool) {
            let mut coeffs = Vec::new();
            let mut rhs = rhs;
            let mut only_v = true;
            for (c, &a) in row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                match map(c) {
                    Ok(var) => {
                        if c >= l.nv() {
                            only_v = false;
                        }
                        coeffs.push((var, a));
                    }
                    Err(wv) => {
                        only_v = false;
                        rhs -= a * wv;
                    }
                }
            }
            (coeffs, rhs, only_v)
        };
        for r in 0..sys.h2.nrows() {
            let (coeffs, rhs, only_v) = to_row(sys.h2.row(r).transpose().as_view(), sys.h2_rhs[r]);
            if only_v && !first_child {
                continue;
            }
            if coeffs.len() == 1 {
                let (var, a) = coeffs[0];
                if a > 0.0 {
                    p.upper[var] = p.upper[var].min(rhs / a);
                } else {
                    p.lower[var] = p.lower[var].max(rhs / a);
                }
            } else {
                p.inequalities.push(LinearRow::new(coeffs, rhs));
            }
        }
        for r in 0..sys.g.nrows() {
            let (coeffs, rhs, _) = to_row(sys.g.row(r).transpose().as_view(), sys.g_rhs[r]);
            p.equalities.push(LinearRow::new(coeffs, rhs));
        }

        // Storage dynamics x_j = x_i − Ts p_s,j.
        for s in 0..d.s {
            let mut coeffs = vec![(vj.x[s], 1.0), (vj.p_s[s], spec.ts)];
            let rhs = if i == 0 {
                x0[s]
            } else {
                coeffs.push((vi.x[s], -1.0));
                0.0
            };
            p.equalities.push(LinearRow::new(coeffs, rhs));
        }
        // Soft band slacks.
        for s in 0..d.s {
            p.inequalities.push(LinearRow::new(
                vec![(vj.sigma_lo[s], -1.0), (vj.x[s], -1.0)],
                -spec.x_soft_min[s],
            ));
            p.inequalities.push(LinearRow::new(
                vec![(vj.x[s], 1.0), (vj.sigma_hi[s], -1.0)],
                spec.x_soft_max[s],
            ));
        }
        // Quadratic cost terms bounded by sigma_q.
        let mut squares = Vec::new();
        for k in 0..d.t {
            squares.push(SquaredTerm {
                coeffs: vec![(vj.p_t[k], weights.c_t_double_prime[k])],
                constant: 0.0,
            });
            let c = weights.c_sw[k];
            let mut coeffs = vec![(vi.delta_t[k], -c)];
            let mut constant = 0.0;
            match tree.ancestor(i) {
                Some(g) => coeffs.push((nodes[g].delta_t[k], c)),
                None => constant = c * delta_prev[k],
            }
            squares.push(SquaredTerm { coeffs, constant });
        }
        for k in 0..d.r {
            squares.push(SquaredTerm {
                coeffs: vec![(vj.p_r[k], -weights.c_r[k])],
                constant: weights.c_r[k] * spec.p_r_max[k],
            });
        }
        let sigma_q = vj.sigma_q.expect("non-root node has sigma_q");
        p.quadratic.push(QuadraticRow {
            squares,
            linear: vec![(sigma_q, -1.0)],
            rhs: 0.0,
        });

        let g = weights.gamma.powi(tree.stage(j) as i32);
        let mut z = Vec::new();
        for k in 0..d.t {
            z.push((vi.delta_t[k], g * weights.c_t[k]));
            z.push((vj.p_t[k], g * weights.c_t_prime[k]));
        }
        z.push((sigma_q, g));
        for s in 0..d.s {
            z.push((vj.sigma_lo[s], g * weights.c_s[s]));
            z.push((vj.sigma_hi[s], g * weights.c_s[s]));
        }
        cost_exprs[j] = z;
    }

    // Siblings share u_r, so p_r = min(u_r, w_r) and its mode are monotone in w_r.
    for i in (0..mu).filter(|&i| !tree.is_leaf(i)) {
        for k in 0..d.r {
            let mut sib: Vec<usize> = tree.children(i).to_vec();
            sib.sort_by(|&a, &b| tree.value(a)[k].total_cmp(&tree.value(b)[k]).then(a.cmp(&b)));
            for pair in sib.windows(2) {
                let (lo, hi) = (&nodes[pair[0]], &nodes[pair[1]]);
                p.inequalities.push(LinearRow::new(
                    vec![(hi.delta_r[k], 1.0), (lo.delta_r[k], -1.0)],
                    0.0,
                ));
                p.inequalities.push(LinearRow::new(
                    vec![(lo.p_r[k], 1.0), (hi.p_r[k], -1.0)],
                    0.0,
                ));
            }
        }
    }

    match options.formulation {
        Formulation::NestedRisk => {
            for i in (0..mu).filter(|&i| !tree.is_leaf(i)) {
                let children = tree.children(i);
                let probs: Vec<f64> = children.iter().map(|&c| tree.probability(c)).collect();
                let block = avar_constraint_block(alpha, &probs, tree.probability(i))?;
                let ti = nodes[i].t.expect("non-leaf node has t");
                for row in &block.rows {
                    let c = children[row.child];
                    let xi = nodes[c].xi.expect("non-root node has xi");
                    // α ξ_c + t_i ≥ Z_c + Ψ_c
                    let mut coeffs = vec![(xi, -row.xi_coeff), (ti, -row.t_coeff)];
                    coeffs.extend(cost_exprs[c].iter().copied());
                    coeffs.extend(psi(tree, &nodes, c)?);
                    p.inequalities.push(LinearRow::new(coeffs, 0.0));
                }
            }
            p.objective = psi(tree, &nodes, 0)?;
        }
        Formulation::Expectation => {
            for j in 1..mu {
                let pj = tree.probability(j);
                p.objective
                    .extend(cost_exprs[j].iter().map(|&(v, c)| (v, pj * c)));
            }
        }
        Formulation::WorstCasePaths => {
            let tau = p.add_var(-inf, inf);
            for leaf in tree.leaves() {
                let mut coeffs = vec![(tau, -1.0)];
                for &j in &tree.path_to(leaf)[1..] {
                    coeffs.extend(cost_exprs[j].iter().copied());
                }
                p.inequalities.push(LinearRow::new(coeffs, 0.0));
            }
            p.objective = vec![(tau, 1.0)];
        }
    }

    Ok(RiskAverseProblem {
        program: p,
        binaries,
        nodes,
        cost_exprs,
        tree: tree.clone(),
        spec: spec.clone(),
        weights: weights.clone(),
        alpha,
        x0: x0.to_vec(),
        delta_prev: delta_prev.to_vec(),
        options,
        initial_state_feasible,
    })
}

/// `Ψ_i = t_i + Σ_c (π_c/π_i) ξ_c`; empty for leaves.
fn psi(tree: &ScenarioTree, nodes: &[NodeVars], i: usize) -> Result<Vec<(usize, f64)>, OcpError> {
    if tree.is_leaf(i) {
        return Ok(Vec::new());
    }
    let children = tree.children(i);
    let probs: Vec<f64> = children.iter().map(|&c| tree.probability(c)).collect();
    let block = avar_constraint_block(RiskLevel::RISK_NEUTRAL, &probs, tree.probability(i))?;
    let mut out = vec![(nodes[i].t.expect("non-leaf node has t"), 1.0)];
    for row in &block.rows {
        out.push((nodes[children[row.child]].xi.expect("child has xi"), row.weight));
    }
    Ok(out)
}

impl RiskAverseProblem {
    pub fn binary_count(&self) -> usize {
        self.binaries.len()
    }

    /// Inputs `v^(i)` of a non-leaf node.
    pub fn decision(&self, i: usize, x: &[f64]) -> ControlInput {
        let n = &self.nodes[i];
        let get = |ids: &[usize]| ids.iter().map(|&k| x[k]).collect::<Vec<f64>>();
        ControlInput {
            u_t: get(&n.u_t),
            u_s: get(&n.u_s),
            u_r: get(&n.u_r),
            delta_t: get(&n.delta_t),
        }
    }

    /// Auxiliary variables `q^(j)` of a non-root node.
    pub fn auxiliary(&self, j: usize, x: &[f64]) -> AuxiliaryVars {
        let n = &self.nodes[j];
        let get = |ids: &[usize]| ids.iter().map(|&k| x[k]).collect::<Vec<f64>>();
        AuxiliaryVars {
            p_t: get(&n.p_t),
            p_s: get(&n.p_s),
            p_r: get(&n.p_r),
            delta_r: get(&n.delta_r),
            rho: n.rho.map(|k| x[k]).unwrap_or(0.0),
        }
    }

    pub fn state(&self, j: usize, x: &[f64]) -> Vec<f64> {
        if j == 0 {
            self.x0.clone()
        } else {
            self.nodes[j].x.iter().map(|&k| x[k]).collect()
        }
    }

    /// Stage costs `Z^(j)` evaluated from the decisions in `x` (entry 0 is 0).
    pub fn node_costs(&self, x: &[f64]) -> Vec<f64> {
        let tree = &self.tree;
        let mut z = vec![0.0; tree.len()];
        for (j, zj) in z.iter_mut().enumerate().skip(1) {
            let i = tree.ancestor(j).expect("non-root node has an ancestor");
            let prev = match tree.ancestor(i) {
                Some(g) => self.decision(g, x).delta_t,
                None => self.delta_prev.clone(),
            };
            *zj = node_cost(
                tree.stage(j),
                &self.state(j, x),
                &self.decision(i, x),
                &prev,
                &self.auxiliary(j, x),
                &self.spec,
                &self.weights,
            );
        }
        z
    }
}

impl RiskAverseProblem {
    /// Integral assignment suggested by a relaxed point: switch states are
    /// rounded and each renewable mode follows from comparing the parent's
    /// setpoint with the child's available power.
    pub fn implied_binaries(&self, x: &[f64]) -> Vec<f64> {
        let mut implied = std::collections::HashMap::new();
        for j in 1..self.tree.len() {
            let i = self.tree.ancestor(j).expect("non-root node has an ancestor");
            let w = self.tree.value(j);
            for (k, &var) in self.nodes[j].delta_r.iter().enumerate() {
                let on = x[self.nodes[i].u_r[k]] >= w[k] - 1e-9;
                implied.insert(var, if on { 1.0 } else { 0.0 });
            }
        }
        self.binaries
            .iter()
            .map(|j| {
                implied
                    .get(j)
                    .copied()
                    .unwrap_or(if x[*j] >= 0.5 { 1.0 } else { 0.0 })
            })
            .collect()
    }

    /// Stage of the node owning each registry entry.
    pub fn binary_stages(&self) -> Vec<usize> {
        let mut owner = std::collections::HashMap::new();
        for (i, n) in self.nodes.iter().enumerate() {
            for &v in n.delta_t.iter().chain(&n.delta_r) {
                owner.insert(v, self.tree.stage(i));
            }
        }
        self.binaries.iter().map(|j| owner[j]).collect()
    }

    /// Registry mask of renewable mode binaries.
    pub fn renewable_mode_mask(&self) -> Vec<bool> {
        let modes: std::collections::HashSet<usize> = self
            .nodes
            .iter()
            .flat_map(|n| n.delta_r.iter().copied())
            .collect();
        self.binaries.iter().map(|j| modes.contains(j)).collect()
    }
}
