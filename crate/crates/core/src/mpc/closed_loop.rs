use std::time::Instant;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::{Mode, NoiseSpec, RunConfig};
use super::log::{LogRow, Terminal, TrajectoryLog, ViolationClasses};
use super::MpcError;
use crate::model::{ControlInput, Disturbance};
use crate::ocp::{
    build_problem, solve, BuildOptions, ClarabelBackend, RiskAverseProblem, SolveOptions,
    SolveReport, SolveStatus,
};
use crate::plant::{plant_step, PlantError};
use crate::risk::RiskLevel;
use crate::uncertainty::{
    inject_help, reduce_to_tree, sample_signal_path, simulate_fan, ForecasterSpec, History,
    ScenarioTree, SignalPath,
};

/// Independent seed for sub-stream `stream` of `seed`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.next_u64()
}

const TRUTH_STREAM: u64 = 0;
const FAN_STREAM_BASE: u64 = 1;

/// Realized wind speed and load over the simulated window, `[step][unit]`.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub wind_speed: Vec<Vec<f64>>,
    pub load: Vec<Vec<f64>>,
}

impl World {
    pub fn len(&self) -> usize {
        self.wind_speed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wind_speed.is_empty()
    }

    pub fn disturbance(&self, k: usize, forecaster: &ForecasterSpec) -> Disturbance {
        Disturbance {
            w_r: forecaster
                .wind
                .iter()
                .zip(&self.wind_speed[k])
                .map(|(src, v)| src.power(*v))
                .collect(),
            w_d: self.load[k].clone(),
        }
    }

    /// Adds Gaussian noise step by step. Every step draws one uniform event
    /// variate whether or not `event_rate` is set, so a rate of one gives the
    /// same realization as constant offsets.
    pub fn with_noise(&self, noise: &NoiseSpec, seed: u64) -> Result<Self, MpcError> {
        noise.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let std = Normal::new(0.0, 1.0).expect("unit normal");
        let mut out = self.clone();
        for k in 0..self.len() {
            let u: f64 = rng.gen();
            let on = noise.event_rate.map_or(true, |p| u < p);
            let shift = if on { 1.0 } else { 0.0 };
            for v in &mut out.wind_speed[k] {
                let z: f64 = std.sample(&mut rng);
                *v += shift * noise.wind_mean + noise.wind_sd * z;
            }
            for v in &mut out.load[k] {
                let z: f64 = std.sample(&mut rng);
                *v = (*v + shift * noise.load_mean + noise.load_sd * z).max(0.0);
            }
        }
        Ok(out)
    }
}

impl From<SignalPath> for World {
    fn from(p: SignalPath) -> Self {
        Self {
            wind_speed: p.wind_speed,
            load: p.load,
        }
    }
}

/// Noise-free continuation of the signal baselines used to start every run.
pub fn initial_history(cfg: &RunConfig) -> History {
    let f = &cfg.forecaster;
    f.baseline_history(cfg.simulation.start, f.required_history())
}

/// Sampled "true" signals for the configured window. Depends only on the
/// simulation seed, so every controller sees the same base scenario.
pub fn nominal_world(cfg: &RunConfig) -> Result<World, MpcError> {
    let h = initial_history(cfg);
    let path = sample_signal_path(
        &cfg.forecaster,
        &h,
        cfg.simulation.steps,
        derive_seed(cfg.simulation.seed, TRUTH_STREAM),
    )?;
    Ok(path.into())
}

/// Scenario tree the controller plans on at step `k` given `history`.
pub fn controller_tree(cfg: &RunConfig, history: &History, k: usize) -> Result<ScenarioTree, MpcError> {
    let seed = derive_seed(cfg.simulation.seed, FAN_STREAM_BASE + k as u64);
    let fan = simulate_fan(
        &cfg.forecaster,
        history,
        cfg.controller.horizon,
        cfg.tree.scenarios,
        seed,
    )?;
    if cfg.controller.mode == Mode::CertaintyEquivalent {
        return Ok(ScenarioTree::chain(fan.r(), fan.d(), &fan.mean_path())?);
    }
    let tree = reduce_to_tree(&fan, &cfg.tree.branching)?;
    Ok(match &cfg.tree.help {
        Some(h) => inject_help(&tree, &fan, h)?,
        None => tree,
    })
}

/// Step problem on `tree` from state `x` at risk level `alpha`.
pub fn build_step_problem(
    cfg: &RunConfig,
    tree: &ScenarioTree,
    alpha: RiskLevel,
    x: &[f64],
    delta_prev: &[f64],
) -> Result<RiskAverseProblem, MpcError> {
    let c = &cfg.controller;
    Ok(build_problem(
        tree,
        &cfg.microgrid,
        &c.weights,
        alpha,
        x,
        delta_prev,
        BuildOptions {
            relax_stage: c.relax_stage,
            ..BuildOptions::default()
        },
    )?)
}

/// Switch states along the most probable path of a solved problem, one
/// entry per non-leaf stage.
pub fn likely_switch_path(problem: &RiskAverseProblem, solution: &[f64]) -> Vec<Vec<f64>> {
    let tree = &problem.tree;
    let mut path = Vec::new();
    let mut i = 0;
    while !tree.is_leaf(i) {
        path.push(problem.decision(i, solution).delta_t);
        i = *tree
            .children(i)
            .iter()
            .max_by(|a, b| tree.probability(**a).total_cmp(&tree.probability(**b)))
            .expect("non-leaf node has children");
    }
    path
}

/// Warm-start hint that assigns each stage-`s` switch binary the value at
/// stage `s + 1` of `path`, repeating the last entry.
pub fn shifted_hint(problem: &RiskAverseProblem, path: &[Vec<f64>]) -> Vec<Option<f64>> {
    let mut hint = vec![None; problem.binaries.len()];
    if path.is_empty() {
        return hint;
    }
    for (i, node) in problem.nodes.iter().enumerate() {
        let s = (problem.tree.stage(i) + 1).min(path.len() - 1);
        for (u, var) in node.delta_t.iter().enumerate() {
            if let Some(pos) = problem.binaries.iter().position(|b| b == var) {
                hint[pos] = Some(if path[s][u] >= 0.5 { 1.0 } else { 0.0 });
            }
        }
    }
    hint
}

/// Root input of `solution` shifted along the power-sharing gains so that the
/// probability-weighted sharing signal over the root's children is zero.
///
/// The shift leaves the realized unit powers of every child unchanged, and
/// it is clipped so the set-points stay within their limits.
pub fn centered_root_input(problem: &RiskAverseProblem, solution: &[f64]) -> ControlInput {
    let tree = &problem.tree;
    let spec = &problem.spec;
    let mut v = problem.decision(0, solution);
    let target: f64 = tree
        .children(0)
        .iter()
        .map(|&c| tree.probability(c) * problem.auxiliary(c, solution).rho)
        .sum::<f64>()
        / tree.probability(0);
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    let mut admit = |u: f64, gain: f64, min: f64, max: f64| {
        if gain > 0.0 {
            lo = lo.max((min - u) / gain);
            hi = hi.min((max - u) / gain);
        }
    };
    for i in 0..v.u_t.len() {
        let d = v.delta_t[i];
        admit(v.u_t[i], spec.chi_t[i] * d, d * spec.p_t_min[i], d * spec.p_t_max[i]);
    }
    for i in 0..v.u_s.len() {
        admit(v.u_s[i], spec.chi_s[i], spec.p_s_min[i], spec.p_s_max[i]);
    }
    if !(lo <= hi) {
        return v;
    }
    let shift = target.clamp(lo.min(0.0), hi.max(0.0));
    for i in 0..v.u_t.len() {
        v.u_t[i] += spec.chi_t[i] * v.delta_t[i] * shift;
    }
    for i in 0..v.u_s.len() {
        v.u_s[i] += spec.chi_s[i] * shift;
    }
    v
}

/// Solves the OCP on `tree` from state `x` at risk level `alpha`.
pub fn solve_step(
    cfg: &RunConfig,
    tree: &ScenarioTree,
    alpha: RiskLevel,
    x: &[f64],
    delta_prev: &[f64],
    hint: Option<Vec<Option<f64>>>,
) -> Result<(RiskAverseProblem, SolveReport), MpcError> {
    let problem = build_step_problem(cfg, tree, alpha, x, delta_prev)?;
    let mut options: SolveOptions = cfg.controller.solver.clone();
    options.warm_start = hint;
    let report = solve(&problem, &ClarabelBackend::default(), &options)?;
    Ok((problem, report))
}

fn status_label(report: &SolveReport) -> String {
    match report.status {
        SolveStatus::Optimal => "optimal",
        SolveStatus::Infeasible => "infeasible",
        SolveStatus::GapLimit => "gap_limit",
        SolveStatus::NodeLimit => "node_limit",
        SolveStatus::TimeLimit => "time_limit",
        SolveStatus::Failed(_) => "failed",
    }
    .to_string()
}

/// Receding-horizon simulation of the configured controller against `world`.
///
/// The controller's history is extended with the realized signals after
/// every step. A solver without a usable solution makes the plant repeat the
/// previous input and the step is marked `fallback:<status>`. A blackout ends
/// the run with a terminal record.
pub fn run_closed_loop(cfg: &RunConfig, world: &World) -> Result<TrajectoryLog, MpcError> {
    cfg.validate()?;
    let steps = cfg.simulation.steps;
    if world.len() < steps {
        return Err(MpcError::Config(format!(
            "world has {} steps, simulation needs {steps}",
            world.len()
        )));
    }
    let spec = &cfg.microgrid;
    let alpha = cfg.controller.risk_level()?;
    let keep = cfg.forecaster.required_history();
    let mut history = initial_history(cfg);
    let mut x = cfg.simulation.x0.clone();
    let mut delta_prev = cfg.simulation.delta_prev.clone();
    let mut applied = ControlInput::zeros(spec.dims());
    applied.delta_t = delta_prev.clone();
    let mut log = TrajectoryLog::default();
    let mut switch_path: Option<Vec<Vec<f64>>> = None;

    for k in 0..steps {
        let tree = controller_tree(cfg, &history, k)?;
        let started = Instant::now();
        let hint = match &switch_path {
            Some(p) => build_step_problem(cfg, &tree, alpha, &x, &delta_prev)
                .map(|prob| shifted_hint(&prob, p))
                .ok(),
            None => None,
        };
        let (problem, report) = solve_step(cfg, &tree, alpha, &x, &delta_prev, hint)?;
        let solve_time = started.elapsed().as_secs_f64();
        if cfg.controller.diagnostic {
            let mut objs = [f64::NAN; 3];
            for (o, a) in objs.iter_mut().zip([0.0, 0.5, 1.0]) {
                let (_, r) = solve_step(cfg, &tree, RiskLevel::new(a)?, &x, &delta_prev, None)?;
                if r.status.has_solution() {
                    *o = r.objective;
                }
            }
            log.diagnostics.push(objs);
        }
        log::info!(
            "step {k}: {:?} objective {:.6} after {} relaxations in {solve_time:.2}s",
            report.status,
            report.objective,
            report.nodes
        );
        let mut status = status_label(&report);
        match report.decision {
            Some(_) if report.status.has_solution() => {
                applied = centered_root_input(&problem, &report.x);
                switch_path = Some(likely_switch_path(&problem, &report.x));
            }
            _ => {
                switch_path = None;
                log::warn!("step {k}: solver returned {:?}; repeating previous input", report.status);
                status = format!("fallback:{status}");
            }
        }

        let w = world.disturbance(k, &cfg.forecaster);
        let step = match plant_step(
            &x,
            &delta_prev,
            &applied,
            &w,
            spec,
            &cfg.simulation.plant,
            &cfg.controller.weights,
        ) {
            Ok(s) => s,
            Err(PlantError::Blackout { imbalance }) => {
                log::warn!("step {k}: blackout, unserved imbalance {imbalance}");
                log.terminal = Some(Terminal {
                    k,
                    x: x.clone(),
                    status: "blackout".into(),
                });
                break;
            }
            Err(e) => return Err(e.into()),
        };
        if step.dc_fallback {
            status.push_str(";dc_fallback");
        }
        let d = spec.dims();
        log.rows.push(LogRow {
            k,
            x: x.clone(),
            input: applied.clone(),
            disturbance: w,
            p_t: step.p[..d.t].to_vec(),
            p_s: step.p[d.t..d.t + d.s].to_vec(),
            p_r: step.p[d.t + d.s..].to_vec(),
            rho: step.rho,
            flows: step.flows,
            violations: ViolationClasses::from(&step.violations),
            cost_o: step.cost_o,
            cost_s: step.cost_s,
            solve_time,
            status,
        });
        x = step.x_next;
        delta_prev = applied
            .delta_t
            .iter()
            .map(|v| if *v >= 0.5 { 1.0 } else { 0.0 })
            .collect();
        history.push(&world.wind_speed[k], &world.load[k]);
        history.truncate_front(keep);
    }
    Ok(log)
}

/// Nominal run: the sampled world plus the configured noise, if any.
pub fn simulate(cfg: &RunConfig) -> Result<TrajectoryLog, MpcError> {
    let mut world = nominal_world(cfg)?;
    if let Some(n) = &cfg.simulation.noise {
        world = world.with_noise(n, derive_seed(cfg.simulation.seed, u64::MAX))?;
    }
    run_closed_loop(cfg, &world)
}
