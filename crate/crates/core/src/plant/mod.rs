//! Plant model used to close the loop: saturating power sharing, lossy
//! storage and an AC power flow on the line network.

mod acpf;
mod sharing;
mod storage;

pub use acpf::{ac_power_flow, bus_injections, AcFlow};
pub use sharing::{realize_power, Realization};
pub use storage::storage_step;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::{operating_cost, storage_soft_cost, CostWeights};
use crate::model::{flow_matrix, ControlInput, Disturbance, MicrogridSpec, ModelError, Network};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlantError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("blackout: imbalance of {imbalance} pu left after all grid-forming units saturated")]
    Blackout { imbalance: f64 },
    #[error("power flow did not converge after {iterations} iterations (mismatch {mismatch})")]
    PowerFlowDivergence { iterations: usize, mismatch: f64 },
    #[error("invalid plant parameter `{invariant}`: {detail}")]
    Invalid {
        invariant: &'static str,
        detail: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantParams {
    pub eta_c: Vec<f64>,
    pub eta_d: Vec<f64>,
    /// Self-discharge per step in pu·h.
    pub x_sd: Vec<f64>,
    #[serde(default = "default_violation_tolerance")]
    pub violation_tolerance: f64,
    /// Use the AC power flow when the network lists its lines.
    #[serde(default = "default_true")]
    pub ac_power_flow: bool,
}

fn default_violation_tolerance() -> f64 {
    1e-6
}

fn default_true() -> bool {
    true
}

impl PlantParams {
    pub fn lossless(storage_units: usize) -> Self {
        Self {
            eta_c: vec![1.0; storage_units],
            eta_d: vec![1.0; storage_units],
            x_sd: vec![0.0; storage_units],
            violation_tolerance: default_violation_tolerance(),
            ac_power_flow: true,
        }
    }

    pub fn case_study() -> Self {
        Self {
            eta_c: vec![0.92],
            eta_d: vec![0.92],
            x_sd: vec![2e-3],
            ..Self::lossless(1)
        }
    }

    pub fn validate(&self, storage_units: usize) -> Result<(), PlantError> {
        let invalid = |invariant, detail: String| Err(PlantError::Invalid { invariant, detail });
        for (what, v) in [("eta_c", &self.eta_c), ("eta_d", &self.eta_d), ("x_sd", &self.x_sd)] {
            if v.len() != storage_units {
                return invalid(
                    "storage_dimension",
                    format!("{what} has {} entries, expected {storage_units}", v.len()),
                );
            }
        }
        if let Some(e) = self.eta_c.iter().chain(&self.eta_d).find(|e| !(**e > 0.0 && **e <= 1.0)) {
            return invalid("efficiency_in_unit_interval", format!("{e}"));
        }
        if let Some(s) = self.x_sd.iter().find(|s| !(**s >= 0.0)) {
            return invalid("self_discharge_nonnegative", format!("{s}"));
        }
        if !(self.violation_tolerance >= 0.0) {
            return invalid("violation_tolerance_nonnegative", format!("{}", self.violation_tolerance));
        }
        Ok(())
    }
}

/// Per-limit violation flags of one plant step.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Violations {
    /// Conventional, storage and renewable units in model order.
    pub units: Vec<bool>,
    pub lines: Vec<bool>,
    pub states: Vec<bool>,
}

impl Violations {
    pub fn unit(&self) -> bool {
        self.units.iter().any(|v| *v)
    }
    pub fn line(&self) -> bool {
        self.lines.iter().any(|v| *v)
    }
    pub fn state(&self) -> bool {
        self.states.iter().any(|v| *v)
    }

    /// Number of violated limit classes (unit, line, state), 0 to 3.
    pub fn classes(&self) -> usize {
        [self.unit(), self.line(), self.state()]
            .iter()
            .filter(|v| **v)
            .count()
    }

    /// Compact `u`/`l`/`s` code, `-` when nothing is violated.
    pub fn code(&self) -> String {
        let mut s = String::new();
        if self.unit() {
            s.push('u');
        }
        if self.line() {
            s.push('l');
        }
        if self.state() {
            s.push('s');
        }
        if s.is_empty() {
            s.push('-');
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantStep {
    /// Realized unit powers `[p_t; p_s; p_r]`.
    pub p: Vec<f64>,
    pub rho: f64,
    pub flows: Vec<f64>,
    pub angles: Vec<f64>,
    pub x_next: Vec<f64>,
    pub violations: Violations,
    /// Grid-forming units clamped by the sharing policy.
    pub saturated: Vec<bool>,
    pub depleted: Vec<bool>,
    /// The AC solve diverged and DC flows were used instead.
    pub dc_fallback: bool,
    pub cost_o: f64,
    pub cost_s: f64,
}

fn outside(v: f64, lo: f64, hi: f64, tol: f64) -> bool {
    v < lo - tol || v > hi + tol
}

/// One sampling interval of the plant from stored energy `x`, with
/// `delta_prev` the switch state applied in the previous interval.
pub fn plant_step(
    x: &[f64],
    delta_prev: &[f64],
    v: &ControlInput,
    w: &Disturbance,
    spec: &MicrogridSpec,
    params: &PlantParams,
    wts: &CostWeights,
) -> Result<PlantStep, PlantError> {
    let d = spec.dims();
    params.validate(d.s)?;
    let mut real = realize_power(v, w, spec)?;

    let mut flows = Vec::new();
    let mut angles = Vec::new();
    let mut dc_fallback = false;
    let dc_flows = |p: &[f64]| -> Result<Vec<f64>, PlantError> {
        let f = flow_matrix(spec)?;
        let z: Vec<f64> = p.iter().chain(&w.w_d).copied().collect();
        Ok((0..f.nrows())
            .map(|e| (0..z.len()).map(|j| f[(e, j)] * z[j]).sum())
            .collect())
    };
    match &spec.network {
        Network::SingleBus => {}
        Network::FlowMatrix { .. } => flows = dc_flows(&real.aux.powers())?,
        Network::Lines { unit_buses, .. } if params.ac_power_flow => {
            let inj = bus_injections(&real.aux.powers(), &w.w_d, spec)?;
            match ac_power_flow(&inj, spec) {
                Ok(ac) => {
                    // The storage bus is slack and absorbs the network losses.
                    let slack_bus = unit_buses[d.t];
                    real.aux.p_s[0] += ac.slack_injection - inj[slack_bus];
                    flows = ac.flows;
                    angles = ac.angles;
                }
                Err(PlantError::PowerFlowDivergence { iterations, mismatch }) => {
                    log::warn!("AC power flow diverged ({iterations} iterations, mismatch {mismatch}); using DC flows");
                    dc_fallback = true;
                    flows = dc_flows(&real.aux.powers())?;
                }
                Err(e) => return Err(e),
            }
        }
        Network::Lines { .. } => flows = dc_flows(&real.aux.powers())?,
    }

    let (x_next, depleted) = storage_step(x, &real.aux.p_s, params, spec.ts);
    let tol = params.violation_tolerance;
    let q = &real.aux;
    let mut units = Vec::with_capacity(d.units());
    for i in 0..d.t {
        let on = if v.delta_t[i] >= 0.5 { 1.0 } else { 0.0 };
        units.push(
            real.saturated[i] || outside(q.p_t[i], on * spec.p_t_min[i], on * spec.p_t_max[i], tol),
        );
    }
    for i in 0..d.s {
        units.push(
            real.saturated[d.t + i] || outside(q.p_s[i], spec.p_s_min[i], spec.p_s_max[i], tol),
        );
    }
    for i in 0..d.r {
        units.push(outside(q.p_r[i], spec.p_r_min[i], spec.p_r_max[i], tol));
    }
    let (lo, hi) = spec.network.line_limits();
    let lines = if flows.len() == lo.len() {
        flows
            .iter()
            .enumerate()
            .map(|(e, f)| outside(*f, lo[e], hi[e], tol))
            .collect()
    } else {
        Vec::new()
    };
    let states = x_next
        .iter()
        .zip(&depleted)
        .zip(&spec.x_max)
        .map(|((x, dep), hi)| *dep || outside(*x, 0.0, *hi, tol))
        .collect();

    let cost_o = operating_cost(v, delta_prev, q, spec, wts);
    let cost_s = storage_soft_cost(&x_next, spec, wts);
    Ok(PlantStep {
        p: q.powers(),
        rho: q.rho,
        flows,
        angles,
        x_next,
        violations: Violations {
            units,
            lines,
            states,
        },
        saturated: real.saturated,
        depleted,
        dc_fallback,
        cost_o,
        cost_s,
    })
}
