//! Control-oriented hybrid model of an islanded microgrid.
//!
//! Units are ordered conventional (`T`), storage (`S`), renewable (`R`),
//! followed by the `D` loads. Per-unit vectors in [`MicrogridSpec`] mirror
//! the usual unit-parameter table (`p_t_min`, `p_s_max`, ...).

mod constraints;
mod forward;
mod network;

pub use constraints::{assemble_constraints, ConstraintSystem, RowKind, VarLayout};
pub use forward::{forward_q, state_update, ForwardOutcome};
pub use network::{flow_matrix, incidence, Line, Network};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invariant `{invariant}` violated: {detail}")]
    Invalid {
        invariant: &'static str,
        detail: String,
    },
    #[error("network topology: {0}")]
    Topology(String),
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("no grid-forming capacity enabled to share the imbalance")]
    InfeasibleSharing,
}

fn invalid(invariant: &'static str, detail: impl Into<String>) -> ModelError {
    ModelError::Invalid {
        invariant,
        detail: detail.into(),
    }
}

/// Static description of the microgrid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MicrogridSpec {
    pub p_t_min: Vec<f64>,
    pub p_t_max: Vec<f64>,
    pub p_s_min: Vec<f64>,
    pub p_s_max: Vec<f64>,
    pub p_r_min: Vec<f64>,
    pub p_r_max: Vec<f64>,
    /// Storage capacity; the lower capacity bound is zero.
    pub x_max: Vec<f64>,
    pub x_soft_min: Vec<f64>,
    pub x_soft_max: Vec<f64>,
    /// Power-sharing gains of the conventional units (`K_t = diag(1/χ)`).
    pub chi_t: Vec<f64>,
    /// Power-sharing gains of the storage units.
    pub chi_s: Vec<f64>,
    /// Number of loads.
    pub loads: usize,
    /// Sampling time in hours.
    pub ts: f64,
    pub network: Network,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub t: usize,
    pub s: usize,
    pub r: usize,
    pub d: usize,
}

impl Dims {
    pub fn units(&self) -> usize {
        self.t + self.s + self.r
    }
}

impl MicrogridSpec {
    pub fn dims(&self) -> Dims {
        Dims {
            t: self.p_t_min.len(),
            s: self.p_s_min.len(),
            r: self.p_r_min.len(),
            d: self.loads,
        }
    }

    pub fn x_min(&self) -> Vec<f64> {
        vec![0.0; self.x_max.len()]
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let d = self.dims();
        let pairs: [(&'static str, usize, usize); 9] = [
            ("p_t_max", d.t, self.p_t_max.len()),
            ("chi_t", d.t, self.chi_t.len()),
            ("p_s_max", d.s, self.p_s_max.len()),
            ("x_max", d.s, self.x_max.len()),
            ("x_soft_min", d.s, self.x_soft_min.len()),
            ("x_soft_max", d.s, self.x_soft_max.len()),
            ("chi_s", d.s, self.chi_s.len()),
            ("p_r_max", d.r, self.p_r_max.len()),
            ("p_r_min", d.r, self.p_r_min.len()),
        ];
        for (what, expected, got) in pairs {
            if expected != got {
                return Err(ModelError::Dimension {
                    what,
                    expected,
                    got,
                });
            }
        }
        if d.s == 0 {
            return Err(invalid(
                "storage_present",
                "at least one storage unit is required for power sharing",
            ));
        }
        if d.d == 0 {
            return Err(invalid("load_present", "at least one load is required"));
        }
        if !(self.ts > 0.0 && self.ts.is_finite()) {
            return Err(invalid("sampling_time_positive", format!("ts = {}", self.ts)));
        }
        if let Some(c) = self
            .chi_t
            .iter()
            .chain(&self.chi_s)
            .find(|c| !(**c > 0.0 && c.is_finite()))
        {
            return Err(invalid("power_sharing_gain_positive", format!("chi = {c}")));
        }
        for i in 0..d.s {
            if !(self.p_s_min[i] <= 0.0 && 0.0 <= self.p_s_max[i]) {
                return Err(invalid(
                    "storage_power_limits_straddle_zero",
                    format!("[{}, {}]", self.p_s_min[i], self.p_s_max[i]),
                ));
            }
            if !(self.x_max[i] > 0.0) {
                return Err(invalid("storage_capacity_positive", format!("{}", self.x_max[i])));
            }
            if !(0.0 <= self.x_soft_min[i]
                && self.x_soft_min[i] <= self.x_soft_max[i]
                && self.x_soft_max[i] <= self.x_max[i])
            {
                return Err(invalid(
                    "soft_band_within_capacity",
                    format!(
                        "soft band [{}, {}] not nested in [0, {}]",
                        self.x_soft_min[i], self.x_soft_max[i], self.x_max[i]
                    ),
                ));
            }
        }
        for i in 0..d.t {
            if !(0.0 <= self.p_t_min[i] && self.p_t_min[i] <= self.p_t_max[i]) {
                return Err(invalid(
                    "conventional_limits_ordered",
                    format!("[{}, {}]", self.p_t_min[i], self.p_t_max[i]),
                ));
            }
        }
        for i in 0..d.r {
            if !(0.0 <= self.p_r_min[i] && self.p_r_min[i] <= self.p_r_max[i]) {
                return Err(invalid(
                    "renewable_limits_ordered",
                    format!("[{}, {}]", self.p_r_min[i], self.p_r_max[i]),
                ));
            }
        }
        self.network.validate(d)?;
        Ok(())
    }
}

/// Control inputs `v = [u_t; u_s; u_r; δ_t]`.
///
/// `delta_t` is real-valued so that relaxed switch states from the optimiser
/// can be represented; the plant only ever sees 0/1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    pub u_t: Vec<f64>,
    pub u_s: Vec<f64>,
    pub u_r: Vec<f64>,
    pub delta_t: Vec<f64>,
}

impl ControlInput {
    pub fn zeros(d: Dims) -> Self {
        Self {
            u_t: vec![0.0; d.t],
            u_s: vec![0.0; d.s],
            u_r: vec![0.0; d.r],
            delta_t: vec![0.0; d.t],
        }
    }

    pub fn check(&self, d: Dims) -> Result<(), ModelError> {
        check_len("u_t", d.t, self.u_t.len())?;
        check_len("u_s", d.s, self.u_s.len())?;
        check_len("u_r", d.r, self.u_r.len())?;
        check_len("delta_t", d.t, self.delta_t.len())
    }
}

/// Uncertain inputs: available renewable power and load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Disturbance {
    pub w_r: Vec<f64>,
    pub w_d: Vec<f64>,
}

impl Disturbance {
    pub fn check(&self, d: Dims) -> Result<(), ModelError> {
        check_len("w_r", d.r, self.w_r.len())?;
        check_len("w_d", d.d, self.w_d.len())?;
        if let Some(v) = self.w_r.iter().chain(&self.w_d).find(|v| !(**v >= 0.0)) {
            return Err(invalid("disturbance_nonnegative", format!("{v}")));
        }
        Ok(())
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.w_r.iter().chain(&self.w_d).copied().collect()
    }
}

/// Auxiliary variables `q = [p_t; p_s; p_r; δ_r; ρ]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxiliaryVars {
    pub p_t: Vec<f64>,
    pub p_s: Vec<f64>,
    pub p_r: Vec<f64>,
    pub delta_r: Vec<f64>,
    pub rho: f64,
}

impl AuxiliaryVars {
    /// Unit powers `p = [p_t; p_s; p_r]`.
    pub fn powers(&self) -> Vec<f64> {
        self.p_t
            .iter()
            .chain(&self.p_s)
            .chain(&self.p_r)
            .copied()
            .collect()
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<(), ModelError> {
    if expected != got {
        return Err(ModelError::Dimension {
            what,
            expected,
            got,
        });
    }
    Ok(())
}

/// Big-M constants of the mixed-logical reformulations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BigM {
    pub m_r: f64,
    pub big_m_r: f64,
    pub m_t: f64,
    pub big_m_t: f64,
}

/// Big-M constants with a unit margin beyond the strict bounds.
pub fn big_m_values(spec: &MicrogridSpec) -> BigM {
    let m_r = spec.p_r_min.iter().copied().fold(f64::INFINITY, f64::min);
    let m_r = if m_r.is_finite() { m_r } else { 0.0 } - 1.0;
    let big_m_r = spec.p_r_max.iter().copied().fold(0.0, f64::max) + 1.0;
    let rho_s = spec
        .p_s_max
        .iter()
        .zip(&spec.p_s_min)
        .zip(&spec.chi_s)
        .map(|((hi, lo), chi)| (hi - lo) / chi)
        .fold(0.0, f64::max);
    let rho_t = spec
        .p_t_max
        .iter()
        .zip(&spec.p_t_min)
        .zip(&spec.chi_t)
        .map(|((hi, lo), chi)| (hi - lo) / chi)
        .fold(0.0, f64::max);
    let big_m_t = rho_s.max(rho_t) + 1.0;
    BigM {
        m_r,
        big_m_r,
        m_t: -big_m_t,
        big_m_t,
    }
}

/// Table-I style single-bus-per-unit case study: one conventional, one
/// storage and one wind unit plus a load, meshed by four lines.
pub fn case_study_spec() -> MicrogridSpec {
    MicrogridSpec {
        p_t_min: vec![0.4],
        p_t_max: vec![1.0],
        p_s_min: vec![-1.0],
        p_s_max: vec![1.0],
        p_r_min: vec![0.0],
        p_r_max: vec![2.0],
        x_max: vec![7.0],
        x_soft_min: vec![0.5],
        x_soft_max: vec![6.5],
        chi_t: vec![1.0],
        chi_s: vec![1.0],
        loads: 1,
        ts: 0.5,
        network: Network::case_study(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn big_m_case_study() {
        let m = big_m_values(&case_study_spec());
        assert_eq!(m.big_m_r, 3.0);
        assert_eq!(m.m_r, -1.0);
        // ρ_s^max = 2, ρ_t^max = 0.6
        assert_eq!(m.big_m_t, 3.0);
        assert_eq!(m.m_t, -3.0);
    }

    #[test]
    fn big_m_degenerate_renewable() {
        let mut spec = case_study_spec();
        spec.p_r_min = vec![0.0];
        spec.p_r_max = vec![0.0];
        let m = big_m_values(&spec);
        assert_eq!((m.m_r, m.big_m_r), (-1.0, 1.0));
    }

    #[test]
    fn validation_names_invariants() {
        assert!(case_study_spec().validate().is_ok());
        let mut s = case_study_spec();
        s.chi_s = vec![0.0];
        match s.validate() {
            Err(ModelError::Invalid { invariant, .. }) => {
                assert_eq!(invariant, "power_sharing_gain_positive")
            }
            other => panic!("unexpected {other:?}"),
        }
        let mut s = case_study_spec();
        s.x_soft_max = vec![7.5];
        assert!(matches!(
            s.validate(),
            Err(ModelError::Invalid {
                invariant: "soft_band_within_capacity",
                ..
            })
        ));
        let mut s = case_study_spec();
        s.p_s_min = vec![0.2];
        assert!(s.validate().is_err());
    }
}
