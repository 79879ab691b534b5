//! Stage costs of the operation-control problem and closed-loop averages.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AuxiliaryVars, ControlInput, Dims, MicrogridSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CostError {
    #[error("invariant `{invariant}` violated: {detail}")]
    Invalid {
        invariant: &'static str,
        detail: String,
    },
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("cannot average an empty trajectory")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostWeights {
    /// Fixed running cost per enabled conventional unit.
    pub c_t: Vec<f64>,
    /// Linear fuel cost of conventional units.
    pub c_t_prime: Vec<f64>,
    /// Quadratic fuel cost of conventional units.
    pub c_t_double_prime: Vec<f64>,
    pub c_sw: Vec<f64>,
    /// Curtailment weight of renewable units.
    pub c_r: Vec<f64>,
    /// Soft-band weight of storage units.
    pub c_s: Vec<f64>,
    pub gamma: f64,
}

impl CostWeights {
    pub fn case_study() -> Self {
        Self {
            c_t: vec![0.1178],
            c_t_prime: vec![0.751],
            c_t_double_prime: vec![0.0693],
            c_sw: vec![0.1],
            c_r: vec![1.0],
            c_s: vec![3000.0],
            gamma: 0.95,
        }
    }

    pub fn validate(&self, d: Dims) -> Result<(), CostError> {
        let lens: [(&'static str, usize, usize); 6] = [
            ("c_t", d.t, self.c_t.len()),
            ("c_t_prime", d.t, self.c_t_prime.len()),
            ("c_t_double_prime", d.t, self.c_t_double_prime.len()),
            ("c_sw", d.t, self.c_sw.len()),
            ("c_r", d.r, self.c_r.len()),
            ("c_s", d.s, self.c_s.len()),
        ];
        for (what, expected, got) in lens {
            if expected != got {
                return Err(CostError::Dimension {
                    what,
                    expected,
                    got,
                });
            }
        }
        let all = self
            .c_t
            .iter()
            .chain(&self.c_t_prime)
            .chain(&self.c_t_double_prime)
            .chain(&self.c_sw)
            .chain(&self.c_r)
            .chain(&self.c_s);
        if let Some(c) = all.into_iter().find(|c| !(**c > 0.0 && c.is_finite())) {
            return Err(CostError::Invalid {
                invariant: "cost_weight_positive",
                detail: format!("{c}"),
            });
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(CostError::Invalid {
                invariant: "discount_in_open_unit_interval",
                detail: format!("gamma = {}", self.gamma),
            });
        }
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| a * b).sum()
}

fn weighted_square(w: &[f64], v: impl IntoIterator<Item = f64>) -> f64 {
    w.iter().zip(v).map(|(w, v)| (w * v).powi(2)).sum()
}

/// Running cost of the conventional units.
pub fn running_cost(delta_t: &[f64], p_t: &[f64], wts: &CostWeights) -> f64 {
    dot(&wts.c_t, delta_t)
        + dot(&wts.c_t_prime, p_t)
        + weighted_square(&wts.c_t_double_prime, p_t.iter().copied())
}

pub fn switch_cost(delta_now: &[f64], delta_prev: &[f64], wts: &CostWeights) -> f64 {
    weighted_square(
        &wts.c_sw,
        delta_prev.iter().zip(delta_now).map(|(p, n)| p - n),
    )
}

/// Penalty on renewable power left unused below rated power.
pub fn curtailment_cost(p_r: &[f64], spec: &MicrogridSpec, wts: &CostWeights) -> f64 {
    weighted_square(
        &wts.c_r,
        spec.p_r_max.iter().zip(p_r).map(|(max, p)| max - p),
    )
}

/// Penalty for stored energy outside the soft band.
pub fn storage_soft_cost(x: &[f64], spec: &MicrogridSpec, wts: &CostWeights) -> f64 {
    (0..x.len())
        .map(|i| {
            let below = (spec.x_soft_min[i] - x[i]).max(0.0);
            let above = (spec.x_soft_max[i] - x[i]).min(0.0);
            wts.c_s[i] * (below - above)
        })
        .sum()
}

/// Economic cost `ℓ_o` of applying `v` (after `v_prev`) and realizing `q`.
pub fn operating_cost(
    v: &ControlInput,
    v_prev_delta: &[f64],
    q: &AuxiliaryVars,
    spec: &MicrogridSpec,
    wts: &CostWeights,
) -> f64 {
    running_cost(&v.delta_t, &q.p_t, wts)
        + switch_cost(&v.delta_t, v_prev_delta, wts)
        + curtailment_cost(&q.p_r, spec, wts)
}

/// Discounted cost attached to a node at `stage`.
pub fn node_cost(
    stage: usize,
    x_child: &[f64],
    v: &ControlInput,
    v_prev_delta: &[f64],
    q_child: &AuxiliaryVars,
    spec: &MicrogridSpec,
    wts: &CostWeights,
) -> f64 {
    wts.gamma.powi(stage as i32)
        * (operating_cost(v, v_prev_delta, q_child, spec, wts)
            + storage_soft_cost(x_child, spec, wts))
}

/// Undiscounted time averages of per-step `(ℓ_o, ℓ_s)`.
pub fn average_metrics(steps: &[(f64, f64)]) -> Result<(f64, f64), CostError> {
    if steps.is_empty() {
        return Err(CostError::Empty);
    }
    let k = steps.len() as f64;
    let (o, s) = steps
        .iter()
        .fold((0.0, 0.0), |(o, s), (a, b)| (o + a, s + b));
    Ok((o / k, s / k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::case_study_spec;

    #[test]
    fn running_cost_examples() {
        let w = CostWeights::case_study();
        assert_eq!(running_cost(&[0.0], &[0.0], &w), 0.0);
        let expected = 0.1178 + 0.751 * 0.35 + (0.0693_f64 * 0.35).powi(2);
        assert!((running_cost(&[1.0], &[0.35], &w) - expected).abs() < 1e-15);
        assert!((expected - 0.38124).abs() < 1e-5);
        let mut lin = w.clone();
        lin.c_t_double_prime = vec![0.0];
        let base = running_cost(&[1.0], &[0.0], &lin);
        let one = running_cost(&[1.0], &[0.3], &lin) - base;
        let two = running_cost(&[1.0], &[0.6], &lin) - base;
        assert!((two - 2.0 * one).abs() < 1e-15);
    }

    #[test]
    fn switch_cost_examples() {
        let w = CostWeights::case_study();
        assert_eq!(switch_cost(&[1.0], &[1.0], &w), 0.0);
        assert!((switch_cost(&[1.0], &[0.0], &w) - 0.01).abs() < 1e-15);
        let mut two = w.clone();
        two.c_sw = vec![0.1, 0.2];
        assert!((switch_cost(&[1.0, 0.0], &[0.0, 1.0], &two) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn curtailment_examples() {
        let spec = case_study_spec();
        let w = CostWeights::case_study();
        assert_eq!(curtailment_cost(&[2.0], &spec, &w), 0.0);
        assert!((curtailment_cost(&[0.5], &spec, &w) - 2.25).abs() < 1e-15);
        let mut scaled = w.clone();
        scaled.c_r = vec![3.0];
        assert!((curtailment_cost(&[0.5], &spec, &scaled) - 9.0 * 2.25).abs() < 1e-12);
    }

    #[test]
    fn soft_storage_examples() {
        let spec = case_study_spec();
        let w = CostWeights::case_study();
        assert_eq!(storage_soft_cost(&[3.0], &spec, &w), 0.0);
        assert!((storage_soft_cost(&[0.4], &spec, &w) - 300.0).abs() < 1e-9);
        assert!((storage_soft_cost(&[6.6], &spec, &w) - 300.0).abs() < 1e-9);
    }

    #[test]
    fn node_cost_discount() {
        let spec = case_study_spec();
        let mut w = CostWeights::case_study();
        w.c_t = vec![1.0];
        w.c_t_prime = vec![0.0];
        w.c_t_double_prime = vec![0.0];
        w.c_r = vec![0.0];
        let v = ControlInput {
            u_t: vec![0.0],
            u_s: vec![0.0],
            u_r: vec![0.0],
            delta_t: vec![1.0],
        };
        let q = AuxiliaryVars {
            p_t: vec![0.0],
            p_s: vec![0.0],
            p_r: vec![2.0],
            delta_r: vec![0.0],
            rho: 0.0,
        };
        let c2 = node_cost(2, &[3.0], &v, &[1.0], &q, &spec, &w);
        assert!((c2 - 0.9025).abs() < 1e-15);
        let c1 = node_cost(1, &[3.0], &v, &[1.0], &q, &spec, &w);
        assert!((c2 / c1 - 0.95).abs() < 1e-15);
    }

    #[test]
    fn averages() {
        assert_eq!(average_metrics(&[(2.0, 0.0), (2.0, 600.0)]).unwrap(), (2.0, 300.0));
        assert_eq!(average_metrics(&[(0.0, 0.0)]).unwrap(), (0.0, 0.0));
        assert_eq!(average_metrics(&[]), Err(CostError::Empty));
    }

    #[test]
    fn weights_validation() {
        let d = case_study_spec().dims();
        assert!(CostWeights::case_study().validate(d).is_ok());
        let mut w = CostWeights::case_study();
        w.gamma = 1.0;
        assert!(w.validate(d).is_err());
        let mut w = CostWeights::case_study();
        w.c_s = vec![];
        assert!(matches!(w.validate(d), Err(CostError::Dimension { .. })));
    }
}
