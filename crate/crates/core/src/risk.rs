//! Coherent risk measures on finite probability spaces.
//!
//! Everything here works on a cost vector `Z` (one entry per outcome) paired
//! with a [`DiscreteDistribution`]. The average value-at-risk is computed from
//! its epigraph linear program
//!
//! ```text
//! AV@R_α(Z) = min { t + E_π(ξ) : ξ ≥ 0, α ξ ≥ Z − t·1 }
//! ```
//!
//! which is also the shape of the rows the optimal control problem carries
//! for every non-leaf node of a scenario tree (see [`avar_constraint_block`]).

use thiserror::Error;

/// Tolerance used when validating that probabilities form a simplex point.
pub const PROBABILITY_TOLERANCE: f64 = 1e-10;

/// Largest outcome count the vertex-enumeration oracle accepts.
pub const MAX_ORACLE_OUTCOMES: usize = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RiskError {
    #[error("dimension mismatch: expected {expected} outcomes, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("empty cost vector")]
    Empty,
    #[error("risk level {0} outside [0, 1]")]
    Domain(f64),
    #[error("invalid probability vector: {0}")]
    InvalidProbability(String),
    #[error("vertex enumeration limited to {max} outcomes, got {got}")]
    Capacity { max: usize, got: usize },
    #[error("inconsistent tree probabilities: {0}")]
    TreeConsistency(String),
}

/// Strictly positive probability vector summing to one.
///
/// Validation allows a drift of [`PROBABILITY_TOLERANCE`]; the stored vector
/// is renormalised once so downstream code can rely on an exact sum.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    probabilities: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(probabilities: Vec<f64>) -> Result<Self, RiskError> {
        if probabilities.is_empty() {
            return Err(RiskError::Empty);
        }
        if let Some(p) = probabilities.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
            return Err(RiskError::InvalidProbability(format!(
                "entry {p} is not strictly positive"
            )));
        }
        let sum: f64 = probabilities.iter().sum();
        if (sum - 1.0).abs() > PROBABILITY_TOLERANCE {
            return Err(RiskError::InvalidProbability(format!(
                "entries sum to {sum}"
            )));
        }
        let probabilities = probabilities.into_iter().map(|p| p / sum).collect();
        Ok(Self { probabilities })
    }

    pub fn uniform(k: usize) -> Result<Self, RiskError> {
        if k == 0 {
            return Err(RiskError::Empty);
        }
        Ok(Self {
            probabilities: vec![1.0 / k as f64; k],
        })
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }
}

/// Risk level α of the average value-at-risk. α = 1 is the expectation and
/// α = 0 the worst case.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct RiskLevel(f64);

impl RiskLevel {
    pub fn new(alpha: f64) -> Result<Self, RiskError> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(RiskError::Domain(alpha));
        }
        Ok(Self(alpha))
    }

    pub const WORST_CASE: RiskLevel = RiskLevel(0.0);
    pub const RISK_NEUTRAL: RiskLevel = RiskLevel(1.0);

    pub fn value(self) -> f64 {
        self.0
    }
}

fn check_len(z: &[f64], pi: &DiscreteDistribution) -> Result<(), RiskError> {
    if z.len() != pi.len() {
        return Err(RiskError::Dimension {
            expected: pi.len(),
            got: z.len(),
        });
    }
    Ok(())
}

pub fn expectation(z: &[f64], pi: &DiscreteDistribution) -> Result<f64, RiskError> {
    check_len(z, pi)?;
    Ok(z.iter().zip(pi.probabilities()).map(|(z, p)| z * p).sum())
}

pub fn worst_case(z: &[f64]) -> Result<f64, RiskError> {
    z.iter()
        .copied()
        .reduce(f64::max)
        .ok_or(RiskError::Empty)
}

/// Optimal point of the AV@R epigraph program.
#[derive(Debug, Clone, PartialEq)]
pub struct AvarSolution {
    pub value: f64,
    /// Optimal `t` (a value-at-risk at level α).
    pub t: f64,
    /// Optimal slack vector ξ.
    pub xi: Vec<f64>,
}

/// Solves the AV@R epigraph program exactly.
///
/// For α ∈ (0, 1) the objective `t + E_π(max(Z − t, 0))/α` is convex and
/// piecewise linear in `t` with kinks at the entries of `Z`, so an optimal `t`
/// is the entry at which the upper-tail mass first reaches α. The boundary
/// levels use their closed forms.
pub fn avar_epigraph(
    z: &[f64],
    pi: &DiscreteDistribution,
    alpha: RiskLevel,
) -> Result<AvarSolution, RiskError> {
    check_len(z, pi)?;
    let a = alpha.value();
    if a == 0.0 {
        let t = worst_case(z)?;
        return Ok(AvarSolution {
            value: t,
            t,
            xi: vec![0.0; z.len()],
        });
    }
    if a == 1.0 {
        // t = min Z keeps ξ = Z − t ≥ 0 and the objective collapses to E(Z).
        let value = expectation(z, pi)?;
        let t = z.iter().copied().fold(f64::INFINITY, f64::min);
        let xi = z.iter().map(|zi| zi - t).collect();
        return Ok(AvarSolution { value, t, xi });
    }

    let mut order: Vec<usize> = (0..z.len()).collect();
    order.sort_by(|&i, &j| z[j].total_cmp(&z[i]).then(i.cmp(&j)));
    let probs = pi.probabilities();
    let mut tail = 0.0;
    let mut t = z[order[order.len() - 1]];
    for &i in &order {
        tail += probs[i];
        if tail >= a {
            t = z[i];
            break;
        }
    }
    let xi: Vec<f64> = z.iter().map(|zi| (zi - t).max(0.0) / a).collect();
    let value = t + xi.iter().zip(probs).map(|(x, p)| x * p).sum::<f64>();
    Ok(AvarSolution { value, t, xi })
}

/// Average value-at-risk of `z` at level `alpha`.
pub fn avar(z: &[f64], pi: &DiscreteDistribution, alpha: RiskLevel) -> Result<f64, RiskError> {
    avar_epigraph(z, pi, alpha).map(|s| s.value)
}

/// Worst-case expectation over the vertices of the AV@R ambiguity polytope
/// `{π' ∈ D : π' ≤ π/α}` (the whole simplex when α = 0).
///
/// Exponential in the number of outcomes; kept for cross-checking
/// [`avar`] on small instances.
pub fn avar_dual_oracle(
    z: &[f64],
    pi: &DiscreteDistribution,
    alpha: RiskLevel,
) -> Result<f64, RiskError> {
    check_len(z, pi)?;
    let k = z.len();
    if k > MAX_ORACLE_OUTCOMES {
        return Err(RiskError::Capacity {
            max: MAX_ORACLE_OUTCOMES,
            got: k,
        });
    }
    let a = alpha.value();
    if a == 0.0 {
        return worst_case(z);
    }
    let caps: Vec<f64> = pi.probabilities().iter().map(|p| p / a).collect();
    let mut best = f64::NEG_INFINITY;
    // A vertex has every coordinate at a bound except at most one; enumerate
    // the set at the upper bound and the single free coordinate.
    for mask in 0u32..(1u32 << k) {
        let at_cap: f64 = (0..k).filter(|i| mask & (1 << i) != 0).map(|i| caps[i]).sum();
        let base: f64 = (0..k)
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| caps[i] * z[i])
            .sum();
        let rest = 1.0 - at_cap;
        if rest.abs() <= 1e-12 {
            best = best.max(base);
            continue;
        }
        for f in (0..k).filter(|i| mask & (1 << i) == 0) {
            if rest >= 0.0 && rest <= caps[f] + 1e-12 {
                best = best.max(base + rest * z[f]);
            }
        }
    }
    Ok(best)
}

/// One risk row `α ξ_child + t ≥ rhs_child`, paired with `ξ_child ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskRow {
    /// Position of the child within the block.
    pub child: usize,
    pub xi_coeff: f64,
    pub t_coeff: f64,
    /// Weight of `ξ_child` in the node objective `t + Σ w ξ`.
    pub weight: f64,
}

/// Symbolic AV@R rows for one non-leaf node. The caller supplies the
/// right-hand sides (child cost plus, for inner nodes, the child's own
/// objective term).
#[derive(Debug, Clone, PartialEq)]
pub struct AvarBlock {
    pub alpha: RiskLevel,
    pub rows: Vec<RiskRow>,
}

impl AvarBlock {
    pub fn conditional_weights(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.weight).collect()
    }
}

pub fn avar_constraint_block(
    alpha: RiskLevel,
    child_probabilities: &[f64],
    parent_probability: f64,
) -> Result<AvarBlock, RiskError> {
    if child_probabilities.is_empty() {
        return Err(RiskError::TreeConsistency("node without children".into()));
    }
    if !(parent_probability > 0.0) {
        return Err(RiskError::TreeConsistency(format!(
            "parent probability {parent_probability} not positive"
        )));
    }
    if child_probabilities.iter().any(|p| !(*p > 0.0)) {
        return Err(RiskError::TreeConsistency(
            "child probability not positive".into(),
        ));
    }
    let sum: f64 = child_probabilities.iter().sum();
    if (sum - parent_probability).abs() > PROBABILITY_TOLERANCE {
        return Err(RiskError::TreeConsistency(format!(
            "children sum to {sum}, parent has {parent_probability}"
        )));
    }
    let rows = child_probabilities
        .iter()
        .enumerate()
        .map(|(child, p)| RiskRow {
            child,
            xi_coeff: alpha.value(),
            t_coeff: 1.0,
            weight: p / parent_probability,
        })
        .collect();
    Ok(AvarBlock { alpha, rows })
}
