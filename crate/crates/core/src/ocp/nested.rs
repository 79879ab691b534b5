use super::OcpError;
use crate::risk::{avar, DiscreteDistribution, RiskLevel};
use crate::uncertainty::ScenarioTree;

/// Nested risk `Φ_0` of per-node costs, with `Φ_i = ρ(Z_c + Φ_c)` over the
/// children `c` of `i` under conditional probabilities `π_c / π_i`.
/// `costs[0]` is ignored.
pub fn evaluate_nested_risk(
    tree: &ScenarioTree,
    costs: &[f64],
    alpha: RiskLevel,
) -> Result<f64, OcpError> {
    if costs.len() != tree.len() {
        return Err(OcpError::MissingCost(costs.len().min(tree.len())));
    }
    let mut phi = vec![0.0; tree.len()];
    for i in (0..tree.len()).rev() {
        if tree.is_leaf(i) {
            continue;
        }
        let children = tree.children(i);
        let pi = tree.probability(i);
        let cond = DiscreteDistribution::new(
            children.iter().map(|&c| tree.probability(c) / pi).collect(),
        )?;
        let z: Vec<f64> = children.iter().map(|&c| costs[c] + phi[c]).collect();
        phi[i] = avar(&z, &cond, alpha)?;
    }
    Ok(phi[0])
}
