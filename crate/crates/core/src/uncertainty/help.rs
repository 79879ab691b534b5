use serde::{Deserialize, Serialize};

use super::{Result, ScenarioFan, ScenarioTree, UncertaintyError};

/// Two extreme chains: low renewable with high load, and the reverse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HelpSpec {
    /// Probability mass of each chain.
    pub epsilon: f64,
    #[serde(default = "default_low")]
    pub low_quantile: f64,
    #[serde(default = "default_high")]
    pub high_quantile: f64,
}

fn default_low() -> f64 {
    0.001
}

fn default_high() -> f64 {
    0.999
}

impl Default for HelpSpec {
    fn default() -> Self {
        Self {
            epsilon: 1e-3,
            low_quantile: default_low(),
            high_quantile: default_high(),
        }
    }
}

impl HelpSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && 2.0 * self.epsilon < 1.0) {
            return Err(UncertaintyError::Config(format!(
                "HELP epsilon must lie in (0, 0.5), got {}",
                self.epsilon
            )));
        }
        for q in [self.low_quantile, self.high_quantile] {
            if !(q > 0.0 && q < 1.0) {
                return Err(UncertaintyError::Config(format!(
                    "HELP quantile levels must lie in (0, 1), got {q}"
                )));
            }
        }
        Ok(())
    }
}

/// Linear-interpolation sample quantile (Hyndman–Fan type 7).
pub fn empirical_quantile(samples: &[f64], level: f64) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let h = (s.len() - 1) as f64 * level;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(s.len() - 1);
    s[lo] + (h - lo as f64) * (s[hi] - s[lo])
}

/// Appends the two HELP chains to `tree` and rescales existing mass by
/// `1 − 2ε`.
pub fn inject_help(tree: &ScenarioTree, fan: &ScenarioFan, help: &HelpSpec) -> Result<ScenarioTree> {
    help.validate()?;
    if fan.horizon() != tree.horizon() || fan.width() != tree.r() + tree.d() {
        return Err(UncertaintyError::Dimension {
            what: "fan/tree horizon",
            expected: tree.horizon(),
            got: fan.horizon(),
        });
    }
    let min_root_child = tree
        .children(0)
        .iter()
        .map(|&c| tree.probability(c))
        .fold(f64::INFINITY, f64::min);
    if !(2.0 * help.epsilon < min_root_child) {
        return Err(UncertaintyError::Config(format!(
            "HELP mass 2ε = {} must stay below the smallest root-child mass {}",
            2.0 * help.epsilon,
            min_root_child
        )));
    }

    let r = tree.r();
    let n = tree.horizon();
    let chain_value = |k: usize, renewable_low: bool| -> Vec<f64> {
        (0..fan.width())
            .map(|c| {
                let samples: Vec<f64> = (0..fan.len()).map(|m| fan.value(m, k)[c]).collect();
                let low = (c < r) == renewable_low;
                let level = if low {
                    help.low_quantile
                } else {
                    help.high_quantile
                };
                empirical_quantile(&samples, level)
            })
            .collect()
    };

    // New ids: per stage, existing nodes first, then the two chains.
    let mut new_id = vec![0; tree.len()];
    let mut ancestor = vec![None];
    let mut probability = vec![1.0];
    let mut values = vec![Vec::new()];
    let scale = 1.0 - 2.0 * help.epsilon;
    let mut chain_prev = [0usize, 0usize];
    for j in 1..=n {
        for i in tree.nodes_at(j) {
            new_id[i] = ancestor.len();
            ancestor.push(tree.ancestor(i).map(|a| new_id[a]));
            probability.push(tree.probability(i) * scale);
            values.push(tree.value(i).to_vec());
        }
        for (c, renewable_low) in [true, false].into_iter().enumerate() {
            let id = ancestor.len();
            ancestor.push(Some(chain_prev[c]));
            probability.push(help.epsilon);
            values.push(chain_value(j - 1, renewable_low));
            chain_prev[c] = id;
        }
    }
    ScenarioTree::new(tree.r(), tree.d(), ancestor, probability, values)
}
