use crate::model::Disturbance;

use super::{Result, UncertaintyError};

const STAGE_MASS_TOLERANCE: f64 = 1e-10;

/// Node-indexed scenario tree. Node 0 is the root at stage 0 and carries no
/// disturbance; node identifiers are nondecreasing in stage.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTree {
    r: usize,
    d: usize,
    horizon: usize,
    stage: Vec<usize>,
    ancestor: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    probability: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl ScenarioTree {
    /// Builds and validates a tree from per-node ancestors, probabilities and
    /// disturbance values (empty for the root).
    pub fn new(
        r: usize,
        d: usize,
        ancestor: Vec<Option<usize>>,
        probability: Vec<f64>,
        values: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let mu = ancestor.len();
        if mu == 0 {
            return Err(UncertaintyError::Empty("scenario tree"));
        }
        if probability.len() != mu || values.len() != mu {
            return Err(UncertaintyError::Dimension {
                what: "tree node arrays",
                expected: mu,
                got: probability.len().min(values.len()),
            });
        }
        if ancestor[0].is_some() {
            return Err(UncertaintyError::Tree("node 0 must be the root".into()));
        }
        let mut stage = vec![0; mu];
        let mut children = vec![Vec::new(); mu];
        for i in 1..mu {
            let a = ancestor[i]
                .ok_or_else(|| UncertaintyError::Tree(format!("node {i} has no ancestor")))?;
            if a >= i {
                return Err(UncertaintyError::Tree(format!(
                    "ancestor {a} of node {i} does not precede it"
                )));
            }
            stage[i] = stage[a] + 1;
            if stage[i] < stage[i - 1] {
                return Err(UncertaintyError::Tree(format!(
                    "node {i} breaks stage ordering"
                )));
            }
            children[a].push(i);
            if values[i].len() != r + d {
                return Err(UncertaintyError::Dimension {
                    what: "node disturbance",
                    expected: r + d,
                    got: values[i].len(),
                });
            }
            if let Some(v) = values[i].iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
                return Err(UncertaintyError::Tree(format!(
                    "node {i} has invalid disturbance {v}"
                )));
            }
        }
        let horizon = stage[mu - 1];
        let tree = Self {
            r,
            d,
            horizon,
            stage,
            ancestor,
            children,
            probability,
            values,
        };
        tree.validate()?;
        Ok(tree)
    }

    fn validate(&self) -> Result<()> {
        if let Some((i, p)) = self
            .probability
            .iter()
            .enumerate()
            .find(|(_, p)| !(**p > 0.0 && p.is_finite()))
        {
            return Err(UncertaintyError::Tree(format!(
                "node {i} has non-positive probability {p}"
            )));
        }
        for i in 0..self.len() {
            if self.children[i].is_empty() {
                if self.stage[i] != self.horizon {
                    return Err(UncertaintyError::Tree(format!(
                        "leaf {i} at stage {} before horizon {}",
                        self.stage[i], self.horizon
                    )));
                }
                continue;
            }
            let sum: f64 = self.children[i].iter().map(|c| self.probability[*c]).sum();
            if (sum - self.probability[i]).abs() > STAGE_MASS_TOLERANCE {
                return Err(UncertaintyError::Tree(format!(
                    "children of node {i} carry mass {sum}, node has {}",
                    self.probability[i]
                )));
            }
        }
        for j in 0..=self.horizon {
            let mass: f64 = self.nodes_at(j).map(|i| self.probability[i]).sum();
            if (mass - 1.0).abs() > STAGE_MASS_TOLERANCE {
                return Err(UncertaintyError::Tree(format!(
                    "stage {j} carries mass {mass}"
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.stage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stage.is_empty()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn stage(&self, i: usize) -> usize {
        self.stage[i]
    }

    pub fn ancestor(&self, i: usize) -> Option<usize> {
        self.ancestor[i]
    }

    pub fn children(&self, i: usize) -> &[usize] {
        &self.children[i]
    }

    pub fn probability(&self, i: usize) -> f64 {
        self.probability[i]
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probability
    }

    pub fn is_leaf(&self, i: usize) -> bool {
        self.children[i].is_empty()
    }

    /// Stacked `(w_r, w_d)` at node `i`; empty at the root.
    pub fn value(&self, i: usize) -> &[f64] {
        &self.values[i]
    }

    pub fn disturbance(&self, i: usize) -> Disturbance {
        let v = &self.values[i];
        Disturbance {
            w_r: v[..self.r].to_vec(),
            w_d: v[self.r..].to_vec(),
        }
    }

    pub fn nodes_at(&self, stage: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&i| self.stage[i] == stage)
    }

    pub fn leaves(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&i| self.children[i].is_empty())
    }

    pub fn scenario_count(&self) -> usize {
        self.leaves().count()
    }

    /// Root-to-leaf node sequence ending at `leaf`.
    pub fn path_to(&self, leaf: usize) -> Vec<usize> {
        let mut path = vec![leaf];
        let mut i = leaf;
        while let Some(a) = self.ancestor[i] {
            path.push(a);
            i = a;
        }
        path.reverse();
        path
    }

    /// Disturbance trajectory (stages `1..=N`, stage-major) of the scenario
    /// ending at `leaf`.
    pub fn path_values(&self, leaf: usize) -> Vec<f64> {
        self.path_to(leaf)[1..]
            .iter()
            .flat_map(|&i| self.values[i].iter().copied())
            .collect()
    }

    /// Single-path tree following `path` (stage-major stacked values).
    pub fn chain(r: usize, d: usize, path: &[f64]) -> Result<Self> {
        let w = r + d;
        if w == 0 || path.is_empty() || path.len() % w != 0 {
            return Err(UncertaintyError::Dimension {
                what: "chain path",
                expected: w,
                got: path.len(),
            });
        }
        let n = path.len() / w;
        let mut ancestor = vec![None];
        let mut values = vec![Vec::new()];
        for k in 0..n {
            ancestor.push(Some(k));
            values.push(path[k * w..(k + 1) * w].to_vec());
        }
        Self::new(r, d, ancestor, vec![1.0; n + 1], values)
    }
}
