use serde::{Deserialize, Serialize};

use super::MpcError;
use crate::cost::CostWeights;
use crate::model::MicrogridSpec;
use crate::ocp::SolveOptions;
use crate::plant::PlantParams;
use crate::risk::RiskLevel;
use crate::uncertainty::{ForecasterSpec, HelpSpec};

/// How the controller aggregates the scenario tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Nested AV@R at the configured `alpha`.
    RiskAverse,
    /// Single scenario built from the pointwise forecast mean.
    CertaintyEquivalent,
    /// Alias for `alpha = 0`.
    WorstCase,
    /// Alias for `alpha = 1`.
    RiskNeutral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeConfig {
    /// Maximum children per node, one entry per stage.
    pub branching: Vec<usize>,
    /// Monte Carlo scenarios drawn before reduction.
    #[serde(default = "default_scenarios")]
    pub scenarios: usize,
    #[serde(default)]
    pub help: Option<HelpSpec>,
}

fn default_scenarios() -> usize {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    pub mode: Mode,
    #[serde(default)]
    pub alpha: Option<f64>,
    pub horizon: usize,
    #[serde(default = "default_relax_stage")]
    pub relax_stage: usize,
    pub weights: CostWeights,
    #[serde(default)]
    pub solver: SolveOptions,
    /// Also solve each step's tree at α ∈ {0, 0.5, 1} and record the optima.
    #[serde(default)]
    pub diagnostic: bool,
}

fn default_relax_stage() -> usize {
    4
}

impl ControllerConfig {
    pub fn risk_level(&self) -> Result<RiskLevel, MpcError> {
        let alpha = match self.mode {
            Mode::RiskAverse => self.alpha.ok_or_else(|| {
                MpcError::Config("mode `risk_averse` needs `alpha`".into())
            })?,
            Mode::WorstCase => 0.0,
            Mode::RiskNeutral | Mode::CertaintyEquivalent => 1.0,
        };
        RiskLevel::new(alpha).map_err(|e| MpcError::Config(e.to_string()))
    }

    /// Same controller at a different risk level.
    pub fn with_alpha(&self, alpha: f64) -> Self {
        Self {
            mode: Mode::RiskAverse,
            alpha: Some(alpha),
            ..self.clone()
        }
    }
}

/// Additive Gaussian noise on the realized wind speed and load. With an
/// `event_rate` the means apply only on randomly selected steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub load_mean: f64,
    pub load_sd: f64,
    pub wind_mean: f64,
    pub wind_sd: f64,
    #[serde(default)]
    pub event_rate: Option<f64>,
}

impl NoiseSpec {
    pub fn constant_offset() -> Self {
        Self {
            load_mean: 0.048,
            load_sd: 0.032,
            wind_mean: -0.795,
            wind_sd: 0.53,
            event_rate: None,
        }
    }

    pub fn occasional_events() -> Self {
        Self {
            load_mean: 0.096,
            load_sd: 0.032,
            wind_mean: 1.589,
            wind_sd: 0.53,
            event_rate: Some(0.1),
        }
    }

    pub fn validate(&self) -> Result<(), MpcError> {
        if !(self.load_sd >= 0.0 && self.wind_sd >= 0.0) {
            return Err(MpcError::Config("noise standard deviations must be nonnegative".into()));
        }
        if let Some(r) = self.event_rate {
            if !(0.0..=1.0).contains(&r) {
                return Err(MpcError::Config(format!("event rate {r} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensitivityConfig {
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default = "NoiseSpec::constant_offset")]
    pub constant: NoiseSpec,
    #[serde(default = "NoiseSpec::occasional_events")]
    pub occasional: NoiseSpec,
    /// Seed of the replica noise streams.
    #[serde(default)]
    pub meta_seed: u64,
}

fn default_replicas() -> usize {
    50
}

fn default_alphas() -> Vec<f64> {
    vec![0.0, 0.5, 1.0]
}

impl Default for SensitivityConfig {
    fn default() -> Self {
        Self {
            replicas: default_replicas(),
            alphas: default_alphas(),
            constant: NoiseSpec::constant_offset(),
            occasional: NoiseSpec::occasional_events(),
            meta_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    /// Closed-loop steps `K`.
    pub steps: usize,
    pub seed: u64,
    /// Initial stored energy in pu·h.
    #[serde(default = "default_x0")]
    pub x0: Vec<f64>,
    /// Switch state applied before the first step.
    #[serde(default = "default_delta_prev")]
    pub delta_prev: Vec<f64>,
    /// Absolute time index of the first history sample.
    #[serde(default)]
    pub start: usize,
    pub plant: PlantParams,
    /// Noise added to the realized disturbances of nominal runs.
    #[serde(default)]
    pub noise: Option<NoiseSpec>,
    #[serde(default)]
    pub sensitivity: SensitivityConfig,
}

fn default_x0() -> Vec<f64> {
    vec![3.0]
}

fn default_delta_prev() -> Vec<f64> {
    vec![0.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: "out".into(),
        }
    }
}

/// Complete description of a closed-loop experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub microgrid: MicrogridSpec,
    pub forecaster: ForecasterSpec,
    pub tree: TreeConfig,
    pub controller: ControllerConfig,
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, MpcError> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), MpcError> {
        let spec = &self.microgrid;
        spec.validate()?;
        let d = spec.dims();
        self.controller
            .weights
            .validate(d)
            .map_err(|e| MpcError::Config(e.to_string()))?;
        self.forecaster.validate()?;
        if self.forecaster.wind.len() != d.r || self.forecaster.load.len() != d.d {
            return Err(MpcError::Config(format!(
                "forecaster has {} wind and {} load signals, microgrid has {} renewable units and {} loads",
                self.forecaster.wind.len(),
                self.forecaster.load.len(),
                d.r,
                d.d
            )));
        }
        let c = &self.controller;
        if c.horizon == 0 {
            return Err(MpcError::Config("horizon must be at least 1".into()));
        }
        c.risk_level()?;
        if self.tree.branching.len() != c.horizon {
            return Err(MpcError::Config(format!(
                "branching has {} stages, horizon is {}",
                self.tree.branching.len(),
                c.horizon
            )));
        }
        if self.tree.branching.contains(&0) || self.tree.scenarios == 0 {
            return Err(MpcError::Config(
                "branching entries and scenario count must be at least 1".into(),
            ));
        }
        if let Some(h) = &self.tree.help {
            h.validate()?;
        }
        let s = &self.simulation;
        if s.steps == 0 {
            return Err(MpcError::Config("simulation needs at least one step".into()));
        }
        s.plant.validate(d.s)?;
        if s.x0.len() != d.s || s.delta_prev.len() != d.t {
            return Err(MpcError::Config(
                "initial state or switch state has the wrong dimension".into(),
            ));
        }
        if s.x0.iter().chain(&s.delta_prev).any(|v| !v.is_finite()) {
            return Err(MpcError::Config("initial state must be finite".into()));
        }
        if let Some(n) = &s.noise {
            n.validate()?;
        }
        s.sensitivity.constant.validate()?;
        s.sensitivity.occasional.validate()?;
        if let Some(a) = s.sensitivity.alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(MpcError::Config(format!("sensitivity alpha {a} outside [0, 1]")));
        }
        Ok(())
    }
}
