//! Receding-horizon closed loop: forecast, scenario tree, risk-averse OCP,
//! plant step, repeat.

mod closed_loop;
mod config;
mod log;
mod sensitivity;

pub use closed_loop::{
    build_step_problem, centered_root_input, controller_tree, derive_seed, initial_history, likely_switch_path,
    nominal_world, run_closed_loop, shifted_hint, simulate, solve_step, World,
};
pub use config::{
    ControllerConfig, Mode, NoiseSpec, OutputConfig, RunConfig, SensitivityConfig,
    SimulationConfig, TreeConfig,
};
pub use log::{
    read_summary_csv, write_node_decisions_csv, write_summary_csv, LogRow, Metrics, SummaryRow, Terminal, TrajectoryLog,
    ViolationClasses,
};
pub use sensitivity::{
    read_aggregate_csv, run_sensitivity, write_aggregate_csv, AggregateRow, AlphaSummary,
    NoiseKind, SensitivityReport, Spread,
};

use thiserror::Error;

use crate::model::ModelError;
use crate::ocp::OcpError;
use crate::plant::PlantError;
use crate::uncertainty::UncertaintyError;

#[derive(Debug, Error)]
pub enum MpcError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("configuration: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Uncertainty(#[from] UncertaintyError),
    #[error(transparent)]
    Ocp(#[from] OcpError),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {detail}")]
    Parse { line: usize, detail: String },
}

impl From<crate::risk::RiskError> for MpcError {
    fn from(e: crate::risk::RiskError) -> Self {
        MpcError::Config(e.to_string())
    }
}
