//! Scenario-based description of the uncertain renewable infeed and load.
//!
//! A [`ScenarioFan`] of equally likely trajectories is simulated from a
//! seasonal ARIMA forecaster, compressed into a [`ScenarioTree`] by stagewise
//! forward selection, and optionally augmented with two extreme low-probability
//! chains (HELP scenarios).

mod arima;
mod fan;
mod help;
mod io;
mod reduction;
mod tree;

pub use arima::{expand_polynomials, SignalModel};
pub use fan::{
    sample_signal_path, simulate_fan, ForecasterSpec, History, ScenarioFan, SignalPath, WindSource,
};
pub use help::{empirical_quantile, inject_help, HelpSpec};
pub use io::{read_fan_csv, read_tree_csv, write_fan_csv, write_tree_csv};
pub use reduction::{kantorovich_distance, reduce_to_tree};
pub use tree::ScenarioTree;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum UncertaintyError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("empty {0}")]
    Empty(&'static str),
    #[error("invalid scenario tree: {0}")]
    Tree(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {detail}")]
    Parse { line: usize, detail: String },
}

pub type Result<T> = std::result::Result<T, UncertaintyError>;
