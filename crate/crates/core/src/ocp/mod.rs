//! Risk-averse optimal control problem on a scenario tree.
//!
//! The nested AV@R objective is decomposed into one epigraph block per
//! non-leaf node. Quadratic stage costs enter those blocks as convex
//! quadratic rows, which yields a mixed-integer convex QCQP. It is solved by
//! branch-and-bound over a pluggable [`ConvexBackend`].

mod backend;
mod bnb;
mod build;
mod dump;
mod nested;

pub use backend::{
    BackendSolution, BackendStatus, ClarabelBackend, ConvexBackend, ConvexProgram, LinearRow,
    QuadraticRow, SquaredTerm,
};
pub use bnb::{enumerate_binaries_solve, solve, SolveOptions, SolveReport, SolveStatus};
pub use build::{build_problem, BuildOptions, Formulation, NodeVars, RiskAverseProblem};
pub use dump::write_problem_dump;
pub use nested::evaluate_nested_risk;

use thiserror::Error;

use crate::model::ModelError;
use crate::risk::RiskError;
use crate::uncertainty::UncertaintyError;

#[derive(Debug, Error)]
pub enum OcpError {
    #[error("assembly: {0}")]
    Assembly(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Risk(#[from] RiskError),
    #[error(transparent)]
    Tree(#[from] UncertaintyError),
    #[error("exhaustive enumeration limited to {max} binaries, got {got}")]
    Capacity { max: usize, got: usize },
    #[error("missing cost for node {0}")]
    MissingCost(usize),
}
