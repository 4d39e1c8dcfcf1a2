pub mod catalog;
pub mod cli;
pub mod config;
pub mod drivers;
pub mod report;

use thiserror::Error;

use crate::approx::ApproxError;
use crate::lattice::LatticeError;
use crate::model::ModelError;
use crate::pde::PdeError;
use crate::tree::TreeError;

pub use catalog::{catalog, lookup, CatalogEntry};
pub use config::{parse_ladder, ExperimentConfig, ProblemRef};
pub use drivers::{run, Command};
pub use report::{read_checks_csv, write_checks_csv, CheckRecord, Environment, RunReport};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("unknown problem {0:?}")]
    UnknownProblem(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("malformed report: {0}")]
    Report(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Approx(#[from] ApproxError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Pde(#[from] PdeError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl ExperimentError {
    /// `2` for input the user can fix, `1` for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::UnknownProblem(_) | ExperimentError::Config(_) | ExperimentError::Report(_) => 2,
            ExperimentError::Approx(
                ApproxError::IndexTooSmall { .. } | ApproxError::InvalidSearch(_) | ApproxError::InvalidLadder(_),
            ) => 2,
            ExperimentError::Lattice(LatticeError::InvalidConfig(_))
            | ExperimentError::Pde(PdeError::Lattice(LatticeError::InvalidConfig(_))) => 2,
            ExperimentError::Tree(TreeError::InvalidConfig(_) | TreeError::BudgetExceeded { .. }) => 2,
            ExperimentError::Pde(
                PdeError::CflViolation { .. } | PdeError::InvalidGrid(_) | PdeError::InconsistentConfigs(_),
            ) => 2,
            ExperimentError::Model(ModelError::InvalidSpec(_)) => 2,
            _ => 1,
        }
    }
}
