//! Simulation harness for the DPMNL bandit: synthetic and replayed
//! environments, replicated regret runs, and CSV output.

use std::path::{Path, PathBuf};

use dpmnl_core::accountant::BudgetError;
use dpmnl_core::mle::MleError;
use dpmnl_core::mnl::MnlError;
use dpmnl_core::policy::PolicyError;
use thiserror::Error;

pub mod config;
pub mod env;
pub mod replay;
pub mod results;
pub mod runner;
pub mod seeds;

pub use config::{ArmKind, ArmSpec, ExperimentConfig};
pub use results::{ResultsTable, Stats};
pub use runner::{run_experiment, RunOutput};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("config: {0}")]
    Config(String),
    #[error("replay: {0}")]
    Replay(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Model(#[from] MnlError),
    #[error(transparent)]
    Mle(#[from] MleError),
    #[error(transparent)]
    Budget(#[from] BudgetError),
}

impl SimError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        SimError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
