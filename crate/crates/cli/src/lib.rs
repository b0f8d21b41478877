//! Config-driven experiment runner: synthetic generation or CSV ingestion,
//! estimation with any method, bound diagnostics and the case-grid study.

pub mod command;
pub mod config;
pub mod diagnose;
pub mod error;
pub mod experiment;
pub mod io;
pub mod record;
pub mod replicate;

pub use config::{CvSettings, ExperimentConfig, Method, Mode, SolverSettings};
pub use error::{CliError, CliResult};
pub use experiment::run_experiment;
pub use record::{ResultsRecord, SCHEMA_VERSION};
