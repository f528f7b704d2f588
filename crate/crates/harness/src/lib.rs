//! Experiment harness for the distributed Kalman filters: configuration,
//! model registry, seeded runs with monitors, Monte Carlo ensembles, exports
//! and self-checks.

pub mod config;
pub mod error;
pub mod export;
pub mod montecarlo;
pub mod record;
pub mod registry;
pub mod runner;
pub mod verify;

pub use config::ExperimentConfig;
pub use error::{HarnessError, Result};
pub use record::RunRecord;
pub use runner::{prepare, run_experiment, run_seeded};
