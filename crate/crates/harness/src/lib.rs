//! Experiment harness for the streaming inference engines: configuration,
//! seeded data generation, orchestration, matrix files and result records.

pub mod config;
pub mod error;
pub mod experiments;
pub mod figures;
pub mod generate;
pub mod ingest;
pub mod record;
pub mod rng;

pub use config::ExperimentConfig;
pub use error::{HarnessError, Result};
pub use experiments::{run_experiment, ExperimentOutput};
