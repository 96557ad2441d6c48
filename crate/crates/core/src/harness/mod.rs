//! Experiment configuration, runs, plots and verification suites.

pub mod config;
pub mod plot;
pub mod run;
pub mod verify;

pub use config::ExperimentConfig;
pub use run::{run_experiment, RegretReport, SeedRun};
