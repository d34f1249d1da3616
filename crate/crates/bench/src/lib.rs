//! Experiment runner for the CbAS benchmarks: configuration, deterministic
//! per-cell seeding, the named scenarios and their CSV/JSON artifacts.

pub mod config;
pub mod error;
pub mod report;
pub mod runner;
pub mod scenarios;
pub mod seed;
pub mod summary;

pub use config::{ExperimentConfig, Method, Scenario};
pub use error::{BenchError, Result};
pub use scenarios::{run_scenario, RunResult, ScenarioOutput};
