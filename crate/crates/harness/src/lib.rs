//! Seeded experiment runner for the `nsvp` library.

pub mod config;
pub mod data;
pub mod error;
pub mod experiments;
pub mod report;
pub mod rng;

pub use config::{ExperimentConfig, ExperimentKind};
pub use error::{HarnessError, Result};
pub use experiments::run;
pub use report::{RunOutput, RunReport};
