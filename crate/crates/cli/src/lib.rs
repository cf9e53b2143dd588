//! Configuration, recipes and report output for the `clubconv` binary.

pub mod config;
pub mod covariates;
pub mod error;
pub mod fmt;
pub mod paths;
pub mod report;
pub mod run;

pub use config::{AnalysisConfig, RawConfig, Recipe};
pub use error::{CliError, Result};
pub use run::{execute, run};
