//! Library half of the `pseudogen` command-line tool: run configuration,
//! the five workflow operations, and run manifests. Kept as a library so
//! integration tests can drive whole workflows in-process.

pub mod config;
pub mod ops;

pub use config::{parse_overrides, LmSource, RunConfig, TaskSelection};
pub use ops::{
    run_generate, run_prompting_baseline, run_quality, run_scaling_sweep, run_train_eval,
    AccessLog, GenerateOutcome, RunPaths, SweepReport, SweepRow, TrainEvalOutcome,
};

/// Errors surfaced to the command line. Exit codes: 0 success, 2 config
/// error, 3 data error, 4 internal error.
#[derive(Debug)]
pub enum CliError {
    Config { field: String, msg: String },
    Data(pseudogen_core::Error),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Data(_) => 3,
            CliError::Internal(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config { field, msg } => write!(f, "config error at {field}: {msg}"),
            CliError::Data(e) => write!(f, "data error: {e}"),
            CliError::Internal(msg) => write!(f, "internal error: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<pseudogen_core::Error> for CliError {
    fn from(e: pseudogen_core::Error) -> Self {
        CliError::Data(e)
    }
}
