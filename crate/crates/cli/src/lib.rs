//! Command-line driver: JSON configs in, hash-named directories of JSON and
//! CSV artifacts out.

pub mod commands;
pub mod config;
pub mod report;

use thiserror::Error;

pub use commands::{cmd_lipschitz, cmd_solve, cmd_stability, cmd_validate, RunOptions, DEFAULT_SEED};
pub use report::{numeric_digest, RunSummary};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_REFUSED: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read config {path}: {source}")]
    ReadConfig { path: String, source: std::io::Error },

    #[error("malformed config {path}: {source}")]
    Config { path: String, source: serde_json::Error },

    #[error("invalid config: {0}")]
    Invalid(String),

    #[error(transparent)]
    Core(#[from] ppde_core::Error),

    #[error("cannot write {path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error("cannot serialize report: {0}")]
    Serialize(serde_json::Error),

    #[error("cannot start worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

impl CliError {
    /// 2 for refusals and bad input, 3 for budget refusals, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ReadConfig { .. } | CliError::Config { .. } | CliError::Invalid(_) => EXIT_REFUSED,
            CliError::Core(e) => match e {
                ppde_core::Error::Validation { .. } | ppde_core::Error::Domain(_) => EXIT_REFUSED,
                ppde_core::Error::Budget { .. } => EXIT_BUDGET,
                ppde_core::Error::Numeric { .. } => EXIT_INTERNAL,
            },
            CliError::Io { .. } | CliError::Serialize(_) | CliError::Pool(_) => EXIT_INTERNAL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    Stability,
    Lipschitz,
    Validate,
}

pub fn run(command: Command, opts: &RunOptions) -> Result<RunSummary, CliError> {
    match command {
        Command::Solve => cmd_solve(opts),
        Command::Stability => cmd_stability(opts),
        Command::Lipschitz => cmd_lipschitz(opts),
        Command::Validate => cmd_validate(opts),
    }
}
