//! Command-line front end: configuration, file formats and the five
//! subcommands (`fit`, `simulate`, `personalize`, `predict`, `export`).

pub mod commands;
pub mod config;
pub mod io;

use thiserror::Error;

/// Exit code 2: malformed inputs (config, mesh, dataset, bundles).
/// Exit code 3: numerical aborts and output failures.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<netprog_core::Error> for CliError {
    fn from(e: netprog_core::Error) -> Self {
        match e {
            netprog_core::Error::Validation(m) => CliError::Validation(m),
            netprog_core::Error::InvalidState(m) | netprog_core::Error::Numerical(m) => {
                CliError::Numerical(m)
            }
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Thread cap from the environment; 0 means "leave it to the runtime".
pub fn threads_from_env() -> usize {
    std::env::var("NETPROG_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .unwrap_or(0)
}
