//! Config-driven runner for the subelliptic inequality laboratory.

pub mod command;
pub mod config;
pub mod error;
pub mod manifest;
pub mod run;

pub use command::{Command, Verify};
pub use config::RunConfig;
pub use error::{CliError, Result};
pub use run::{run, run_with_threads, Outcome, Report, RunOptions, Status};

/// Environment variable consulted when `--threads` is absent.
pub const THREADS_ENV: &str = "SUBELLIPTIC_LAB_THREADS";

/// Thread count from the flag, then the environment; `None` means all cores.
pub fn resolve_threads(flag: Option<usize>) -> Result<Option<usize>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|n| *n > 0)
            .map(Some)
            .ok_or_else(|| CliError::Config {
                path: THREADS_ENV.to_string(),
                reason: format!("`{v}` is not a positive integer"),
            }),
        Err(_) => Ok(None),
    }
}
