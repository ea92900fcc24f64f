//! Config-driven front end: parse a TOML run description, dispatch it to the
//! core modules and write a reproducible run directory.

pub mod config;
pub mod exec;
pub mod output;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use config::{parse_config, Command, ConfigError, ConfigSource, RunConfig};
pub use exec::{execute, RunError};
pub use output::{Check, Outcome};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error("writing {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub manifest: PathBuf,
    pub checks: Vec<Check>,
}

impl RunSummary {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Parse, execute and write one run.
pub fn run(src: &ConfigSource, out: Option<&Path>, env_root: Option<&Path>) -> Result<RunSummary, CliError> {
    let cfg = parse_config(src)?;
    let outcome = execute(&cfg)?;
    let dir = cfg.output_path(out, env_root);
    let manifest = output::write_run(&dir, &cfg, &outcome).map_err(|source| CliError::Io {
        path: dir.clone(),
        source,
    })?;
    Ok(RunSummary {
        dir,
        manifest,
        checks: outcome.checks,
    })
}
