use cqw_core::error::{CoinError, GeometryError, HarnessError, OracleError, WalkError};
use thiserror::Error;

/// Configuration rejection: bad JSON, schema violation, or invalid values.
/// `pointer` locates the offending field as a JSON pointer.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("config error at {pointer}: {message}")]
pub struct ConfigError {
    pub pointer: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(pointer: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            pointer: pointer.into(),
            message: message.into(),
        }
    }
}

/// Top-level failure of a command, carrying the process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("invalid metric")]
    Metric(#[source] GeometryError),
    #[error("coin compilation failed")]
    Coin(#[source] CoinError),
    #[error("reference integration failed")]
    Oracle(#[source] OracleError),
    #[error("convergence study failed")]
    Study(#[source] HarnessError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Metric(_) => 2,
            CliError::Coin(_) => 3,
            CliError::Oracle(_) | CliError::Study(_) => 4,
            CliError::Io(_) | CliError::Internal(_) => 1,
        }
    }

    pub fn from_coin(e: CoinError) -> Self {
        match geometry_root(&e) {
            Some(g) => CliError::Metric(g),
            None => CliError::Coin(e),
        }
    }

    pub fn from_walk(e: WalkError) -> Self {
        match e {
            WalkError::Coin(c) => CliError::from_coin(c),
            WalkError::Geometry(g) => CliError::Metric(g),
            other => CliError::Internal(other.to_string()),
        }
    }

    pub fn from_oracle(e: OracleError) -> Self {
        match e {
            OracleError::Geometry(g) => CliError::Metric(g),
            other => CliError::Oracle(other),
        }
    }

    pub fn from_harness(e: HarnessError) -> Self {
        match e {
            HarnessError::BadEpsilonList(_) => {
                CliError::Config(ConfigError::new("/study/epsilons", e.to_string()))
            }
            HarnessError::Geometry(g) => CliError::Metric(g),
            HarnessError::Walk(w) => CliError::from_walk(w),
            HarnessError::Oracle(o) => CliError::from_oracle(o),
            HarnessError::OracleNotConverged { .. } => CliError::Study(e),
            HarnessError::ShapeMismatch { .. } => CliError::Internal(e.to_string()),
        }
    }
}

/// A metric evaluation failure buried in a coin error is a config problem,
/// not an infeasibility.
fn geometry_root(e: &CoinError) -> Option<GeometryError> {
    match e {
        CoinError::Geometry(g) => Some(g.clone()),
        CoinError::AtSite { source, .. } => geometry_root(source),
        _ => None,
    }
}
