use std::path::PathBuf;

use hubbard_gf::circuit::CircuitError;
use hubbard_gf::greens::GreensError;
use hubbard_gf::noise::NoiseError;
use hubbard_gf::oracle::OracleError;
use hubbard_gf::vha::VhaError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("tolerance check failed: {0}")]
    Tolerance(String),
    #[error("config file {path}: {source}")]
    Config { path: PathBuf, source: toml::de::Error },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {msg}")]
    Input { path: PathBuf, msg: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Greens(#[from] GreensError),
    #[error(transparent)]
    Vha(#[from] VhaError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config { .. } => 2,
            CliError::Tolerance(_) => 3,
            _ => 1,
        }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
