use std::path::Path;

use thiserror::Error;

use tads::nn::{MnistError, NetError, TrainError};
use tads::pca::PcaError;
use tads::tads::TadsError;
use tads::verify::VerifyError;

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    pub const ROBUST: u8 = 0;
    pub const NOT_ROBUST: u8 = 1;
    pub const USAGE: u8 = 2;
    pub const DIVERGED: u8 = 3;
    pub const INDETERMINATE: u8 = 4;
    pub const ROBUST_ON_SUBSPACE: u8 = 5;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("dataset: {0}")]
    Data(#[from] MnistError),
    #[error("network: {0}")]
    Net(#[from] NetError),
    #[error("pca: {0}")]
    Pca(#[from] PcaError),
    #[error("training: {0}")]
    Train(#[from] TrainError),
    #[error("structure: {0}")]
    Tads(#[from] TadsError),
    #[error("verification: {0}")]
    Verify(#[from] VerifyError),
    #[error("image: {0}")]
    Image(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Train(TrainError::Divergence { .. }) => exit::DIVERGED,
            _ => exit::USAGE,
        }
    }
}
