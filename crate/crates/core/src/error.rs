use thiserror::Error;

use crate::config::ConfigError;
use crate::eig::EigError;
use crate::ingest::IngestError;
use crate::plfit::FitError;
use crate::protocol::ProtocolError;
use crate::repmat::RepmatError;
use crate::rmt::RmtError;
use crate::synth::SynthError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Any failure raised by a pipeline stage.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Repmat(#[from] RepmatError),
    #[error(transparent)]
    Eig(#[from] EigError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Rmt(#[from] RmtError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    /// Bad command-line input not caught by argument parsing.
    #[error("{0}")]
    Usage(String),
    #[error("nothing to tabulate: give reports and/or a trajectory")]
    EmptySet,
}

impl Error {
    /// Stable machine-readable error name, used in CLI error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Ingest(e) => e.kind(),
            Error::Repmat(e) => e.kind(),
            Error::Eig(e) => e.kind(),
            Error::Fit(e) => e.kind(),
            Error::Rmt(e) => e.kind(),
            Error::Protocol(e) => e.kind(),
            Error::Synth(e) => e.kind(),
            Error::Config(e) => e.kind(),
            Error::Usage(_) => "Usage",
            Error::EmptySet => "EmptySet",
        }
    }
}
