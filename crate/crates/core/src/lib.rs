//! Spectral diagnostics for trained models.
//!
//! The pipeline turns an exported model artifact into an empirical spectral
//! density (ESD), fits a power law to its tail, compares the bulk against a
//! Marchenko-Pastur null, and reports correlation traps or spectral collapse.
//!
//! - [`ingest`]: the `SPD1` artifact container and CSV eigenvalue lists
//! - [`repmat`]: effective representation matrices per model family
//! - [`eig`]: dense and Lanczos eigenvalue extraction
//! - [`plfit`]: continuous power-law MLE with KS-selected `xmin` and bootstrap p-values
//! - [`rmt`]: MP null model, traps, collapse, and the end-to-end [`rmt::analyze`]
//! - [`protocol`]: spectral early stopping and composite model selection
//! - [`synth`]: seeded generators with known ground truth
//! - [`config`]: merged run configuration (defaults < file < flags)
//! - [`cli`]: the `spectraudit` command line

pub mod cli;
pub mod config;
pub mod eig;
pub mod error;
pub mod ingest;
pub mod linalg;
pub mod plfit;
pub mod protocol;
pub mod repmat;
pub mod rmt;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
pub use ingest::{ArtifactBundle, DenseMatrix, Family, LeafCounts, Payload, SparseSymmetric};
pub use eig::{EsdSample, EsdSource, LanczosConfig};
pub use plfit::{FitConfig, PowerLawFit};
pub use rmt::{MpModel, SpectralReport, Status, TrapConfig};
