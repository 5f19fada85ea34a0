//! Bi-temporal image translation for remote sensing change detection.
//!
//! Two generators (one per acquisition epoch) share the weights of their
//! high-level layers so both domains map into one latent space. Training
//! combines per-domain reconstruction, cross-cycle reconstruction through
//! the opposite generator, and multi-scale conditional adversarial losses.
//! The crate also ships a procedural paired-scene generator with ground
//! truth change masks and a differencing change-detection harness used to
//! measure semantic preservation of the translation.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod discriminator;
pub mod eval;
pub mod losses;
pub mod model;
pub mod nn;
pub mod synth;
pub mod trainer;

pub use model::{Domain, GeneratorConfig, GeneratorPair, ImagePatch, LatentCode};

/// Crate-wide error taxonomy. The CLI maps these onto process exit codes:
/// configuration/usage -> 1, data shape or integrity -> 2, numeric -> 3.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("data integrity error: {0}")]
    Integrity(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("generation error: {0}")]
    Generation(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("tensor error: {0}")]
    Tensor(#[from] candle_core::Error),
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Generation(_) => 1,
            Error::Dimension(_) | Error::Integrity(_) | Error::Io(_) => 2,
            Error::Numeric(_) | Error::Tensor(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
