use thiserror::Error;

use crate::models::LinearGaussianLatentModel;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no samples")]
    NoSamples,

    #[error("degenerate weights")]
    DegenerateWeights,

    #[error("length mismatch: {samples} samples but {weights} weights")]
    LengthMismatch { samples: usize, weights: usize },

    #[error("invalid design point: {0}")]
    InvalidDesign(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("ill-posed fit")]
    IllPosedFit,

    #[error("density underflow in {0} model")]
    DensityUnderflow(&'static str),

    #[error("latent space mismatch: {prior} vs {search} latent dimensions")]
    LatentSpaceMismatch { prior: usize, search: usize },

    #[error("weighted EM did not converge after {iterations} iterations")]
    EmNotConverged {
        iterations: usize,
        last: Box<LinearGaussianLatentModel>,
    },

    #[error("event numerically impossible on grid")]
    ImpossibleEvent,

    #[error("zero variance")]
    ZeroVariance,

    #[error("insufficient pool: {kept} sequences below the cutoff, {requested} requested")]
    InsufficientPool { kept: usize, requested: usize },

    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),
}
