//! Generative models: exact sampling, exact log densities and closed-form
//! weighted maximum-likelihood fits.

mod categorical;
mod gaussian;
mod linear_gaussian;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::design::DesignPoint;
use crate::error::{Error, Result};

pub use categorical::{
    categorical_fit_weighted, FlooredCategoricalModel, ProductCategoricalModel, DEFAULT_PRIOR_SMOOTHING,
};
pub use gaussian::{gaussian_fit_weighted, DiagonalGaussianModel};
pub use linear_gaussian::{linear_gaussian_fit_weighted, EmSettings, LinearGaussianLatentModel};

/// Floor applied to every fitted variance so search models stay proper when
/// a handful of weights dominate.
pub const DEFAULT_VARIANCE_FLOOR: f64 = 1e-6;

/// One draw from a model; latent models also report the latent `z`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Draw {
    pub x: DesignPoint,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<Vec<f64>>,
}

/// A density over the design space that can be sampled and refit by weighted
/// maximum likelihood.
pub trait GenerativeModel: Clone + Send + Sync + std::fmt::Debug {
    /// Short family name used in error messages and snapshots.
    fn kind(&self) -> &'static str;

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R, m: usize) -> Vec<Draw>;

    fn log_density(&self, x: &DesignPoint) -> Result<f64>;

    /// `argmax_phi sum_i w_i log q(x_i | phi)`. `self` supplies the family
    /// hyperparameters and, for iterative fits, the warm start.
    fn fit_weighted(&self, samples: &[DesignPoint], weights: &[f64]) -> Result<Self>;

    /// `sum_i w_i log q(x_i)`, the objective maximized by [`fit_weighted`].
    ///
    /// [`fit_weighted`]: GenerativeModel::fit_weighted
    fn weighted_log_likelihood(&self, samples: &[DesignPoint], weights: &[f64]) -> Result<f64> {
        check_weights(samples.len(), weights)?;
        let mut total = 0.0;
        for (x, &w) in samples.iter().zip(weights) {
            if w > 0.0 {
                total += w * self.log_density(x)?;
            }
        }
        Ok(total)
    }

    fn snapshot(&self) -> ModelSnapshot;
}

/// Models with an explicit latent variable `z` and tractable joint density
/// `p(x, z) = p(x | z) p(z)`.
pub trait LatentModel: GenerativeModel {
    fn latent_dim(&self) -> usize;

    /// `log p(x | z)`.
    fn log_conditional(&self, x: &DesignPoint, z: &[f64]) -> Result<f64>;

    /// `log p(z)`.
    fn log_latent_prior(&self, z: &[f64]) -> Result<f64>;

    fn log_joint_density(&self, x: &DesignPoint, z: &[f64]) -> Result<f64> {
        Ok(self.log_conditional(x, z)? + self.log_latent_prior(z)?)
    }

    /// Whether both models put the same density on `z`, which lets the
    /// `p(z)` factors cancel from joint importance ratios.
    fn shares_latent_prior(&self, other: &Self) -> bool;
}

/// Serialized form of any model, tagged by `kind`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSnapshot {
    DiagonalGaussian(DiagonalGaussianModel),
    ProductCategorical(ProductCategoricalModel),
    LinearGaussianLatent(LinearGaussianLatentModel),
}

impl ModelSnapshot {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Shared validation for weighted fits: lengths agree, weights are finite
/// and non-negative, and at least one is positive. Returns the weight sum.
pub(crate) fn check_weights(n_samples: usize, weights: &[f64]) -> Result<f64> {
    if n_samples != weights.len() {
        return Err(Error::LengthMismatch {
            samples: n_samples,
            weights: weights.len(),
        });
    }
    if n_samples == 0 {
        return Err(Error::NoSamples);
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidParameter(
            "weights must be finite and non-negative".into(),
        ));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::DegenerateWeights);
    }
    Ok(total)
}
