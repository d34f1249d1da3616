use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{check_weights, Draw, GenerativeModel, ModelSnapshot, DEFAULT_VARIANCE_FLOOR};
use crate::design::DesignPoint;
use crate::error::{Error, Result};
use crate::stats::normal_ln_pdf;

/// Independent Gaussian coordinates. The search and prior family of the
/// one-dimensional experiments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagonalGaussianModel {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    #[serde(default = "default_floor")]
    pub variance_floor: f64,
}

fn default_floor() -> f64 {
    DEFAULT_VARIANCE_FLOOR
}

impl DiagonalGaussianModel {
    pub fn new(mean: Vec<f64>, variance: Vec<f64>) -> Result<Self> {
        Self::with_floor(mean, variance, DEFAULT_VARIANCE_FLOOR)
    }

    pub fn with_floor(mean: Vec<f64>, variance: Vec<f64>, variance_floor: f64) -> Result<Self> {
        if mean.len() != variance.len() || mean.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "mean has {} entries and variance {}",
                mean.len(),
                variance.len()
            )));
        }
        if !(variance_floor > 0.0) {
            return Err(Error::InvalidParameter("variance floor must be positive".into()));
        }
        if mean.iter().any(|m| !m.is_finite()) || variance.iter().any(|v| !v.is_finite() || *v < variance_floor) {
            return Err(Error::InvalidParameter(format!(
                "means must be finite and variances at least {variance_floor}"
            )));
        }
        Ok(Self {
            mean,
            variance,
            variance_floor,
        })
    }

    /// One-dimensional `N(mean, variance)`.
    pub fn univariate(mean: f64, variance: f64) -> Result<Self> {
        Self::new(vec![mean], vec![variance])
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Density at a scalar point of a one-dimensional model.
    pub fn ln_pdf_scalar(&self, x: f64) -> f64 {
        normal_ln_pdf(x, self.mean[0], self.variance[0])
    }
}

/// Closed-form weighted fit: weighted mean and population-form weighted
/// variance per coordinate, clamped at `variance_floor`.
pub fn gaussian_fit_weighted(
    samples: &[DesignPoint],
    weights: &[f64],
    variance_floor: f64,
) -> Result<DiagonalGaussianModel> {
    let total = check_weights(samples.len(), weights)?;
    let dim = samples[0].len();
    let mut mean = vec![0.0; dim];
    let mut points = Vec::with_capacity(samples.len());
    for x in samples {
        let v = x.as_continuous()?;
        if v.len() != dim {
            return Err(Error::InvalidDesign(format!(
                "expected dimension {dim}, got {}",
                v.len()
            )));
        }
        points.push(v);
    }
    for (v, &w) in points.iter().zip(weights) {
        for (m, xi) in mean.iter_mut().zip(v.iter()) {
            *m += w * xi;
        }
    }
    mean.iter_mut().for_each(|m| *m /= total);
    let mut variance = vec![0.0; dim];
    for (v, &w) in points.iter().zip(weights) {
        for ((s, xi), m) in variance.iter_mut().zip(v.iter()).zip(&mean) {
            *s += w * (xi - m) * (xi - m);
        }
    }
    variance
        .iter_mut()
        .for_each(|s| *s = (*s / total).max(variance_floor));
    DiagonalGaussianModel::with_floor(mean, variance, variance_floor)
}

impl GenerativeModel for DiagonalGaussianModel {
    fn kind(&self) -> &'static str {
        "diagonal_gaussian"
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R, m: usize) -> Vec<Draw> {
        (0..m)
            .map(|_| {
                let x = self
                    .mean
                    .iter()
                    .zip(&self.variance)
                    .map(|(mu, var)| mu + var.sqrt() * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                Draw {
                    x: DesignPoint::Continuous(x),
                    z: None,
                }
            })
            .collect()
    }

    fn log_density(&self, x: &DesignPoint) -> Result<f64> {
        let v = x.as_continuous()?;
        if v.len() != self.dim() {
            return Err(Error::InvalidDesign(format!(
                "expected dimension {}, got {}",
                self.dim(),
                v.len()
            )));
        }
        Ok(v
            .iter()
            .zip(&self.mean)
            .zip(&self.variance)
            .map(|((xi, m), s)| normal_ln_pdf(*xi, *m, *s))
            .sum())
    }

    fn fit_weighted(&self, samples: &[DesignPoint], weights: &[f64]) -> Result<Self> {
        gaussian_fit_weighted(samples, weights, self.variance_floor)
    }

    fn snapshot(&self) -> ModelSnapshot {
        ModelSnapshot::DiagonalGaussian(self.clone())
    }
}
