use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{check_weights, Draw, GenerativeModel, LatentModel, ModelSnapshot, DEFAULT_VARIANCE_FLOOR};
use crate::design::DesignPoint;
use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Stopping rule for weighted EM.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmSettings {
    /// Stop once the per-unit-weight log-likelihood moves by less than
    /// `tolerance * (1 + |l|)`.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for EmSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 500,
        }
    }
}

/// Probabilistic PCA: `z ~ N(0, I_d)`, `x | z ~ N(W z + b, sigma^2 I_L)`,
/// so the marginal is `N(b, W W^T + sigma^2 I)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearGaussianLatentModel {
    /// `L x d` loading matrix, serialized as a list of rows.
    #[serde(with = "rows")]
    pub loading: DMatrix<f64>,
    pub bias: Vec<f64>,
    pub noise_variance: f64,
    #[serde(default = "default_floor")]
    pub variance_floor: f64,
    #[serde(default)]
    pub em: EmSettings,
}

fn default_floor() -> f64 {
    DEFAULT_VARIANCE_FLOOR
}

impl LinearGaussianLatentModel {
    pub fn new(loading: DMatrix<f64>, bias: Vec<f64>, noise_variance: f64) -> Result<Self> {
        if loading.nrows() != bias.len() || loading.ncols() == 0 || loading.ncols() > loading.nrows() {
            return Err(Error::InvalidParameter(format!(
                "loading is {}x{} for a bias of length {}; need L x d with 1 <= d <= L",
                loading.nrows(),
                loading.ncols(),
                bias.len()
            )));
        }
        if !(noise_variance >= DEFAULT_VARIANCE_FLOOR) || !noise_variance.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "noise variance {noise_variance} below the floor"
            )));
        }
        Ok(Self {
            loading,
            bias,
            noise_variance,
            variance_floor: DEFAULT_VARIANCE_FLOOR,
            em: EmSettings::default(),
        })
    }

    /// A deterministic starting point for EM: a dense, full-rank loading
    /// scaled to the data, so no principal direction is orthogonal to it.
    pub fn initial(length: usize, latent_dim: usize, scale: f64) -> Self {
        let s = scale.max(DEFAULT_VARIANCE_FLOOR).sqrt();
        let loading = DMatrix::from_fn(length, latent_dim, |i, j| {
            s * (0.5 + 0.5 * (1.0 + (i * latent_dim + j) as f64).cos()) / (latent_dim as f64).sqrt()
                + if i == j { s } else { 0.0 }
        });
        Self {
            loading,
            bias: vec![0.0; length],
            noise_variance: scale.max(DEFAULT_VARIANCE_FLOOR),
            variance_floor: DEFAULT_VARIANCE_FLOOR,
            em: EmSettings::default(),
        }
    }

    pub fn length(&self) -> usize {
        self.bias.len()
    }

    /// Marginal covariance `W W^T + sigma^2 I`.
    pub fn marginal_covariance(&self) -> DMatrix<f64> {
        let l = self.length();
        &self.loading * self.loading.transpose() + DMatrix::identity(l, l) * self.noise_variance
    }

    fn point<'a>(&self, x: &'a DesignPoint) -> Result<&'a [f64]> {
        let v = x.as_continuous()?;
        if v.len() != self.length() {
            return Err(Error::InvalidDesign(format!(
                "expected dimension {}, got {}",
                self.length(),
                v.len()
            )));
        }
        Ok(v)
    }

    /// Exact posterior `p(z | x) = N(M^-1 W^T (x - b), sigma^2 M^-1)` with
    /// `M = W^T W + sigma^2 I`. Returns (mean, covariance).
    pub fn posterior(&self, x: &DesignPoint) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let v = self.point(x)?;
        let m_inv = self.m_inverse()?;
        let centered = DVector::from_iterator(v.len(), v.iter().zip(&self.bias).map(|(a, b)| a - b));
        let mean = &m_inv * self.loading.transpose() * centered;
        Ok((mean, m_inv * self.noise_variance))
    }

    fn m_inverse(&self) -> Result<DMatrix<f64>> {
        let d = self.loading.ncols();
        let m = self.loading.transpose() * &self.loading + DMatrix::identity(d, d) * self.noise_variance;
        Cholesky::new(m).map(|c| c.inverse()).ok_or(Error::IllPosedFit)
    }

    /// Weighted evidence lower bound with the exact posterior plugged in for
    /// the variational distribution. Equals the weighted marginal
    /// log-likelihood, since the bound is tight at the true posterior.
    pub fn weighted_elbo(&self, samples: &[DesignPoint], weights: &[f64]) -> Result<f64> {
        check_weights(samples.len(), weights)?;
        let l = self.length() as f64;
        let d = self.loading.ncols() as f64;
        let s2 = self.noise_variance;
        let m_inv = self.m_inverse()?;
        let cov = &m_inv * s2;
        let wtw = self.loading.transpose() * &self.loading;
        let trace_wtw_cov = (&wtw * &cov).trace();
        let ln_det_cov = Cholesky::new(cov.clone()).ok_or(Error::IllPosedFit)?.ln_determinant();
        let entropy = 0.5 * d * (1.0 + LN_2PI) + 0.5 * ln_det_cov;
        let mut total = 0.0;
        for (x, &w) in samples.iter().zip(weights) {
            if w == 0.0 {
                continue;
            }
            let (mean, _) = self.posterior(x)?;
            let v = self.point(x)?;
            let recon = &self.loading * &mean;
            let resid: f64 = v
                .iter()
                .zip(&self.bias)
                .zip(recon.iter())
                .map(|((xi, b), r)| (xi - b - r).powi(2))
                .sum();
            let expected_lik = -0.5 * l * (LN_2PI + s2.ln()) - 0.5 * (resid + trace_wtw_cov) / s2;
            let expected_prior = -0.5 * d * LN_2PI - 0.5 * (mean.norm_squared() + cov.trace());
            total += w * (expected_lik + expected_prior + entropy);
        }
        Ok(total)
    }

    /// Weighted EM from `self` as the starting point. Returns the fitted
    /// model and the number of EM iterations used.
    pub fn em_fit(&self, samples: &[DesignPoint], weights: &[f64]) -> Result<(Self, usize)> {
        let total = check_weights(samples.len(), weights)?;
        let l = self.length();
        let d = self.loading.ncols();
        let points = samples
            .iter()
            .map(|x| self.point(x))
            .collect::<Result<Vec<_>>>()?;

        let mut bias = vec![0.0; l];
        for (v, &w) in points.iter().zip(weights) {
            for (b, xi) in bias.iter_mut().zip(v.iter()) {
                *b += w * xi;
            }
        }
        bias.iter_mut().for_each(|b| *b /= total);
        let mut s = DMatrix::<f64>::zeros(l, l);
        for (v, &w) in points.iter().zip(weights) {
            if w == 0.0 {
                continue;
            }
            let c = DVector::from_iterator(l, v.iter().zip(&bias).map(|(a, b)| a - b));
            s.ger(w / total, &c, &c, 1.0);
        }

        let floor = self.variance_floor;
        let mut model = if self.loading.norm() > 1e-150 && self.noise_variance.is_finite() {
            Self {
                bias: bias.clone(),
                ..self.clone()
            }
        } else {
            Self {
                bias: bias.clone(),
                em: self.em,
                variance_floor: floor,
                ..Self::initial(l, d, s.trace() / l as f64)
            }
        };
        model.noise_variance = model.noise_variance.max(floor);

        let mut ll = normalized_log_likelihood(&model.loading, model.noise_variance, &s)?;
        for iteration in 1..=self.em.max_iterations {
            let w = &model.loading;
            let s2 = model.noise_variance;
            let m_inv = model.m_inverse()?;
            let sw = &s * w;
            let inner = DMatrix::identity(d, d) * s2 + &m_inv * w.transpose() * &sw;
            let inner_inv = inner.try_inverse().ok_or(Error::IllPosedFit)?;
            let w_new = &sw * inner_inv;
            let s2_new = ((&s - &sw * &m_inv * w_new.transpose()).trace() / l as f64).max(floor);
            model.loading = w_new;
            model.noise_variance = s2_new;
            let ll_new = normalized_log_likelihood(&model.loading, s2_new, &s)?;
            let converged = (ll_new - ll).abs() <= self.em.tolerance * (1.0 + ll_new.abs());
            ll = ll_new;
            if converged {
                return Ok((model, iteration));
            }
        }
        Err(Error::EmNotConverged {
            iterations: self.em.max_iterations,
            last: Box::new(model),
        })
    }
}

/// Weighted log-likelihood divided by the weight sum, from the weighted
/// scatter `s` about the fitted bias.
fn normalized_log_likelihood(w: &DMatrix<f64>, s2: f64, s: &DMatrix<f64>) -> Result<f64> {
    let l = s.nrows();
    let c = w * w.transpose() + DMatrix::identity(l, l) * s2;
    let chol = Cholesky::new(c).ok_or(Error::IllPosedFit)?;
    let quad = chol.solve(s).trace();
    Ok(-0.5 * (l as f64 * LN_2PI + chol.ln_determinant() + quad))
}

/// Weighted EM fit of a `latent_dim`-dimensional model from a deterministic
/// initialization.
pub fn linear_gaussian_fit_weighted(
    samples: &[DesignPoint],
    weights: &[f64],
    latent_dim: usize,
) -> Result<LinearGaussianLatentModel> {
    let l = samples.first().ok_or(Error::NoSamples)?.len();
    if latent_dim == 0 || latent_dim > l {
        return Err(Error::InvalidParameter(format!(
            "latent dimension {latent_dim} must lie in 1..={l}"
        )));
    }
    let start = LinearGaussianLatentModel {
        loading: DMatrix::zeros(l, latent_dim),
        ..LinearGaussianLatentModel::initial(l, latent_dim, 1.0)
    };
    start.em_fit(samples, weights).map(|(m, _)| m)
}

impl GenerativeModel for LinearGaussianLatentModel {
    fn kind(&self) -> &'static str {
        "linear_gaussian_latent"
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R, m: usize) -> Vec<Draw> {
        let d = self.loading.ncols();
        let sd = self.noise_variance.sqrt();
        (0..m)
            .map(|_| {
                let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
                let mean = &self.loading * &z;
                let x = mean
                    .iter()
                    .zip(&self.bias)
                    .map(|(wz, b)| wz + b + sd * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                Draw {
                    x: DesignPoint::Continuous(x),
                    z: Some(z.iter().copied().collect()),
                }
            })
            .collect()
    }

    fn log_density(&self, x: &DesignPoint) -> Result<f64> {
        let v = self.point(x)?;
        let chol = Cholesky::new(self.marginal_covariance()).ok_or(Error::DensityUnderflow("linear_gaussian_latent"))?;
        let c = DVector::from_iterator(v.len(), v.iter().zip(&self.bias).map(|(a, b)| a - b));
        let quad = c.dot(&chol.solve(&c));
        Ok(-0.5 * (v.len() as f64 * LN_2PI + chol.ln_determinant() + quad))
    }

    fn fit_weighted(&self, samples: &[DesignPoint], weights: &[f64]) -> Result<Self> {
        self.em_fit(samples, weights).map(|(m, _)| m)
    }

    fn snapshot(&self) -> ModelSnapshot {
        ModelSnapshot::LinearGaussianLatent(self.clone())
    }
}

impl LatentModel for LinearGaussianLatentModel {
    fn latent_dim(&self) -> usize {
        self.loading.ncols()
    }

    fn log_conditional(&self, x: &DesignPoint, z: &[f64]) -> Result<f64> {
        let v = self.point(x)?;
        if z.len() != self.latent_dim() {
            return Err(Error::InvalidParameter(format!(
                "latent draw of length {} for a {}-dimensional latent space",
                z.len(),
                self.latent_dim()
            )));
        }
        let mean = &self.loading * DVector::from_column_slice(z);
        let s2 = self.noise_variance;
        let resid: f64 = v
            .iter()
            .zip(&self.bias)
            .zip(mean.iter())
            .map(|((xi, b), m)| (xi - b - m).powi(2))
            .sum();
        Ok(-0.5 * (v.len() as f64 * (LN_2PI + s2.ln()) + resid / s2))
    }

    fn log_latent_prior(&self, z: &[f64]) -> Result<f64> {
        if z.len() != self.latent_dim() {
            return Err(Error::InvalidParameter(format!(
                "latent draw of length {} for a {}-dimensional latent space",
                z.len(),
                self.latent_dim()
            )));
        }
        Ok(-0.5 * (z.len() as f64 * LN_2PI + z.iter().map(|v| v * v).sum::<f64>()))
    }

    fn shares_latent_prior(&self, other: &Self) -> bool {
        self.latent_dim() == other.latent_dim()
    }
}

mod rows {
    use nalgebra::DMatrix;
    use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(de::Error::custom("ragged loading matrix"));
        }
        Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
    }
}
