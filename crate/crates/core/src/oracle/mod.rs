//! Property oracles `p(y | x)`: Gaussian predictors and their mixtures,
//! ground-truth landscapes, and the training protocols that produce biased
//! oracles.

mod landscape;
mod regression;
mod training;

use serde::{Deserialize, Serialize};

use crate::design::DesignPoint;
use crate::error::{Error, Result};
use crate::stats::{gaussian_cdf, gaussian_ln_survival, gaussian_survival, normal_cdf, normal_sf};

pub use landscape::{ExactOracle, GroundTruth1D, GroundTruthSequence, Landscape, SequenceLandscapeParams};
pub use regression::{EnsembleOracle, MeanFunction, RegressionOracle, NOISE_VARIANCE_FLOOR};
pub use training::{
    oracle_mse, train_oracle_1d, train_regression_1d, train_sequence_oracle, truncated_training_set,
    MeanFamily1D, TrainingSet, TruncatedTrainingSet, RIDGE_FALLBACK,
};

/// A stochastic predictor whose predictive distribution at `x` is an equally
/// weighted mixture of Gaussians (a single component for plain oracles).
///
/// Everything except [`components`] has a default derived from the mixture,
/// so survival and interval probabilities are exact mixture probabilities.
///
/// [`components`]: Oracle::components
pub trait Oracle: Send + Sync + std::fmt::Debug {
    /// `(mean, standard deviation)` of every mixture component at `x`.
    fn components(&self, x: &DesignPoint) -> Result<Vec<(f64, f64)>>;

    fn predictive_mean(&self, x: &DesignPoint) -> Result<f64> {
        let c = self.components(x)?;
        Ok(c.iter().map(|(m, _)| m).sum::<f64>() / c.len() as f64)
    }

    /// Mixture variance `avg(sigma_i^2 + mu_i^2) - mu_bar^2`, evaluated as
    /// `avg(sigma_i^2) + avg((mu_i - mu_bar)^2)` so it is never negative.
    fn predictive_variance(&self, x: &DesignPoint) -> Result<f64> {
        let c = self.components(x)?;
        let n = c.len() as f64;
        let mu = c.iter().map(|(m, _)| m).sum::<f64>() / n;
        Ok(c.iter().map(|(m, s)| s * s + (m - mu) * (m - mu)).sum::<f64>() / n)
    }

    /// `P(y <= value | x)`.
    fn cdf(&self, x: &DesignPoint, value: f64) -> Result<f64> {
        let c = self.components(x)?;
        Ok(c.iter().map(|(m, s)| gaussian_cdf(*m, *s, value)).sum::<f64>() / c.len() as f64)
    }

    /// `P(y >= gamma | x)`.
    fn survival(&self, x: &DesignPoint, gamma: f64) -> Result<f64> {
        let c = self.components(x)?;
        Ok(c.iter().map(|(m, s)| gaussian_survival(*m, *s, gamma)).sum::<f64>() / c.len() as f64)
    }

    /// `ln P(y >= gamma | x)`, accurate far into the upper tail.
    fn ln_survival(&self, x: &DesignPoint, gamma: f64) -> Result<f64> {
        let c = self.components(x)?;
        let logs: Vec<f64> = c.iter().map(|(m, s)| gaussian_ln_survival(*m, *s, gamma)).collect();
        Ok(log_mean_exp(&logs))
    }

    /// `P(|y - y0| <= gamma | x)`.
    fn interval(&self, x: &DesignPoint, y0: f64, gamma: f64) -> Result<f64> {
        if gamma.is_nan() || gamma < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "interval half-width {gamma} must be >= 0"
            )));
        }
        let c = self.components(x)?;
        Ok(c.iter().map(|(m, s)| gaussian_interval(*m, *s, y0, gamma)).sum::<f64>() / c.len() as f64)
    }
}

impl<T: Oracle + ?Sized> Oracle for &T {
    fn components(&self, x: &DesignPoint) -> Result<Vec<(f64, f64)>> {
        (**self).components(x)
    }
}

impl<T: Oracle + ?Sized> Oracle for Box<T> {
    fn components(&self, x: &DesignPoint) -> Result<Vec<(f64, f64)>> {
        (**self).components(x)
    }
}

/// `P(y0 - gamma <= Y <= y0 + gamma)` for `Y ~ N(mean, sd^2)`, differencing
/// on whichever tail keeps the subtraction well conditioned.
pub fn gaussian_interval(mean: f64, sd: f64, y0: f64, gamma: f64) -> f64 {
    if gamma == f64::INFINITY {
        return 1.0;
    }
    if sd == 0.0 {
        return if (mean - y0).abs() <= gamma { 1.0 } else { 0.0 };
    }
    let lo = (y0 - gamma - mean) / sd;
    let hi = (y0 + gamma - mean) / sd;
    let p = if lo > 0.0 {
        normal_sf(lo) - normal_sf(hi)
    } else {
        normal_cdf(hi) - normal_cdf(lo)
    };
    p.clamp(0.0, 1.0)
}

fn log_mean_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + (v.iter().map(|x| (x - max).exp()).sum::<f64>() / v.len() as f64).ln()
}

/// Serialized form of any trained oracle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OracleSnapshot {
    Regression(RegressionOracle),
    Ensemble(EnsembleOracle),
}

impl OracleSnapshot {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[derive(Debug)]
    struct Fixed(Vec<(f64, f64)>);

    impl Oracle for Fixed {
        fn components(&self, _: &DesignPoint) -> Result<Vec<(f64, f64)>> {
            Ok(self.0.clone())
        }
    }

    fn x() -> DesignPoint {
        DesignPoint::scalar(0.0)
    }

    #[test]
    fn survival_examples() {
        let o = Fixed(vec![(2.0, 0.7)]);
        assert_eq!(o.survival(&x(), 2.0).unwrap(), 0.5);
        assert_relative_eq!(o.survival(&x(), 1.3).unwrap(), 0.841_344_746_068_542_9, epsilon = 1e-12);
        let o = Fixed(vec![(0.4, 1.3)]);
        assert!((o.survival(&x(), -1e10).unwrap() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn zero_sd_is_an_indicator() {
        let o = Fixed(vec![(1.0, 0.0)]);
        assert_eq!(o.survival(&x(), 1.0).unwrap(), 1.0);
        assert_eq!(o.survival(&x(), 1.1).unwrap(), 0.0);
        assert_eq!(o.ln_survival(&x(), 1.1).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn interval_examples() {
        let o = Fixed(vec![(1.5, 0.4)]);
        assert_eq!(o.interval(&x(), 1.5, 0.0).unwrap(), 0.0);
        assert_relative_eq!(o.interval(&x(), 1.5, 0.4).unwrap(), 0.682_689_492_137_085_9, epsilon = 1e-12);
        assert_eq!(o.interval(&x(), 1.5, f64::INFINITY).unwrap(), 1.0);
        assert!((o.interval(&x(), 1.5, 1e6).unwrap() - 1.0).abs() < 1e-15);
        assert!(o.interval(&x(), 1.5, -0.1).is_err());
    }

    #[test]
    fn singleton_and_identical_mixtures() {
        let one = Fixed(vec![(0.3, 0.5)]);
        assert_relative_eq!(one.predictive_variance(&x()).unwrap(), 0.25, epsilon = 1e-15);
        let same = Fixed(vec![(0.3, 0.5); 5]);
        assert_relative_eq!(same.predictive_variance(&x()).unwrap(), 0.25, epsilon = 1e-15);
        assert_relative_eq!(same.survival(&x(), 0.9).unwrap(), one.survival(&x(), 0.9).unwrap(), epsilon = 1e-15);
    }

    #[test]
    fn log_survival_of_mixture_reaches_deep_tail() {
        let o = Fixed(vec![(0.0, 1.0), (1.0, 1.0)]);
        let lp = o.ln_survival(&x(), 60.0).unwrap();
        assert!(lp.is_finite());
        assert!((o.ln_survival(&x(), 1.0).unwrap() - o.survival(&x(), 1.0).unwrap().ln()).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn mixture_contract(
            comps in prop::collection::vec((-3.0f64..3.0, 0.05f64..2.0), 1..8),
            g1 in -5.0f64..5.0,
            g2 in -5.0f64..5.0,
            y0 in -3.0f64..3.0,
        ) {
            let o = Fixed(comps.clone());
            let (lo, hi) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
            let s_lo = o.survival(&x(), lo).unwrap();
            let s_hi = o.survival(&x(), hi).unwrap();
            prop_assert!(s_lo >= s_hi);
            prop_assert!((0.0..=1.0).contains(&s_lo));
            prop_assert!((o.cdf(&x(), lo).unwrap() + s_lo - 1.0).abs() <= 1e-12);
            let (a, b) = (lo.abs().min(hi.abs()), lo.abs().max(hi.abs()));
            let i_a = o.interval(&x(), y0, a).unwrap();
            let i_b = o.interval(&x(), y0, b).unwrap();
            prop_assert!(i_a <= i_b + 1e-15);
            prop_assert!((0.0..=1.0).contains(&i_b));
            let n = comps.len() as f64;
            let avg_var = comps.iter().map(|(_, s)| s * s).sum::<f64>() / n;
            prop_assert!(o.predictive_variance(&x()).unwrap() >= avg_var);
        }
    }
}
