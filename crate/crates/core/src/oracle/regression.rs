use serde::{Deserialize, Serialize};

use super::Oracle;
use crate::design::DesignPoint;
use crate::error::{Error, Result};

/// Lower bound on any fitted noise variance.
pub const NOISE_VARIANCE_FLOOR: f64 = 1e-8;

/// The fitted mean `mu(x)` of a regression oracle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum MeanFunction {
    /// `sum_k c_k u^k` with `u = (x - center) / scale`.
    Polynomial {
        center: f64,
        scale: f64,
        coefficients: Vec<f64>,
    },
    /// Natural cubic spline in the truncated-power basis
    /// `1, x, d_1(x) - d_{K-1}(x), ..., d_{K-2}(x) - d_{K-1}(x)` with
    /// `d_k(x) = ((x - k_k)_+^3 - (x - k_K)_+^3) / (k_K - k_k)`.
    /// Linear beyond the boundary knots.
    NaturalSpline { knots: Vec<f64>, coefficients: Vec<f64> },
    /// `intercept + sum_l weights[l][x_l]`; symbol 0 is the reference level
    /// at every position, so `weights[l][0] = 0`.
    OneHotLinear { intercept: f64, weights: Vec<Vec<f64>> },
}

impl MeanFunction {
    pub fn eval(&self, x: &DesignPoint) -> Result<f64> {
        match self {
            MeanFunction::Polynomial { .. } | MeanFunction::NaturalSpline { .. } => {
                let v = x.as_continuous()?;
                if v.len() != 1 {
                    return Err(Error::InvalidDesign(format!(
                        "one-dimensional oracle evaluated at a {}-dimensional point",
                        v.len()
                    )));
                }
                Ok(self.eval_scalar(v[0]))
            }
            MeanFunction::OneHotLinear { intercept, weights } => {
                let s = x.as_sequence()?;
                if s.len() != weights.len() {
                    return Err(Error::InvalidDesign(format!(
                        "expected sequence length {}, got {}",
                        weights.len(),
                        s.len()
                    )));
                }
                let mut total = *intercept;
                for (row, &a) in weights.iter().zip(s) {
                    total += row.get(a).ok_or_else(|| {
                        Error::InvalidDesign(format!("symbol {a} outside alphabet of size {}", row.len()))
                    })?;
                }
                Ok(total)
            }
        }
    }

    /// Evaluates a one-dimensional mean function. Sequence models return NaN.
    pub fn eval_scalar(&self, x: f64) -> f64 {
        match self {
            MeanFunction::Polynomial {
                center,
                scale,
                coefficients,
            } => {
                let u = (x - center) / scale;
                coefficients.iter().rev().fold(0.0, |acc, c| acc * u + c)
            }
            MeanFunction::NaturalSpline { knots, coefficients } => natural_spline_features(x, knots)
                .iter()
                .zip(coefficients)
                .map(|(f, c)| f * c)
                .sum(),
            MeanFunction::OneHotLinear { .. } => f64::NAN,
        }
    }
}

/// Basis row of a natural cubic spline with the given sorted knots.
pub(crate) fn natural_spline_features(x: f64, knots: &[f64]) -> Vec<f64> {
    let k = knots.len();
    let last = knots[k - 1];
    let cube = |v: f64| if v > 0.0 { v * v * v } else { 0.0 };
    let d = |j: usize| (cube(x - knots[j]) - cube(x - last)) / (last - knots[j]);
    let mut row = Vec::with_capacity(k);
    row.push(1.0);
    row.push(x);
    let d_ref = d(k - 2);
    row.extend((0..k - 2).map(|j| d(j) - d_ref));
    row
}

/// `p(y | x) = N(mu(x), sigma^2)` with a constant noise variance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionOracle {
    pub mean: MeanFunction,
    pub noise_variance: f64,
}

impl Oracle for RegressionOracle {
    fn components(&self, x: &DesignPoint) -> Result<Vec<(f64, f64)>> {
        Ok(vec![(self.mean.eval(x)?, self.noise_variance.sqrt())])
    }
}

/// Equally weighted mixture of regression oracles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleOracle {
    pub members: Vec<RegressionOracle>,
}

impl EnsembleOracle {
    pub fn new(members: Vec<RegressionOracle>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::InvalidParameter("ensemble needs at least one member".into()));
        }
        Ok(Self { members })
    }

    pub fn size(&self) -> usize {
        self.members.len()
    }
}

impl Oracle for EnsembleOracle {
    fn components(&self, x: &DesignPoint) -> Result<Vec<(f64, f64)>> {
        self.members
            .iter()
            .map(|m| Ok((m.mean.eval(x)?, m.noise_variance.sqrt())))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn polynomial_horner() {
        let m = MeanFunction::Polynomial {
            center: 1.0,
            scale: 2.0,
            coefficients: vec![1.0, -1.0, 0.5],
        };
        // u = 1.5
        assert_relative_eq!(m.eval_scalar(4.0), 1.0 - 1.5 + 0.5 * 2.25, epsilon = 1e-15);
    }

    #[test]
    fn natural_spline_is_linear_beyond_boundary_knots() {
        let knots = [0.0, 1.0, 2.5, 4.0];
        let m = MeanFunction::NaturalSpline {
            knots: knots.to_vec(),
            coefficients: vec![0.3, -0.2, 1.1, -0.7],
        };
        for (a, b, c) in [(5.0, 6.0, 7.0), (-3.0, -2.0, -1.0)] {
            let (fa, fb, fc) = (m.eval_scalar(a), m.eval_scalar(b), m.eval_scalar(c));
            assert_relative_eq!(fb - fa, fc - fb, epsilon = 1e-10);
        }
    }

    #[test]
    fn one_hot_rejects_malformed_sequences() {
        let m = MeanFunction::OneHotLinear {
            intercept: 1.0,
            weights: vec![vec![0.0, 2.0], vec![0.0, -1.0]],
        };
        assert_eq!(m.eval(&DesignPoint::Sequence(vec![1, 1])).unwrap(), 2.0);
        assert!(m.eval(&DesignPoint::Sequence(vec![1, 2])).is_err());
        assert!(m.eval(&DesignPoint::Sequence(vec![1])).is_err());
        assert!(m.eval(&DesignPoint::scalar(0.0)).is_err());
    }

    #[test]
    fn ensemble_moments() {
        let member = |mu: f64, var: f64| RegressionOracle {
            mean: MeanFunction::Polynomial {
                center: 0.0,
                scale: 1.0,
                coefficients: vec![mu],
            },
            noise_variance: var,
        };
        let e = EnsembleOracle::new(vec![member(1.0, 0.5), member(3.0, 1.5)]).unwrap();
        let x = DesignPoint::scalar(0.0);
        assert_eq!(e.predictive_mean(&x).unwrap(), 2.0);
        // avg(var + mu^2) - mu_bar^2 = (1.5 + 10.5) / 2 - 4
        assert_relative_eq!(e.predictive_variance(&x).unwrap(), 2.0, epsilon = 1e-14);
        assert!(EnsembleOracle::new(vec![]).is_err());
    }
}
