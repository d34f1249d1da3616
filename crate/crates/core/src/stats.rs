//! Order statistics and Gaussian helpers shared across modules.

use libm::erfc;

use crate::error::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Nearest-rank percentile: sort ascending and return the element at 1-based
/// rank `ceil(q * n)`. `q = 1` returns the maximum.
pub fn nearest_rank_percentile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::NoSamples);
    }
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "percentile level {q} outside (0, 1]"
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("non-finite value in percentile input".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[nearest_rank_index(values.len(), q)])
}

/// Zero-based index of the nearest-rank order statistic.
pub fn nearest_rank_index(n: usize, q: f64) -> usize {
    // `q * n` can land a hair above an integer (0.7 * 10 = 7.000000000000001)
    let rank = (q * n as f64 - 1e-9).ceil().max(1.0) as usize;
    rank.min(n) - 1
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Standard normal survival function, accurate in the upper tail.
pub fn normal_sf(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// `ln(1 - Phi(z))` without underflow for large `z`.
pub fn ln_normal_sf(z: f64) -> f64 {
    if z < 30.0 {
        return normal_sf(z).ln();
    }
    // Asymptotic Mills-ratio series; the truncation error is below 1e-10 at z = 30.
    let z2 = z * z;
    let series = 1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2);
    -0.5 * z2 - z.ln() - LN_SQRT_2PI + series.ln()
}

pub fn normal_ln_pdf(x: f64, mean: f64, variance: f64) -> f64 {
    let d = x - mean;
    -0.5 * d * d / variance - 0.5 * variance.ln() - LN_SQRT_2PI
}

/// Survival probability `P(Y >= gamma)` for `Y ~ N(mean, sd^2)`; a zero
/// standard deviation degenerates to the indicator of `mean >= gamma`.
pub fn gaussian_survival(mean: f64, sd: f64, gamma: f64) -> f64 {
    if sd == 0.0 {
        return if mean >= gamma { 1.0 } else { 0.0 };
    }
    normal_sf((gamma - mean) / sd)
}

pub fn gaussian_ln_survival(mean: f64, sd: f64, gamma: f64) -> f64 {
    if sd == 0.0 {
        return if mean >= gamma { 0.0 } else { f64::NEG_INFINITY };
    }
    if gamma == f64::NEG_INFINITY {
        return 0.0;
    }
    ln_normal_sf((gamma - mean) / sd)
}

pub fn gaussian_cdf(mean: f64, sd: f64, y: f64) -> f64 {
    if sd == 0.0 {
        return if mean <= y { 1.0 } else { 0.0 };
    }
    normal_cdf((y - mean) / sd)
}

/// Effective sample size `(sum w)^2 / sum w^2`; zero when every weight is zero.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    let s: f64 = weights.iter().sum();
    let s2: f64 = weights.iter().map(|w| w * w).sum();
    if s2 > 0.0 {
        s * s / s2
    } else {
        0.0
    }
}
