//! Brute-force references: grid quadrature of the target conditional, KL
//! divergences, and a derivative-free weighted maximum-likelihood search.
//! Nothing here shares code with the closed-form paths it checks.

use std::io::Write;

use crate::error::{Error, Result};
use crate::models::DiagonalGaussianModel;

/// Smallest grid accepted by [`quadrature_conditional`].
pub const MIN_GRID_POINTS: usize = 2000;

/// Uniform grid of `n` points from `lo` to `hi` inclusive.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UniformGrid {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl UniformGrid {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if !(hi > lo) || n < 2 || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidParameter(format!("bad grid [{lo}, {hi}] with {n} points")));
        }
        Ok(Self { lo, hi, n })
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.n - 1) as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        if i == self.n - 1 {
            self.hi
        } else {
            self.lo + self.step() * i as f64
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.point(i)).collect()
    }

    /// Trapezoidal rule for values sampled on this grid.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        let inner: f64 = values.iter().sum();
        self.step() * (inner - 0.5 * (values[0] + values[values.len() - 1]))
    }
}

/// Normalized `p0(x) P(S | x)` on the grid, `Z` by the trapezoidal rule.
pub fn quadrature_conditional(
    prior_density: impl Fn(f64) -> f64,
    event_probability: impl Fn(f64) -> f64,
    grid: &UniformGrid,
) -> Result<Vec<f64>> {
    if grid.n < MIN_GRID_POINTS {
        return Err(Error::InvalidParameter(format!(
            "quadrature needs at least {MIN_GRID_POINTS} grid points"
        )));
    }
    let raw: Vec<f64> = grid
        .points()
        .into_iter()
        .map(|x| prior_density(x) * event_probability(x))
        .collect();
    if raw.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidParameter("densities must be finite and non-negative".into()));
    }
    let z = grid.integrate(&raw);
    if !(z >= 1e-300) {
        return Err(Error::ImpossibleEvent);
    }
    Ok(raw.into_iter().map(|v| v / z).collect())
}

/// Log-space variant for targets whose factors underflow: takes
/// `ln p0(x)` and `ln P(S | x)` and returns the log of the normalized
/// density on the grid.
pub fn quadrature_conditional_log(
    log_prior: impl Fn(f64) -> f64,
    log_event_probability: impl Fn(f64) -> f64,
    grid: &UniformGrid,
) -> Result<Vec<f64>> {
    if grid.n < MIN_GRID_POINTS {
        return Err(Error::InvalidParameter(format!(
            "quadrature needs at least {MIN_GRID_POINTS} grid points"
        )));
    }
    let logs: Vec<f64> = grid
        .points()
        .into_iter()
        .map(|x| log_prior(x) + log_event_probability(x))
        .collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return Err(Error::ImpossibleEvent);
    }
    let scaled: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let ln_z = grid.integrate(&scaled).ln() + max;
    if ln_z < 1e-300f64.ln() {
        return Err(Error::ImpossibleEvent);
    }
    Ok(logs.into_iter().map(|l| l - ln_z).collect())
}

/// Grid point of highest density; ties go to the smallest `x`.
pub fn grid_mode(grid: &UniformGrid, density: &[f64]) -> f64 {
    let mut best = 0;
    for (i, v) in density.iter().enumerate() {
        if *v > density[best] {
            best = i;
        }
    }
    grid.point(best)
}

/// Closed-form `KL(p || q)` between diagonal Gaussians, summed over
/// dimensions.
pub fn kl_gaussian_closed_form(p: &DiagonalGaussianModel, q: &DiagonalGaussianModel) -> Result<f64> {
    if p.mean.len() != q.mean.len() {
        return Err(Error::InvalidParameter("dimension mismatch".into()));
    }
    let mut total = 0.0;
    for i in 0..p.mean.len() {
        let (vp, vq) = (p.variance[i], q.variance[i]);
        if !(vp > 0.0 && vq > 0.0) {
            return Err(Error::ZeroVariance);
        }
        let d = p.mean[i] - q.mean[i];
        total += 0.5 * (vq / vp).ln() + (vp + d * d) / (2.0 * vq) - 0.5;
    }
    Ok(total)
}

/// Trapezoidal `KL(p || q)` for a normalized density on the grid and a
/// density `q`. Returns `+inf` when `q` vanishes where `p` does not.
pub fn kl_grid(p_grid: &[f64], q_density: impl Fn(f64) -> f64, grid: &UniformGrid) -> f64 {
    let mut integrand = Vec::with_capacity(grid.n);
    for (i, &p) in p_grid.iter().enumerate() {
        if p > 0.0 {
            let q = q_density(grid.point(i));
            if !(q > 0.0) {
                return f64::INFINITY;
            }
            integrand.push(p * (p.ln() - q.ln()));
        } else {
            integrand.push(0.0);
        }
    }
    grid.integrate(&integrand)
}

/// `KL(p || q)` from log densities on the grid; `+inf` when `q` has no mass
/// where `p` does.
pub fn kl_grid_log(log_p: &[f64], log_q: &[f64], grid: &UniformGrid) -> f64 {
    let mut integrand = Vec::with_capacity(grid.n);
    for (&lp, &lq) in log_p.iter().zip(log_q) {
        let p = lp.exp();
        if p > 0.0 {
            if lq == f64::NEG_INFINITY {
                return f64::INFINITY;
            }
            integrand.push(p * (lp - lq));
        } else {
            integrand.push(0.0);
        }
    }
    grid.integrate(&integrand)
}

/// Writes `x,density` rows for plotting.
pub fn write_grid_csv<W: Write>(mut out: W, grid: &UniformGrid, columns: &[(&str, &[f64])]) -> std::io::Result<()> {
    write!(out, "x")?;
    for (name, _) in columns {
        write!(out, ",{name}")?;
    }
    writeln!(out)?;
    for i in 0..grid.n {
        write!(out, "{}", grid.point(i))?;
        for (_, values) in columns {
            write!(out, ",{}", values[i])?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Parametric family for [`numeric_weighted_mle`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MleFamily {
    /// Independent Gaussians with variances bounded below.
    DiagonalGaussian { variance_floor: f64 },
    /// Independent categoricals over `alphabet` symbols.
    ProductCategorical { alphabet: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub enum MleParams {
    Gaussian { mean: Vec<f64>, variance: Vec<f64> },
    Categorical { probs: Vec<Vec<f64>> },
}

/// Maximizes `sum_i w_i log q(x_i)` by cyclic golden-section search over
/// one coordinate at a time, on a bounded domain. Rows of `samples` are
/// coordinates (Gaussian) or symbol indices stored as `f64` (categorical).
pub fn numeric_weighted_mle(samples: &[Vec<f64>], weights: &[f64], family: MleFamily) -> MleParams {
    let dim = samples[0].len();
    match family {
        MleFamily::DiagonalGaussian { variance_floor } => {
            let mut mean = vec![0.0; dim];
            let mut variance = vec![1.0; dim];
            for d in 0..dim {
                let col: Vec<f64> = samples.iter().map(|s| s[d]).collect();
                let lo = col.iter().copied().fold(f64::INFINITY, f64::min) - 1.0;
                let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 1.0;
                let spread = (hi - lo) * (hi - lo);
                let objective = |m: f64, log_v: f64| {
                    let v = log_v.exp();
                    col.iter()
                        .zip(weights)
                        .map(|(x, w)| -0.5 * w * (log_v + (x - m) * (x - m) / v))
                        .sum::<f64>()
                };
                let (mut m, mut lv) = (0.5 * (lo + hi), 0.0f64.max(variance_floor.ln()));
                for _ in 0..200 {
                    let m_new = golden_section_max(|v| objective(v, lv), lo, hi);
                    let lv_new = golden_section_max(|v| objective(m_new, v), variance_floor.ln(), spread.ln() + 1.0);
                    let done = (m_new - m).abs() < 1e-13 * (1.0 + m.abs()) && (lv_new - lv).abs() < 1e-13;
                    m = m_new;
                    lv = lv_new;
                    if done {
                        break;
                    }
                }
                mean[d] = m;
                variance[d] = lv.exp().max(variance_floor);
            }
            MleParams::Gaussian { mean, variance }
        }
        MleFamily::ProductCategorical { alphabet } => {
            let mut probs = Vec::with_capacity(dim);
            for d in 0..dim {
                let mut counts = vec![0.0; alphabet];
                for (s, w) in samples.iter().zip(weights) {
                    counts[s[d] as usize] += w;
                }
                // Objective through logits, pinning the most frequent symbol's
                // logit at 0 so every free optimum is finite or at the lower bound.
                let pinned = (0..alphabet).max_by(|&i, &j| counts[i].total_cmp(&counts[j])).unwrap_or(0);
                let objective = |logits: &[f64]| {
                    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
                    counts.iter().zip(logits).map(|(c, l)| c * (l - lse)).sum::<f64>()
                };
                let mut logits = vec![0.0; alphabet];
                for _ in 0..5000 {
                    let mut moved = 0.0f64;
                    for a in (0..alphabet).filter(|&a| a != pinned) {
                        let mut trial = logits.clone();
                        let best = golden_section_max(
                            |v| {
                                trial[a] = v;
                                objective(&trial)
                            },
                            -60.0,
                            60.0,
                        );
                        moved = moved.max((best - logits[a]).abs());
                        logits[a] = best;
                    }
                    if moved < 1e-12 {
                        break;
                    }
                }
                let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
                let total: f64 = exps.iter().sum();
                probs.push(exps.into_iter().map(|e| e / total).collect());
            }
            MleParams::Categorical { probs }
        }
    }
}

/// Maximizer of a unimodal function on `[lo, hi]` by golden-section search.
pub fn golden_section_max(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > 1e-14 * (1.0 + a.abs().max(b.abs())) {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}
