use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::landscape::{GroundTruthSequence, Landscape};
use super::regression::{natural_spline_features, EnsembleOracle, MeanFunction, RegressionOracle, NOISE_VARIANCE_FLOOR};
use super::Oracle;
use crate::design::DesignPoint;
use crate::error::{Error, Result};
use crate::models::{GenerativeModel, ProductCategoricalModel};
use crate::stats::nearest_rank_percentile;

/// Ridge penalty used when the one-hot normal equations are singular.
pub const RIDGE_FALLBACK: f64 = 1e-6;

/// Labelled design points. `truth` holds the noiseless values when known.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingSet {
    pub xs: Vec<DesignPoint>,
    pub ys: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub truth: Vec<f64>,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }
}

/// Mean-function family for one-dimensional oracles.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeanFamily1D {
    Polynomial { degree: usize },
    /// Knots spaced uniformly over the range of the training inputs.
    NaturalSpline { knots: usize },
}

impl MeanFamily1D {
    fn n_params(&self) -> usize {
        match *self {
            MeanFamily1D::Polynomial { degree } => degree + 1,
            MeanFamily1D::NaturalSpline { knots } => knots,
        }
    }
}

/// Polynomial least squares of the given degree on the leading
/// `1 - holdout_fraction` share of the data; the noise variance is the mean
/// squared error against the held-out labels, floored at 1e-8.
pub fn train_oracle_1d(xs: &[f64], ys: &[f64], degree: usize, holdout_fraction: f64) -> Result<RegressionOracle> {
    train_regression_1d(xs, ys, MeanFamily1D::Polynomial { degree }, holdout_fraction)
}

/// As [`train_oracle_1d`] for any [`MeanFamily1D`].
pub fn train_regression_1d(
    xs: &[f64],
    ys: &[f64],
    family: MeanFamily1D,
    holdout_fraction: f64,
) -> Result<RegressionOracle> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch {
            samples: xs.len(),
            weights: ys.len(),
        });
    }
    if !(0.0..1.0).contains(&holdout_fraction) {
        return Err(Error::InvalidParameter(format!(
            "holdout fraction {holdout_fraction} outside [0, 1)"
        )));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("non-finite training data".into()));
    }
    let n = xs.len();
    let n_train = (n as f64 * (1.0 - holdout_fraction) + 1e-9).floor() as usize;
    let p = family.n_params();
    if p == 0 || n_train < p + 1 {
        return Err(Error::InvalidParameter(format!(
            "{n_train} training points for a {p}-parameter fit"
        )));
    }
    if n_train == n {
        return Err(Error::InvalidParameter("empty holdout split".into()));
    }
    let (x_train, x_hold) = xs.split_at(n_train);
    let (y_train, y_hold) = ys.split_at(n_train);

    let mean = match family {
        MeanFamily1D::Polynomial { degree } => {
            let center = x_train.iter().sum::<f64>() / n_train as f64;
            let scale = x_train.iter().map(|x| (x - center).abs()).fold(0.0, f64::max);
            if scale == 0.0 {
                return Err(Error::IllPosedFit);
            }
            let design = DMatrix::from_fn(n_train, degree + 1, |i, k| ((x_train[i] - center) / scale).powi(k as i32));
            MeanFunction::Polynomial {
                center,
                scale,
                coefficients: least_squares(design, y_train)?,
            }
        }
        MeanFamily1D::NaturalSpline { knots } => {
            if knots < 2 {
                return Err(Error::InvalidParameter("natural spline needs at least two knots".into()));
            }
            let lo = x_train.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = x_train.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if hi <= lo {
                return Err(Error::IllPosedFit);
            }
            let knot_vec: Vec<f64> = (0..knots)
                .map(|j| lo + (hi - lo) * j as f64 / (knots - 1) as f64)
                .collect();
            let rows: Vec<Vec<f64>> = x_train.iter().map(|&x| natural_spline_features(x, &knot_vec)).collect();
            let design = DMatrix::from_fn(n_train, knots, |i, k| rows[i][k]);
            MeanFunction::NaturalSpline {
                coefficients: least_squares(design, y_train)?,
                knots: knot_vec,
            }
        }
    };
    let mse = x_hold
        .iter()
        .zip(y_hold)
        .map(|(&x, &y)| (mean.eval_scalar(x) - y).powi(2))
        .sum::<f64>()
        / x_hold.len() as f64;
    Ok(RegressionOracle {
        mean,
        noise_variance: mse.max(NOISE_VARIANCE_FLOOR),
    })
}

/// SVD least squares; numerically rank-deficient designs are rejected.
fn least_squares(design: DMatrix<f64>, y: &[f64]) -> Result<Vec<f64>> {
    let svd = design.svd(true, true);
    let max = svd.singular_values.max();
    let min = svd.singular_values.min();
    if !(max > 0.0) || min <= 1e-12 * max {
        return Err(Error::IllPosedFit);
    }
    let sol = svd
        .solve(&DVector::from_column_slice(y), 0.0)
        .map_err(|_| Error::IllPosedFit)?;
    Ok(sol.iter().copied().collect())
}

/// Bootstrap ensemble of one-hot linear regressions. Each member is fit on
/// its own resample; its noise variance is the out-of-bag mean squared error
/// (in-bag when every point was drawn).
pub fn train_sequence_oracle<R: Rng + ?Sized>(
    data: &TrainingSet,
    length: usize,
    alphabet: usize,
    ensemble_size: usize,
    rng: &mut R,
) -> Result<EnsembleOracle> {
    if data.is_empty() {
        return Err(Error::NoSamples);
    }
    if data.xs.len() != data.ys.len() {
        return Err(Error::LengthMismatch {
            samples: data.xs.len(),
            weights: data.ys.len(),
        });
    }
    if ensemble_size == 0 || alphabet < 2 {
        return Err(Error::InvalidParameter("need ensemble_size >= 1 and alphabet >= 2".into()));
    }
    let seqs = data
        .xs
        .iter()
        .map(|x| {
            let s = x.as_sequence()?;
            if s.len() != length || s.iter().any(|&a| a >= alphabet) {
                return Err(Error::InvalidDesign(format!(
                    "expected a length-{length} sequence over {alphabet} symbols"
                )));
            }
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?;
    let n = seqs.len();
    let mut members = Vec::with_capacity(ensemble_size);
    for _ in 0..ensemble_size {
        let mut drawn = vec![0usize; n];
        for _ in 0..n {
            drawn[rng.random_range(0..n)] += 1;
        }
        let mean = fit_one_hot(&seqs, &data.ys, &drawn, length, alphabet)?;
        let residual = |i: usize| {
            let r = mean.eval(&data.xs[i]).expect("validated above") - data.ys[i];
            r * r
        };
        let oob: Vec<usize> = (0..n).filter(|&i| drawn[i] == 0).collect();
        let mse = if oob.is_empty() {
            (0..n).map(|i| drawn[i] as f64 * residual(i)).sum::<f64>() / n as f64
        } else {
            oob.iter().map(|&i| residual(i)).sum::<f64>() / oob.len() as f64
        };
        members.push(RegressionOracle {
            mean,
            noise_variance: mse.max(NOISE_VARIANCE_FLOOR),
        });
    }
    EnsembleOracle::new(members)
}

/// Least squares on intercept plus reference-coded one-hot features, with
/// `counts[i]` copies of point `i`.
fn fit_one_hot(seqs: &[&[usize]], ys: &[f64], counts: &[usize], length: usize, alphabet: usize) -> Result<MeanFunction> {
    let per_site = alphabet - 1;
    let p = 1 + length * per_site;
    let mut gram = DMatrix::<f64>::zeros(p, p);
    let mut rhs = DVector::<f64>::zeros(p);
    let mut active = Vec::with_capacity(length + 1);
    for ((s, &y), &c) in seqs.iter().zip(ys).zip(counts) {
        if c == 0 {
            continue;
        }
        let c = c as f64;
        active.clear();
        active.push(0);
        active.extend(
            s.iter()
                .enumerate()
                .filter(|(_, &a)| a != 0)
                .map(|(l, &a)| 1 + l * per_site + a - 1),
        );
        for &i in &active {
            rhs[i] += c * y;
            for &j in &active {
                gram[(i, j)] += c;
            }
        }
    }
    let max_diag = gram.diagonal().max();
    let well_posed = |ch: &Cholesky<f64, nalgebra::Dyn>| {
        let min_pivot = ch.l_dirty().diagonal().min();
        min_pivot * min_pivot >= 1e-10 * max_diag
    };
    let coef = match Cholesky::new(gram.clone()) {
        Some(ch) if well_posed(&ch) => ch.solve(&rhs),
        _ => {
            for i in 0..p {
                gram[(i, i)] += RIDGE_FALLBACK;
            }
            Cholesky::new(gram).ok_or(Error::IllPosedFit)?.solve(&rhs)
        }
    };
    let weights = (0..length)
        .map(|l| {
            std::iter::once(0.0)
                .chain((0..per_site).map(|k| coef[1 + l * per_site + k]))
                .collect()
        })
        .collect();
    Ok(MeanFunction::OneHotLinear {
        intercept: coef[0],
        weights,
    })
}

/// A training set drawn below a fitness percentile, and the cutoff used.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncatedTrainingSet {
    pub data: TrainingSet,
    pub cutoff: f64,
}

/// Draws `pool_size` sequences from `pool`, keeps those whose ground truth is
/// at or below the nearest-rank `percentile` of the pool, subsamples
/// `sample_count` of them without replacement and labels them with ground
/// truth plus Gaussian noise of standard deviation `noise_sd`.
pub fn truncated_training_set<R: Rng + ?Sized>(
    landscape: &GroundTruthSequence,
    pool: &ProductCategoricalModel,
    pool_size: usize,
    percentile: f64,
    sample_count: usize,
    noise_sd: f64,
    rng: &mut R,
) -> Result<TruncatedTrainingSet> {
    if !(percentile > 0.0 && percentile <= 1.0) || !(noise_sd >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "percentile {percentile} must lie in (0, 1] and noise_sd {noise_sd} be >= 0"
        )));
    }
    if (pool_size as f64) * percentile + 1e-9 < sample_count as f64 {
        return Err(Error::InsufficientPool {
            kept: (pool_size as f64 * percentile).floor() as usize,
            requested: sample_count,
        });
    }
    let draws = pool.sample(rng, pool_size);
    let truth = draws
        .iter()
        .map(|d| landscape.value(&d.x))
        .collect::<Result<Vec<f64>>>()?;
    let cutoff = nearest_rank_percentile(&truth, percentile)?;
    let kept: Vec<usize> = (0..pool_size).filter(|&i| truth[i] <= cutoff).collect();
    if kept.len() < sample_count {
        return Err(Error::InsufficientPool {
            kept: kept.len(),
            requested: sample_count,
        });
    }
    let chosen = rand::seq::index::sample(rng, kept.len(), sample_count);
    let mut data = TrainingSet::default();
    for k in chosen.iter() {
        let i = kept[k];
        let noise: f64 = rng.sample(StandardNormal);
        data.xs.push(draws[i].x.clone());
        data.ys.push(truth[i] + noise_sd * noise);
        data.truth.push(truth[i]);
    }
    Ok(TruncatedTrainingSet { data, cutoff })
}

/// Mean squared error of an oracle's predictive mean against noiseless truth.
pub fn oracle_mse<O: Oracle + ?Sized, L: Landscape + ?Sized>(oracle: &O, truth: &L, xs: &[DesignPoint]) -> Result<f64> {
    let mut total = 0.0;
    for x in xs {
        total += (oracle.predictive_mean(x)? - truth.value(x)?).powi(2);
    }
    Ok(total / xs.len().max(1) as f64)
}
