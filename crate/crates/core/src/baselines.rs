//! Comparison methods sharing the engine loop: DbAS, reward-weighted
//! regression, cross-entropy on probability of improvement, and feedback
//! retraining of the generator on a FIFO pool.

use std::collections::VecDeque;
use std::sync::Arc;

use rand::Rng;

use crate::design::DesignPoint;
use crate::engine::{run_search, CbASConfig, RunOutcome, SearchStrategy, StepContext, Weights};
use crate::error::{Error, Result};
use crate::event::DesideratumEvent;
use crate::models::GenerativeModel;
use crate::oracle::Oracle;
use crate::stats::{nearest_rank_index, nearest_rank_percentile};

/// Temperature of reward-weighted regression.
pub const DEFAULT_RWR_ALPHA: f64 = 50.0;
/// Elite quantile of CEM-PI.
pub const DEFAULT_CEM_QUANTILE: f64 = 0.8;
/// Percentile of the initial pool scores used as the feedback threshold.
pub const DEFAULT_FB_PERCENTILE: f64 = 0.8;

/// DbAS weight `P(S | x)`: the CbAS weight without the density ratio.
pub fn dbas_weight(x: &DesignPoint, event: &DesideratumEvent, oracles: &[&dyn Oracle]) -> Result<f64> {
    event.probability(oracles, x)
}

/// Softmax of `alpha * mean`, stabilized by subtracting the maximum.
pub fn rwr_weights(oracle_means: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidParameter(format!("alpha {alpha} must be positive")));
    }
    if oracle_means.is_empty() {
        return Err(Error::NoSamples);
    }
    if oracle_means.iter().any(|m| !m.is_finite()) {
        return Err(Error::InvalidParameter("non-finite oracle mean".into()));
    }
    let max = oracle_means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = oracle_means.iter().map(|m| (alpha * (m - max)).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// Elite indicators on probability of improvement over `y_best`:
/// `PI_i = P(y >= y_best | x_i)`, `beta` its nearest-rank `quantile`, and
/// weight 1 iff `PI_i >= beta` (ties at `beta` are kept).
pub fn cem_pi_weights(samples: &[DesignPoint], oracle: &dyn Oracle, y_best: f64, quantile: f64) -> Result<Vec<f64>> {
    let pi = samples
        .iter()
        .map(|x| oracle.survival(x, y_best))
        .collect::<Result<Vec<f64>>>()?;
    let beta = nearest_rank_percentile(&pi, quantile)?;
    Ok(pi.iter().map(|&p| if p >= beta { 1.0 } else { 0.0 }).collect())
}

/// Count of samples nearest-rank elite selection keeps without ties.
pub fn cem_elite_count(m: usize, quantile: f64) -> usize {
    m - nearest_rank_index(m, quantile)
}

/// DbAS: weights `P(S^(t) | x)` under the same relaxation schedule as CbAS.
#[derive(Clone, Debug, Default)]
pub struct Dbas;

impl<M: GenerativeModel> SearchStrategy<M> for Dbas {
    fn method(&self) -> &'static str {
        "dbas"
    }

    fn weights(&mut self, ctx: &StepContext<'_, M>) -> Result<Weights> {
        ctx.samples
            .iter()
            .map(|x| ctx.event.ln_probability(ctx.oracles, x))
            .collect::<Result<Vec<_>>>()
            .map(Weights::Log)
    }
}

#[derive(Clone, Debug)]
pub struct Rwr {
    pub alpha: f64,
}

impl Default for Rwr {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_RWR_ALPHA,
        }
    }
}

impl<M: GenerativeModel> SearchStrategy<M> for Rwr {
    fn method(&self) -> &'static str {
        "rwr"
    }

    fn weights(&mut self, ctx: &StepContext<'_, M>) -> Result<Weights> {
        single_oracle(ctx.oracles)?;
        rwr_weights(&ctx.means[0], self.alpha).map(Weights::Linear)
    }
}

/// CEM-PI with `y_best` the best oracle mean of all previous iterations.
#[derive(Clone, Debug)]
pub struct CemPi {
    pub quantile: f64,
    pub y_best: f64,
}

impl Default for CemPi {
    fn default() -> Self {
        Self {
            quantile: DEFAULT_CEM_QUANTILE,
            y_best: f64::NEG_INFINITY,
        }
    }
}

impl<M: GenerativeModel> SearchStrategy<M> for CemPi {
    fn method(&self) -> &'static str {
        "cem-pi"
    }

    fn weights(&mut self, ctx: &StepContext<'_, M>) -> Result<Weights> {
        single_oracle(ctx.oracles)?;
        let w = cem_pi_weights(ctx.samples, ctx.oracles[0], self.y_best, self.quantile)?;
        let batch_best = ctx.means[0].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        self.y_best = self.y_best.max(batch_best);
        Ok(Weights::Linear(w))
    }
}

fn single_oracle(oracles: &[&dyn Oracle]) -> Result<()> {
    if oracles.len() == 1 {
        Ok(())
    } else {
        Err(Error::InvalidParameter("this method scores a single property".into()))
    }
}

/// Fixed-size FIFO training pool for feedback retraining.
#[derive(Clone, Debug, PartialEq)]
pub struct FeedbackPool {
    pub entries: VecDeque<DesignPoint>,
}

impl FeedbackPool {
    pub fn new(initial: Vec<DesignPoint>) -> Result<Self> {
        if initial.is_empty() {
            return Err(Error::NoSamples);
        }
        Ok(Self {
            entries: initial.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_vec(&self) -> Vec<DesignPoint> {
        self.entries.iter().cloned().collect()
    }
}

/// Refit rule for the feedback generator on its pool.
pub type PoolFit<M> = Arc<dyn Fn(&M, &[DesignPoint]) -> Result<M> + Send + Sync>;

/// Default pool refit: uniform-weight maximum likelihood.
pub fn uniform_refit<M: GenerativeModel>() -> PoolFit<M> {
    Arc::new(|m: &M, pool: &[DesignPoint]| m.fit_weighted(pool, &vec![1.0; pool.len()]))
}

/// The samples whose oracle mean exceeds `threshold` replace the same number
/// of oldest pool entries, and the generator is refit on the pool. With no
/// such sample the pool and model are returned unchanged.
///
/// Returns the updated model and the 0/1 acceptance indicators.
pub fn fb_feedback_step<M: GenerativeModel>(
    pool: &mut FeedbackPool,
    new_samples: &[DesignPoint],
    oracle_means: &[f64],
    threshold: f64,
    model: &M,
    refit: &PoolFit<M>,
) -> Result<(M, Vec<f64>)> {
    if new_samples.len() != oracle_means.len() {
        return Err(Error::LengthMismatch {
            samples: new_samples.len(),
            weights: oracle_means.len(),
        });
    }
    let accepted: Vec<f64> = oracle_means
        .iter()
        .map(|&m| if m > threshold { 1.0 } else { 0.0 })
        .collect();
    let incoming: Vec<&DesignPoint> = new_samples
        .iter()
        .zip(&accepted)
        .filter(|(_, &a)| a > 0.0)
        .map(|(x, _)| x)
        .collect();
    if incoming.is_empty() {
        return Ok((model.clone(), accepted));
    }
    let capacity = pool.len();
    let skip = incoming.len().saturating_sub(capacity);
    for x in incoming.into_iter().skip(skip) {
        pool.entries.pop_front();
        pool.entries.push_back(x.clone());
    }
    let next = refit(model, pool.entries.make_contiguous())?;
    Ok((next, accepted))
}

/// Feedback retraining with a threshold fixed at the start of the run.
pub struct Feedback<M> {
    pub pool: FeedbackPool,
    pub threshold: f64,
    pub refit: PoolFit<M>,
}

impl<M: GenerativeModel> Feedback<M> {
    /// Threshold = nearest-rank `percentile` of `oracle` means on the pool.
    pub fn new(initial_pool: Vec<DesignPoint>, oracle: &dyn Oracle, percentile: f64, refit: PoolFit<M>) -> Result<Self> {
        let scores = initial_pool
            .iter()
            .map(|x| oracle.predictive_mean(x))
            .collect::<Result<Vec<_>>>()?;
        let threshold = nearest_rank_percentile(&scores, percentile)?;
        Ok(Self {
            pool: FeedbackPool::new(initial_pool)?,
            threshold,
            refit,
        })
    }
}

impl<M: GenerativeModel> SearchStrategy<M> for Feedback<M> {
    fn method(&self) -> &'static str {
        "fb"
    }

    fn weights(&mut self, ctx: &StepContext<'_, M>) -> Result<Weights> {
        single_oracle(ctx.oracles)?;
        Ok(Weights::Linear(
            ctx.means[0]
                .iter()
                .map(|&m| if m > self.threshold { 1.0 } else { 0.0 })
                .collect(),
        ))
    }

    /// An empty acceptance set is an identity step, not a collapse.
    fn collapsed(&self, _ess: f64, _config: &CbASConfig) -> bool {
        false
    }

    fn refit(&mut self, ctx: &StepContext<'_, M>, _weights: &[f64]) -> Result<M> {
        let (next, _) = fb_feedback_step(
            &mut self.pool,
            ctx.samples,
            &ctx.means[0],
            self.threshold,
            ctx.search,
            &self.refit,
        )?;
        Ok(next)
    }
}

pub fn run_dbas<M: GenerativeModel, R: Rng + ?Sized>(
    initial: &M,
    oracles: &[&dyn Oracle],
    template: &DesideratumEvent,
    config: &CbASConfig,
    rng: &mut R,
) -> Result<RunOutcome<M>> {
    run_search(&mut Dbas, initial, oracles, template, config, rng, None)
}

pub fn run_rwr<M: GenerativeModel, R: Rng + ?Sized>(
    initial: &M,
    oracle: &dyn Oracle,
    alpha: f64,
    config: &CbASConfig,
    rng: &mut R,
) -> Result<RunOutcome<M>> {
    let template = DesideratumEvent::maximize(f64::INFINITY);
    run_search(&mut Rwr { alpha }, initial, &[oracle], &template, config, rng, None)
}

pub fn run_cem_pi<M: GenerativeModel, R: Rng + ?Sized>(
    initial: &M,
    oracle: &dyn Oracle,
    quantile: f64,
    config: &CbASConfig,
    rng: &mut R,
) -> Result<RunOutcome<M>> {
    let template = DesideratumEvent::maximize(f64::INFINITY);
    let mut strategy = CemPi {
        quantile,
        y_best: f64::NEG_INFINITY,
    };
    run_search(&mut strategy, initial, &[oracle], &template, config, rng, None)
}

/// Feedback retraining. Records carry the fixed threshold as their `gamma`.
pub fn run_feedback<M: GenerativeModel, R: Rng + ?Sized>(
    initial: &M,
    oracle: &dyn Oracle,
    initial_pool: Vec<DesignPoint>,
    percentile: f64,
    refit: PoolFit<M>,
    config: &CbASConfig,
    rng: &mut R,
) -> Result<RunOutcome<M>> {
    let mut strategy = Feedback::new(initial_pool, oracle, percentile, refit)?;
    let template = DesideratumEvent::maximize(strategy.threshold);
    let mut out = run_search(&mut strategy, initial, &[oracle], &template, config, rng, None)?;
    for r in &mut out.records {
        r.gamma = strategy.threshold;
        r.event = template.clone();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::DiagonalGaussianModel;
    use crate::oracle::{MeanFunction, RegressionOracle};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn identity_oracle(var: f64) -> RegressionOracle {
        RegressionOracle {
            mean: MeanFunction::Polynomial {
                center: 0.0,
                scale: 1.0,
                coefficients: vec![0.0, 1.0],
            },
            noise_variance: var,
        }
    }

    fn pts(v: &[f64]) -> Vec<DesignPoint> {
        v.iter().map(|&x| DesignPoint::scalar(x)).collect()
    }

    #[test]
    fn dbas_examples() {
        let o = identity_oracle(0.3);
        let x = DesignPoint::scalar(1.2);
        assert_eq!(dbas_weight(&x, &DesideratumEvent::maximize(1.2), &[&o]).unwrap(), 0.5);
        let exact = identity_oracle(0.0);
        assert_eq!(dbas_weight(&x, &DesideratumEvent::maximize(2.0), &[&exact]).unwrap(), 0.0);
    }

    #[test]
    fn rwr_examples() {
        let w = rwr_weights(&[0.0, 0.01], 50.0).unwrap();
        assert_relative_eq!(w[0], 0.377_540_668_798_145_4, epsilon = 1e-12);
        assert_relative_eq!(w[1], 0.622_459_331_201_854_6, epsilon = 1e-12);
        assert_eq!(rwr_weights(&[2.0; 4], 50.0).unwrap(), vec![0.25; 4]);
        let tiny = rwr_weights(&[0.0, 1.0, 5.0], 1e-12).unwrap();
        assert!(tiny.iter().all(|w| (w - 1.0 / 3.0).abs() < 1e-10));
        assert!(rwr_weights(&[1.0], 0.0).is_err());
    }

    #[test]
    fn cem_pi_examples() {
        let o = identity_oracle(1.0);
        let w = cem_pi_weights(&pts(&[0.5; 6]), &o, 0.0, 0.8).unwrap();
        assert_eq!(w, vec![1.0; 6]);
        let ten: Vec<f64> = (0..10).map(|i| i as f64 * 0.3).collect();
        let w = cem_pi_weights(&pts(&ten), &o, 1.0, 0.8).unwrap();
        assert_eq!(w.iter().sum::<f64>(), 3.0);
        assert_eq!(&w[7..], &[1.0, 1.0, 1.0]);
        let w = cem_pi_weights(&pts(&ten), &o, f64::NEG_INFINITY, 0.8).unwrap();
        assert_eq!(w, vec![1.0; 10]);
        assert_eq!(cem_elite_count(10, 0.8), 3);
    }

    #[test]
    fn feedback_examples() {
        let model = DiagonalGaussianModel::univariate(0.0, 1.0).unwrap();
        let refit = uniform_refit::<DiagonalGaussianModel>();
        let mut pool = FeedbackPool::new(pts(&[0.0, 1.0, 2.0])).unwrap();
        let before = pool.clone();
        let (m, acc) = fb_feedback_step(&mut pool, &pts(&[5.0, 6.0]), &[0.1, 0.2], 1.0, &model, &refit).unwrap();
        assert_eq!(m, model);
        assert_eq!(pool, before);
        assert_eq!(acc, vec![0.0, 0.0]);

        let (m, _) = fb_feedback_step(&mut pool, &pts(&[5.0, 6.0, 7.0]), &[5.0, 6.0, 7.0], 1.0, &model, &refit).unwrap();
        assert_eq!(pool.to_vec(), pts(&[5.0, 6.0, 7.0]));
        assert_relative_eq!(m.mean[0], 6.0, epsilon = 1e-15);

        let (_, acc) = fb_feedback_step(&mut pool, &pts(&[9.0, 0.5]), &[9.0, 0.5], 1.0, &model, &refit).unwrap();
        assert_eq!(acc, vec![1.0, 0.0]);
        assert_eq!(pool.to_vec(), pts(&[6.0, 7.0, 9.0]));
    }

    #[test]
    fn feedback_threshold_is_nearest_rank() {
        let o = identity_oracle(1.0);
        let pool: Vec<f64> = (1..=10).map(f64::from).collect();
        let fb = Feedback::new(pts(&pool), &o, 0.8, uniform_refit::<DiagonalGaussianModel>()).unwrap();
        assert_eq!(fb.threshold, 8.0);
    }

    proptest! {
        #[test]
        fn rwr_invariances(means in prop::collection::vec(-3.0f64..3.0, 1..30), shift in -10.0f64..10.0, rot in 0usize..30) {
            let w = rwr_weights(&means, 50.0).unwrap();
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            let shifted: Vec<f64> = means.iter().map(|m| m + shift).collect();
            let ws = rwr_weights(&shifted, 50.0).unwrap();
            for (a, b) in w.iter().zip(&ws) {
                prop_assert!((a - b).abs() <= 1e-9 * a.max(1e-300) + 1e-15);
            }
            let k = rot % means.len();
            let mut rotated = means.clone();
            rotated.rotate_left(k);
            let mut wr = rwr_weights(&rotated, 50.0).unwrap();
            wr.rotate_right(k);
            for (a, b) in w.iter().zip(&wr) {
                prop_assert!((a - b).abs() <= 1e-15);
            }
        }

        #[test]
        fn cem_elite_bounds(xs in prop::collection::vec(-3.0f64..3.0, 1..40), y_best in -2.0f64..2.0) {
            let o = identity_oracle(0.5);
            let w = cem_pi_weights(&pts(&xs), &o, y_best, 0.8).unwrap();
            let kept = w.iter().sum::<f64>() as usize;
            prop_assert!(kept >= cem_elite_count(xs.len(), 0.8));
            prop_assert!(kept <= xs.len());
            prop_assert!(kept >= (0.2 * xs.len() as f64 - 1e-9).ceil() as usize);
        }

        #[test]
        fn pool_size_is_constant(steps in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 1..8), 1..10)) {
            let model = DiagonalGaussianModel::univariate(0.0, 1.0).unwrap();
            let refit = uniform_refit::<DiagonalGaussianModel>();
            let mut pool = FeedbackPool::new(pts(&[0.0, 0.1, 0.2, 0.3])).unwrap();
            for s in &steps {
                fb_feedback_step(&mut pool, &pts(s), s, 0.0, &model, &refit).unwrap();
                prop_assert_eq!(pool.len(), 4);
            }
        }
    }
}
