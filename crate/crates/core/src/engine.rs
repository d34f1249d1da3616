//! The CbAS iteration: sample from the search model, score with the oracle,
//! tighten the relaxed event, weight, and refit by weighted maximum
//! likelihood.
//!
//! [`run_search`] is the shared loop; the weighting rule is a
//! [`SearchStrategy`]. CbAS lives here, the baselines in
//! [`crate::baselines`].

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::design::DesignPoint;
use crate::error::{Error, Result};
use crate::event::{DesideratumEvent, RelaxationState};
use crate::models::{Draw, GenerativeModel, LatentModel};
use crate::oracle::Oracle;
use crate::stats::effective_sample_size;

/// Loop settings shared by CbAS and the baselines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CbASConfig {
    /// Percentile level `Q` of the relaxation schedule.
    pub quantile: f64,
    /// Samples drawn per iteration, `M`.
    pub samples_per_iteration: usize,
    pub max_iterations: Option<usize>,
    /// Total number of samples the run may draw.
    pub sequence_budget: Option<usize>,
    /// A batch whose effective sample size falls below this is treated as
    /// collapsed and ends the run.
    pub weight_floor_ess: f64,
}

impl Default for CbASConfig {
    fn default() -> Self {
        Self {
            quantile: 1.0,
            samples_per_iteration: 100,
            max_iterations: Some(50),
            sequence_budget: None,
            weight_floor_ess: 1.0,
        }
    }
}

impl CbASConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.quantile > 0.0 && self.quantile <= 1.0) {
            return Err(Error::InvalidParameter(format!("Q = {} outside (0, 1]", self.quantile)));
        }
        if self.samples_per_iteration < 2 {
            return Err(Error::InvalidParameter("M must be at least 2".into()));
        }
        if self.max_iterations.is_none() && self.sequence_budget.is_none() {
            return Err(Error::InvalidParameter(
                "set max_iterations or sequence_budget so the run terminates".into(),
            ));
        }
        if !(self.weight_floor_ess >= 1.0) {
            return Err(Error::InvalidParameter("weight_floor_ess must be >= 1".into()));
        }
        Ok(())
    }

    /// Number of iterations before the first cap is hit, and whether the
    /// budget is the binding cap.
    pub fn iteration_cap(&self) -> (usize, bool) {
        let budget = self
            .sequence_budget
            .map(|b| b.div_ceil(self.samples_per_iteration));
        match (self.max_iterations, budget) {
            (Some(i), Some(b)) if b <= i => (b, true),
            (Some(i), _) => (i, false),
            (None, Some(b)) => (b, true),
            (None, None) => (0, false),
        }
    }
}

/// How a run ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    BudgetExhausted,
    /// Weights degenerated; the records stop at the offending iteration.
    Collapsed,
}

/// Everything observed in one iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord<M> {
    /// 1-based iteration index.
    pub t: usize,
    pub samples: Vec<DesignPoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latents: Option<Vec<Vec<f64>>>,
    /// `oracle_means[k][i]`: predictive mean of oracle `k` at sample `i`.
    pub oracle_means: Vec<Vec<f64>>,
    /// The relaxed event `S^(t)` used for this iteration's weights.
    pub event: DesideratumEvent,
    /// Threshold (or half-width) of the first event component.
    #[serde(with = "crate::event::extended_f64")]
    pub gamma: f64,
    /// Weights used in the refit, divided by their maximum for log-space
    /// rules; `ln(max)` is kept in `log_weight_scale`.
    pub weights: Vec<f64>,
    #[serde(with = "crate::event::extended_f64")]
    pub log_weight_scale: f64,
    pub effective_sample_size: f64,
    /// The search model the samples were drawn from.
    pub search_model: M,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kl_to_target: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kl_from_target: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome<M> {
    pub method: String,
    pub status: RunStatus,
    pub records: Vec<IterationRecord<M>>,
    /// Search model after the last refit.
    pub final_model: M,
}

impl<M> RunOutcome<M> {
    pub fn gammas(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.gamma).collect()
    }

    pub fn samples_drawn(&self) -> usize {
        self.records.iter().map(|r| r.samples.len()).sum()
    }
}

/// What a strategy sees in one iteration.
pub struct StepContext<'a, M> {
    pub t: usize,
    pub draws: &'a [Draw],
    pub samples: &'a [DesignPoint],
    pub means: &'a [Vec<f64>],
    pub event: &'a DesideratumEvent,
    pub oracles: &'a [&'a dyn Oracle],
    pub search: &'a M,
}

/// Weights produced by a strategy: either plain weights or log weights to be
/// exponentiated once after shifting by their maximum.
pub enum Weights {
    Linear(Vec<f64>),
    Log(Vec<f64>),
}

/// A weighting and refitting rule plugged into [`run_search`].
pub trait SearchStrategy<M: GenerativeModel> {
    fn method(&self) -> &'static str;

    fn weights(&mut self, ctx: &StepContext<'_, M>) -> Result<Weights>;

    /// Whether the batch is too degenerate to refit on.
    fn collapsed(&self, ess: f64, config: &CbASConfig) -> bool {
        ess < config.weight_floor_ess
    }

    /// The next search model; the default is the weighted ML refit warm
    /// started from the current model.
    fn refit(&mut self, ctx: &StepContext<'_, M>, weights: &[f64]) -> Result<M> {
        ctx.search.fit_weighted(ctx.samples, weights)
    }
}

/// Optional per-iteration diagnostic returning
/// `(KL(target || search), KL(search || target))` for a search model.
pub type KlProbe<'a, M> = dyn FnMut(&M) -> Result<(f64, f64)> + 'a;

/// Runs the shared loop of Algorithm 1 with the given strategy, starting
/// from `initial` and the fully relaxed version of `template`.
pub fn run_search<M, S, R>(
    strategy: &mut S,
    initial: &M,
    oracles: &[&dyn Oracle],
    template: &DesideratumEvent,
    config: &CbASConfig,
    rng: &mut R,
    mut kl_probe: Option<&mut KlProbe<'_, M>>,
) -> Result<RunOutcome<M>>
where
    M: GenerativeModel,
    S: SearchStrategy<M> + ?Sized,
    R: Rng + ?Sized,
{
    config.validate()?;
    if template.leaves().len() != oracles.len() {
        return Err(Error::InvalidParameter(format!(
            "event has {} components but {} oracles were supplied",
            template.leaves().len(),
            oracles.len()
        )));
    }
    let (cap, budget_bound) = config.iteration_cap();
    let mut state = RelaxationState::new(template.clone(), config.quantile)?;
    let mut search = initial.clone();
    let mut records = Vec::with_capacity(cap);
    let mut status = if budget_bound {
        RunStatus::BudgetExhausted
    } else {
        RunStatus::Completed
    };

    for t in 1..=cap {
        let draws = search.sample(rng, config.samples_per_iteration);
        let samples: Vec<DesignPoint> = draws.iter().map(|d| d.x.clone()).collect();
        let means = oracles
            .iter()
            .map(|o| samples.iter().map(|x| o.predictive_mean(x)).collect::<Result<Vec<f64>>>())
            .collect::<Result<Vec<_>>>()?;
        state = state.update(&means)?;
        let ctx = StepContext {
            t,
            draws: &draws,
            samples: &samples,
            means: &means,
            event: &state.current,
            oracles,
            search: &search,
        };
        let (weights, log_weight_scale) = match strategy.weights(&ctx)? {
            Weights::Linear(w) => (w, 0.0),
            Weights::Log(lw) => exponentiate(&lw),
        };
        if weights.len() != samples.len() || weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "{} produced invalid weights at iteration {t}",
                strategy.method()
            )));
        }
        let ess = effective_sample_size(&weights);
        let (kl_to_target, kl_from_target) = match kl_probe.as_mut() {
            Some(probe) => {
                let (fwd, rev) = probe(&search)?;
                (Some(fwd), Some(rev))
            }
            None => (None, None),
        };
        let collapsed = strategy.collapsed(ess, config);
        let next = if collapsed {
            None
        } else {
            Some(strategy.refit(&ctx, &weights)?)
        };
        let latents = draws.iter().map(|d| d.z.clone()).collect::<Option<Vec<_>>>();
        records.push(IterationRecord {
            t,
            samples,
            latents,
            oracle_means: means,
            gamma: state.current.gamma(),
            event: state.current.clone(),
            weights,
            log_weight_scale,
            effective_sample_size: ess,
            search_model: search.clone(),
            kl_to_target,
            kl_from_target,
        });
        match next {
            Some(m) => search = m,
            None => {
                status = RunStatus::Collapsed;
                break;
            }
        }
    }
    Ok(RunOutcome {
        method: strategy.method().to_string(),
        status,
        records,
        final_model: search,
    })
}

/// `exp(lw - max lw)` together with `max lw`. All `-inf` yields zeros.
fn exponentiate(lw: &[f64]) -> (Vec<f64>, f64) {
    let max = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return (vec![0.0; lw.len()], f64::NEG_INFINITY);
    }
    (lw.iter().map(|v| (v - max).exp()).collect(), max)
}

fn finite(v: f64, model: &'static str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::DensityUnderflow(model))
    }
}

/// `ln[p0(x) / q(x) * P(S | x)]`.
pub fn cbas_log_weight<M: GenerativeModel>(
    prior: &M,
    search: &M,
    x: &DesignPoint,
    event: &DesideratumEvent,
    oracles: &[&dyn Oracle],
) -> Result<f64> {
    let lp = finite(prior.log_density(x)?, "prior")?;
    let lq = finite(search.log_density(x)?, "search")?;
    Ok(lp - lq + event.ln_probability(oracles, x)?)
}

/// CbAS importance weight `p0(x) / q(x) * P(S | x)`, one exponentiation
/// of the log-space sum.
pub fn cbas_weight<M: GenerativeModel>(
    prior: &M,
    search: &M,
    x: &DesignPoint,
    event: &DesideratumEvent,
    oracles: &[&dyn Oracle],
) -> Result<f64> {
    Ok(cbas_log_weight(prior, search, x, event, oracles)?.exp())
}

/// Log of the joint-latent weight. With a shared `p(z)` the latent prior
/// cancels and only `p(x | z) / q(x | z)` remains; otherwise full joints are
/// compared.
pub fn cbas_log_weight_joint<M: LatentModel>(
    prior: &M,
    search: &M,
    x: &DesignPoint,
    z: &[f64],
    event: &DesideratumEvent,
    oracles: &[&dyn Oracle],
) -> Result<f64> {
    if prior.latent_dim() != search.latent_dim() {
        return Err(Error::LatentSpaceMismatch {
            prior: prior.latent_dim(),
            search: search.latent_dim(),
        });
    }
    let ratio = if prior.shares_latent_prior(search) {
        finite(prior.log_conditional(x, z)?, "prior")? - finite(search.log_conditional(x, z)?, "search")?
    } else {
        finite(prior.log_joint_density(x, z)?, "prior")? - finite(search.log_joint_density(x, z)?, "search")?
    };
    Ok(ratio + event.ln_probability(oracles, x)?)
}

/// Joint-latent CbAS weight `p(x, z) / q(x, z) * P(S | x)`.
pub fn cbas_weight_joint<M: LatentModel>(
    prior: &M,
    search: &M,
    x: &DesignPoint,
    z: &[f64],
    event: &DesideratumEvent,
    oracles: &[&dyn Oracle],
) -> Result<f64> {
    Ok(cbas_log_weight_joint(prior, search, x, z, event, oracles)?.exp())
}

/// Moves the relaxation state one step from a batch of oracle means.
pub fn update_relaxation(state: &RelaxationState, oracle_means: &[Vec<f64>]) -> Result<RelaxationState> {
    state.update(oracle_means)
}

/// CbAS with marginal densities.
#[derive(Clone, Debug)]
pub struct Cbas<M> {
    pub prior: M,
}

impl<M: GenerativeModel> SearchStrategy<M> for Cbas<M> {
    fn method(&self) -> &'static str {
        "cbas"
    }

    fn weights(&mut self, ctx: &StepContext<'_, M>) -> Result<Weights> {
        ctx.samples
            .iter()
            .map(|x| cbas_log_weight(&self.prior, ctx.search, x, ctx.event, ctx.oracles))
            .collect::<Result<Vec<_>>>()
            .map(Weights::Log)
    }
}

/// CbAS with joint `(x, z)` densities for latent-variable models.
#[derive(Clone, Debug)]
pub struct CbasJoint<M> {
    pub prior: M,
}

impl<M: LatentModel> SearchStrategy<M> for CbasJoint<M> {
    fn method(&self) -> &'static str {
        "cbas"
    }

    fn weights(&mut self, ctx: &StepContext<'_, M>) -> Result<Weights> {
        ctx.draws
            .iter()
            .map(|d| {
                let z = d.z.as_deref().ok_or_else(|| {
                    Error::InvalidParameter("joint weights need latent draws".into())
                })?;
                cbas_log_weight_joint(&self.prior, ctx.search, &d.x, z, ctx.event, ctx.oracles)
            })
            .collect::<Result<Vec<_>>>()
            .map(Weights::Log)
    }
}

/// CbAS from `initial` (normally the prior itself, `phi^(1) = theta^(0)`).
pub fn run_cbas<M: GenerativeModel, R: Rng + ?Sized>(
    prior: &M,
    initial: &M,
    oracles: &[&dyn Oracle],
    template: &DesideratumEvent,
    config: &CbASConfig,
    rng: &mut R,
) -> Result<RunOutcome<M>> {
    let mut strategy = Cbas { prior: prior.clone() };
    run_search(&mut strategy, initial, oracles, template, config, rng, None)
}

/// CbAS weighting by joint densities over `(x, z)`.
pub fn run_cbas_latent<M: LatentModel, R: Rng + ?Sized>(
    prior: &M,
    initial: &M,
    oracles: &[&dyn Oracle],
    template: &DesideratumEvent,
    config: &CbASConfig,
    rng: &mut R,
) -> Result<RunOutcome<M>> {
    if prior.latent_dim() != initial.latent_dim() {
        return Err(Error::LatentSpaceMismatch {
            prior: prior.latent_dim(),
            search: initial.latent_dim(),
        });
    }
    let mut strategy = CbasJoint { prior: prior.clone() };
    run_search(&mut strategy, initial, oracles, template, config, rng, None)
}
