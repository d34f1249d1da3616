//! Dispatch from a [`Method`] to its search strategy.

use cbas_core::baselines::{CemPi, Dbas, Feedback, PoolFit, Rwr};
use cbas_core::engine::{run_search, Cbas, CbASConfig, KlProbe, RunOutcome};
use cbas_core::models::GenerativeModel;
use cbas_core::oracle::Oracle;
use cbas_core::{DesideratumEvent, DesignPoint};
use rand::Rng;

use crate::config::{BaselineSpec, Method};
use crate::error::Result;

/// What a method needs besides the loop settings.
pub struct MethodInputs<'a, M> {
    pub prior: &'a M,
    pub oracle: &'a dyn Oracle,
    /// Target event for CbAS and DbAS; the other methods maximize.
    pub target: &'a DesideratumEvent,
    pub baselines: &'a BaselineSpec,
    /// Initial feedback pool and its refit rule.
    pub feedback: (&'a [DesignPoint], PoolFit<M>),
}

/// Runs `method` from the prior. Every method starts at `phi = theta^(0)`.
pub fn run_method<M: GenerativeModel, R: Rng + ?Sized>(
    method: Method,
    inputs: &MethodInputs<'_, M>,
    config: &CbASConfig,
    rng: &mut R,
    probe: Option<&mut KlProbe<'_, M>>,
) -> Result<RunOutcome<M>> {
    let oracles = [inputs.oracle];
    let maximize = DesideratumEvent::maximize(f64::INFINITY);
    let out = match method {
        Method::Cbas => {
            let mut s = Cbas {
                prior: inputs.prior.clone(),
            };
            run_search(&mut s, inputs.prior, &oracles, inputs.target, config, rng, probe)?
        }
        Method::Dbas => run_search(&mut Dbas, inputs.prior, &oracles, inputs.target, config, rng, probe)?,
        Method::Rwr => {
            let mut s = Rwr {
                alpha: inputs.baselines.rwr_alpha,
            };
            run_search(&mut s, inputs.prior, &oracles, &maximize, config, rng, probe)?
        }
        Method::CemPi => {
            let mut s = CemPi {
                quantile: inputs.baselines.cem_quantile,
                y_best: f64::NEG_INFINITY,
            };
            run_search(&mut s, inputs.prior, &oracles, &maximize, config, rng, probe)?
        }
        Method::Fb => {
            let (pool, refit) = &inputs.feedback;
            let mut s = Feedback::new(pool.to_vec(), inputs.oracle, inputs.baselines.fb_percentile, refit.clone())?;
            let template = DesideratumEvent::maximize(s.threshold);
            let mut out = run_search(&mut s, inputs.prior, &oracles, &template, config, rng, probe)?;
            for r in &mut out.records {
                r.gamma = s.threshold;
                r.event = template.clone();
            }
            out
        }
    };
    Ok(out)
}
