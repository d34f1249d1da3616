//! The one-dimensional two-bump experiment: oracles trained on part or all
//! of the domain, the exact target conditional by quadrature, and search
//! runs tracked by their KL divergence to it.

use std::collections::BTreeMap;

use cbas_core::baselines::uniform_refit;
use cbas_core::engine::{CbASConfig, KlProbe};
use cbas_core::models::{gaussian_fit_weighted, DiagonalGaussianModel};
use cbas_core::oracle::{train_regression_1d, GroundTruth1D, Oracle, RegressionOracle, TrainingSet};
use cbas_core::reference::{grid_mode, kl_grid_log, quadrature_conditional_log, write_grid_csv, UniformGrid};
use cbas_core::stats::normal_cdf;
use cbas_core::{DesideratumEvent, DesignPoint};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{collect_run, finish, RunMeta, RunResult, ScenarioOutput};
use crate::config::{ExperimentConfig, Method, Scenario};
use crate::error::{BenchError, Result};
use crate::runner::{run_method, MethodInputs};
use crate::seed::cell_rng;
use crate::summary::to_csv;

/// Key facts about one oracle's target conditional.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OneDSummary {
    pub oracle: String,
    pub domain_lo: f64,
    pub domain_hi: f64,
    pub noise_variance: f64,
    pub prior_mean: f64,
    pub prior_variance: f64,
    /// Threshold of the target set: the largest oracle mean on the domain.
    pub gamma_target: f64,
    pub conditional_mode: f64,
    pub oracle_argmax: f64,
    pub truth_argmax: f64,
    pub ground_truth_at_mode: f64,
    pub ground_truth_at_oracle_argmax: f64,
}

/// An oracle with its prior and quadrature target.
#[derive(Clone, Debug)]
pub struct OneDOracle {
    pub id: &'static str,
    pub training: TrainingSet,
    pub oracle: RegressionOracle,
    pub prior: DiagonalGaussianModel,
    /// `ln` of the normalized target conditional on the grid.
    pub log_target: Vec<f64>,
    pub summary: OneDSummary,
}

impl OneDOracle {
    pub fn target_event(&self) -> DesideratumEvent {
        DesideratumEvent::maximize(self.summary.gamma_target)
    }
}

/// `(KL(target || q), KL(q || target))` on the grid.
pub fn kl_pair(grid: &UniformGrid, log_target: &[f64], q: &DiagonalGaussianModel) -> (f64, f64) {
    let log_q: Vec<f64> = grid.points().into_iter().map(|x| q.ln_pdf_scalar(x)).collect();
    (
        kl_grid_log(log_target, &log_q, grid),
        kl_grid_log(&log_q, log_target, grid),
    )
}

#[derive(Clone, Debug)]
pub struct OneD {
    pub truth: GroundTruth1D,
    pub grid: UniformGrid,
    /// Partial-domain oracle first, then full-domain.
    pub oracles: Vec<OneDOracle>,
}

impl OneD {
    pub fn oracle(&self, id: &str) -> Option<&OneDOracle> {
        self.oracles.iter().find(|o| o.id == id)
    }
}

fn point(x: f64) -> DesignPoint {
    DesignPoint::Continuous(vec![x])
}

/// Trains both oracles, fits their priors and computes the targets.
pub fn build_one_d(cfg: &ExperimentConfig) -> Result<OneD> {
    let truth = cfg.landscape.bumps;
    let [lo, hi] = cfg.landscape.domain;
    let grid = UniformGrid::new(cfg.grid.lo, cfg.grid.hi, cfg.grid.points)?;
    let partial_hi = lo + cfg.oracle.training_domain_fraction * (hi - lo);
    let on_domain: Vec<usize> = (0..grid.n)
        .filter(|&i| (lo..=hi).contains(&grid.point(i)))
        .collect();
    let argmax_on_domain = |values: &dyn Fn(f64) -> f64| {
        let mut best = on_domain[0];
        for &i in &on_domain {
            if values(grid.point(i)) > values(grid.point(best)) {
                best = i;
            }
        }
        grid.point(best)
    };
    let truth_argmax = argmax_on_domain(&|x| truth.eval(x));

    let mut oracles = Vec::with_capacity(2);
    for (id, d_hi) in [("partial", partial_hi), ("full", hi)] {
        let mut rng = cell_rng(cfg.master_seed, "training", id, 0);
        let n = cfg.oracle.training_points_1d;
        let noise_sd = cfg.oracle.noise_variance.sqrt();
        let xs: Vec<f64> = (0..n).map(|_| lo + (d_hi - lo) * rng.random::<f64>()).collect();
        let truth_ys: Vec<f64> = xs.iter().map(|&x| truth.eval(x)).collect();
        let ys: Vec<f64> = truth_ys
            .iter()
            .map(|&y| y + noise_sd * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let oracle = train_regression_1d(&xs, &ys, cfg.oracle.mean_family, cfg.oracle.holdout_fraction)?;
        let points: Vec<DesignPoint> = xs.iter().map(|&x| point(x)).collect();
        let prior = gaussian_fit_weighted(&points, &vec![1.0; n], cfg.model.variance_floor)?;
        let (m0, s0) = (prior.mean[0], prior.variance[0].sqrt());
        let mass = normal_cdf((grid.hi - m0) / s0) - normal_cdf((grid.lo - m0) / s0);
        if mass < 0.9999 {
            return Err(BenchError::Config(format!(
                "grid [{}, {}] holds only {mass} of the {id} prior mass",
                grid.lo, grid.hi
            )));
        }

        let mean = |x: f64| oracle.mean.eval_scalar(x);
        let oracle_argmax = argmax_on_domain(&mean);
        let gamma_target = mean(oracle_argmax);
        let log_target = quadrature_conditional_log(
            |x| prior.ln_pdf_scalar(x),
            |x| oracle.ln_survival(&point(x), gamma_target).unwrap_or(f64::NEG_INFINITY),
            &grid,
        )?;
        let mode = grid_mode(&grid, &log_target);
        let summary = OneDSummary {
            oracle: id.to_string(),
            domain_lo: lo,
            domain_hi: d_hi,
            noise_variance: oracle.noise_variance,
            prior_mean: m0,
            prior_variance: prior.variance[0],
            gamma_target,
            conditional_mode: mode,
            oracle_argmax,
            truth_argmax,
            ground_truth_at_mode: truth.eval(mode),
            ground_truth_at_oracle_argmax: truth.eval(oracle_argmax),
        };
        oracles.push(OneDOracle {
            id,
            training: TrainingSet {
                xs: points,
                ys,
                truth: truth_ys,
            },
            oracle,
            prior,
            log_target,
            summary,
        });
    }
    Ok(OneD { truth, grid, oracles })
}

/// Loop settings of the 1D runs.
pub(crate) fn one_d_config(cfg: &ExperimentConfig, q: f64) -> CbASConfig {
    CbASConfig {
        quantile: q,
        samples_per_iteration: cfg.m,
        max_iterations: Some(cfg.iterations),
        sequence_budget: None,
        weight_floor_ess: 1.0,
    }
}

/// Runs `method` on one oracle towards `target`, tracking KL to
/// `log_target` when given.
pub(crate) fn run_one_d(
    cfg: &ExperimentConfig,
    setup: &OneD,
    o: &OneDOracle,
    target: &DesideratumEvent,
    log_target: Option<&[f64]>,
    meta: RunMeta,
) -> Result<RunResult> {
    let mut rng = cell_rng(cfg.master_seed, meta.method.name(), &meta.oracle, meta.run_index);
    let inputs = MethodInputs {
        prior: &o.prior,
        oracle: &o.oracle,
        target,
        baselines: &cfg.baselines,
        feedback: (&o.training.xs, uniform_refit()),
    };
    let mut probe = |q: &DiagonalGaussianModel| Ok(kl_pair(&setup.grid, log_target.unwrap_or_default(), q));
    let outcome = run_method(
        meta.method,
        &inputs,
        &one_d_config(cfg, meta.q),
        &mut rng,
        log_target.is_some().then_some(&mut probe as &mut KlProbe<'_, DiagonalGaussianModel>),
    )?;
    collect_run(meta, outcome, &setup.truth, |m: &DiagonalGaussianModel| {
        Some((m.mean[0], m.variance[0]))
    })
}

/// Grid densities for plotting, one file per oracle.
pub(crate) fn grid_files(setup: &OneD, runs: &[RunResult], files: &mut BTreeMap<String, Vec<u8>>) -> Result<()> {
    let grid = &setup.grid;
    let xs = grid.points();
    for o in &setup.oracles {
        let prior: Vec<f64> = xs.iter().map(|&x| o.prior.ln_pdf_scalar(x).exp()).collect();
        let target: Vec<f64> = o.log_target.iter().map(|l| l.exp()).collect();
        let mean: Vec<f64> = xs.iter().map(|&x| o.oracle.mean.eval_scalar(x)).collect();
        let truth: Vec<f64> = xs.iter().map(|&x| setup.truth.eval(x)).collect();
        let mut columns: Vec<(String, Vec<f64>)> = vec![
            ("prior".into(), prior),
            ("target".into(), target),
            ("oracle_mean".into(), mean),
            ("ground_truth".into(), truth),
        ];
        for r in runs.iter().filter(|r| r.meta.oracle == o.id) {
            let last = r.rows.last().expect("runs record at least one iteration");
            if let (Some(m), Some(v)) = (last.search_mean, last.search_variance) {
                let q = DiagonalGaussianModel::univariate(m, v)?;
                columns.push((
                    format!("search_{}", r.meta.run_id),
                    xs.iter().map(|&x| q.ln_pdf_scalar(x).exp()).collect(),
                ));
            }
        }
        let named: Vec<(&str, &[f64])> = columns.iter().map(|(n, v)| (n.as_str(), v.as_slice())).collect();
        let mut bytes = Vec::new();
        write_grid_csv(&mut bytes, grid, &named)?;
        files.insert(format!("grid/{}.csv", o.id), bytes);
    }
    Ok(())
}

/// Runs every configured method on both oracles towards
/// `S = {y >= max oracle mean on the domain}`.
pub fn scenario_illustrative_1d(cfg: &ExperimentConfig) -> Result<ScenarioOutput> {
    let setup = build_one_d(cfg)?;
    let mut cells = Vec::new();
    for o in &setup.oracles {
        for &method in &cfg.methods {
            for &idx in &cfg.seeds {
                cells.push((o, RunMeta::new(Scenario::Illustrative1d, method, o.id, cfg.q, idx)));
            }
        }
    }
    let runs = cells
        .into_par_iter()
        .map(|(o, meta)| run_one_d(cfg, &setup, o, &o.target_event(), Some(&o.log_target), meta))
        .collect::<Result<Vec<_>>>()?;
    let mut files = BTreeMap::new();
    let cbas_runs: Vec<RunResult> = runs.iter().filter(|r| r.meta.method == Method::Cbas).cloned().collect();
    grid_files(&setup, &cbas_runs, &mut files)?;
    let summaries: Vec<OneDSummary> = setup.oracles.iter().map(|o| o.summary.clone()).collect();
    files.insert("one_d_summary.csv".into(), to_csv(&summaries)?);
    finish(cfg, runs, files, summaries, Vec::new())
}
