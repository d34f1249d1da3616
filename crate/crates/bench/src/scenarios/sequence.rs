//! Discrete sequence design under oracles trained on the low-fitness tail of
//! a second-order landscape.

use std::collections::BTreeMap;
use std::sync::Arc;

use cbas_core::baselines::PoolFit;
use cbas_core::engine::CbASConfig;
use cbas_core::models::{FlooredCategoricalModel, GenerativeModel, ProductCategoricalModel};
use cbas_core::oracle::{
    train_sequence_oracle, truncated_training_set, EnsembleOracle, GroundTruthSequence, TruncatedTrainingSet,
};
use cbas_core::DesideratumEvent;
use rayon::prelude::*;

use super::{collect_run, finish, RunMeta, RunResult, ScenarioOutput};
use crate::config::{ExperimentConfig, Method, Scenario};
use crate::error::Result;
use crate::runner::{run_method, MethodInputs};
use crate::seed::{cell_rng, derive_seed};

/// Landscape, training data, prior and trained oracles shared by every run.
#[derive(Clone, Debug)]
pub struct SequenceSetup {
    pub landscape: GroundTruthSequence,
    pub training: TruncatedTrainingSet,
    pub prior: ProductCategoricalModel,
    /// `(id, oracle)` per ensemble size, ids `ens-<size>`.
    pub oracles: Vec<(String, EnsembleOracle)>,
}

impl SequenceSetup {
    pub fn oracle(&self, id: &str) -> Option<&EnsembleOracle> {
        self.oracles.iter().find(|(k, _)| k == id).map(|(_, o)| o)
    }
}

pub fn oracle_id(size: usize) -> String {
    format!("ens-{size}")
}

/// Builds the landscape from the master seed, truncates a mutant pool at
/// the training percentile, fits the smoothed categorical prior on the
/// training sequences and trains one ensemble per size.
pub fn build_sequence_setup(cfg: &ExperimentConfig, ensemble_sizes: &[usize]) -> Result<SequenceSetup> {
    let l = &cfg.landscape;
    let landscape = GroundTruthSequence::generate(
        l.sequence_length,
        l.alphabet,
        derive_seed(cfg.master_seed, "landscape", "", 0),
        l.sequence,
    )?;
    let pool = landscape.mutant_distribution(l.mutation_rate)?;
    let mut rng = cell_rng(cfg.master_seed, "training", "", 0);
    let training = truncated_training_set(
        &landscape,
        &pool,
        l.pool_size,
        cfg.oracle.training_percentile,
        cfg.oracle.training_points,
        cfg.oracle.noise_variance.sqrt(),
        &mut rng,
    )?;
    let xs = &training.data.xs;
    let prior = ProductCategoricalModel::uniform(l.sequence_length, l.alphabet).fit_weighted_smoothed(
        xs,
        &vec![1.0; xs.len()],
        cfg.model.prior_smoothing,
    )?;
    let oracles = ensemble_sizes
        .iter()
        .map(|&k| {
            let id = oracle_id(k);
            let mut rng = cell_rng(cfg.master_seed, "oracle", &id, 0);
            let o = train_sequence_oracle(&training.data, l.sequence_length, l.alphabet, k, &mut rng)?;
            Ok((id, o))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SequenceSetup {
        landscape,
        training,
        prior,
        oracles,
    })
}

fn sequence_config(cfg: &ExperimentConfig, q: f64) -> CbASConfig {
    CbASConfig {
        quantile: q,
        samples_per_iteration: cfg.m,
        max_iterations: None,
        sequence_budget: Some(cfg.budget),
        weight_floor_ess: 1.0,
    }
}

fn run_cell(cfg: &ExperimentConfig, setup: &SequenceSetup, meta: RunMeta) -> Result<RunResult> {
    let oracle = setup.oracle(&meta.oracle).expect("cells only name trained oracles");
    let smoothing = cfg.model.prior_smoothing;
    let refit: PoolFit<FlooredCategoricalModel> = Arc::new(move |m: &FlooredCategoricalModel, pool| {
        let model = m.model.fit_weighted_smoothed(pool, &vec![1.0; pool.len()], smoothing)?;
        Ok(FlooredCategoricalModel { model, floor: m.floor })
    });
    let prior = FlooredCategoricalModel::new(setup.prior.clone(), cfg.model.search_floor)?;
    let target = DesideratumEvent::maximize(f64::INFINITY);
    let inputs = MethodInputs {
        prior: &prior,
        oracle,
        target: &target,
        baselines: &cfg.baselines,
        feedback: (&setup.training.data.xs, refit),
    };
    let mut rng = cell_rng(cfg.master_seed, meta.method.name(), &meta.oracle, meta.run_index);
    let outcome = run_method(meta.method, &inputs, &sequence_config(cfg, meta.q), &mut rng, None)?;
    collect_run(meta, outcome, &setup.landscape, |_| None)
}

fn run_cells(cfg: &ExperimentConfig, setup: &SequenceSetup, cells: Vec<RunMeta>) -> Result<Vec<RunResult>> {
    cells
        .into_par_iter()
        .map(|meta| run_cell(cfg, setup, meta))
        .collect()
}

fn setup_files(setup: &SequenceSetup) -> Result<BTreeMap<String, Vec<u8>>> {
    let mut files = BTreeMap::new();
    files.insert("landscape.json".into(), serde_json::to_vec(&setup.landscape)?);
    files.insert("training_set.json".into(), serde_json::to_vec(&setup.training)?);
    files.insert("prior.json".into(), setup.prior.snapshot().to_json()?.into_bytes());
    for (id, o) in &setup.oracles {
        files.insert(format!("oracles/{id}.json"), serde_json::to_vec(o)?);
    }
    Ok(files)
}

/// Every configured method on every ensemble size, once per seed, under the
/// shared sequence budget.
pub fn scenario_sequence_design(cfg: &ExperimentConfig) -> Result<ScenarioOutput> {
    let setup = build_sequence_setup(cfg, &cfg.oracle.ensemble_sizes)?;
    let mut cells = Vec::new();
    for (id, _) in &setup.oracles {
        for &method in &cfg.methods {
            for &idx in &cfg.seeds {
                cells.push(RunMeta::new(Scenario::SequenceDesign, method, id, cfg.q, idx));
            }
        }
    }
    let runs = run_cells(cfg, &setup, cells)?;
    finish(cfg, runs, setup_files(&setup)?, Vec::new(), Vec::new())
}

/// CbAS on the single-member oracle at each configured `Q`. Runs with the
/// same seed index share their random stream across `Q` values.
pub fn scenario_q_sweep(cfg: &ExperimentConfig) -> Result<ScenarioOutput> {
    let setup = build_sequence_setup(cfg, &[1])?;
    let id = oracle_id(1);
    let mut cells = Vec::new();
    for &q in &cfg.q_values {
        for &idx in &cfg.seeds {
            cells.push(RunMeta::new(Scenario::QSweep, Method::Cbas, &id, q, idx));
        }
    }
    let runs = run_cells(cfg, &setup, cells)?;
    finish(cfg, runs, setup_files(&setup)?, Vec::new(), Vec::new())
}
