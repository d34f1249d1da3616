//! Named experiments. Each returns a [`ScenarioOutput`] holding structured
//! results and the exact bytes of every artifact it emits.

mod illustrative;
mod sequence;
mod specification;

use std::collections::BTreeMap;
use std::path::Path;

use cbas_core::engine::{RunOutcome, RunStatus};
use cbas_core::models::GenerativeModel;
use cbas_core::oracle::Landscape;
use cbas_core::DesideratumEvent;

pub use illustrative::{build_one_d, kl_pair, scenario_illustrative_1d, OneD, OneDOracle, OneDSummary};
pub use sequence::{build_sequence_setup, scenario_q_sweep, scenario_sequence_design, SequenceSetup};
pub use specification::{scenario_specification_1d, SpecificationSummary};

use crate::config::{ExperimentConfig, Method, Scenario};
use crate::error::Result;
use crate::summary::{aggregate, to_csv, trajectory_csv, AggregateRow, PercentileSummary, RunSummaryRow, TrajectoryRow};

/// Identity of one (method, oracle, q, run index) cell.
#[derive(Clone, Debug, PartialEq)]
pub struct RunMeta {
    pub run_id: String,
    pub scenario: Scenario,
    pub method: Method,
    pub oracle: String,
    pub q: f64,
    pub run_index: u64,
}

impl RunMeta {
    pub fn new(scenario: Scenario, method: Method, oracle: &str, q: f64, run_index: u64) -> Self {
        Self {
            run_id: format!("{}-{}-q{}-r{}", method.name(), oracle, q, run_index),
            scenario,
            method,
            oracle: oracle.to_string(),
            q,
            run_index,
        }
    }
}

/// One finished run.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub meta: RunMeta,
    pub status: RunStatus,
    pub rows: Vec<TrajectoryRow>,
    /// Relaxed event of every iteration.
    pub events: Vec<DesideratumEvent>,
    pub final_oracle_means: Vec<f64>,
    pub samples_drawn: usize,
    /// Final search model as JSON.
    pub final_model: String,
}

impl RunResult {
    pub fn gammas(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.gamma).collect()
    }
}

#[derive(Clone, Debug)]
pub struct ScenarioOutput {
    pub scenario: Scenario,
    pub runs: Vec<RunResult>,
    pub summaries: Vec<RunSummaryRow>,
    pub aggregate: Vec<AggregateRow>,
    pub one_d: Vec<OneDSummary>,
    pub specification: Vec<SpecificationSummary>,
    /// Relative path to file contents, in write order.
    pub files: BTreeMap<String, Vec<u8>>,
}

impl ScenarioOutput {
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(path, bytes)?;
        }
        Ok(())
    }

    /// The CSV artifacts only.
    pub fn csv_files(&self) -> impl Iterator<Item = (&String, &Vec<u8>)> {
        self.files.iter().filter(|(k, _)| k.ends_with(".csv"))
    }
}

pub fn run_scenario(cfg: &ExperimentConfig) -> Result<ScenarioOutput> {
    cfg.validate()?;
    match cfg.scenario {
        Scenario::Illustrative1d => scenario_illustrative_1d(cfg),
        Scenario::SequenceDesign => scenario_sequence_design(cfg),
        Scenario::QSweep => scenario_q_sweep(cfg),
        Scenario::Specification1d => scenario_specification_1d(cfg),
    }
}

/// Turns a run into trajectory rows scored against `truth`. `search_params`
/// reports a 1D search model's mean and variance.
pub(crate) fn collect_run<M: GenerativeModel>(
    meta: RunMeta,
    outcome: RunOutcome<M>,
    truth: &dyn Landscape,
    search_params: impl Fn(&M) -> Option<(f64, f64)>,
) -> Result<RunResult> {
    let mut rows = Vec::with_capacity(outcome.records.len());
    for r in &outcome.records {
        let gt = r
            .samples
            .iter()
            .map(|x| truth.value(x))
            .collect::<cbas_core::Result<Vec<f64>>>()?;
        let s = PercentileSummary::from_batch(&r.oracle_means[0], &gt)?;
        let params = search_params(&r.search_model);
        rows.push(TrajectoryRow {
            run_id: meta.run_id.clone(),
            scenario: meta.scenario.name().to_string(),
            method: meta.method.name().to_string(),
            oracle: meta.oracle.clone(),
            q: meta.q,
            run_index: meta.run_index,
            t: r.t,
            samples: r.samples.len(),
            gamma: r.gamma,
            ess: r.effective_sample_size,
            oracle_mean_p50: s.oracle[0],
            oracle_mean_p80: s.oracle[1],
            oracle_mean_p95: s.oracle[2],
            oracle_mean_p100: s.oracle[3],
            ground_truth_p50: s.ground_truth[0],
            ground_truth_p80: s.ground_truth[1],
            ground_truth_p95: s.ground_truth[2],
            ground_truth_p100: s.ground_truth[3],
            kl_to_target: r.kl_to_target,
            kl_from_target: r.kl_from_target,
            search_mean: params.map(|p| p.0),
            search_variance: params.map(|p| p.1),
        });
    }
    let final_oracle_means = outcome
        .records
        .last()
        .map(|r| r.oracle_means[0].clone())
        .unwrap_or_default();
    Ok(RunResult {
        status: outcome.status,
        events: outcome.records.iter().map(|r| r.event.clone()).collect(),
        samples_drawn: outcome.samples_drawn(),
        final_model: outcome.final_model.snapshot().to_json()?,
        rows,
        final_oracle_means,
        meta,
    })
}

/// Assembles per-run CSVs, summary tables and the effective config.
pub(crate) fn finish(
    cfg: &ExperimentConfig,
    mut runs: Vec<RunResult>,
    mut files: BTreeMap<String, Vec<u8>>,
    one_d: Vec<OneDSummary>,
    specification: Vec<SpecificationSummary>,
) -> Result<ScenarioOutput> {
    runs.sort_by(|a, b| a.meta.run_id.cmp(&b.meta.run_id));
    let mut all_rows = Vec::new();
    for r in &runs {
        files.insert(format!("runs/{}.csv", r.meta.run_id), trajectory_csv(&r.rows)?);
        files.insert(
            format!("models/{}.json", r.meta.run_id),
            r.final_model.clone().into_bytes(),
        );
        all_rows.extend(r.rows.iter().cloned());
    }
    let (summaries, table) = aggregate(&all_rows)?;
    files.insert("run_summary.csv".into(), to_csv(&summaries)?);
    files.insert("aggregate.csv".into(), to_csv(&table)?);
    files.insert("config.json".into(), cfg.to_json().into_bytes());
    Ok(ScenarioOutput {
        scenario: cfg.scenario,
        runs,
        summaries,
        aggregate: table,
        one_d,
        specification,
        files,
    })
}
