//! Percentile scoring of sample batches, the per-iteration CSV schema and the
//! tables aggregated from it.

use std::collections::BTreeMap;

use cbas_core::stats::nearest_rank_percentile;
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

/// Oracle-mean percentile levels scored for every batch.
pub const PERCENTILES: [f64; 4] = [0.5, 0.8, 0.95, 1.0];

/// Oracle-mean percentiles of a batch and the mean ground truth of the
/// samples at or above each of them.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PercentileSummary {
    pub oracle: [f64; 4],
    pub ground_truth: [f64; 4],
}

impl PercentileSummary {
    pub fn from_batch(oracle_means: &[f64], truth: &[f64]) -> Result<Self> {
        if oracle_means.len() != truth.len() || oracle_means.is_empty() {
            return Err(cbas_core::Error::LengthMismatch {
                samples: oracle_means.len(),
                weights: truth.len(),
            }
            .into());
        }
        let mut oracle = [0.0; 4];
        let mut ground_truth = [0.0; 4];
        for (k, &q) in PERCENTILES.iter().enumerate() {
            let cut = nearest_rank_percentile(oracle_means, q)?;
            let (mut sum, mut n) = (0.0, 0usize);
            for (&m, &g) in oracle_means.iter().zip(truth) {
                if m >= cut {
                    sum += g;
                    n += 1;
                }
            }
            oracle[k] = cut;
            ground_truth[k] = sum / n as f64;
        }
        Ok(Self { oracle, ground_truth })
    }
}

/// Ground truth non-decreasing in oracle percentile.
pub fn is_ordered(gt: &[f64; 4]) -> bool {
    gt.windows(2).all(|w| w[0] <= w[1])
}

/// The top oracle percentile carries less ground truth than the median.
pub fn is_inverted(gt: &[f64; 4]) -> bool {
    gt[3] < gt[0]
}

/// One row of a per-run trajectory CSV. Optional columns are empty when the
/// scenario has no such quantity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub run_id: String,
    pub scenario: String,
    pub method: String,
    pub oracle: String,
    pub q: f64,
    pub run_index: u64,
    pub t: usize,
    pub samples: usize,
    pub gamma: f64,
    pub ess: f64,
    pub oracle_mean_p50: f64,
    pub oracle_mean_p80: f64,
    pub oracle_mean_p95: f64,
    pub oracle_mean_p100: f64,
    pub ground_truth_p50: f64,
    pub ground_truth_p80: f64,
    pub ground_truth_p95: f64,
    pub ground_truth_p100: f64,
    pub kl_to_target: Option<f64>,
    pub kl_from_target: Option<f64>,
    pub search_mean: Option<f64>,
    pub search_variance: Option<f64>,
}

pub const TRAJECTORY_COLUMNS: [&str; 22] = [
    "run_id",
    "scenario",
    "method",
    "oracle",
    "q",
    "run_index",
    "t",
    "samples",
    "gamma",
    "ess",
    "oracle_mean_p50",
    "oracle_mean_p80",
    "oracle_mean_p95",
    "oracle_mean_p100",
    "ground_truth_p50",
    "ground_truth_p80",
    "ground_truth_p95",
    "ground_truth_p100",
    "kl_to_target",
    "kl_from_target",
    "search_mean",
    "search_variance",
];

impl TrajectoryRow {
    pub fn ground_truth(&self) -> [f64; 4] {
        [
            self.ground_truth_p50,
            self.ground_truth_p80,
            self.ground_truth_p95,
            self.ground_truth_p100,
        ]
    }

    pub fn oracle_percentiles(&self) -> [f64; 4] {
        [
            self.oracle_mean_p50,
            self.oracle_mean_p80,
            self.oracle_mean_p95,
            self.oracle_mean_p100,
        ]
    }

    fn numbers(&self) -> Vec<f64> {
        let mut v = vec![self.q, self.gamma, self.ess];
        v.extend(self.oracle_percentiles());
        v.extend(self.ground_truth());
        v.extend(
            [self.kl_to_target, self.kl_from_target, self.search_mean, self.search_variance]
                .into_iter()
                .flatten(),
        );
        v
    }
}

/// Per-run scores derived from its trajectory: ground truth at each oracle
/// percentile averaged over iterations, plus the last iteration's values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummaryRow {
    pub run_id: String,
    pub scenario: String,
    pub method: String,
    pub oracle: String,
    pub q: f64,
    pub run_index: u64,
    pub iterations: usize,
    pub samples: usize,
    pub ground_truth_p50: f64,
    pub ground_truth_p80: f64,
    pub ground_truth_p95: f64,
    pub ground_truth_p100: f64,
    pub final_oracle_mean_p80: f64,
    pub final_ground_truth_p80: f64,
    pub ordered: bool,
    pub inverted: bool,
}

impl RunSummaryRow {
    pub fn ground_truth(&self) -> [f64; 4] {
        [
            self.ground_truth_p50,
            self.ground_truth_p80,
            self.ground_truth_p95,
            self.ground_truth_p100,
        ]
    }
}

/// Figure-style aggregate: run summaries averaged per (method, oracle, q).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub scenario: String,
    pub method: String,
    pub oracle: String,
    pub q: f64,
    pub runs: usize,
    pub ground_truth_p50: f64,
    pub ground_truth_p80: f64,
    pub ground_truth_p95: f64,
    pub ground_truth_p100: f64,
    pub final_ground_truth_p80: f64,
    pub ordered_runs: usize,
    pub inverted_runs: usize,
}

/// Run summaries sorted by run id, and their per-group averages sorted by
/// (method, oracle, q).
pub fn aggregate(rows: &[TrajectoryRow]) -> Result<(Vec<RunSummaryRow>, Vec<AggregateRow>)> {
    let mut by_run: BTreeMap<&str, Vec<&TrajectoryRow>> = BTreeMap::new();
    for r in rows {
        by_run.entry(r.run_id.as_str()).or_default().push(r);
    }
    let mut summaries = Vec::with_capacity(by_run.len());
    for (run_id, mut rs) in by_run {
        rs.sort_by_key(|r| r.t);
        let first = rs[0];
        let last = rs[rs.len() - 1];
        let n = rs.len() as f64;
        let mut gt = [0.0; 4];
        for r in &rs {
            for (acc, v) in gt.iter_mut().zip(r.ground_truth()) {
                *acc += v;
            }
        }
        for v in &mut gt {
            *v /= n;
        }
        summaries.push(RunSummaryRow {
            run_id: run_id.to_string(),
            scenario: first.scenario.clone(),
            method: first.method.clone(),
            oracle: first.oracle.clone(),
            q: first.q,
            run_index: first.run_index,
            iterations: rs.len(),
            samples: rs.iter().map(|r| r.samples).sum(),
            ground_truth_p50: gt[0],
            ground_truth_p80: gt[1],
            ground_truth_p95: gt[2],
            ground_truth_p100: gt[3],
            final_oracle_mean_p80: last.oracle_mean_p80,
            final_ground_truth_p80: last.ground_truth_p80,
            ordered: is_ordered(&gt),
            inverted: is_inverted(&gt),
        });
    }

    let mut groups: BTreeMap<(String, String, String), Vec<&RunSummaryRow>> = BTreeMap::new();
    for s in &summaries {
        groups
            .entry((s.method.clone(), s.oracle.clone(), format!("{}", s.q)))
            .or_default()
            .push(s);
    }
    let mut table = Vec::with_capacity(groups.len());
    for ((method, oracle, _), ss) in groups {
        let n = ss.len() as f64;
        let avg = |f: &dyn Fn(&RunSummaryRow) -> f64| ss.iter().map(|s| f(s)).sum::<f64>() / n;
        table.push(AggregateRow {
            scenario: ss[0].scenario.clone(),
            method,
            oracle,
            q: ss[0].q,
            runs: ss.len(),
            ground_truth_p50: avg(&|s| s.ground_truth_p50),
            ground_truth_p80: avg(&|s| s.ground_truth_p80),
            ground_truth_p95: avg(&|s| s.ground_truth_p95),
            ground_truth_p100: avg(&|s| s.ground_truth_p100),
            final_ground_truth_p80: avg(&|s| s.final_ground_truth_p80),
            ordered_runs: ss.iter().filter(|s| s.ordered).count(),
            inverted_runs: ss.iter().filter(|s| s.inverted).count(),
        });
    }
    Ok((summaries, table))
}

/// Serializes rows with a header, refusing non-finite numbers.
pub fn to_csv<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| BenchError::Io(e.into_error()))
}

pub fn trajectory_csv(rows: &[TrajectoryRow]) -> Result<Vec<u8>> {
    for r in rows {
        if r.numbers().iter().any(|v| !v.is_finite()) {
            return Err(BenchError::Artifact {
                file: format!("{}.csv", r.run_id),
                reason: format!("non-finite value at t = {}", r.t),
            });
        }
    }
    if rows.is_empty() {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(TRAJECTORY_COLUMNS)?;
        return w.into_inner().map_err(|e| BenchError::Io(e.into_error()));
    }
    to_csv(rows)
}

/// Parses a trajectory CSV and checks it against the column schema: exact
/// header, every required cell present and finite.
pub fn parse_trajectory_csv(name: &str, bytes: &[u8]) -> Result<Vec<TrajectoryRow>> {
    let invalid = |reason: String| BenchError::Artifact {
        file: name.to_string(),
        reason,
    };
    let mut rdr = csv::Reader::from_reader(bytes);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != TRAJECTORY_COLUMNS {
        return Err(invalid(format!("unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.deserialize::<TrajectoryRow>().enumerate() {
        let row = rec.map_err(|e| invalid(format!("row {}: {e}", i + 1)))?;
        if row.numbers().iter().any(|v| !v.is_finite()) {
            return Err(invalid(format!("row {}: non-finite cell", i + 1)));
        }
        rows.push(row);
    }
    Ok(rows)
}
