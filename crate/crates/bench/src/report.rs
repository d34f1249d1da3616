//! Offline recomputation of the summary tables from per-run CSVs.

use std::path::Path;

use crate::error::{BenchError, Result};
use crate::summary::{aggregate, parse_trajectory_csv, to_csv};

/// Recomputed `(run_summary.csv, aggregate.csv)` bytes from `dir/runs/*.csv`.
pub fn recompute(dir: &Path) -> Result<(Vec<u8>, Vec<u8>)> {
    let runs = dir.join("runs");
    let mut paths: Vec<_> = std::fs::read_dir(&runs)
        .map_err(|e| BenchError::Artifact {
            file: runs.display().to_string(),
            reason: e.to_string(),
        })?
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    let mut rows = Vec::new();
    for p in &paths {
        let bytes = std::fs::read(p)?;
        rows.extend(parse_trajectory_csv(&p.display().to_string(), &bytes)?);
    }
    let (summaries, table) = aggregate(&rows)?;
    Ok((to_csv(&summaries)?, to_csv(&table)?))
}

/// Rewrites the summary tables of `dir` from its per-run CSVs.
pub fn report(dir: &Path) -> Result<()> {
    let (summaries, table) = recompute(dir)?;
    std::fs::write(dir.join("run_summary.csv"), summaries)?;
    std::fs::write(dir.join("aggregate.csv"), table)?;
    Ok(())
}
