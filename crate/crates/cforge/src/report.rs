//! CSV emission.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{AggregateRow, ExperimentResult};

/// One line of `rounds.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub user_id: usize,
    pub t: usize,
    pub regret: Option<f64>,
    pub avg_regret: Option<f64>,
    pub wc_regret: Option<f64>,
    pub gain_true: Option<f64>,
    pub gain_est: f64,
    pub eta: f64,
    pub gamma: f64,
    pub solver_status: String,
    pub wall_ms: f64,
}

pub fn round_records(result: &ExperimentResult) -> Vec<RoundRecord> {
    let mut out = Vec::new();
    for run in &result.runs {
        let Some(trace) = &run.trace else { continue };
        let mut sum = Some(0.0);
        for (i, r) in trace.rows.iter().enumerate() {
            sum = sum.zip(r.regret).map(|(s, x)| s + x);
            out.push(RoundRecord {
                user_id: run.user_id,
                t: r.t,
                regret: r.regret,
                avg_regret: sum.map(|s| s / (i + 1) as f64),
                wc_regret: r.diagnostics.wc_regret,
                gain_true: r.diagnostics.gain_true,
                gain_est: r.diagnostics.gain_est,
                eta: r.eta,
                gamma: r.gamma,
                solver_status: r.diagnostics.solver_status.as_str().to_string(),
                wall_ms: r.diagnostics.wall_ms,
            });
        }
    }
    out
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(f))
}

pub fn write_rounds_csv(path: &Path, result: &ExperimentResult) -> Result<()> {
    let mut w = writer(path)?;
    for rec in round_records(result) {
        w.serialize(rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_aggregate_csv(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    let mut w = writer(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_aggregate_csv(path: &Path) -> Result<Vec<AggregateRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize().collect::<std::result::Result<Vec<AggregateRow>, _>>()?;
    Ok(rows)
}

#[derive(Serialize)]
struct ComparisonRow<'a> {
    strategy: &'a str,
    #[serde(flatten)]
    row: &'a AggregateRow,
    converged: usize,
}

pub fn write_comparison_csv(path: &Path, results: &[ExperimentResult]) -> Result<()> {
    let mut w = writer(path)?;
    for res in results {
        let converged = res.converged();
        for row in &res.aggregate {
            w.serialize(ComparisonRow {
                strategy: res.config.strategy.as_str(),
                row,
                converged,
            })?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}
