//! Population runs: one simulated session per user, aggregated per iteration.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use cforge_core::metrics::{diagnostics, BoundDiagnostics};
use cforge_core::usersim::SimulatedChannel;
use cforge_core::{
    run_elicitation, DomainSpec, QueryStrategy, SessionTrace, TraceRow, UserPopulation, WeightVector,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::report;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UserRun {
    pub user_id: usize,
    pub w_star: WeightVector,
    pub trace: Option<SessionTrace>,
    pub error: Option<String>,
}

impl UserRun {
    /// First iteration with zero instantaneous regret.
    pub fn iterations_to_zero(&self) -> Option<usize> {
        self.trace
            .as_ref()?
            .rows
            .iter()
            .find(|r| r.regret == Some(0.0))
            .map(|r| r.t)
    }

    pub fn bound(&self, spec: &DomainSpec) -> Option<BoundDiagnostics> {
        diagnostics(self.trace.as_ref()?, &self.w_star, spec).ok()
    }
}

/// Median and spread of one iteration across users.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub t: usize,
    pub median_regret: f64,
    pub std_regret: f64,
    pub median_avg_regret: f64,
    pub median_cumulative_runtime_s: f64,
    pub users: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub domain: String,
    pub dim: usize,
    pub runs: Vec<UserRun>,
    pub aggregate: Vec<AggregateRow>,
}

impl ExperimentResult {
    pub fn failures(&self) -> Vec<&UserRun> {
        self.runs.iter().filter(|r| r.error.is_some()).collect()
    }

    pub fn traces(&self) -> Vec<&[TraceRow]> {
        self.runs
            .iter()
            .filter_map(|r| r.trace.as_ref().map(|t| t.rows.as_slice()))
            .collect()
    }

    /// Users whose regret reached zero at some iteration.
    pub fn converged(&self) -> usize {
        self.runs.iter().filter(|r| r.iterations_to_zero().is_some()).count()
    }
}

fn median(v: &[f64]) -> f64 {
    cforge_core::math::median(v).unwrap_or(f64::NAN)
}

/// Per-iteration aggregates over completed traces. A trace shorter than the
/// longest one belongs to a user who stopped with zero regret: it counts as
/// regret 0 afterwards and keeps its last average and cumulative runtime.
pub fn aggregate(traces: &[&[TraceRow]]) -> Vec<AggregateRow> {
    let curves: Vec<Vec<(f64, f64, f64)>> = traces
        .iter()
        .map(|rows| {
            let mut sum = 0.0;
            let mut runtime = 0.0;
            rows.iter()
                .enumerate()
                .map(|(i, r)| {
                    let regret = r.regret.unwrap_or(f64::NAN);
                    sum += regret;
                    runtime += r.diagnostics.wall_ms / 1000.0;
                    (regret, sum / (i + 1) as f64, runtime)
                })
                .collect()
        })
        .collect();
    let len = curves.iter().map(Vec::len).max().unwrap_or(0);
    (0..len)
        .map(|i| {
            let mut regret = Vec::new();
            let mut avg = Vec::new();
            let mut runtime = Vec::new();
            for c in &curves {
                match c.get(i) {
                    Some(&(r, a, w)) => {
                        regret.push(r);
                        avg.push(a);
                        runtime.push(w);
                    }
                    None => {
                        let &(_, a, w) = c.last().expect("non-empty trace");
                        let n = c.len() as f64;
                        regret.push(0.0);
                        avg.push(a * n / (i + 1) as f64);
                        runtime.push(w);
                    }
                }
            }
            AggregateRow {
                t: i + 1,
                median_regret: median(&regret),
                std_regret: cforge_core::math::std_dev(&regret),
                median_avg_regret: median(&avg),
                median_cumulative_runtime_s: median(&runtime),
                users: regret.len(),
            }
        })
        .collect()
}

fn run_user(cfg: &ExperimentConfig, spec: &Arc<DomainSpec>, user: &mut cforge_core::SimulatedUser) -> UserRun {
    let user_id = user.id;
    let w_star = user.true_weights().clone();
    let outcome = cfg.solver.build(spec).and_then(|solver| {
        let mut channel = SimulatedChannel { user, spec };
        run_elicitation(spec.clone(), &mut channel, cfg.session_config(user_id), solver).map_err(Error::from)
    });
    match outcome {
        Ok(trace) => UserRun {
            user_id,
            w_star,
            trace: Some(trace),
            error: None,
        },
        Err(e) => UserRun {
            user_id,
            w_star,
            trace: None,
            error: Some(e.to_string()),
        },
    }
}

/// Runs one session per simulated user. Session failures are recorded in
/// the result rather than aborting the run.
pub fn run_experiment(cfg: &ExperimentConfig, base: &Path) -> Result<ExperimentResult> {
    cfg.validate()?;
    let spec = Arc::new(cfg.domain.build(base)?);
    run_on_domain(cfg, spec)
}

pub fn run_on_domain(cfg: &ExperimentConfig, spec: Arc<DomainSpec>) -> Result<ExperimentResult> {
    cfg.validate()?;
    cfg.solver.build(&spec)?;
    let mut population = UserPopulation::generate(&cfg.population, spec.dim())?;
    let lanes = if cfg.lanes == 0 { rayon::current_num_threads() } else { cfg.lanes };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(lanes)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let runs: Vec<UserRun> = pool.install(|| {
        population
            .users
            .par_iter_mut()
            .map(|user| run_user(cfg, &spec, user))
            .collect()
    });
    let traces: Vec<&[TraceRow]> = runs
        .iter()
        .filter_map(|r| r.trace.as_ref().map(|t| t.rows.as_slice()))
        .collect();
    let aggregate = aggregate(&traces);
    Ok(ExperimentResult {
        config: cfg.clone(),
        domain: spec.name().to_string(),
        dim: spec.dim(),
        runs,
        aggregate,
    })
}

/// Runs the same users and seeds under each strategy.
pub fn compare_strategies(
    cfg: &ExperimentConfig,
    base: &Path,
    strategies: &[QueryStrategy],
) -> Result<Vec<ExperimentResult>> {
    if strategies.len() < 2 {
        return Err(Error::Config("comparison needs at least two strategies".to_string()));
    }
    let spec = Arc::new(cfg.domain.build(base)?);
    strategies
        .iter()
        .map(|&s| {
            let mut c = cfg.clone();
            c.strategy = s;
            run_on_domain(&c, spec.clone())
        })
        .collect()
}

/// Files written by [`write_outputs`].
#[derive(Clone, Debug)]
pub struct OutputFiles {
    pub config: PathBuf,
    pub aggregate: PathBuf,
    pub rounds: PathBuf,
    pub traces: Vec<PathBuf>,
    pub regret_plot: PathBuf,
    pub runtime_plot: PathBuf,
}

pub fn write_outputs(result: &ExperimentResult, dir: &Path) -> Result<OutputFiles> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let config = dir.join("config.json");
    crate::io::write_json(&config, &result.config)?;
    let aggregate = dir.join("aggregate.csv");
    report::write_aggregate_csv(&aggregate, &result.aggregate)?;
    let rounds = dir.join("rounds.csv");
    report::write_rounds_csv(&rounds, result)?;
    let mut traces = Vec::new();
    for run in &result.runs {
        if let Some(t) = &run.trace {
            let path = dir.join("traces").join(format!("user-{:03}.jsonl", run.user_id));
            crate::trace::write_jsonl(&path, &t.rows)?;
            traces.push(path);
        }
    }
    let label = result.config.strategy.as_str();
    let regret_plot = dir.join("regret.svg");
    crate::plot::regret_plot(&regret_plot, &[(label, &result.aggregate)])?;
    let runtime_plot = dir.join("runtime.svg");
    crate::plot::runtime_plot(&runtime_plot, &[(label, &result.aggregate)])?;
    Ok(OutputFiles {
        config,
        aggregate,
        rounds,
        traces,
        regret_plot,
        runtime_plot,
    })
}

pub fn write_comparison(results: &[ExperimentResult], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for r in results {
        write_outputs(r, &dir.join(r.config.strategy.as_str()))?;
    }
    report::write_comparison_csv(&dir.join("comparison.csv"), results)?;
    let series: Vec<(&str, &[AggregateRow])> = results
        .iter()
        .map(|r| (r.config.strategy.as_str(), r.aggregate.as_slice()))
        .collect();
    crate::plot::regret_plot(&dir.join("regret.svg"), &series)?;
    crate::plot::runtime_plot(&dir.join("runtime.svg"), &series)
}
