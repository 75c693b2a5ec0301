//! Regret and regret-bound diagnostics.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::domain::{Context, DomainSpec, WeightVector};
use crate::error::{MetricsError, QueryError};
use crate::math;
use crate::perceptron::SessionTrace;
use crate::query::{argmax_utility, QuerySet};
use crate::solver::Solver;

/// Expected gains at or below this magnitude count as uninformative.
pub const UNINFORMATIVE_TOL: f64 = 1e-9;

/// Regrets within `1e-9 * max(1, |U*|)` of zero (or negative) are zero.
pub fn snap_regret(regret: f64, best: f64) -> f64 {
    if regret <= 1e-9 * math::abs(best).max(1.0) {
        0.0
    } else {
        regret
    }
}

/// Best and worst true-utility gaps of a query set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryRegret {
    /// `U* - max_i u*(y_i)`.
    pub instantaneous: f64,
    /// `U* - min_i u*(y_i)`.
    pub worst_case: f64,
    /// True utility of the true optimum under the query's context.
    pub best: f64,
}

pub fn query_regret(
    w_star: &WeightVector,
    spec: &DomainSpec,
    x: &Context,
    q: &QuerySet,
    solver: &Solver,
) -> Result<QueryRegret, QueryError> {
    let best = argmax_utility(spec, x, w_star, solver)?.utility;
    let u = q.utilities(w_star)?;
    let hi = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = u.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(QueryRegret {
        instantaneous: snap_regret(best - hi, best),
        worst_case: snap_regret(best - lo, best),
        best,
    })
}

pub fn instantaneous_regret(
    w_star: &WeightVector,
    spec: &DomainSpec,
    x: &Context,
    q: &QuerySet,
    solver: &Solver,
) -> Result<f64, QueryError> {
    Ok(query_regret(w_star, spec, x, q, solver)?.instantaneous)
}

fn regrets(trace: &SessionTrace) -> Result<Vec<f64>, MetricsError> {
    if trace.rows.is_empty() {
        return Err(MetricsError::EmptyTrace);
    }
    trace
        .rows
        .iter()
        .map(|r| r.regret.ok_or(MetricsError::MissingRegret(r.t)))
        .collect()
}

/// Mean instantaneous regret over the trace.
pub fn average_regret(trace: &SessionTrace) -> Result<f64, MetricsError> {
    let r = regrets(trace)?;
    Ok(r.iter().sum::<f64>() / r.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegretRecord {
    pub t: usize,
    pub regret: f64,
    pub worst_case: f64,
    /// Exact expected `<w*, Delta>` given the query.
    pub gain_true: f64,
    /// `<w^t, Delta^t>` for the observed choice.
    pub gain_est: f64,
    pub average: f64,
}

pub fn regret_records(trace: &SessionTrace) -> Result<Vec<RegretRecord>, MetricsError> {
    let mut out = Vec::with_capacity(trace.rows.len());
    let mut sum = 0.0;
    for (i, row) in trace.rows.iter().enumerate() {
        let regret = row.regret.ok_or(MetricsError::MissingRegret(row.t))?;
        let d = &row.diagnostics;
        sum += regret;
        out.push(RegretRecord {
            t: row.t,
            regret,
            worst_case: d.wc_regret.ok_or(MetricsError::MissingRegret(row.t))?,
            gain_true: d.gain_true.ok_or(MetricsError::MissingRegret(row.t))?,
            gain_est: d.gain_est,
            average: sum / (i + 1) as f64,
        });
    }
    if out.is_empty() {
        return Err(MetricsError::EmptyTrace);
    }
    Ok(out)
}

/// `sqrt(2 beta / eta + 4 R^2) |w*| / (alpha sqrt(T)) + 2 R |w*| M / T`.
pub fn bound_value(
    radius: f64,
    w_norm: f64,
    alpha: f64,
    beta: f64,
    eta: f64,
    m: f64,
    t: usize,
) -> Result<f64, MetricsError> {
    if !(alpha > 0.0) {
        return Err(MetricsError::NonPositiveAlpha(alpha));
    }
    if !(eta > 0.0) {
        return Err(MetricsError::NonPositiveEta(eta));
    }
    if t == 0 {
        return Err(MetricsError::EmptyHorizon);
    }
    let radicand = 2.0 * beta / eta + 4.0 * radius * radius;
    if radicand < 0.0 {
        return Err(MetricsError::NegativeRadicand(radicand));
    }
    let t = t as f64;
    Ok(math::sqrt(radicand) * w_norm / (alpha * math::sqrt(t)) + 2.0 * radius * w_norm * m / t)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundDiagnostics {
    /// Smallest gain-to-worst-case-regret ratio over informative rounds;
    /// `None` when no round was informative.
    pub alpha: Option<f64>,
    /// Mean of `<w^t, Delta^t>`.
    pub beta: f64,
    /// Rounds with `|expected gain| <= 1e-9`.
    pub m: usize,
    pub radius: f64,
    pub w_norm: f64,
    /// Mean step size over the trace.
    pub eta: f64,
    pub t: usize,
    pub average_regret: f64,
    /// Bound evaluated with `alpha` (1 when undefined).
    pub bound: f64,
}

impl BoundDiagnostics {
    pub fn holds(&self, slack: f64) -> bool {
        self.average_regret <= self.bound + slack
    }
}

pub fn diagnostics(
    trace: &SessionTrace,
    w_star: &WeightVector,
    spec: &DomainSpec,
) -> Result<BoundDiagnostics, MetricsError> {
    let records = regret_records(trace)?;
    let t = records.len();
    let mut alpha: Option<f64> = None;
    let mut m = 0;
    for r in &records {
        if math::abs(r.gain_true) <= UNINFORMATIVE_TOL {
            m += 1;
        } else if r.gain_true > 0.0 && r.worst_case > 0.0 {
            let a = r.gain_true / r.worst_case;
            alpha = Some(alpha.map_or(a, |b: f64| b.min(a)));
        }
    }
    let beta = records.iter().map(|r| r.gain_est).sum::<f64>() / t as f64;
    let eta = trace.rows.iter().map(|r| r.eta).sum::<f64>() / t as f64;
    let radius = spec.radius();
    let w_norm = w_star.norm();
    let bound = bound_value(radius, w_norm, alpha.unwrap_or(1.0), beta, eta, m as f64, t)?;
    Ok(BoundDiagnostics {
        alpha,
        beta,
        m,
        radius,
        w_norm,
        eta,
        t,
        average_regret: records[t - 1].average,
        bound,
    })
}

/// Per-iteration summary across users.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationSummary {
    pub t: usize,
    pub median: f64,
    pub std: f64,
    pub users: usize,
}

/// Median and sample standard deviation of column `t` across curves; a
/// curve shorter than the longest one contributes its `pad` value.
pub fn summarize_curves(curves: &[Vec<f64>], pad: f64) -> Vec<IterationSummary> {
    let len = curves.iter().map(Vec::len).max().unwrap_or(0);
    (0..len)
        .map(|i| {
            let col: Vec<f64> = curves
                .iter()
                .map(|c| c.get(i).copied().unwrap_or(pad))
                .collect();
            IterationSummary {
                t: i + 1,
                median: math::median(&col).unwrap_or(0.0),
                std: math::std_dev(&col),
                users: col.len(),
            }
        })
        .collect()
}
