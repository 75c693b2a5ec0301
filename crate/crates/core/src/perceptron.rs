//! The Choice Perceptron loop: query, observe a choice, update.

use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Configuration, Context, DomainSpec, WeightVector};
use crate::error::{ElicitError, QueryError};
use crate::math;
use crate::metrics::query_regret;
use crate::query::{gamma_schedule, QuerySet, QueryStrategy, Selection};
use crate::solver::{SolveStatus, Solver};
use crate::usersim::expected_gain;

/// Candidate step sizes for cross-validated adaptation.
pub const STEP_GRID: [f64; 7] = [0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0];

/// Step size before adaptation kicks in.
pub const DEFAULT_ETA: f64 = 1.0;

/// First iteration at which the step size is adapted.
pub const ADAPT_FROM: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpdateDelta {
    pub delta: Vec<f64>,
    pub chosen: Vec<f64>,
    pub others_mean: Vec<f64>,
}

/// `phi(chosen) - 1/(k-1) * sum of the other feature vectors`.
pub fn compute_delta(q: &QuerySet, chosen: usize) -> Result<UpdateDelta, ElicitError> {
    let k = q.k();
    if k < 2 {
        return Err(QueryError::InvalidSetSize(k).into());
    }
    if chosen >= k {
        return Err(ElicitError::InvalidChoice { index: chosen + 1, k });
    }
    let d = q.features[chosen].len();
    let mut sum = alloc::vec![0.0; d];
    for (i, phi) in q.features.iter().enumerate() {
        if i != chosen {
            for (s, v) in sum.iter_mut().zip(phi) {
                *s += v;
            }
        }
    }
    let others_mean: Vec<f64> = sum.iter().map(|s| s / (k - 1) as f64).collect();
    let chosen_phi = q.features[chosen].clone();
    let delta = chosen_phi.iter().zip(&others_mean).map(|(c, m)| c - m).collect();
    Ok(UpdateDelta {
        delta,
        chosen: chosen_phi,
        others_mean,
    })
}

/// One observed choice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub t: usize,
    pub query: QuerySet,
    /// Zero-based.
    pub chosen: usize,
    pub delta: Vec<f64>,
    pub eta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    /// Iteration about to run (1-based).
    pub t: usize,
    pub w: WeightVector,
    pub eta: f64,
    pub history: Vec<FeedbackRecord>,
    pub seed: u64,
}

impl SessionState {
    pub fn new(d: usize, seed: u64) -> Self {
        SessionState {
            t: 1,
            w: WeightVector::zeros(d),
            eta: DEFAULT_ETA,
            history: Vec::new(),
            seed,
        }
    }
}

/// `w <- w + eta * delta`, `t <- t + 1`, recording the feedback.
pub fn apply_update(state: &mut SessionState, query: QuerySet, chosen: usize, delta: &UpdateDelta) {
    add_scaled(&mut state.w.0, state.eta, &delta.delta);
    state.history.push(FeedbackRecord {
        t: state.t,
        query,
        chosen,
        delta: delta.delta.clone(),
        eta: state.eta,
    });
    state.t += 1;
}

fn add_scaled(w: &mut [f64], eta: f64, delta: &[f64]) {
    for (wj, dj) in w.iter_mut().zip(delta) {
        *wj += eta * dj;
    }
}

/// Rebuilds weights from `(eta, delta)` pairs with the same arithmetic as
/// [`apply_update`].
pub fn replay_weights<'a, I>(d: usize, steps: I) -> WeightVector
where
    I: IntoIterator<Item = (f64, &'a [f64])>,
{
    let mut w = alloc::vec![0.0; d];
    for (eta, delta) in steps {
        add_scaled(&mut w, eta, delta);
    }
    WeightVector(w)
}

/// Leave-one-out choice of the step size: each grid value is scored by how
/// many recorded choices the model replayed on the other records ranks
/// strictly first. Records from before adaptation replay with the default
/// step. Ties go to the smaller value; short histories get the default.
pub fn adapt_step_size(history: &[FeedbackRecord]) -> f64 {
    adapt_step_size_on(history, &STEP_GRID)
}

/// [`adapt_step_size`] over an arbitrary ascending grid.
pub fn adapt_step_size_on(history: &[FeedbackRecord], grid: &[f64]) -> f64 {
    if history.len() < ADAPT_FROM - 1 || grid.is_empty() {
        return DEFAULT_ETA;
    }
    let d = history[0].delta.len();
    let mut best = (grid[0], 0usize);
    for (gi, &eta) in grid.iter().enumerate() {
        let mut score = 0;
        for (i, held) in history.iter().enumerate() {
            let mut w = alloc::vec![0.0; d];
            for (j, r) in history.iter().enumerate() {
                if j != i {
                    let step = if r.t < ADAPT_FROM { DEFAULT_ETA } else { eta };
                    add_scaled(&mut w, step, &r.delta);
                }
            }
            let u: Vec<f64> = held.query.features.iter().map(|phi| math::dot(&w, phi)).collect();
            let c = u[held.chosen];
            if u.iter().enumerate().all(|(l, &v)| l == held.chosen || c > v) {
                score += 1;
            }
        }
        if gi == 0 || score > best.1 {
            best = (eta, score);
        }
    }
    best.0
}

fn default_eta() -> f64 {
    DEFAULT_ETA
}

fn default_grid() -> Vec<f64> {
    STEP_GRID.to_vec()
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub k: usize,
    /// Maximum number of iterations.
    pub horizon: usize,
    #[serde(default)]
    pub strategy: QueryStrategy,
    /// Cross-validate the step size from iteration 3 on.
    #[serde(default = "yes")]
    pub adapt_eta: bool,
    /// Step size used when not adapting.
    #[serde(default = "default_eta")]
    pub eta: f64,
    /// Candidate step sizes, ascending.
    #[serde(default = "default_grid")]
    pub eta_grid: Vec<f64>,
    /// Stop once the instantaneous regret is zero (simulation only).
    #[serde(default)]
    pub early_stop: bool,
    #[serde(default)]
    pub seed: u64,
}

impl SessionConfig {
    pub fn new(k: usize, horizon: usize) -> Self {
        SessionConfig {
            k,
            horizon,
            strategy: QueryStrategy::ChoicePerceptron,
            adapt_eta: true,
            eta: DEFAULT_ETA,
            eta_grid: default_grid(),
            early_stop: false,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), ElicitError> {
        if self.k < 2 {
            return Err(ElicitError::InvalidConfig("k must be at least 2".to_string()));
        }
        if self.horizon < 1 {
            return Err(ElicitError::InvalidConfig("horizon must be at least 1".to_string()));
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(ElicitError::InvalidConfig("eta must be positive".to_string()));
        }
        if self.adapt_eta {
            let positive = self.eta_grid.iter().all(|e| e.is_finite() && *e > 0.0);
            let ascending = self.eta_grid.windows(2).all(|p| p[0] < p[1]);
            if self.eta_grid.is_empty() || !positive || !ascending {
                return Err(ElicitError::InvalidConfig(
                    "eta grid must be a non-empty ascending list of positive values".to_string(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// L1 distance of the other items from the first.
    pub diversity: f64,
    /// Sum of estimated utilities of the other items.
    pub quality: f64,
    pub objective: f64,
    pub solver_status: SolveStatus,
    #[serde(default)]
    pub timed_out: bool,
    #[serde(default)]
    pub nodes: u64,
    /// `<w^t, Delta^t>`.
    pub gain_est: f64,
    /// Exact expected `<w*, Delta>` under the user's choice distribution.
    pub gain_true: Option<f64>,
    pub wc_regret: Option<f64>,
    /// True utility of the best configuration under the context.
    pub best_true: Option<f64>,
    pub wall_ms: f64,
}

/// One iteration of a session.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: usize,
    pub gamma: f64,
    pub eta: f64,
    /// The update direction applied after this round.
    pub delta: Vec<f64>,
    pub delta_norm: f64,
    /// One-based.
    pub chosen_index: usize,
    pub query_features: Vec<Vec<f64>>,
    pub query: Vec<Configuration>,
    #[serde(default)]
    pub context: Context,
    pub diagnostics: Diagnostics,
    pub regret: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionTrace {
    pub domain: String,
    pub strategy: QueryStrategy,
    pub k: usize,
    pub rows: Vec<TraceRow>,
    pub final_weights: WeightVector,
}

impl SessionTrace {
    /// Weights rebuilt from the recorded steps.
    pub fn replay(&self) -> WeightVector {
        replay_weights(
            self.final_weights.dim(),
            self.rows.iter().map(|r| (r.eta, r.delta.as_slice())),
        )
    }

    pub fn regrets(&self) -> Vec<Option<f64>> {
        self.rows.iter().map(|r| r.regret).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ChannelError {
    #[error("user did not answer in time")]
    Timeout,
    #[error("{0}")]
    Closed(String),
}

impl From<ChannelError> for ElicitError {
    fn from(e: ChannelError) -> Self {
        match e {
            ChannelError::Timeout => ElicitError::Suspended,
            ChannelError::Closed(m) => ElicitError::ChannelClosed(m),
        }
    }
}

/// Where contexts come from and choices go to.
pub trait UserChannel {
    fn context(&mut self, t: usize) -> Result<Context, ChannelError>;

    /// Zero-based index of the chosen item.
    fn choose(&mut self, q: &QuerySet) -> Result<usize, ChannelError>;

    /// Hidden weights, when the user is simulated.
    fn true_weights(&self) -> Option<&WeightVector> {
        None
    }

    fn choice_probabilities(&self, _q: &QuerySet) -> Option<Vec<f64>> {
        None
    }
}

/// Ground truth used for regret and gain diagnostics.
#[derive(Clone, Copy, Debug)]
pub struct Truth<'a> {
    pub w_star: &'a WeightVector,
    pub probabilities: &'a [f64],
}

/// A query waiting for its answer.
#[derive(Clone, Debug, PartialEq)]
pub struct PendingQuery {
    pub t: usize,
    pub gamma: f64,
    pub eta: f64,
    pub selection: Selection,
}

/// A resumable elicitation session.
#[derive(Clone, Debug)]
pub struct Session {
    spec: Arc<DomainSpec>,
    config: SessionConfig,
    solver: Solver,
    state: SessionState,
    rows: Vec<TraceRow>,
    pending: Option<PendingQuery>,
    rng: ChaCha8Rng,
    finished: bool,
}

impl Session {
    pub fn new(spec: Arc<DomainSpec>, config: SessionConfig, solver: Solver) -> Result<Self, ElicitError> {
        config.validate()?;
        let mut state = SessionState::new(spec.dim(), config.seed);
        state.eta = if config.adapt_eta { DEFAULT_ETA } else { config.eta };
        Ok(Session {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            spec,
            config,
            solver,
            state,
            rows: Vec::new(),
            pending: None,
            finished: false,
        })
    }

    /// Rebuilds a session from its recorded rows. Weights come from replaying
    /// the recorded updates; any outstanding query is dropped.
    pub fn restore(
        spec: Arc<DomainSpec>,
        config: SessionConfig,
        solver: Solver,
        rows: Vec<TraceRow>,
    ) -> Result<Self, ElicitError> {
        let mut s = Session::new(spec, config, solver)?;
        let d = s.spec.dim();
        for (i, row) in rows.iter().enumerate() {
            let k = row.query_features.len();
            if row.t != i + 1 || row.delta.len() != d || row.chosen_index == 0 || row.chosen_index > k {
                return Err(ElicitError::InvalidConfig(alloc::format!("trace row {} is inconsistent", i + 1)));
            }
            s.state.eta = row.eta;
            let query = QuerySet {
                context: row.context.clone(),
                items: row.query.clone(),
                features: row.query_features.clone(),
            };
            let delta = UpdateDelta {
                delta: row.delta.clone(),
                chosen: Vec::new(),
                others_mean: Vec::new(),
            };
            apply_update(&mut s.state, query, row.chosen_index - 1, &delta);
        }
        let early = s.config.early_stop && rows.last().is_some_and(|r| r.regret == Some(0.0));
        s.finished = s.state.t > s.config.horizon || early;
        s.rows = rows;
        Ok(s)
    }

    pub fn spec(&self) -> &Arc<DomainSpec> {
        &self.spec
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn weights(&self) -> &WeightVector {
        &self.state.w
    }

    pub fn rows(&self) -> &[TraceRow] {
        &self.rows
    }

    pub fn pending(&self) -> Option<&PendingQuery> {
        self.pending.as_ref()
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    /// Builds the query for the current iteration under context `x`, or
    /// returns the outstanding one.
    pub fn prepare(&mut self, x: Context) -> Result<&PendingQuery, ElicitError> {
        if self.finished {
            return Err(ElicitError::Finished);
        }
        if self.pending.is_none() {
            let t = self.state.t;
            let eta = if self.config.adapt_eta && t >= ADAPT_FROM {
                adapt_step_size_on(&self.state.history, &self.config.eta_grid)
            } else if self.config.adapt_eta {
                DEFAULT_ETA
            } else {
                self.config.eta
            };
            let gamma = match self.config.strategy {
                QueryStrategy::ChoicePerceptron => gamma_schedule(t)?,
                QueryStrategy::UniformRandom => 0.0,
            };
            let selection = self.config.strategy.select(
                &self.spec,
                &x,
                &self.state.w,
                self.config.k,
                gamma,
                &self.solver,
                &mut self.rng,
            )?;
            self.state.eta = eta;
            self.pending = Some(PendingQuery {
                t,
                gamma,
                eta,
                selection,
            });
        }
        Ok(self.pending.as_ref().expect("just set"))
    }

    /// Applies the answer to the outstanding query (zero-based index).
    pub fn answer(&mut self, chosen: usize, truth: Option<Truth<'_>>) -> Result<&TraceRow, ElicitError> {
        if self.finished {
            return Err(ElicitError::Finished);
        }
        let pending = self
            .pending
            .as_ref()
            .ok_or_else(|| ElicitError::InvalidConfig("no outstanding query".to_string()))?;
        let q = &pending.selection.query;
        let delta = compute_delta(q, chosen)?;
        let gain_est = math::dot(&self.state.w.0, &delta.delta);

        let (regret, wc, best, gain_true) = match truth {
            Some(tr) => {
                let qr = query_regret(tr.w_star, &self.spec, &q.context, q, &self.solver)?;
                let u = q.utilities(tr.w_star)?;
                let g = expected_gain(tr.probabilities, &u);
                (Some(qr.instantaneous), Some(qr.worst_case), Some(qr.best), Some(g))
            }
            None => (None, None, None, None),
        };

        let pending = self.pending.take().expect("checked above");
        let stats = &pending.selection.stats;
        let row = TraceRow {
            t: pending.t,
            gamma: pending.gamma,
            eta: pending.eta,
            delta_norm: math::l2_norm(&delta.delta),
            delta: delta.delta.clone(),
            chosen_index: chosen + 1,
            query_features: pending.selection.query.features.clone(),
            query: pending.selection.query.items.clone(),
            context: pending.selection.query.context.clone(),
            diagnostics: Diagnostics {
                diversity: stats.delta,
                quality: stats.mu,
                objective: stats.objective,
                solver_status: stats.status,
                timed_out: stats.timed_out,
                nodes: stats.nodes,
                gain_est,
                gain_true,
                wc_regret: wc,
                best_true: best,
                wall_ms: stats.wall_s * 1000.0,
            },
            regret,
        };
        self.state.eta = pending.eta;
        apply_update(&mut self.state, pending.selection.query, chosen, &delta);
        self.rows.push(row);
        if self.state.t > self.config.horizon || (self.config.early_stop && regret == Some(0.0)) {
            self.finished = true;
        }
        Ok(self.rows.last().expect("just pushed"))
    }

    /// One full round against a channel. A channel timeout suspends the
    /// session; calling `step` again resumes with the same query.
    pub fn step<C: UserChannel + ?Sized>(&mut self, channel: &mut C) -> Result<(), ElicitError> {
        if self.pending.is_none() {
            let x = channel.context(self.state.t)?;
            self.prepare(x)?;
        }
        let q = &self.pending.as_ref().expect("prepared").selection.query;
        let chosen = channel.choose(q)?;
        if chosen >= q.k() {
            return Err(ElicitError::InvalidChoice {
                index: chosen + 1,
                k: q.k(),
            });
        }
        let probs = channel.choice_probabilities(q);
        let truth = match (channel.true_weights(), probs.as_deref()) {
            (Some(w_star), Some(probabilities)) => Some(Truth { w_star, probabilities }),
            _ => None,
        };
        self.answer(chosen, truth)?;
        Ok(())
    }

    pub fn run<C: UserChannel + ?Sized>(&mut self, channel: &mut C) -> Result<(), ElicitError> {
        while !self.finished {
            self.step(channel)?;
        }
        Ok(())
    }

    pub fn trace(&self) -> SessionTrace {
        SessionTrace {
            domain: self.spec.name().to_string(),
            strategy: self.config.strategy,
            k: self.config.k,
            rows: self.rows.clone(),
            final_weights: self.state.w.clone(),
        }
    }
}

/// Runs a session to completion against `channel`.
pub fn run_elicitation<C: UserChannel + ?Sized>(
    spec: Arc<DomainSpec>,
    channel: &mut C,
    config: SessionConfig,
    solver: Solver,
) -> Result<SessionTrace, ElicitError> {
    let mut s = Session::new(spec, config, solver)?;
    s.run(channel)?;
    Ok(s.trace())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn q_from(features: Vec<Vec<f64>>) -> QuerySet {
        QuerySet {
            context: Context::empty(),
            items: features.iter().map(|_| Configuration(Vec::new())).collect(),
            features,
        }
    }

    #[test]
    fn delta_arithmetic() {
        let q = q_from(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 0.0]]);
        assert_eq!(compute_delta(&q, 0).unwrap().delta, vec![1.0, -0.5]);
        let same = q_from(vec![vec![2.0, 3.0], vec![2.0, 3.0]]);
        assert_eq!(compute_delta(&same, 1).unwrap().delta, vec![0.0, 0.0]);
        assert_eq!(
            compute_delta(&q, 3).unwrap_err(),
            ElicitError::InvalidChoice { index: 4, k: 3 }
        );
    }

    #[test]
    fn update_from_zero() {
        let mut s = SessionState::new(2, 0);
        let q = q_from(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 0.0]]);
        let d = compute_delta(&q, 0).unwrap();
        apply_update(&mut s, q, 0, &d);
        assert_eq!(s.w.0, vec![1.0, -0.5]);
        assert_eq!(s.t, 2);
    }

    #[test]
    fn short_history_uses_default() {
        assert_eq!(adapt_step_size(&[]), 1.0);
        let q = q_from(vec![vec![1.0], vec![0.0]]);
        let r = FeedbackRecord {
            t: 1,
            query: q,
            chosen: 0,
            delta: vec![1.0],
            eta: 1.0,
        };
        assert_eq!(adapt_step_size(core::slice::from_ref(&r)), 1.0);
    }

    #[test]
    fn tie_goes_to_smallest_step() {
        // Every record is predicted identically for every step size.
        let rec = |t| FeedbackRecord {
            t,
            query: q_from(vec![vec![1.0], vec![0.0]]),
            chosen: 0,
            delta: vec![1.0],
            eta: 1.0,
        };
        assert_eq!(adapt_step_size(&[rec(1), rec(2), rec(3)]), 0.1);
    }
}
