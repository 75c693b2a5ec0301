//! Mixed-integer linear programs and the built-in exact backends.
//!
//! Problems are always maximizations. Two backends ship with the crate:
//! [`Exhaustive`] enumerates every integer assignment (continuous
//! variables are optimized by LP at each leaf) and [`BranchAndBound`]
//! runs depth-first branch and bound over dense-simplex LP relaxations.
//! Other backends plug in through [`MilpBackend`].

mod bnb;
mod exhaustive;
pub(crate) mod simplex;

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use bnb::BranchAndBound;
pub use exhaustive::Exhaustive;

use crate::domain::{Cmp, LinearRow};
use crate::error::SolverError;
use crate::math;

/// Constraint tolerance for returned assignments.
pub const ASSIGNMENT_TOL: f64 = 1e-6;

/// Default joint-tuple budget of the exhaustive backend.
pub const DEFAULT_ENUMERATION_LIMIT: u64 = 1_000_000;

/// Default solver cutoff in seconds.
pub const DEFAULT_TIMEOUT_S: f64 = 20.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarKind {
    Binary,
    Integer,
    Continuous,
}

impl VarKind {
    pub fn is_integral(self) -> bool {
        !matches!(self, VarKind::Continuous)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MilpVar {
    pub name: String,
    pub kind: VarKind,
    pub lo: f64,
    pub hi: f64,
}

/// `maximize objective + objective_constant` subject to linear rows,
/// variable bounds and integrality.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MilpProblem {
    pub vars: Vec<MilpVar>,
    pub objective: Vec<(usize, f64)>,
    pub objective_constant: f64,
    pub constraints: Vec<LinearRow>,
    /// Wall-clock budget in seconds; `None` means unlimited.
    pub time_budget: Option<f64>,
    /// Known feasible assignment. Branch and bound starts from it as its
    /// incumbent; other backends ignore it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<f64>>,
}

impl MilpProblem {
    pub fn new() -> Self {
        MilpProblem::default()
    }

    pub fn add_var(&mut self, name: impl Into<String>, kind: VarKind, lo: f64, hi: f64) -> usize {
        let (lo, hi) = match kind {
            VarKind::Binary => (lo.max(0.0), hi.min(1.0)),
            _ => (lo, hi),
        };
        self.vars.push(MilpVar {
            name: name.into(),
            kind,
            lo,
            hi,
        });
        self.vars.len() - 1
    }

    pub fn add_constraint(&mut self, terms: Vec<(usize, f64)>, cmp: Cmp, rhs: f64) {
        self.constraints.push(LinearRow::new(terms, cmp, rhs));
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective_constant + self.objective.iter().map(|&(j, c)| c * x[j]).sum::<f64>()
    }

    pub fn dense_objective(&self) -> Vec<f64> {
        let mut c = alloc::vec![0.0; self.vars.len()];
        for &(j, v) in &self.objective {
            c[j] += v;
        }
        c
    }

    pub fn has_continuous(&self) -> bool {
        self.vars.iter().any(|v| !v.kind.is_integral())
    }

    /// Bounds, integrality and every row hold within `tol`.
    pub fn is_feasible(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.vars.len()
            && self.vars.iter().zip(x).all(|(v, &xi)| {
                xi >= v.lo - tol
                    && xi <= v.hi + tol
                    && (!v.kind.is_integral() || math::abs(xi - math::round(xi)) <= tol)
            })
            && self.constraints.iter().all(|r| r.satisfied(x, tol))
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let n = self.vars.len();
        for &(j, _) in self
            .objective
            .iter()
            .chain(self.constraints.iter().flat_map(|r| r.terms.iter()))
        {
            if j >= n {
                return Err(SolverError::UnknownVariable(j));
            }
        }
        for v in &self.vars {
            if v.kind.is_integral() && !(v.lo.is_finite() && v.hi.is_finite()) {
                return Err(SolverError::UnboundedIntegerVariable(v.name.clone()));
            }
        }
        Ok(())
    }

    /// Bounds with integer variables rounded inward.
    pub(crate) fn effective_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        self.vars
            .iter()
            .map(|v| {
                if v.kind.is_integral() {
                    (math::ceil(v.lo - 1e-9), math::floor(v.hi + 1e-9))
                } else {
                    (v.lo, v.hi)
                }
            })
            .unzip()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    FeasibleCutoff,
    Infeasible,
    Unbounded,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::FeasibleCutoff => "feasible-cutoff",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
        }
    }

    pub fn has_assignment(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::FeasibleCutoff)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    pub assignment: Option<Vec<f64>>,
    pub objective: Option<f64>,
    pub wall_time_s: f64,
    /// Nodes (branch and bound) or leaves (exhaustive) visited.
    pub nodes: u64,
    /// The time budget expired. With status `infeasible` this means no
    /// incumbent was found in time, not that the problem is infeasible.
    pub timed_out: bool,
}

impl SolveOutcome {
    pub(crate) fn without_assignment(status: SolveStatus, wall_time_s: f64, nodes: u64, timed_out: bool) -> Self {
        SolveOutcome {
            status,
            assignment: None,
            objective: None,
            wall_time_s,
            nodes,
            timed_out,
        }
    }
}

/// Monotonic time source, in seconds from an arbitrary origin.
pub trait Clock: Send + Sync {
    fn now(&self) -> f64;
}

/// A clock that never advances; time budgets never expire under it.
#[derive(Clone, Copy, Debug, Default)]
pub struct NullClock;

impl Clock for NullClock {
    fn now(&self) -> f64 {
        0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Exhaustive,
    Bnb,
    External,
}

pub trait MilpBackend: Send + Sync {
    fn kind(&self) -> BackendKind;

    fn solve(&self, p: &MilpProblem, clock: &dyn Clock) -> Result<SolveOutcome, SolverError>;
}

/// A backend plus the clock and limits it runs under.
#[derive(Clone)]
pub struct Solver {
    backend: Arc<dyn MilpBackend>,
    clock: Arc<dyn Clock>,
    /// Budget applied to problems that carry none.
    pub time_budget: Option<f64>,
    /// Tuple budget for exhaustive, domain-level enumeration.
    pub enumeration_limit: u64,
}

impl core::fmt::Debug for Solver {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Solver")
            .field("backend", &self.backend.kind())
            .field("time_budget", &self.time_budget)
            .field("enumeration_limit", &self.enumeration_limit)
            .finish()
    }
}

impl Solver {
    pub fn new(backend: Arc<dyn MilpBackend>, clock: Arc<dyn Clock>) -> Self {
        Solver {
            backend,
            clock,
            time_budget: None,
            enumeration_limit: DEFAULT_ENUMERATION_LIMIT,
        }
    }

    pub fn exhaustive() -> Self {
        Solver::new(Arc::new(Exhaustive::default()), Arc::new(NullClock))
    }

    pub fn branch_and_bound() -> Self {
        Solver::new(Arc::new(BranchAndBound), Arc::new(NullClock))
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_time_budget(mut self, seconds: Option<f64>) -> Self {
        self.time_budget = seconds;
        self
    }

    pub fn with_enumeration_limit(mut self, limit: u64) -> Self {
        self.enumeration_limit = limit;
        self
    }

    pub fn kind(&self) -> BackendKind {
        self.backend.kind()
    }

    pub fn clock(&self) -> &dyn Clock {
        &*self.clock
    }

    pub fn solve(&self, p: &MilpProblem) -> Result<SolveOutcome, SolverError> {
        p.validate()?;
        if p.time_budget.is_none() && self.time_budget.is_some() {
            let mut q = p.clone();
            q.time_budget = self.time_budget;
            return self.backend.solve(&q, &*self.clock);
        }
        self.backend.solve(p, &*self.clock)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use alloc::vec;

    #[test]
    fn maximize_single_binary() {
        let mut p = MilpProblem::new();
        let x = p.add_var("x", VarKind::Binary, 0.0, 1.0);
        p.objective = vec![(x, 1.0)];
        for s in [Solver::exhaustive(), Solver::branch_and_bound()] {
            let out = s.solve(&p).unwrap();
            assert_eq!(out.status, SolveStatus::Optimal);
            assert_eq!(out.objective, Some(1.0));
            assert_eq!(out.assignment.as_deref(), Some(&[1.0][..]));
        }
    }

    #[test]
    fn warm_start_incumbent() {
        let mut p = MilpProblem::new();
        let vals = [6.0, 5.0, 3.0, 2.0];
        for (i, v) in vals.iter().enumerate() {
            let x = p.add_var(format!("x{i}"), VarKind::Binary, 0.0, 1.0);
            p.objective.push((x, *v));
        }
        p.add_constraint(vec![(0, 3.0), (1, 3.0), (2, 2.0), (3, 2.0)], Cmp::Le, 4.0);
        p.initial = Some(vec![0.0, 0.0, 1.0, 1.0]);
        let bnb = Solver::branch_and_bound();
        assert_eq!(bnb.solve(&p).unwrap().objective, Some(6.0));

        // The null clock makes any budget expire right after the root.
        p.time_budget = Some(0.0);
        let out = bnb.solve(&p).unwrap();
        assert_eq!(out.status, SolveStatus::FeasibleCutoff);
        assert_eq!(out.objective, Some(5.0));

        // An infeasible start is ignored.
        p.initial = Some(vec![1.0, 1.0, 0.0, 0.0]);
        let out = bnb.solve(&p).unwrap();
        assert_eq!(out.status, SolveStatus::Infeasible);
        assert!(out.timed_out);
    }

    #[test]
    fn contradictory_bounds_are_infeasible() {
        let mut p = MilpProblem::new();
        let x = p.add_var("x", VarKind::Integer, -5.0, 5.0);
        p.objective = vec![(x, 1.0)];
        p.add_constraint(vec![(x, 1.0)], Cmp::Ge, 1.0);
        p.add_constraint(vec![(x, 1.0)], Cmp::Le, 0.0);
        for s in [Solver::exhaustive(), Solver::branch_and_bound()] {
            let out = s.solve(&p).unwrap();
            assert_eq!(out.status, SolveStatus::Infeasible);
            assert!(out.assignment.is_none());
            assert!(!out.timed_out);
        }
    }

    #[test]
    fn unbounded_continuous() {
        let mut p = MilpProblem::new();
        let x = p.add_var("x", VarKind::Continuous, 0.0, f64::INFINITY);
        let b = p.add_var("b", VarKind::Binary, 0.0, 1.0);
        p.objective = vec![(x, 1.0), (b, 1.0)];
        for s in [Solver::exhaustive(), Solver::branch_and_bound()] {
            assert_eq!(s.solve(&p).unwrap().status, SolveStatus::Unbounded);
        }
    }

    #[test]
    fn rejects_unbounded_integer_and_dangling_index() {
        let mut p = MilpProblem::new();
        p.add_var("n", VarKind::Integer, 0.0, f64::INFINITY);
        assert!(matches!(
            Solver::branch_and_bound().solve(&p),
            Err(SolverError::UnboundedIntegerVariable(_))
        ));
        let mut p = MilpProblem::new();
        p.add_var("x", VarKind::Binary, 0.0, 1.0);
        p.objective = vec![(3, 1.0)];
        assert_eq!(
            Solver::exhaustive().solve(&p).unwrap_err(),
            SolverError::UnknownVariable(3)
        );
    }
}
