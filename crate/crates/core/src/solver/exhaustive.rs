use alloc::vec;
use alloc::vec::Vec;

use super::simplex::{solve_lp, LpStatus};
use super::{
    BackendKind, Clock, MilpBackend, MilpProblem, SolveOutcome, SolveStatus, ASSIGNMENT_TOL,
    DEFAULT_ENUMERATION_LIMIT,
};
use crate::error::SolverError;

/// Enumerates every assignment of the integer variables (in index order,
/// values ascending) and optimizes continuous variables by LP at each leaf.
/// The first maximizer in enumeration order wins. Ignores time budgets.
#[derive(Clone, Copy, Debug)]
pub struct Exhaustive {
    /// Maximum number of complete integer assignments to visit.
    pub limit: u64,
}

impl Default for Exhaustive {
    fn default() -> Self {
        Exhaustive {
            limit: DEFAULT_ENUMERATION_LIMIT,
        }
    }
}

impl MilpBackend for Exhaustive {
    fn kind(&self) -> BackendKind {
        BackendKind::Exhaustive
    }

    fn solve(&self, p: &MilpProblem, clock: &dyn Clock) -> Result<SolveOutcome, SolverError> {
        p.validate()?;
        let start = clock.now();
        let c = p.dense_objective();
        let (mut lo, mut hi) = p.effective_bounds();
        let ints: Vec<usize> = (0..p.vars.len()).filter(|&j| p.vars[j].kind.is_integral()).collect();
        if ints.iter().any(|&j| lo[j] > hi[j]) {
            return Ok(SolveOutcome::without_assignment(SolveStatus::Infeasible, clock.now() - start, 0, false));
        }
        let base_lo = lo.clone();
        let base_hi = hi.clone();

        let mut rows_by_var: Vec<Vec<usize>> = vec![Vec::new(); p.vars.len()];
        for (r, row) in p.constraints.iter().enumerate() {
            for &(j, _) in &row.terms {
                if !rows_by_var[j].contains(&r) {
                    rows_by_var[j].push(r);
                }
            }
        }

        let mut best: Option<(Vec<f64>, f64)> = None;
        let mut leaves = 0u64;

        let depth_max = ints.len();
        if depth_max == 0 {
            let lp = solve_lp(&c, &lo, &hi, &p.constraints)?;
            let wall = clock.now() - start;
            return Ok(match lp.status {
                LpStatus::Optimal => SolveOutcome {
                    status: SolveStatus::Optimal,
                    objective: Some(p.objective_value(&lp.x)),
                    assignment: Some(lp.x),
                    wall_time_s: wall,
                    nodes: 1,
                    timed_out: false,
                },
                LpStatus::Infeasible => SolveOutcome::without_assignment(SolveStatus::Infeasible, wall, 1, false),
                LpStatus::Unbounded => SolveOutcome::without_assignment(SolveStatus::Unbounded, wall, 1, false),
            });
        }

        // next value to try at each depth (as an offset from the lower bound)
        let mut next = vec![0i64; depth_max];
        let mut depth = 0usize;
        loop {
            let j = ints[depth];
            let v = base_lo[j] + next[depth] as f64;
            if v > base_hi[j] {
                next[depth] = 0;
                lo[j] = base_lo[j];
                hi[j] = base_hi[j];
                if depth == 0 {
                    break;
                }
                depth -= 1;
                continue;
            }
            next[depth] += 1;
            lo[j] = v;
            hi[j] = v;
            if !rows_by_var[j]
                .iter()
                .all(|&r| p.constraints[r].possible(&lo, &hi, ASSIGNMENT_TOL))
            {
                continue;
            }
            if depth + 1 < depth_max {
                depth += 1;
                continue;
            }
            leaves += 1;
            if leaves > self.limit {
                return Err(SolverError::EnumerationLimit(self.limit));
            }
            let candidate = if p.has_continuous() {
                let lp = solve_lp(&c, &lo, &hi, &p.constraints)?;
                match lp.status {
                    LpStatus::Optimal => Some(lp.x),
                    LpStatus::Infeasible => None,
                    LpStatus::Unbounded => {
                        return Ok(SolveOutcome::without_assignment(
                            SolveStatus::Unbounded,
                            clock.now() - start,
                            leaves,
                            false,
                        ));
                    }
                }
            } else {
                let x = lo.clone();
                p.constraints
                    .iter()
                    .all(|r| r.satisfied(&x, ASSIGNMENT_TOL))
                    .then_some(x)
            };
            if let Some(x) = candidate {
                let obj = p.objective_value(&x);
                if best.as_ref().is_none_or(|(_, b)| obj > *b) {
                    best = Some((x, obj));
                }
            }
        }

        let wall = clock.now() - start;
        Ok(match best {
            Some((x, obj)) => SolveOutcome {
                status: SolveStatus::Optimal,
                assignment: Some(x),
                objective: Some(obj),
                wall_time_s: wall,
                nodes: leaves,
                timed_out: false,
            },
            None => SolveOutcome::without_assignment(SolveStatus::Infeasible, wall, leaves, false),
        })
    }
}
