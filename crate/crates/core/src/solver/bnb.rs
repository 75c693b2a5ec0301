use alloc::vec::Vec;

use super::simplex::{solve_lp, LpStatus};
use super::{BackendKind, Clock, MilpBackend, MilpProblem, SolveOutcome, SolveStatus, ASSIGNMENT_TOL};
use crate::error::SolverError;
use crate::math;

const INTEGRALITY_TOL: f64 = 1e-6;

/// Depth-first branch and bound on LP relaxations.
///
/// The first incumbent found wins ties. The time budget is checked before
/// every node after the root; when it expires the incumbent (if any) is
/// returned with status `feasible-cutoff`. The same status is reported
/// when a node had to be dropped after a numerical failure.
#[derive(Clone, Copy, Debug, Default)]
pub struct BranchAndBound;

impl MilpBackend for BranchAndBound {
    fn kind(&self) -> BackendKind {
        BackendKind::Bnb
    }

    fn solve(&self, p: &MilpProblem, clock: &dyn Clock) -> Result<SolveOutcome, SolverError> {
        p.validate()?;
        branch_and_bound(p, clock)
    }
}

struct Node {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

fn prune_tol(incumbent: f64) -> f64 {
    1e-9 * math::abs(incumbent).max(1.0)
}

fn branch_and_bound(p: &MilpProblem, clock: &dyn Clock) -> Result<SolveOutcome, SolverError> {
    let start = clock.now();
    let c = p.dense_objective();
    let (lo, hi) = p.effective_bounds();
    let integral: Vec<bool> = p.vars.iter().map(|v| v.kind.is_integral()).collect();
    let has_continuous = p.has_continuous();

    let mut stack = alloc::vec![Node { lo, hi }];
    let mut incumbent: Option<(Vec<f64>, f64)> = p
        .initial
        .as_ref()
        .filter(|x| p.is_feasible(x, ASSIGNMENT_TOL))
        .map(|x| (x.clone(), p.objective_value(x)));
    let mut nodes = 0u64;
    let mut timed_out = false;
    let mut skipped = false;

    while let Some(node) = stack.pop() {
        if nodes > 0 {
            if let Some(budget) = p.time_budget {
                if clock.now() - start >= budget {
                    timed_out = true;
                    break;
                }
            }
        }
        nodes += 1;
        let lp = match solve_lp(&c, &node.lo, &node.hi, &p.constraints) {
            Ok(lp) => lp,
            Err(SolverError::IterationLimit | SolverError::Numerical) if nodes > 1 => {
                skipped = true;
                continue;
            }
            Err(e) => return Err(e),
        };
        match lp.status {
            LpStatus::Infeasible => continue,
            LpStatus::Unbounded => {
                return Ok(SolveOutcome::without_assignment(
                    SolveStatus::Unbounded,
                    clock.now() - start,
                    nodes,
                    false,
                ));
            }
            LpStatus::Optimal => {}
        }
        let bound = lp.objective + p.objective_constant;
        if let Some((_, inc)) = &incumbent {
            if bound <= inc + prune_tol(*inc) {
                continue;
            }
        }

        // Most fractional integer variable, lowest index on ties.
        let mut branch: Option<(usize, f64)> = None;
        let mut best_score = f64::INFINITY;
        for (j, &v) in lp.x.iter().enumerate() {
            if !integral[j] {
                continue;
            }
            let frac = v - math::floor(v);
            if frac > INTEGRALITY_TOL && frac < 1.0 - INTEGRALITY_TOL {
                let score = math::abs(frac - 0.5);
                if score < best_score {
                    best_score = score;
                    branch = Some((j, v));
                }
            }
        }

        match branch {
            None => {
                let mut x = lp.x;
                for (j, v) in x.iter_mut().enumerate() {
                    if integral[j] {
                        *v = math::round(*v);
                    }
                }
                if has_continuous {
                    // Re-optimize continuous variables against the rounded integers.
                    let fixed_lo: Vec<f64> = x
                        .iter()
                        .enumerate()
                        .map(|(j, &v)| if integral[j] { v } else { node.lo[j] })
                        .collect();
                    let fixed_hi: Vec<f64> = x
                        .iter()
                        .enumerate()
                        .map(|(j, &v)| if integral[j] { v } else { node.hi[j] })
                        .collect();
                    match solve_lp(&c, &fixed_lo, &fixed_hi, &p.constraints) {
                        Ok(re) if re.status == LpStatus::Optimal => x = re.x,
                        Ok(_) => continue,
                        Err(SolverError::IterationLimit | SolverError::Numerical) => {
                            skipped = true;
                            continue;
                        }
                        Err(e) => return Err(e),
                    }
                }
                if !p.is_feasible(&x, ASSIGNMENT_TOL) {
                    continue;
                }
                let obj = p.objective_value(&x);
                let improves = match &incumbent {
                    None => true,
                    Some((_, inc)) => obj > inc + prune_tol(*inc),
                };
                if improves {
                    incumbent = Some((x, obj));
                }
            }
            Some((j, v)) => {
                let down_hi = math::floor(v);
                let up_lo = math::ceil(v);
                let mut down = Node {
                    lo: node.lo.clone(),
                    hi: node.hi.clone(),
                };
                down.hi[j] = down_hi;
                let mut up = node;
                up.lo[j] = up_lo;
                // Explore the side nearer to the relaxation first.
                if v - down_hi >= 0.5 {
                    stack.push(down);
                    stack.push(up);
                } else {
                    stack.push(up);
                    stack.push(down);
                }
            }
        }
    }

    let wall = clock.now() - start;
    Ok(match incumbent {
        Some((x, obj)) => SolveOutcome {
            status: if timed_out || skipped {
                SolveStatus::FeasibleCutoff
            } else {
                SolveStatus::Optimal
            },
            assignment: Some(x),
            objective: Some(obj),
            wall_time_s: wall,
            nodes,
            timed_out,
        },
        None => SolveOutcome::without_assignment(SolveStatus::Infeasible, wall, nodes, timed_out),
    })
}
