//! Dense bounded-variable primal simplex (two phases).
//!
//! Pricing uses Dantzig's rule. The first long run of degenerate pivots
//! shifts the basic values by small amounts; once the shifted problem is
//! optimal the shift is removed and a dual simplex pass restores primal
//! feasibility. Any later degenerate run switches to Bland's rule.

use alloc::vec;
use alloc::vec::Vec;

use crate::domain::{Cmp, LinearRow};
use crate::error::SolverError;
use crate::math;

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-9;
const PHASE1_TOL: f64 = 1e-7;
const DEGENERATE_RUN: usize = 50;
const SHIFT: f64 = 1e-7;
const FEAS_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug)]
pub(crate) struct LpResult {
    pub status: LpStatus,
    /// Values of the original variables (empty unless optimal).
    pub x: Vec<f64>,
    /// `c . x` (without any objective constant).
    pub objective: f64,
}

impl LpResult {
    fn status_only(status: LpStatus) -> Self {
        LpResult {
            status,
            x: Vec::new(),
            objective: 0.0,
        }
    }
}

/// `maximize c.x` s.t. `rows`, `lo <= x <= hi`.
pub(crate) fn solve_lp(c: &[f64], lo: &[f64], hi: &[f64], rows: &[LinearRow]) -> Result<LpResult, SolverError> {
    let n = c.len();
    // Column mapping: original variable -> (column, sign) list and offset.
    let mut var_cols: Vec<[(usize, f64); 2]> = Vec::with_capacity(n);
    let mut var_ncols: Vec<u8> = Vec::with_capacity(n);
    let mut offset = vec![0.0; n];
    let mut upper: Vec<f64> = Vec::new();
    let mut cost: Vec<f64> = Vec::new();
    for j in 0..n {
        let (l, h) = (lo[j], hi[j]);
        if l > h + 1e-12 {
            return Ok(LpResult::status_only(LpStatus::Infeasible));
        }
        if l.is_finite() && h.is_finite() && h - l <= 1e-12 {
            offset[j] = l;
            var_cols.push([(0, 0.0); 2]);
            var_ncols.push(0);
        } else if l.is_finite() {
            offset[j] = l;
            var_cols.push([(upper.len(), 1.0), (0, 0.0)]);
            var_ncols.push(1);
            upper.push(h - l);
            cost.push(c[j]);
        } else if h.is_finite() {
            offset[j] = h;
            var_cols.push([(upper.len(), -1.0), (0, 0.0)]);
            var_ncols.push(1);
            upper.push(f64::INFINITY);
            cost.push(-c[j]);
        } else {
            let k = upper.len();
            var_cols.push([(k, 1.0), (k + 1, -1.0)]);
            var_ncols.push(2);
            upper.push(f64::INFINITY);
            upper.push(f64::INFINITY);
            cost.push(c[j]);
            cost.push(-c[j]);
        }
    }
    let ns = upper.len();

    // Rows over structural columns.
    let mut dense_rows: Vec<(Vec<f64>, Cmp, f64)> = Vec::with_capacity(rows.len());
    for row in rows {
        let mut a = vec![0.0; ns];
        let mut rhs = row.rhs;
        let mut nonzero = false;
        for &(j, coef) in &row.terms {
            rhs -= coef * offset[j];
            for &(col, sign) in &var_cols[j][..var_ncols[j] as usize] {
                a[col] += coef * sign;
                nonzero = true;
            }
        }
        if !nonzero || a.iter().all(|v| *v == 0.0) {
            if !row.cmp.holds(0.0, rhs, 1e-9) {
                return Ok(LpResult::status_only(LpStatus::Infeasible));
            }
            continue;
        }
        dense_rows.push((a, row.cmp, rhs));
    }

    let m = dense_rows.len();
    let mut tab = Tableau::build(ns, &upper, &dense_rows);
    if tab.n_art > 0 {
        let mut c1 = vec![0.0; tab.ncols];
        for j in tab.art_start..tab.ncols {
            c1[j] = -1.0;
        }
        match tab.optimize(&c1)? {
            PhaseEnd::Optimal => {}
            PhaseEnd::Unbounded => unreachable!("phase one objective is bounded"),
        }
        let infeas: f64 = (0..m)
            .filter(|&i| tab.basis[i] >= tab.art_start)
            .map(|i| tab.beta[i])
            .sum();
        let scale = dense_rows
            .iter()
            .map(|(_, _, b)| math::abs(*b))
            .fold(1.0, f64::max);
        if infeas > PHASE1_TOL * scale {
            return Ok(LpResult::status_only(LpStatus::Infeasible));
        }
        tab.drive_out_artificials();
    }

    let mut c2 = vec![0.0; tab.ncols];
    c2[..ns].copy_from_slice(&cost);
    if tab.optimize(&c2)? == PhaseEnd::Unbounded {
        return Ok(LpResult::status_only(LpStatus::Unbounded));
    }

    let values = tab.column_values();
    let mut x = offset;
    for j in 0..n {
        for &(col, sign) in &var_cols[j][..var_ncols[j] as usize] {
            x[j] += sign * values[col];
        }
        // Snap into bounds against round-off.
        if x[j] < lo[j] {
            x[j] = lo[j];
        }
        if x[j] > hi[j] {
            x[j] = hi[j];
        }
    }
    let objective = c.iter().zip(&x).map(|(a, b)| a * b).sum();
    Ok(LpResult {
        status: LpStatus::Optimal,
        x,
        objective,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum PhaseEnd {
    Optimal,
    Unbounded,
}

const NONBASIC: usize = usize::MAX;

struct Tableau {
    m: usize,
    ncols: usize,
    art_start: usize,
    n_art: usize,
    /// Row-major `m x ncols`, always `B^-1 A`.
    t: Vec<f64>,
    beta: Vec<f64>,
    basis: Vec<usize>,
    /// Row index of a basic column, or `NONBASIC`.
    row_of: Vec<usize>,
    at_upper: Vec<bool>,
    upper: Vec<f64>,
    /// Initial basic values and columns; `t[.., basis0]` is `B^-1`.
    b0: Vec<f64>,
    basis0: Vec<usize>,
    shifted: bool,
    shift_used: bool,
}

impl Tableau {
    fn build(ns: usize, struct_upper: &[f64], rows: &[(Vec<f64>, Cmp, f64)]) -> Self {
        let m = rows.len();
        // Which rows need an artificial column.
        let needs_art: Vec<bool> = rows
            .iter()
            .map(|(_, cmp, b)| match cmp {
                Cmp::Le => *b < 0.0,
                Cmp::Ge => *b > 0.0,
                Cmp::Eq => *b != 0.0,
            })
            .collect();
        let n_art = needs_art.iter().filter(|&&x| x).count();
        let art_start = ns + m;
        let ncols = art_start + n_art;

        let mut upper = Vec::with_capacity(ncols);
        upper.extend_from_slice(struct_upper);
        for (_, cmp, _) in rows {
            upper.push(if *cmp == Cmp::Eq { 0.0 } else { f64::INFINITY });
        }
        upper.extend(core::iter::repeat_n(f64::INFINITY, n_art));

        let mut t = vec![0.0; m * ncols];
        let mut beta = vec![0.0; m];
        let mut basis = vec![0; m];
        let mut row_of = vec![NONBASIC; ncols];
        let mut art = art_start;
        for (i, (a, cmp, b)) in rows.iter().enumerate() {
            let row = &mut t[i * ncols..(i + 1) * ncols];
            row[..ns].copy_from_slice(a);
            let sigma = if *cmp == Cmp::Ge { -1.0 } else { 1.0 };
            row[ns + i] = sigma;
            let (basic, coef) = if needs_art[i] {
                let s = if *b >= 0.0 { 1.0 } else { -1.0 };
                row[art] = s;
                art += 1;
                (art - 1, s)
            } else {
                (ns + i, sigma)
            };
            if coef != 1.0 {
                for v in row.iter_mut() {
                    *v = -*v;
                }
            }
            beta[i] = b * coef;
            basis[i] = basic;
            row_of[basic] = i;
        }
        Tableau {
            m,
            ncols,
            art_start,
            n_art,
            t,
            b0: beta.clone(),
            basis0: basis.clone(),
            beta,
            basis,
            row_of,
            at_upper: vec![false; ncols],
            upper,
            shifted: false,
            shift_used: false,
        }
    }

    fn value_of(&self, j: usize) -> f64 {
        if self.row_of[j] != NONBASIC {
            self.beta[self.row_of[j]]
        } else if self.at_upper[j] {
            self.upper[j]
        } else {
            0.0
        }
    }

    fn column_values(&self) -> Vec<f64> {
        (0..self.ncols).map(|j| self.value_of(j)).collect()
    }

    fn reduced_costs(&self, c: &[f64]) -> Vec<f64> {
        let mut d = c.to_vec();
        for i in 0..self.m {
            let cb = c[self.basis[i]];
            if cb != 0.0 {
                let row = &self.t[i * self.ncols..(i + 1) * self.ncols];
                for (dj, tij) in d.iter_mut().zip(row) {
                    *dj -= cb * tij;
                }
            }
        }
        for &b in &self.basis {
            d[b] = 0.0;
        }
        d
    }

    fn pivot(&mut self, r: usize, q: usize, d: &mut [f64]) {
        let nc = self.ncols;
        let piv = self.t[r * nc + q];
        {
            let row = &mut self.t[r * nc..(r + 1) * nc];
            for v in row.iter_mut() {
                *v /= piv;
            }
            row[q] = 1.0;
        }
        let (before, rest) = self.t.split_at_mut(r * nc);
        let (prow, after) = rest.split_at_mut(nc);
        for other in before.chunks_exact_mut(nc).chain(after.chunks_exact_mut(nc)) {
            let f = other[q];
            if f != 0.0 {
                for (o, p) in other.iter_mut().zip(prow.iter()) {
                    *o -= f * p;
                }
                other[q] = 0.0;
            }
        }
        let f = d[q];
        if f != 0.0 {
            for (dj, p) in d.iter_mut().zip(prow.iter()) {
                *dj -= f * p;
            }
            d[q] = 0.0;
        }
        let leaving = self.basis[r];
        self.row_of[leaving] = NONBASIC;
        self.basis[r] = q;
        self.row_of[q] = r;
    }

    fn optimize(&mut self, c: &[f64]) -> Result<PhaseEnd, SolverError> {
        loop {
            if self.primal(c)? == PhaseEnd::Unbounded {
                return Ok(PhaseEnd::Unbounded);
            }
            if !self.shifted {
                return Ok(PhaseEnd::Optimal);
            }
            self.shifted = false;
            self.recompute_beta();
            if !self.dual(c)? {
                return Err(SolverError::Numerical);
            }
        }
    }

    fn shift(&mut self) {
        // Deterministic spread in [1, 2).
        let mut h: u64 = 0x9e37_79b9_7f4a_7c15;
        for i in 0..self.m {
            h ^= h >> 29;
            h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9).wrapping_add(i as u64);
            let r = 1.0 + (h >> 11) as f64 / (1u64 << 53) as f64;
            let eps = SHIFT * r * (1.0 + math::abs(self.beta[i]));
            let up = self.upper[self.basis[i]];
            if self.beta[i] + eps <= up {
                self.beta[i] += eps;
            } else if self.beta[i] - eps >= 0.0 {
                self.beta[i] -= eps;
            }
        }
        self.shifted = true;
        self.shift_used = true;
    }

    fn recompute_beta(&mut self) {
        let nc = self.ncols;
        for i in 0..self.m {
            let row = &self.t[i * nc..(i + 1) * nc];
            let mut v: f64 = self.basis0.iter().zip(&self.b0).map(|(&k, b)| row[k] * b).sum();
            for j in 0..nc {
                if self.row_of[j] == NONBASIC && self.at_upper[j] {
                    v -= row[j] * self.upper[j];
                }
            }
            self.beta[i] = v;
        }
    }

    /// Dual simplex from a dual feasible basis. Returns `false` when no
    /// entering column exists for an infeasible row.
    fn dual(&mut self, c: &[f64]) -> Result<bool, SolverError> {
        let mut d = self.reduced_costs(c);
        let nc = self.ncols;
        let max_iter = 50_000 + 50 * (self.m + nc);
        for _ in 0..max_iter {
            let mut leave = None;
            let mut worst = FEAS_TOL;
            for i in 0..self.m {
                let up = self.upper[self.basis[i]];
                let v = self.beta[i];
                let viol = if v < 0.0 { -v } else if v > up { v - up } else { 0.0 };
                if viol > worst {
                    worst = viol;
                    leave = Some(i);
                }
            }
            let Some(r) = leave else {
                for i in 0..self.m {
                    let up = self.upper[self.basis[i]];
                    self.beta[i] = self.beta[i].clamp(0.0, up);
                }
                return Ok(true);
            };
            let below = self.beta[r] < 0.0;
            let mut entering = None;
            let mut best = f64::INFINITY;
            let mut best_alpha = 0.0;
            for j in 0..nc {
                if self.row_of[j] != NONBASIC || self.upper[j] <= 0.0 {
                    continue;
                }
                let a = self.t[r * nc + j];
                let eligible = match (below, self.at_upper[j]) {
                    (true, false) | (false, true) => a < -PIVOT_TOL,
                    (true, true) | (false, false) => a > PIVOT_TOL,
                };
                if !eligible {
                    continue;
                }
                let ratio = math::abs(d[j]) / math::abs(a);
                if ratio < best - 1e-12 || (ratio <= best + 1e-12 && math::abs(a) > math::abs(best_alpha)) {
                    best = ratio;
                    best_alpha = a;
                    entering = Some(j);
                }
            }
            let Some(q) = entering else {
                return Ok(false);
            };
            let leaving = self.basis[r];
            let target = if below { 0.0 } else { self.upper[leaving] };
            let theta = (self.beta[r] - target) / self.t[r * nc + q];
            let entering_value = self.value_of(q) + theta;
            for i in 0..self.m {
                let tq = self.t[i * nc + q];
                if tq != 0.0 {
                    self.beta[i] -= theta * tq;
                }
            }
            self.at_upper[leaving] = !below;
            self.at_upper[q] = false;
            self.pivot(r, q, &mut d);
            self.beta[r] = entering_value;
        }
        Err(SolverError::IterationLimit)
    }

    fn primal(&mut self, c: &[f64]) -> Result<PhaseEnd, SolverError> {
        let mut d = self.reduced_costs(c);
        let nc = self.ncols;
        let mut bland = false;
        let mut degenerate = 0usize;
        let mut fresh = true;
        let max_iter = 50_000 + 50 * (self.m + nc);
        for _ in 0..max_iter {
            // Pricing.
            let mut entering = None;
            let mut best = 0.0;
            for j in 0..nc {
                if self.row_of[j] != NONBASIC || self.upper[j] <= 0.0 {
                    continue;
                }
                let dj = d[j];
                let eligible = if self.at_upper[j] { dj < -COST_TOL } else { dj > COST_TOL };
                if !eligible {
                    continue;
                }
                if bland {
                    entering = Some(j);
                    break;
                }
                if math::abs(dj) > best {
                    best = math::abs(dj);
                    entering = Some(j);
                }
            }
            let Some(q) = entering else {
                if fresh {
                    return Ok(PhaseEnd::Optimal);
                }
                // Confirm against freshly computed reduced costs.
                d = self.reduced_costs(c);
                fresh = true;
                continue;
            };
            fresh = false;
            let dir = if self.at_upper[q] { -1.0 } else { 1.0 };

            // Ratio test.
            let mut theta = self.upper[q];
            let mut leave: Option<(usize, bool)> = None;
            let mut leave_alpha = 0.0;
            for i in 0..self.m {
                let alpha = self.t[i * nc + q] * dir;
                let b = self.basis[i];
                let (limit, to_upper) = if alpha > PIVOT_TOL {
                    (self.beta[i] / alpha, false)
                } else if alpha < -PIVOT_TOL && self.upper[b].is_finite() {
                    ((self.upper[b] - self.beta[i]) / -alpha, true)
                } else {
                    continue;
                };
                let limit = limit.max(0.0);
                let better = match leave {
                    None => limit < theta || (theta.is_infinite() && limit.is_finite()),
                    Some((r, _)) => {
                        if limit < theta - 1e-12 {
                            true
                        } else if limit <= theta + 1e-12 {
                            if bland {
                                b < self.basis[r]
                            } else {
                                math::abs(alpha) > math::abs(leave_alpha)
                            }
                        } else {
                            false
                        }
                    }
                };
                if better {
                    theta = limit;
                    leave = Some((i, to_upper));
                    leave_alpha = alpha;
                }
            }
            if theta.is_infinite() {
                return Ok(PhaseEnd::Unbounded);
            }
            if leave.is_some() && self.upper[q] <= theta {
                // Bound flip is at least as short; prefer it.
                theta = self.upper[q];
                leave = None;
            }

            if theta <= 1e-12 {
                degenerate += 1;
                if degenerate > DEGENERATE_RUN {
                    if self.shift_used {
                        bland = true;
                    } else {
                        self.shift();
                        degenerate = 0;
                        continue;
                    }
                }
            } else {
                degenerate = 0;
            }

            for i in 0..self.m {
                let tq = self.t[i * nc + q];
                if tq != 0.0 {
                    self.beta[i] -= theta * tq * dir;
                }
            }
            match leave {
                None => {
                    self.at_upper[q] = !self.at_upper[q];
                }
                Some((r, to_upper)) => {
                    let entering_value = if self.at_upper[q] { self.upper[q] } else { 0.0 } + dir * theta;
                    let leaving = self.basis[r];
                    self.at_upper[leaving] = to_upper;
                    self.at_upper[q] = false;
                    self.pivot(r, q, &mut d);
                    self.beta[r] = entering_value;
                }
            }
        }
        Err(SolverError::IterationLimit)
    }

    /// After phase one, pivot zero-valued artificials out of the basis and
    /// fix every artificial column at zero.
    fn drive_out_artificials(&mut self) {
        let nc = self.ncols;
        let mut dummy = vec![0.0; nc];
        for r in 0..self.m {
            if self.basis[r] < self.art_start {
                continue;
            }
            let candidate = (0..self.art_start).find(|&j| {
                self.row_of[j] == NONBASIC && math::abs(self.t[r * nc + j]) > PIVOT_TOL
            });
            if let Some(j) = candidate {
                let v = self.value_of(j);
                let leaving = self.basis[r];
                self.at_upper[leaving] = false;
                self.pivot(r, j, &mut dummy);
                self.at_upper[j] = false;
                self.beta[r] = v;
            }
        }
        for j in self.art_start..nc {
            self.upper[j] = 0.0;
            if self.row_of[j] == NONBASIC {
                self.at_upper[j] = false;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(terms: &[(usize, f64)], cmp: Cmp, rhs: f64) -> LinearRow {
        LinearRow::new(terms.to_vec(), cmp, rhs)
    }

    #[test]
    fn textbook_lp() {
        // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), 36
        let r = solve_lp(
            &[3.0, 5.0],
            &[0.0, 0.0],
            &[f64::INFINITY, f64::INFINITY],
            &[
                row(&[(0, 1.0)], Cmp::Le, 4.0),
                row(&[(1, 2.0)], Cmp::Le, 12.0),
                row(&[(0, 3.0), (1, 2.0)], Cmp::Le, 18.0),
            ],
        )
        .unwrap();
        assert_eq!(r.status, LpStatus::Optimal);
        assert!((r.objective - 36.0).abs() < 1e-9);
        assert!((r.x[0] - 2.0).abs() < 1e-9 && (r.x[1] - 6.0).abs() < 1e-9);
    }

    #[test]
    fn equality_and_ge_rows_need_phase_one() {
        // max -x - y, x + y = 3, x - y >= 1, x,y in [0, 10] -> x=3,y=0? no: min x+y = 3
        let r = solve_lp(
            &[-1.0, -1.0],
            &[0.0, 0.0],
            &[10.0, 10.0],
            &[row(&[(0, 1.0), (1, 1.0)], Cmp::Eq, 3.0), row(&[(0, 1.0), (1, -1.0)], Cmp::Ge, 1.0)],
        )
        .unwrap();
        assert_eq!(r.status, LpStatus::Optimal);
        assert!((r.objective + 3.0).abs() < 1e-9);
        assert!(r.x[0] - r.x[1] >= 1.0 - 1e-9);
    }

    #[test]
    fn free_and_negative_bounds() {
        // max x, x free, x <= -2 -> -2 ; y in (-inf, 5], max -y? no: max y -> 5
        let r = solve_lp(
            &[1.0, 1.0],
            &[f64::NEG_INFINITY, f64::NEG_INFINITY],
            &[f64::INFINITY, 5.0],
            &[row(&[(0, 1.0)], Cmp::Le, -2.0)],
        )
        .unwrap();
        assert_eq!(r.status, LpStatus::Optimal);
        assert!((r.x[0] + 2.0).abs() < 1e-9);
        assert!((r.x[1] - 5.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let r = solve_lp(&[1.0], &[0.0], &[1.0], &[row(&[(0, 1.0)], Cmp::Ge, 2.0)]).unwrap();
        assert_eq!(r.status, LpStatus::Infeasible);
        let r = solve_lp(&[1.0, -1.0], &[0.0, 0.0], &[f64::INFINITY, 1.0], &[row(&[(0, 1.0), (1, -1.0)], Cmp::Ge, 0.0)]).unwrap();
        assert_eq!(r.status, LpStatus::Unbounded);
    }

    #[test]
    fn beale_cycling_example() {
        // Cycles under textbook Dantzig pricing; optimum 5/4 at x0 = x2 = 1.
        let r = solve_lp(
            &[0.75, -20.0, 0.5, -6.0],
            &[0.0; 4],
            &[f64::INFINITY; 4],
            &[
                row(&[(0, 0.25), (1, -8.0), (2, -1.0), (3, 9.0)], Cmp::Le, 0.0),
                row(&[(0, 0.5), (1, -12.0), (2, -0.5), (3, 3.0)], Cmp::Le, 0.0),
                row(&[(2, 1.0)], Cmp::Le, 1.0),
            ],
        )
        .unwrap();
        assert_eq!(r.status, LpStatus::Optimal);
        assert!((r.objective - 1.25).abs() < 1e-9, "{}", r.objective);
    }

    #[test]
    fn shifted_solve_restores_exact_feasibility() {
        // Many copies of one degenerate vertex.
        let n = 12;
        let mut rows = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    rows.push(row(&[(i, 1.0), (j, -1.0)], Cmp::Le, 0.0));
                }
            }
        }
        rows.push(row(&(0..n).map(|j| (j, 1.0)).collect::<Vec<_>>(), Cmp::Le, 3.0));
        let c: Vec<f64> = (0..n).map(|j| 1.0 + j as f64 * 0.1).collect();
        let r = solve_lp(&c, &vec![0.0; n], &vec![1.0; n], &rows).unwrap();
        assert_eq!(r.status, LpStatus::Optimal);
        let expected: f64 = c.iter().sum::<f64>() * 0.25;
        assert!((r.objective - expected).abs() < 1e-9, "{} vs {expected}", r.objective);
        for rw in &rows {
            assert!(rw.satisfied(&r.x, 1e-9));
        }
    }

    #[test]
    fn redundant_equalities() {
        let r = solve_lp(
            &[1.0, 2.0],
            &[0.0, 0.0],
            &[5.0, 5.0],
            &[
                row(&[(0, 1.0), (1, 1.0)], Cmp::Eq, 4.0),
                row(&[(0, 2.0), (1, 2.0)], Cmp::Eq, 8.0),
            ],
        )
        .unwrap();
        assert_eq!(r.status, LpStatus::Optimal);
        assert!((r.objective - 8.0).abs() < 1e-9);
    }
}
