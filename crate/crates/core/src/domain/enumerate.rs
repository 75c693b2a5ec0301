use alloc::vec;
use alloc::vec::Vec;

use super::{Configuration, Context, DomainSpec, LinearRow, Value, FEASIBILITY_TOL};
use crate::error::DomainError;

impl DomainSpec {
    /// Depth-first enumeration of feasible configurations in attribute
    /// order, pruning partial assignments by interval reasoning on every
    /// constraint. Calls `f` with the configuration and its encoding.
    /// Returns the number of feasible configurations.
    pub fn for_each_feasible<F>(&self, x: &Context, limit: u64, mut f: F) -> Result<u64, DomainError>
    where
        F: FnMut(&Configuration, &[f64]),
    {
        if let Some(a) = self.attributes().iter().find(|a| !a.kind.is_discrete()) {
            return Err(DomainError::NotEnumerable(a.name.clone()));
        }
        let ctx = self.resolve_context(x)?;
        let rows: Vec<&LinearRow> = self.rows.iter().chain(&ctx.rows).collect();

        let n_attr = self.attributes().len();
        let mut rows_by_attr: Vec<Vec<usize>> = vec![Vec::new(); n_attr];
        for (r, row) in rows.iter().enumerate() {
            for &(j, _) in &row.terms {
                let a = self.vars[j].attr;
                if !rows_by_attr[a].contains(&r) {
                    rows_by_attr[a].push(r);
                }
            }
        }

        // Candidate values per attribute, narrowed by fixed context values.
        let mut candidates: Vec<Vec<Value>> = Vec::with_capacity(n_attr);
        for (a, attr) in self.attributes().iter().enumerate() {
            let fixed: Vec<&Value> = ctx
                .fixed
                .iter()
                .filter(|(fa, _)| *fa == a)
                .map(|(_, v)| v)
                .collect();
            let n = attr.kind.cardinality().unwrap_or(0);
            let vals: Vec<Value> = (0..n)
                .filter_map(|i| attr.kind.nth_value(i))
                .filter(|v| fixed.iter().all(|fv| *fv == v))
                .collect();
            candidates.push(vals);
        }

        let mut lo: Vec<f64> = self.vars.iter().map(|v| v.lo).collect();
        let mut hi: Vec<f64> = self.vars.iter().map(|v| v.hi).collect();
        let base_lo = lo.clone();
        let base_hi = hi.clone();
        let mut current: Vec<Value> = Vec::with_capacity(n_attr);
        let mut count = 0u64;

        // Iterative DFS: `pos[a]` is the next candidate index for attribute a.
        let mut pos = vec![0usize; n_attr];
        let mut depth = 0usize;
        if n_attr == 0 {
            return Ok(0);
        }
        loop {
            if pos[depth] >= candidates[depth].len() {
                // Exhausted this level; restore bounds and backtrack.
                pos[depth] = 0;
                for j in self.attr_vars[depth].clone() {
                    lo[j] = base_lo[j];
                    hi[j] = base_hi[j];
                }
                if depth == 0 {
                    break;
                }
                depth -= 1;
                current.pop();
                continue;
            }
            let v = candidates[depth][pos[depth]].clone();
            pos[depth] += 1;
            self.write_value(depth, &v, &mut lo);
            self.write_value(depth, &v, &mut hi);
            let ok = rows_by_attr[depth]
                .iter()
                .all(|&r| rows[r].possible(&lo, &hi, FEASIBILITY_TOL));
            if !ok {
                continue;
            }
            current.push(v);
            if depth + 1 == n_attr {
                count += 1;
                if count > limit {
                    return Err(DomainError::EnumerationLimit(limit));
                }
                let y = Configuration(current.clone());
                f(&y, &lo);
                current.pop();
            } else {
                depth += 1;
            }
        }
        Ok(count)
    }
}
