//! Query selection: jointly choose `k` feature-distinct configurations
//! trading off diversity against estimated utility.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{
    utility, AttributeKind, Cmp, Configuration, Context, DomainSpec, ResolvedContext, WeightVector,
};
use crate::error::{DomainError, QueryError, SolverError};
use crate::math;
use crate::solver::{BackendKind, MilpProblem, SolveStatus, Solver, VarKind};

/// Relative tolerance on the optimality of the first query item.
pub const OPTIMALITY_TOL: f64 = 1e-6;

pub(crate) fn optimality_slack(best: f64) -> f64 {
    OPTIMALITY_TOL * math::abs(best).max(1.0)
}

/// Minimum L1 feature distance between any two query items.
pub fn distinctness_epsilon(spec: &DomainSpec) -> f64 {
    if spec.features_integral() {
        1.0
    } else {
        1e-4
    }
}

/// `gamma = 1/t`.
pub fn gamma_schedule(t: usize) -> Result<f64, QueryError> {
    if t < 1 {
        return Err(QueryError::InvalidIteration);
    }
    Ok(1.0 / t as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuerySet {
    pub context: Context,
    pub items: Vec<Configuration>,
    pub features: Vec<Vec<f64>>,
}

impl QuerySet {
    pub fn new(spec: &DomainSpec, context: Context, items: Vec<Configuration>) -> Result<Self, DomainError> {
        let features = items
            .iter()
            .map(|y| spec.featurize(&context, y))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(QuerySet {
            context,
            items,
            features,
        })
    }

    pub fn k(&self) -> usize {
        self.items.len()
    }

    pub fn utilities(&self, w: &WeightVector) -> Result<Vec<f64>, DomainError> {
        self.features.iter().map(|phi| utility(w, phi)).collect()
    }

    pub fn min_pairwise_l1(&self) -> f64 {
        let mut min = f64::INFINITY;
        for i in 0..self.features.len() {
            for l in i + 1..self.features.len() {
                min = min.min(math::l1_distance(&self.features[i], &self.features[l]));
            }
        }
        min
    }

    /// `sum_{i>=2} |phi(y1) - phi(yi)|_1`.
    pub fn delta(&self) -> f64 {
        self.features[1..]
            .iter()
            .map(|phi| math::l1_distance(&self.features[0], phi))
            .sum()
    }

    /// `sum_{i>=2} <w, phi(yi)>`.
    pub fn mu(&self, w: &WeightVector) -> Result<f64, DomainError> {
        let mut s = 0.0;
        for phi in &self.features[1..] {
            s += utility(w, phi)?;
        }
        Ok(s)
    }
}

/// Solver-side details of one query selection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryStats {
    pub gamma: f64,
    pub delta: f64,
    pub mu: f64,
    pub objective: f64,
    pub status: SolveStatus,
    pub timed_out: bool,
    pub nodes: u64,
    pub wall_s: f64,
    /// Utility of the best configuration found by the argmax solve.
    pub best_utility: f64,
    /// The first item was swapped for the argmax after a cutoff.
    #[serde(default, skip_serializing_if = "core::ops::Not::not")]
    pub y1_repaired: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    pub query: QuerySet,
    pub stats: QueryStats,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Argmax {
    pub config: Configuration,
    pub features: Vec<f64>,
    pub utility: f64,
    pub status: SolveStatus,
    pub timed_out: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QueryStrategy {
    /// Diversity/quality trade-off with the first item optimal under the
    /// current estimate.
    #[default]
    ChoicePerceptron,
    /// `k` feature-distinct feasible configurations drawn uniformly.
    UniformRandom,
}

impl QueryStrategy {
    pub fn as_str(self) -> &'static str {
        match self {
            QueryStrategy::ChoicePerceptron => "cp",
            QueryStrategy::UniformRandom => "random",
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn select<R: Rng + ?Sized>(
        self,
        spec: &DomainSpec,
        x: &Context,
        w: &WeightVector,
        k: usize,
        gamma: f64,
        solver: &Solver,
        rng: &mut R,
    ) -> Result<Selection, QueryError> {
        match self {
            QueryStrategy::ChoicePerceptron => select_query(spec, x, w, k, gamma, solver),
            QueryStrategy::UniformRandom => random_query(spec, x, w, k, solver, rng),
        }
    }
}

fn check_weights(spec: &DomainSpec, w: &WeightVector) -> Result<(), QueryError> {
    if w.dim() != spec.dim() {
        return Err(DomainError::DimensionMismatch {
            expected: spec.dim(),
            got: w.dim(),
        }
        .into());
    }
    if !w.is_finite() {
        return Err(DomainError::NonFinite("weight vector".into()).into());
    }
    Ok(())
}

fn enumerate_features(
    spec: &DomainSpec,
    x: &Context,
    limit: u64,
) -> Result<Vec<(Configuration, Vec<f64>)>, QueryError> {
    let mut items = Vec::new();
    spec.for_each_feasible(x, limit, |y, enc| items.push((y.clone(), spec.features_of_encoding(enc))))
        .map_err(|e| match e {
            DomainError::EnumerationLimit(l) => QueryError::Solver(SolverError::EnumerationLimit(l)),
            other => other.into(),
        })?;
    Ok(items)
}

/// Adds one copy of the domain encoding (variables, one-hot rows, domain
/// and context rows) and returns the offset of its first variable.
fn add_copy(p: &mut MilpProblem, spec: &DomainSpec, ctx: &ResolvedContext, copy: usize) -> usize {
    let offset = p.vars.len();
    for v in spec.vars() {
        p.add_var(format!("{}#{copy}", v.name), v.kind, v.lo, v.hi);
    }
    for (a, attr) in spec.attributes().iter().enumerate() {
        if let AttributeKind::Categorical { .. } = attr.kind {
            let terms = spec.attr_vars(a).map(|j| (offset + j, 1.0)).collect();
            p.add_constraint(terms, Cmp::Eq, 1.0);
        }
    }
    for row in spec.rows().iter().chain(&ctx.rows) {
        let terms = row.terms.iter().map(|&(j, c)| (offset + j, c)).collect();
        p.add_constraint(terms, row.cmp, row.rhs);
    }
    offset
}

/// `<w, phi(y)>` as linear terms over one copy plus a constant.
fn utility_terms(spec: &DomainSpec, w: &WeightVector, offset: usize) -> (Vec<(usize, f64)>, f64) {
    let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
    let mut constant = 0.0;
    for (f, &wj) in spec.features().iter().zip(w.as_slice()) {
        if wj == 0.0 {
            continue;
        }
        let (terms, c) = f.scaled();
        for (j, coef) in terms {
            *acc.entry(offset + j).or_insert(0.0) += wj * coef;
        }
        constant += wj * c;
    }
    (acc.into_iter().filter(|&(_, c)| c != 0.0).collect(), constant)
}

/// Feasible maximizer of `<w, phi(x, .)>`. The exhaustive backend
/// enumerates the domain (first maximizer wins); other backends solve the
/// MILP encoding.
pub fn argmax_utility(
    spec: &DomainSpec,
    x: &Context,
    w: &WeightVector,
    solver: &Solver,
) -> Result<Argmax, QueryError> {
    check_weights(spec, w)?;
    if solver.kind() == BackendKind::Exhaustive && spec.is_enumerable() {
        let mut best: Option<(Configuration, Vec<f64>, f64)> = None;
        let mut err = None;
        spec.for_each_feasible(x, solver.enumeration_limit, |y, enc| {
            let phi = spec.features_of_encoding(enc);
            match utility(w, &phi) {
                Ok(u) => {
                    if best.as_ref().is_none_or(|b| u > b.2) {
                        best = Some((y.clone(), phi, u));
                    }
                }
                Err(e) => err = Some(e),
            }
        })
        .map_err(|e| match e {
            DomainError::EnumerationLimit(l) => QueryError::Solver(SolverError::EnumerationLimit(l)),
            other => other.into(),
        })?;
        if let Some(e) = err {
            return Err(e.into());
        }
        let (config, features, u) = best.ok_or(QueryError::InfeasibleContext)?;
        return Ok(Argmax {
            config,
            features,
            utility: u,
            status: SolveStatus::Optimal,
            timed_out: false,
        });
    }

    let ctx = spec.resolve_context(x)?;
    let mut p = MilpProblem::new();
    let off = add_copy(&mut p, spec, &ctx, 1);
    let (terms, constant) = utility_terms(spec, w, off);
    p.objective = terms;
    p.objective_constant = constant;
    let out = solver.solve(&p)?;
    match out.status {
        SolveStatus::Unbounded => return Err(QueryError::Unbounded),
        SolveStatus::Infeasible if out.timed_out => return Err(QueryError::CutoffWithoutIncumbent),
        SolveStatus::Infeasible => return Err(QueryError::InfeasibleContext),
        _ => {}
    }
    let assignment = out.assignment.expect("status carries an assignment");
    let config = spec.decode(&assignment[off..off + spec.vars().len()]);
    let features = spec.featurize(x, &config)?;
    let u = utility(w, &features)?;
    Ok(Argmax {
        config,
        features,
        utility: u,
        status: out.status,
        timed_out: out.timed_out,
    })
}

fn validate_request(spec: &DomainSpec, w: &WeightVector, k: usize, gamma: f64) -> Result<(), QueryError> {
    if k < 2 {
        return Err(QueryError::InvalidSetSize(k));
    }
    if !(0.0..=1.0).contains(&gamma) {
        return Err(QueryError::InvalidGamma(gamma));
    }
    check_weights(spec, w)
}

/// Picks `k` feasible, pairwise feature-distinct configurations maximizing
/// `gamma * delta + (1 - gamma) * mu`, where the first item must be optimal
/// under `w`, `delta` sums the L1 feature distances of the other items from
/// the first and `mu` sums their estimated utilities.
pub fn select_query(
    spec: &DomainSpec,
    x: &Context,
    w: &WeightVector,
    k: usize,
    gamma: f64,
    solver: &Solver,
) -> Result<Selection, QueryError> {
    validate_request(spec, w, k, gamma)?;
    let start = solver.clock().now();
    let mut sel = if solver.kind() == BackendKind::Exhaustive && spec.is_enumerable() {
        select_enumerated(spec, x, w, k, gamma, solver.enumeration_limit)?
    } else {
        select_milp(spec, x, w, k, gamma, solver)?
    };
    sel.stats.wall_s = solver.clock().now() - start;
    Ok(sel)
}

fn select_enumerated(
    spec: &DomainSpec,
    x: &Context,
    w: &WeightVector,
    k: usize,
    gamma: f64,
    limit: u64,
) -> Result<Selection, QueryError> {
    let items = enumerate_features(spec, x, limit)?;
    if items.is_empty() {
        return Err(QueryError::InfeasibleContext);
    }
    let utils = items
        .iter()
        .map(|(_, phi)| utility(w, phi))
        .collect::<Result<Vec<_>, _>>()?;

    // Feature classes, represented by their first member.
    let mut reps: Vec<usize> = Vec::new();
    for i in 0..items.len() {
        if !reps.iter().any(|&r| items[r].1 == items[i].1) {
            reps.push(i);
        }
    }
    if reps.len() < k {
        return Err(QueryError::DomainTooSmall {
            k,
            available: Some(reps.len()),
        });
    }
    let best_u = utils.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let floor = best_u - optimality_slack(best_u);

    // The objective is separable in the non-first items, so for a fixed
    // first item the optimum takes the k-1 best-scoring other classes.
    let mut best: Option<(f64, usize, Vec<usize>)> = None;
    for &first in &reps {
        if utils[first] < floor {
            continue;
        }
        let mut scored: Vec<(f64, usize)> = reps
            .iter()
            .filter(|&&r| r != first)
            .map(|&r| {
                let d = math::l1_distance(&items[first].1, &items[r].1);
                (gamma * d + (1.0 - gamma) * utils[r], r)
            })
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let rest: Vec<usize> = scored[..k - 1].iter().map(|s| s.1).collect();
        let total: f64 = scored[..k - 1].iter().map(|s| s.0).sum();
        if best.as_ref().is_none_or(|b| total > b.0) {
            best = Some((total, first, rest));
        }
    }
    let (_, first, rest) = best.expect("an optimal class exists");
    let chosen: Vec<Configuration> = core::iter::once(first)
        .chain(rest)
        .map(|i| items[i].0.clone())
        .collect();
    let query = QuerySet::new(spec, x.clone(), chosen)?;
    let delta = query.delta();
    let mu = query.mu(w)?;
    Ok(Selection {
        stats: QueryStats {
            gamma,
            delta,
            mu,
            objective: gamma * delta + (1.0 - gamma) * mu,
            status: SolveStatus::Optimal,
            timed_out: false,
            nodes: items.len() as u64,
            wall_s: 0.0,
            best_utility: best_u,
            y1_repaired: false,
        },
        query,
    })
}

/// Linear upper bound on `|phi_f(y_a) - phi_f(y_b)|` for every feature,
/// tight at the optimum when maximized. Returns the per-feature term lists.
fn add_abs_terms(
    p: &mut MilpProblem,
    spec: &DomainSpec,
    widths: &[f64],
    a: usize,
    b: usize,
    tag: &str,
    aux: &mut Vec<Aux>,
) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    for (fi, f) in spec.features().iter().enumerate() {
        let (terms, _) = f.scaled();
        let width = widths[fi];
        if terms.is_empty() || width <= 0.0 {
            continue;
        }
        if terms.len() == 1 && spec.vars()[terms[0].0].kind == VarKind::Binary {
            // |c| (xa + xb - 2 p) with p >= xa + xb - 1 bounds |c| |xa - xb|.
            let (j, c) = terms[0];
            let c = math::abs(c);
            let pv = p.add_var(format!("and_{tag}_{fi}"), VarKind::Continuous, 0.0, 1.0);
            p.add_constraint(vec![(pv, 1.0), (a + j, -1.0), (b + j, -1.0)], Cmp::Ge, -1.0);
            aux.push(Aux::And { v: pv, a: a + j, b: b + j });
            out.push((a + j, c));
            out.push((b + j, c));
            out.push((pv, -2.0 * c));
        } else {
            // t <= d + M (1 - z), t <= -d + M z with d = phi(a) - phi(b), t in [-width, width].
            let m = 2.0 * width;
            let t = p.add_var(format!("abs_{tag}_{fi}"), VarKind::Continuous, -width, width);
            let z = p.add_var(format!("sign_{tag}_{fi}"), VarKind::Binary, 0.0, 1.0);
            let mut row1 = vec![(t, 1.0), (z, m)];
            let mut row2 = vec![(t, 1.0), (z, -m)];
            let mut d = Vec::with_capacity(2 * terms.len());
            for &(j, c) in &terms {
                row1.push((a + j, -c));
                row1.push((b + j, c));
                row2.push((a + j, c));
                row2.push((b + j, -c));
                d.push((a + j, c));
                d.push((b + j, -c));
            }
            p.add_constraint(row1, Cmp::Le, m);
            p.add_constraint(row2, Cmp::Le, 0.0);
            aux.push(Aux::Abs { t, z, d, width });
            out.push((t, 1.0));
        }
    }
    out
}

/// Auxiliary variables of the distance linearization, kept so a known
/// set of items can be completed into a full assignment.
enum Aux {
    And { v: usize, a: usize, b: usize },
    Abs { t: usize, z: usize, d: Vec<(usize, f64)>, width: f64 },
}

fn fill_aux(x: &mut [f64], aux: &[Aux]) {
    for a in aux {
        match a {
            Aux::And { v, a, b } => x[*v] = x[*a] * x[*b],
            Aux::Abs { t, z, d, width } => {
                let diff: f64 = d.iter().map(|&(j, c)| c * x[j]).sum();
                x[*z] = if diff >= 0.0 { 1.0 } else { 0.0 };
                x[*t] = math::abs(diff).min(*width);
            }
        }
    }
}

/// Signed distance `sum_f s_f (phi_f(y) - r_f)` over one copy, with each
/// direction `s_f` pointing to the wider side of the feature's range. It
/// never exceeds the L1 distance and equals it on binary features.
fn signed_distance_terms(
    spec: &DomainSpec,
    intervals: &[(f64, f64)],
    off: usize,
    reference: &[f64],
) -> (Vec<(usize, f64)>, f64) {
    let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
    let mut constant = 0.0;
    for ((f, &(lo, hi)), &r) in spec.features().iter().zip(intervals).zip(reference) {
        let s = if r - lo <= hi - r { 1.0 } else { -1.0 };
        let (terms, c0) = f.scaled();
        for (j, c) in terms {
            *acc.entry(off + j).or_insert(0.0) += s * c;
        }
        constant += s * (c0 - r);
    }
    (acc.into_iter().filter(|&(_, c)| c != 0.0).collect(), constant)
}

/// Greedy warm start for the joint problem: keep the argmax first and add
/// the remaining items one at a time, each maximizing a linear lower bound
/// on its share of the objective while staying distinct from the items
/// already chosen.
fn greedy_items(
    spec: &DomainSpec,
    ctx: &ResolvedContext,
    w: &WeightVector,
    k: usize,
    gamma: f64,
    best: &Argmax,
    solver: &Solver,
) -> Result<Option<Vec<Vec<f64>>>, QueryError> {
    let intervals = spec.feature_intervals();
    let eps = distinctness_epsilon(spec);
    let budget = solver.time_budget.map(|b| b / (2.0 * (k - 1) as f64));
    let n = spec.vars().len();
    let mut chosen = vec![(spec.encode(&best.config)?, best.features.clone())];
    for _ in 1..k {
        let mut p = MilpProblem::new();
        let off = add_copy(&mut p, spec, ctx, 1);
        p.time_budget = budget;
        let mut objective: BTreeMap<usize, f64> = BTreeMap::new();
        for (l, (_, phi)) in chosen.iter().enumerate() {
            let (terms, constant) = signed_distance_terms(spec, &intervals, off, phi);
            if l == 0 && gamma > 0.0 {
                for &(j, c) in &terms {
                    *objective.entry(j).or_insert(0.0) += gamma * c;
                }
                p.objective_constant += gamma * constant;
            }
            p.add_constraint(terms, Cmp::Ge, eps - constant);
        }
        if gamma < 1.0 {
            let (terms, c) = utility_terms(spec, w, off);
            for (j, v) in terms {
                *objective.entry(j).or_insert(0.0) += (1.0 - gamma) * v;
            }
            p.objective_constant += (1.0 - gamma) * c;
        }
        p.objective = objective.into_iter().filter(|&(_, c)| c != 0.0).collect();
        let Some(x) = solver.solve(&p)?.assignment else {
            return Ok(None);
        };
        let enc = x[off..off + n].to_vec();
        let phi = spec.features_of_encoding(&enc);
        chosen.push((enc, phi));
    }
    Ok(Some(chosen.into_iter().map(|(enc, _)| enc).collect()))
}

fn select_milp(
    spec: &DomainSpec,
    x: &Context,
    w: &WeightVector,
    k: usize,
    gamma: f64,
    solver: &Solver,
) -> Result<Selection, QueryError> {
    let best = argmax_utility(spec, x, w, solver)?;
    let ctx = spec.resolve_context(x)?;
    let n = spec.vars().len();
    let widths: Vec<f64> = spec.feature_intervals().iter().map(|(l, h)| h - l).collect();
    let eps = distinctness_epsilon(spec);

    let mut p = MilpProblem::new();
    let offsets: Vec<usize> = (0..k).map(|c| add_copy(&mut p, spec, &ctx, c + 1)).collect();

    let (u1, c1) = utility_terms(spec, w, offsets[0]);
    if !u1.is_empty() {
        let floor = best.utility - optimality_slack(best.utility) - c1;
        p.add_constraint(u1, Cmp::Ge, floor);
    }

    let mut objective: BTreeMap<usize, f64> = BTreeMap::new();
    let mut objective_constant = 0.0;
    let mut aux = Vec::new();
    for i in 0..k {
        for l in i + 1..k {
            let tag = format!("{}_{}", i + 1, l + 1);
            let abs = add_abs_terms(&mut p, spec, &widths, offsets[i], offsets[l], &tag, &mut aux);
            if i == 0 && gamma > 0.0 {
                for &(j, c) in &abs {
                    *objective.entry(j).or_insert(0.0) += gamma * c;
                }
            }
            p.add_constraint(abs, Cmp::Ge, eps);
        }
    }
    if gamma < 1.0 {
        for &off in &offsets[1..] {
            let (terms, c) = utility_terms(spec, w, off);
            for (j, v) in terms {
                *objective.entry(j).or_insert(0.0) += (1.0 - gamma) * v;
            }
            objective_constant += (1.0 - gamma) * c;
        }
    }
    p.objective = objective.into_iter().filter(|&(_, c)| c != 0.0).collect();
    p.objective_constant = objective_constant;

    if solver.kind() == BackendKind::Bnb {
        let start = solver.clock().now();
        if let Some(items) = greedy_items(spec, &ctx, w, k, gamma, &best, solver)? {
            let mut x = vec![0.0; p.vars.len()];
            for (enc, &off) in items.iter().zip(&offsets) {
                x[off..off + n].copy_from_slice(enc);
            }
            fill_aux(&mut x, &aux);
            p.initial = Some(x);
        }
        p.time_budget = solver.time_budget.map(|b| (b - (solver.clock().now() - start)).max(0.0));
    }

    let out = solver.solve(&p)?;
    match out.status {
        SolveStatus::Unbounded => return Err(QueryError::Unbounded),
        SolveStatus::Infeasible if out.timed_out => return Err(QueryError::CutoffWithoutIncumbent),
        SolveStatus::Infeasible => return Err(QueryError::DomainTooSmall { k, available: None }),
        _ => {}
    }
    let assignment = out.assignment.expect("status carries an assignment");
    let mut items: Vec<Configuration> = offsets.iter().map(|&o| spec.decode(&assignment[o..o + n])).collect();

    let mut repaired = false;
    let u_first = utility(w, &spec.featurize(x, &items[0])?)?;
    if best.utility > u_first + optimality_slack(best.utility) {
        // Cutoff incumbent with a sub-optimal first item: promote the
        // argmax, reusing a slot that already shares its features.
        let feats = items
            .iter()
            .map(|y| spec.featurize(x, y))
            .collect::<Result<Vec<_>, _>>()?;
        match feats.iter().position(|f| *f == best.features) {
            Some(i) => items.swap(0, i),
            None => items[0] = best.config.clone(),
        }
        repaired = true;
    }

    let query = QuerySet::new(spec, x.clone(), items)?;
    let delta = query.delta();
    let mu = query.mu(w)?;
    Ok(Selection {
        stats: QueryStats {
            gamma,
            delta,
            mu,
            objective: gamma * delta + (1.0 - gamma) * mu,
            status: out.status,
            timed_out: out.timed_out,
            nodes: out.nodes,
            wall_s: 0.0,
            best_utility: best.utility,
            y1_repaired: repaired,
        },
        query,
    })
}

/// Uniform baseline: `k` feasible configurations drawn uniformly among
/// those with pairwise distinct feature vectors. Needs an enumerable
/// domain.
pub fn random_query<R: Rng + ?Sized>(
    spec: &DomainSpec,
    x: &Context,
    w: &WeightVector,
    k: usize,
    solver: &Solver,
    rng: &mut R,
) -> Result<Selection, QueryError> {
    validate_request(spec, w, k, 0.0)?;
    if !spec.is_enumerable() {
        return Err(QueryError::RequiresEnumeration);
    }
    let start = solver.clock().now();
    let items = enumerate_features(spec, x, solver.enumeration_limit)?;
    if items.is_empty() {
        return Err(QueryError::InfeasibleContext);
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(rng);
    let mut picked: Vec<usize> = Vec::with_capacity(k);
    for i in order {
        if !picked.iter().any(|&p| items[p].1 == items[i].1) {
            picked.push(i);
            if picked.len() == k {
                break;
            }
        }
    }
    if picked.len() < k {
        let mut classes = 0;
        for i in 0..items.len() {
            if !items[..i].iter().any(|it| it.1 == items[i].1) {
                classes += 1;
            }
        }
        return Err(QueryError::DomainTooSmall {
            k,
            available: Some(classes),
        });
    }
    let best_u = items
        .iter()
        .map(|(_, phi)| utility(w, phi))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    let query = QuerySet::new(spec, x.clone(), picked.into_iter().map(|i| items[i].0.clone()).collect())?;
    let delta = query.delta();
    let mu = query.mu(w)?;
    Ok(Selection {
        stats: QueryStats {
            gamma: 0.0,
            delta,
            mu,
            objective: mu,
            status: SolveStatus::Optimal,
            timed_out: false,
            nodes: items.len() as u64,
            wall_s: solver.clock().now() - start,
            best_utility: best_u,
            y1_repaired: false,
        },
        query,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::build_synthetic;
    use crate::domain::Value;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_w(rng: &mut ChaCha8Rng, d: usize) -> WeightVector {
        WeightVector((0..d).map(|_| rng.random_range(-5.0..5.0)).collect())
    }

    #[test]
    fn gamma_is_reciprocal() {
        assert_eq!(gamma_schedule(1).unwrap(), 1.0);
        assert_eq!(gamma_schedule(2).unwrap(), 0.5);
        assert_eq!(gamma_schedule(10).unwrap(), 0.1);
        assert_eq!(gamma_schedule(0), Err(QueryError::InvalidIteration));
    }

    #[test]
    fn argmax_matches_enumeration() {
        let spec = build_synthetic(3).unwrap();
        let all = spec.enumerate(&Context::empty(), 100).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let w = random_w(&mut rng, 9);
            let oracle = all
                .iter()
                .map(|y| utility(&w, &spec.featurize(&Context::empty(), y).unwrap()).unwrap())
                .fold(f64::NEG_INFINITY, f64::max);
            for s in [Solver::exhaustive(), Solver::branch_and_bound()] {
                let a = argmax_utility(&spec, &Context::empty(), &w, &s).unwrap();
                assert!((a.utility - oracle).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn argmax_one_hot_reward() {
        let spec = build_synthetic(4).unwrap();
        let mut w = WeightVector::zeros(16);
        w.0[1] = 1.0;
        for s in [Solver::exhaustive(), Solver::branch_and_bound()] {
            let a = argmax_utility(&spec, &Context::empty(), &w, &s).unwrap();
            assert_eq!(a.config.0[0], Value::Cat(1));
        }
        let z = argmax_utility(&spec, &Context::empty(), &WeightVector::zeros(16), &Solver::branch_and_bound()).unwrap();
        assert_eq!(z.utility, 0.0);
    }

    #[test]
    fn rejects_bad_requests() {
        let spec = build_synthetic(2).unwrap();
        let w = WeightVector::zeros(4);
        let s = Solver::exhaustive();
        assert_eq!(select_query(&spec, &Context::empty(), &w, 1, 0.5, &s).unwrap_err(), QueryError::InvalidSetSize(1));
        assert_eq!(select_query(&spec, &Context::empty(), &w, 2, 1.5, &s).unwrap_err(), QueryError::InvalidGamma(1.5));
        assert_eq!(
            select_query(&spec, &Context::empty(), &w, 5, 0.5, &s).unwrap_err(),
            QueryError::DomainTooSmall { k: 5, available: Some(4) }
        );
        assert_eq!(
            select_query(&spec, &Context::empty(), &w, 5, 0.5, &Solver::branch_and_bound()).unwrap_err(),
            QueryError::DomainTooSmall { k: 5, available: None }
        );
    }

    #[test]
    fn backends_agree_on_small_queries() {
        let spec = build_synthetic(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for k in [2, 3] {
            for _ in 0..5 {
                let w = random_w(&mut rng, 9);
                let gamma = rng.random_range(0.0..=1.0);
                let a = select_query(&spec, &Context::empty(), &w, k, gamma, &Solver::exhaustive()).unwrap();
                let b = select_query(&spec, &Context::empty(), &w, k, gamma, &Solver::branch_and_bound()).unwrap();
                assert!((a.stats.objective - b.stats.objective).abs() < 1e-6, "{a:?} {b:?}");
                for sel in [&a, &b] {
                    assert_eq!(sel.query.k(), k);
                    assert!(sel.query.min_pairwise_l1() >= 1.0);
                    let u = sel.query.utilities(&w).unwrap();
                    assert!(u[0] >= sel.stats.best_utility - 1e-6);
                }
            }
        }
    }

    #[test]
    fn random_baseline_is_distinct_and_seeded() {
        let spec = build_synthetic(3).unwrap();
        let w = WeightVector::zeros(9);
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            random_query(&spec, &Context::empty(), &w, 3, &Solver::exhaustive(), &mut rng).unwrap()
        };
        let a = draw(5);
        assert_eq!(a, draw(5));
        assert!(a.query.min_pairwise_l1() >= 1.0);
    }
}
