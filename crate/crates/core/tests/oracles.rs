//! Brute-force oracles for query selection, regret, solvers, step-size
//! adaptation and the user model.

use cforge_core::benchmarks::{build_pc, build_synthetic, HornRule, Part, PartAttribute, PcInstance};
use cforge_core::domain::{utility, Cmp, LinearRow};
use cforge_core::metrics::{diagnostics, instantaneous_regret};
use cforge_core::perceptron::{adapt_step_size, FeedbackRecord, TraceRow, STEP_GRID};
use cforge_core::query::{argmax_utility, select_query};
use cforge_core::solver::VarKind;
use cforge_core::usersim::{choice_distribution, sample_users, SimulatedUser, WeightDistribution};
use cforge_core::{
    Configuration, Context, DomainSpec, MilpProblem, QuerySet, QueryStrategy, SessionTrace, SolveStatus,
    Solver, WeightVector,
};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use cforge_core::solver::Clock;
use cforge_core::QueryError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn all_with_features(spec: &DomainSpec) -> Vec<(Configuration, Vec<f64>)> {
    spec.enumerate(&Context::empty(), 1_000_000)
        .unwrap()
        .into_iter()
        .map(|y| {
            let phi = spec.featurize(&Context::empty(), &y).unwrap();
            (y, phi)
        })
        .collect()
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn random_w(rng: &mut ChaCha8Rng, d: usize) -> WeightVector {
    WeightVector((0..d).map(|_| rng.random_range(-3.0..3.0)).collect())
}

/// Best objective over ordered pairs (y1, y2) with y1 optimal and distinct
/// features.
fn brute_force_pair(items: &[(Configuration, Vec<f64>)], w: &WeightVector, gamma: f64) -> f64 {
    let u: Vec<f64> = items.iter().map(|(_, p)| dot(&w.0, p)).collect();
    let best = u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut obj = f64::NEG_INFINITY;
    for i in 0..items.len() {
        if u[i] < best - 1e-6 * best.abs().max(1.0) {
            continue;
        }
        for j in 0..items.len() {
            if l1(&items[i].1, &items[j].1) < 1.0 {
                continue;
            }
            obj = obj.max(gamma * l1(&items[i].1, &items[j].1) + (1.0 - gamma) * u[j]);
        }
    }
    obj
}

fn brute_force_triple(items: &[(Configuration, Vec<f64>)], w: &WeightVector, gamma: f64) -> f64 {
    let u: Vec<f64> = items.iter().map(|(_, p)| dot(&w.0, p)).collect();
    let best = u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut obj = f64::NEG_INFINITY;
    let n = items.len();
    for a in 0..n {
        if u[a] < best - 1e-6 * best.abs().max(1.0) {
            continue;
        }
        for b in 0..n {
            for c in 0..n {
                let (fa, fb, fc) = (&items[a].1, &items[b].1, &items[c].1);
                if l1(fa, fb) < 1.0 || l1(fa, fc) < 1.0 || l1(fb, fc) < 1.0 {
                    continue;
                }
                let v = gamma * (l1(fa, fb) + l1(fa, fc)) + (1.0 - gamma) * (u[b] + u[c]);
                obj = obj.max(v);
            }
        }
    }
    obj
}

#[test]
fn pair_queries_match_brute_force() {
    let spec = build_synthetic(3).unwrap();
    let items = all_with_features(&spec);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for round in 0..30 {
        let w = random_w(&mut rng, 9);
        let gamma = match round % 3 {
            0 => 0.0,
            1 => 1.0,
            _ => rng.random_range(0.0..1.0),
        };
        let oracle = brute_force_pair(&items, &w, gamma);
        for solver in [Solver::exhaustive(), Solver::branch_and_bound()] {
            let sel = select_query(&spec, &Context::empty(), &w, 2, gamma, &solver).unwrap();
            assert!(
                (sel.stats.objective - oracle).abs() < 1e-6,
                "gamma {gamma}: {} vs {oracle}",
                sel.stats.objective
            );
        }
    }
}

#[test]
fn zero_weights_and_full_diversity() {
    let spec = build_synthetic(3).unwrap();
    let items = all_with_features(&spec);
    let mut max_l1: f64 = 0.0;
    for a in &items {
        for b in &items {
            max_l1 = max_l1.max(l1(&a.1, &b.1));
        }
    }
    let w = WeightVector::zeros(9);
    for solver in [Solver::exhaustive(), Solver::branch_and_bound()] {
        let sel = select_query(&spec, &Context::empty(), &w, 2, 1.0, &solver).unwrap();
        assert_eq!(sel.stats.objective, max_l1);
    }
}

#[test]
fn triple_queries_match_brute_force() {
    let spec = build_synthetic(3).unwrap();
    let items = all_with_features(&spec);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..4 {
        let w = random_w(&mut rng, 9);
        let gamma = rng.random_range(0.0..1.0);
        let oracle = brute_force_triple(&items, &w, gamma);
        for solver in [Solver::exhaustive(), Solver::branch_and_bound()] {
            let sel = select_query(&spec, &Context::empty(), &w, 3, gamma, &solver).unwrap();
            assert!((sel.stats.objective - oracle).abs() < 1e-6);
        }
    }
}

#[test]
fn unique_optimum_is_first_item() {
    let spec = build_synthetic(4).unwrap();
    let items = all_with_features(&spec);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..5 {
        let w = random_w(&mut rng, 16);
        let best = items
            .iter()
            .max_by(|a, b| dot(&w.0, &a.1).total_cmp(&dot(&w.0, &b.1)))
            .unwrap();
        for solver in [Solver::exhaustive(), Solver::branch_and_bound()] {
            let sel = select_query(&spec, &Context::empty(), &w, 2, 0.5, &solver).unwrap();
            assert_eq!(sel.query.items[0], best.0);
            let a = argmax_utility(&spec, &Context::empty(), &w, &solver).unwrap();
            assert_eq!(a.config, best.0);
        }
    }
}

#[test]
fn regret_matches_enumeration() {
    let spec = build_synthetic(3).unwrap();
    let items = all_with_features(&spec);
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..20 {
        let w = random_w(&mut rng, 9);
        let best = items.iter().map(|(_, p)| dot(&w.0, p)).fold(f64::NEG_INFINITY, f64::max);
        let picks: Vec<usize> = (0..3).map(|_| rng.random_range(0..items.len())).collect();
        let q = QuerySet::new(
            &spec,
            Context::empty(),
            picks.iter().map(|&i| items[i].0.clone()).collect(),
        )
        .unwrap();
        let top = picks.iter().map(|&i| dot(&w.0, &items[i].1)).fold(f64::NEG_INFINITY, f64::max);
        let oracle = best - top;
        let r = instantaneous_regret(&w, &spec, &Context::empty(), &q, &Solver::exhaustive()).unwrap();
        assert!((r - oracle).abs() < 1e-9 || (r == 0.0 && oracle.abs() < 1e-8));

        // With the true weights the query holds a true optimum.
        let sel = select_query(&spec, &Context::empty(), &w, 2, 0.3, &Solver::branch_and_bound()).unwrap();
        let r = instantaneous_regret(&w, &spec, &Context::empty(), &sel.query, &Solver::exhaustive()).unwrap();
        assert_eq!(r, 0.0);
    }
}

/// Dense LP oracle: best feasible vertex over all choices of active
/// constraints (bounds or rows) for tiny problems.
fn vertex_lp(c: &[f64], lo: &[f64], hi: &[f64], rows: &[LinearRow]) -> Option<f64> {
    let n = c.len();
    let mut planes: Vec<(Vec<f64>, f64)> = Vec::new();
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        planes.push((e.clone(), lo[j]));
        planes.push((e, hi[j]));
    }
    for r in rows {
        let mut a = vec![0.0; n];
        for &(j, v) in &r.terms {
            a[j] += v;
        }
        planes.push((a, r.rhs));
    }
    let m = planes.len();
    let mut best: Option<f64> = None;
    let mut idx: Vec<usize> = (0..n).collect();
    loop {
        // Solve the n x n system of the chosen planes.
        let mut a: Vec<Vec<f64>> = idx.iter().map(|&i| {
            let mut row = planes[i].0.clone();
            row.push(planes[i].1);
            row
        }).collect();
        let mut ok = true;
        for col in 0..n {
            let piv = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs())).unwrap();
            if a[piv][col].abs() < 1e-12 {
                ok = false;
                break;
            }
            a.swap(col, piv);
            for r in 0..n {
                if r != col {
                    let f = a[r][col] / a[col][col];
                    for k in col..=n {
                        a[r][k] -= f * a[col][k];
                    }
                }
            }
        }
        if ok {
            let x: Vec<f64> = (0..n).map(|i| a[i][n] / a[i][i]).collect();
            let feasible = (0..n).all(|j| x[j] >= lo[j] - 1e-7 && x[j] <= hi[j] + 1e-7)
                && rows.iter().all(|r| r.satisfied(&x, 1e-7));
            if feasible {
                let v = dot(c, &x);
                best = Some(best.map_or(v, |b: f64| b.max(v)));
            }
        }
        // Next combination.
        let mut i = n;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if idx[i] != i + m - n {
                break;
            }
            if i == 0 && idx[0] == m - n {
                return best;
            }
        }
        idx[i] += 1;
        for j in i + 1..n {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn random_rows(rng: &mut ChaCha8Rng, n: usize, count: usize) -> Vec<LinearRow> {
    (0..count)
        .map(|_| {
            let mut terms: Vec<(usize, f64)> = Vec::new();
            for j in 0..n {
                if rng.random_bool(0.7) {
                    terms.push((j, rng.random_range(-3i32..=3) as f64));
                }
            }
            let cmp = match rng.random_range(0..3) {
                0 => Cmp::Le,
                1 => Cmp::Ge,
                _ => Cmp::Le,
            };
            LinearRow::new(terms, cmp, rng.random_range(-2i32..=6) as f64)
        })
        .collect()
}

#[test]
fn pure_lp_matches_vertex_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut checked = 0;
    for _ in 0..60 {
        let n = rng.random_range(2..=4);
        let mut p = MilpProblem::new();
        for j in 0..n {
            p.add_var(format!("x{j}"), VarKind::Continuous, -2.0, rng.random_range(1.0..4.0));
        }
        p.objective = (0..n).map(|j| (j, rng.random_range(-2.0..2.0))).collect();
        let count = rng.random_range(1..=3);
        p.constraints = random_rows(&mut rng, n, count);
        let lo: Vec<f64> = p.vars.iter().map(|v| v.lo).collect();
        let hi: Vec<f64> = p.vars.iter().map(|v| v.hi).collect();
        let c = p.dense_objective();
        let oracle = vertex_lp(&c, &lo, &hi, &p.constraints);
        let out = Solver::branch_and_bound().solve(&p).unwrap();
        match oracle {
            Some(v) => {
                assert_eq!(out.status, SolveStatus::Optimal);
                assert!((out.objective.unwrap() - v).abs() < 1e-6, "{:?} vs {v}", out.objective);
                checked += 1;
            }
            None => assert_eq!(out.status, SolveStatus::Infeasible),
        }
    }
    assert!(checked > 20);
}

#[test]
fn random_small_milps_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..100 {
        let n = rng.random_range(3..=12);
        let mut p = MilpProblem::new();
        for j in 0..n {
            p.add_var(format!("b{j}"), VarKind::Binary, 0.0, 1.0);
        }
        if rng.random_bool(0.3) {
            p.add_var("c", VarKind::Continuous, 0.0, 2.5);
        }
        let m = p.vars.len();
        p.objective = (0..m).map(|j| (j, rng.random_range(-5.0..5.0))).collect();
        let count = rng.random_range(1..=4);
        p.constraints = random_rows(&mut rng, m, count);
        let a = Solver::exhaustive().solve(&p).unwrap();
        let b = Solver::branch_and_bound().solve(&p).unwrap();
        assert_eq!(a.status, b.status);
        if a.status == SolveStatus::Optimal {
            assert!((a.objective.unwrap() - b.objective.unwrap()).abs() < 1e-6);
            assert!(p.is_feasible(b.assignment.as_ref().unwrap(), 1e-6));
            assert!(p.is_feasible(a.assignment.as_ref().unwrap(), 1e-6));
        }
    }
}

struct Ticker(AtomicU64);

impl Clock for Ticker {
    fn now(&self) -> f64 {
        self.0.fetch_add(1, Ordering::SeqCst) as f64
    }
}

#[test]
fn expired_budget_keeps_incumbent_or_reports_cutoff() {
    let spec = build_synthetic(4).unwrap();
    let w = WeightVector((0..16).map(|i| (i % 5) as f64).collect());
    let full = select_query(&spec, &Context::empty(), &w, 3, 0.5, &Solver::branch_and_bound()).unwrap();
    assert_eq!(full.stats.status, SolveStatus::Optimal);
    for budget in [0.5, 3.0, 20.0, 200.0] {
        let solver = Solver::branch_and_bound()
            .with_clock(Arc::new(Ticker(AtomicU64::new(0))))
            .with_time_budget(Some(budget));
        match select_query(&spec, &Context::empty(), &w, 3, 0.5, &solver) {
            Ok(sel) => {
                assert!(sel.stats.objective <= full.stats.objective + 1e-6);
                if sel.stats.timed_out {
                    assert_eq!(sel.stats.status, SolveStatus::FeasibleCutoff);
                }
                let u = sel.query.utilities(&w).unwrap();
                assert!(u[0] >= full.stats.best_utility - 1e-6);
            }
            Err(e) => assert_eq!(e, QueryError::CutoffWithoutIncumbent),
        }
    }
}

fn score_oracle(history: &[FeedbackRecord], eta: f64) -> usize {
    (0..history.len())
        .filter(|&i| {
            let d = history[i].delta.len();
            let mut w = vec![0.0; d];
            for (j, r) in history.iter().enumerate() {
                if j != i {
                    let s = if r.t < 3 { 1.0 } else { eta };
                    for k in 0..d {
                        w[k] += s * r.delta[k];
                    }
                }
            }
            let h = &history[i];
            let u: Vec<f64> = h.query.features.iter().map(|p| dot(&w, p)).collect();
            (0..u.len()).all(|l| l == h.chosen || u[h.chosen] > u[l])
        })
        .count()
}

#[test]
fn step_size_fixture_selects_two() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut found = None;
    'search: for _ in 0..200_000 {
        let n = rng.random_range(3..=5);
        let history: Vec<FeedbackRecord> = (0..n)
            .map(|i| {
                let a: Vec<f64> = (0..2).map(|_| rng.random_range(-2i32..=2) as f64).collect();
                let b: Vec<f64> = (0..2).map(|_| rng.random_range(-2i32..=2) as f64).collect();
                let delta = a.iter().zip(&b).map(|(x, y)| x - y).collect();
                FeedbackRecord {
                    t: i + 1,
                    query: QuerySet {
                        context: Context::empty(),
                        items: vec![Configuration(vec![]), Configuration(vec![])],
                        features: vec![a, b],
                    },
                    chosen: 0,
                    delta,
                    eta: 1.0,
                }
            })
            .collect();
        let scores: Vec<usize> = STEP_GRID.iter().map(|&e| score_oracle(&history, e)).collect();
        if scores[4] == n && scores.iter().enumerate().all(|(g, &s)| g == 4 || s < n) {
            found = Some(history);
            break 'search;
        }
    }
    let history = found.expect("a fixture exists");
    assert_eq!(adapt_step_size(&history), 2.0);
}

#[test]
fn step_size_ties_prefer_smallest() {
    let rec = |t| FeedbackRecord {
        t,
        query: QuerySet {
            context: Context::empty(),
            items: vec![Configuration(vec![]), Configuration(vec![])],
            features: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        },
        chosen: 0,
        delta: vec![1.0, -1.0],
        eta: 1.0,
    };
    let h: Vec<_> = (1..=5).map(rec).collect();
    assert_eq!(adapt_step_size(&h), 0.1);
}

#[test]
fn monte_carlo_choice_frequency() {
    let spec = build_synthetic(2).unwrap();
    let q = QuerySet::new(
        &spec,
        Context::empty(),
        vec![
            Configuration(vec![cforge_core::Value::Cat(0), cforge_core::Value::Cat(0)]),
            Configuration(vec![cforge_core::Value::Cat(1), cforge_core::Value::Cat(1)]),
        ],
    )
    .unwrap();
    // Utilities (1, 0).
    let w = WeightVector(vec![1.0, 0.0, 0.0, 0.0]);
    let mut user = SimulatedUser::new(0, w, 1.0, 77).unwrap();
    let n = 100_000;
    let hits = (0..n).filter(|_| user.respond(&q).unwrap() == 0).count();
    let freq = hits as f64 / n as f64;
    let exact = choice_distribution(&[1.0, 0.0], 1.0)[0];
    assert!((freq - exact).abs() < 0.005, "{freq}");
    assert!((exact - 0.73106).abs() < 1e-5);
}

#[test]
fn normal_population_mean() {
    let d = 16;
    let pop = sample_users(WeightDistribution::Normal { mean: 25.0, sd: 25.0 / 3.0 }, 20, d, 3).unwrap();
    let all: Vec<f64> = pop.users.iter().flat_map(|u| u.true_weights().0.clone()).collect();
    let mean = all.iter().sum::<f64>() / all.len() as f64;
    let tol = 3.0 * (25.0 / 3.0) / ((20 * d) as f64).sqrt();
    assert!((mean - 25.0).abs() <= tol, "{mean}");
}

fn row(t: usize, regret: f64, wc: f64, gain_true: f64, gain_est: f64) -> TraceRow {
    TraceRow {
        t,
        gamma: 1.0 / t as f64,
        eta: 1.0,
        delta: vec![0.0],
        delta_norm: 0.0,
        chosen_index: 1,
        query_features: vec![],
        query: vec![],
        context: Context::empty(),
        diagnostics: cforge_core::perceptron::Diagnostics {
            diversity: 0.0,
            quality: 0.0,
            objective: 0.0,
            solver_status: SolveStatus::Optimal,
            timed_out: false,
            nodes: 0,
            gain_est,
            gain_true: Some(gain_true),
            wc_regret: Some(wc),
            best_true: Some(0.0),
            wall_ms: 0.0,
        },
        regret: Some(regret),
    }
}

#[test]
fn diagnostics_single_round() {
    let spec = build_synthetic(2).unwrap();
    let trace = SessionTrace {
        domain: "t".into(),
        strategy: QueryStrategy::ChoicePerceptron,
        k: 2,
        rows: vec![row(1, 1.0, 4.0, 0.5, 0.0)],
        final_weights: WeightVector(vec![0.0]),
    };
    let w = WeightVector(vec![1.0, 2.0, 0.0, 2.0]);
    let d = diagnostics(&trace, &w, &spec).unwrap();
    assert_eq!(d.alpha, Some(0.125));
    assert_eq!(d.beta, 0.0);
    assert_eq!(d.m, 0);
}

#[test]
fn pc_count_matches_nested_loops() {
    let part = |n: &str, p: f64| Part {
        name: n.into(),
        price: Some(p),
        price_ref: None,
    };
    let attr = |name: &str, parts: &[&str]| PartAttribute {
        name: name.into(),
        parts: parts.iter().enumerate().map(|(i, p)| part(p, 10.0 * (i + 1) as f64)).collect(),
    };
    let inst = PcInstance {
        name: "t".into(),
        attributes: vec![
            attr("Maker", &["A", "B", "C"]),
            attr("Cpu", &["c1", "c2", "c3", "c4"]),
            attr("Ram", &["r1", "r2", "r3"]),
        ],
        rules: vec![
            HornRule { antecedents: vec!["Cpu=c1".into()], consequent: "Maker=A".into() },
            HornRule { antecedents: vec!["Cpu=c4".into(), "Ram=r3".into()], consequent: "Maker=C".into() },
        ],
        price_divisor: 10.0,
    };
    let spec = build_pc(&inst).unwrap();
    let mut count = 0;
    for m in 0..3 {
        for c in 0..4 {
            for r in 0..3 {
                let ok1 = c != 0 || m == 0;
                let ok2 = !(c == 3 && r == 2) || m == 2;
                if ok1 && ok2 {
                    count += 1;
                }
            }
        }
    }
    assert_eq!(spec.count_feasible(&Context::empty(), 1000).unwrap(), count);
    let price = spec.features().iter().position(|f| f.name == "price").unwrap();
    for y in spec.enumerate(&Context::empty(), 1000).unwrap() {
        let expect: f64 = y
            .0
            .iter()
            .map(|v| match v {
                cforge_core::Value::Cat(i) => 10.0 * (*i as f64 + 1.0),
                _ => unreachable!(),
            })
            .sum::<f64>()
            / 10.0;
        let phi = spec.featurize(&Context::empty(), &y).unwrap();
        assert!((phi[price] - expect).abs() < 1e-12);
        assert_eq!(utility(&WeightVector::zeros(spec.dim()), &phi).unwrap(), 0.0);
    }
}
