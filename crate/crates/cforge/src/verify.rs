//! Runtime invariant suites behind `cforge verify`.

use std::path::Path;
use std::sync::Arc;

use cforge_core::benchmarks::build_synthetic;
use cforge_core::perceptron::{compute_delta, replay_weights};
use cforge_core::query::{select_query, QuerySet};
use cforge_core::{
    AttributeKind, Configuration, Context, DomainSpec, Session, SessionConfig, SimulatedUser, Solver, Value, WeightVector,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::io::{verify_checksums, Registry};

#[derive(Clone, Debug, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckReport {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        CheckReport {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

/// Every configuration of the attribute product, in odometer order.
/// `None` when some attribute is continuous or the product exceeds `limit`.
pub fn product_configurations(spec: &DomainSpec, limit: u64) -> Option<Vec<Configuration>> {
    let mut domains: Vec<Vec<Value>> = Vec::new();
    for a in spec.attributes() {
        domains.push(match &a.kind {
            AttributeKind::Boolean => vec![Value::Bool(false), Value::Bool(true)],
            AttributeKind::Categorical { values } => (0..values.len() as u32).map(Value::Cat).collect(),
            AttributeKind::Integer { lo, hi } => (*lo..=*hi).map(Value::Int).collect(),
            AttributeKind::Continuous { .. } => return None,
        });
    }
    let total = domains.iter().try_fold(1u64, |acc, d| acc.checked_mul(d.len() as u64))?;
    if total > limit {
        return None;
    }
    let mut out = Vec::with_capacity(total as usize);
    let mut idx = vec![0usize; domains.len()];
    if domains.iter().any(Vec::is_empty) {
        return Some(out);
    }
    loop {
        out.push(Configuration(idx.iter().zip(&domains).map(|(&i, d)| d[i].clone()).collect()));
        let mut pos = domains.len();
        loop {
            if pos == 0 {
                return Some(out);
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < domains[pos].len() {
                break;
            }
            idx[pos] = 0;
        }
    }
}

fn check_enumeration(id: &str, spec: &DomainSpec) -> Option<CheckReport> {
    let all = product_configurations(spec, 200_000)?;
    let mut brute = 0u64;
    for y in &all {
        match spec.feasible(&Context::empty(), y) {
            Ok(true) => brute += 1,
            Ok(false) => {}
            Err(e) => return Some(CheckReport::new(format!("enumeration[{id}]"), false, e.to_string())),
        }
    }
    let mut bad = 0u64;
    let counted = spec.for_each_feasible(&Context::empty(), u64::MAX, |y, _| {
        if !matches!(spec.feasible(&Context::empty(), y), Ok(true)) {
            bad += 1;
        }
    });
    Some(match counted {
        Ok(n) => CheckReport::new(
            format!("enumeration[{id}]"),
            n == brute && bad == 0,
            format!("enumerated {n}, brute force {brute}, infeasible emitted {bad}"),
        ),
        Err(e) => CheckReport::new(format!("enumeration[{id}]"), false, e.to_string()),
    })
}

fn random_weights(rng: &mut ChaCha8Rng, d: usize, lo: f64, hi: f64) -> WeightVector {
    WeightVector((0..d).map(|_| rng.random_range(lo..=hi)).collect())
}

fn random_config(rng: &mut ChaCha8Rng, spec: &DomainSpec) -> Configuration {
    Configuration(
        spec.attributes()
            .iter()
            .map(|a| match &a.kind {
                AttributeKind::Categorical { values } => Value::Cat(rng.random_range(0..values.len() as u32)),
                AttributeKind::Boolean => Value::Bool(rng.random()),
                AttributeKind::Integer { lo, hi } => Value::Int(rng.random_range(*lo..=*hi)),
                AttributeKind::Continuous { lo, hi } => Value::Real(rng.random_range(*lo..=*hi)),
            })
            .collect(),
    )
}

/// Random distinct-item query sets on the synthetic r=3 domain.
fn random_query(rng: &mut ChaCha8Rng, spec: &DomainSpec, k: usize) -> QuerySet {
    loop {
        let items: Vec<Configuration> = (0..k).map(|_| random_config(rng, spec)).collect();
        if items.iter().enumerate().all(|(i, a)| items[..i].iter().all(|b| a != b)) {
            return QuerySet::new(spec, Context::empty(), items).expect("synthetic configurations are valid");
        }
    }
}

fn check_choice_model(seed: u64, instances: usize) -> CheckReport {
    let spec = build_synthetic(3).expect("synthetic domain");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0;
    let mut worst = f64::INFINITY;
    for _ in 0..instances {
        let k = rng.random_range(2..=4);
        let q = random_query(&mut rng, &spec, k);
        let w_star = random_weights(&mut rng, spec.dim(), 1.0, 100.0);
        let lambda = rng.random_range(0.01..5.0);
        let user = SimulatedUser::new(0, w_star, lambda, seed).expect("valid user");
        let g = user.expected_utility_gain(&q).expect("dimension matches");
        worst = worst.min(g);
        if !user.check_reasonable(&q).expect("dimension matches") || g < -1e-9 {
            failures += 1;
        }
    }
    CheckReport::new(
        "choice model reasonable with non-negative expected gain",
        failures == 0,
        format!("{instances} instances, {failures} failures, smallest gain {worst:.3e}"),
    )
}

fn check_backends(seed: u64, instances: usize) -> CheckReport {
    let spec = build_synthetic(3).expect("synthetic domain");
    let exhaustive = Solver::exhaustive();
    let bnb = Solver::branch_and_bound();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut errors = 0;
    for _ in 0..instances {
        let w = random_weights(&mut rng, spec.dim(), -5.0, 5.0);
        let gamma = 1.0 / rng.random_range(1..=25) as f64;
        let a = select_query(&spec, &Context::empty(), &w, 2, gamma, &exhaustive);
        let b = select_query(&spec, &Context::empty(), &w, 2, gamma, &bnb);
        match (a, b) {
            (Ok(a), Ok(b)) => {
                let gap = (a.stats.objective - b.stats.objective).abs() / a.stats.objective.abs().max(1.0);
                worst = worst.max(gap);
            }
            _ => errors += 1,
        }
    }
    CheckReport::new(
        "query objective agrees across backends",
        errors == 0 && worst <= 1e-6,
        format!("{instances} instances, {errors} errors, largest relative gap {worst:.3e}"),
    )
}

fn check_update_algebra(seed: u64, instances: usize) -> CheckReport {
    let spec = build_synthetic(3).expect("synthetic domain");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let k = rng.random_range(2..=4);
        let q = random_query(&mut rng, &spec, k);
        let chosen = rng.random_range(0..k);
        let delta = compute_delta(&q, chosen).expect("valid choice");
        let others: Vec<&Vec<f64>> = q.features.iter().enumerate().filter(|(i, _)| *i != chosen).map(|(_, f)| f).collect();
        for (j, &dj) in delta.delta.iter().enumerate() {
            let mean = others.iter().map(|f| f[j]).sum::<f64>() / others.len() as f64;
            worst = worst.max((q.features[chosen][j] - mean - dj).abs());
        }
    }
    CheckReport::new(
        "update equals chosen minus mean of the others",
        worst <= 1e-12,
        format!("{instances} instances, largest deviation {worst:.3e}"),
    )
}

fn check_replay(seed: u64) -> CheckReport {
    let spec = Arc::new(build_synthetic(3).expect("synthetic domain"));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cfg = SessionConfig::new(2, 10);
    cfg.seed = seed;
    let result = (|| -> Result<bool, cforge_core::ElicitError> {
        let mut s = Session::new(spec.clone(), cfg, Solver::exhaustive())?;
        while !s.is_finished() {
            s.prepare(Context::empty())?;
            let k = s.pending().map_or(2, |p| p.selection.query.k());
            s.answer(rng.random_range(0..k), None)?;
        }
        let replayed = replay_weights(spec.dim(), s.rows().iter().map(|r| (r.eta, r.delta.as_slice())));
        Ok(replayed == *s.weights())
    })();
    match result {
        Ok(ok) => CheckReport::new("weights equal the replay of recorded updates", ok, "10 random choices"),
        Err(e) => CheckReport::new("weights equal the replay of recorded updates", false, e.to_string()),
    }
}

/// Runs the suites; `instances` adds checksum and per-domain checks.
pub fn run_all(instances: Option<&Path>, seed: u64) -> Vec<CheckReport> {
    let mut out = Vec::new();
    if let Some(dir) = instances {
        match verify_checksums(dir) {
            Ok(reports) => {
                for r in reports {
                    out.push(CheckReport::new(
                        format!("checksum[{}]", r.file.display()),
                        r.ok,
                        if r.ok { "matches" } else { "mismatch" },
                    ));
                }
            }
            Err(e) => out.push(CheckReport::new("checksums", false, e.to_string())),
        }
        match Registry::load(dir) {
            Ok(reg) => {
                for (id, (_, spec)) in &reg.domains {
                    out.push(CheckReport::new(
                        format!("domain[{id}]"),
                        true,
                        format!("{} attributes, {} features", spec.attributes().len(), spec.dim()),
                    ));
                    if let Some(r) = check_enumeration(id, spec) {
                        out.push(r);
                    }
                }
            }
            Err(e) => out.push(CheckReport::new("domains", false, e.to_string())),
        }
    }
    out.push(check_choice_model(seed, 1000));
    out.push(check_backends(seed, 100));
    out.push(check_update_algebra(seed, 1000));
    out.push(check_replay(seed));
    out
}
