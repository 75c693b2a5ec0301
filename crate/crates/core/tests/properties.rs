use std::sync::Arc;

use cforge_core::benchmarks::{build_synthetic, build_trip, sample_context, City, TripInstance, TripVariant};
use cforge_core::metrics::query_regret;
use cforge_core::perceptron::{apply_update, compute_delta, SessionState};
use cforge_core::query::select_query;
use cforge_core::usersim::{choice_distribution, expected_gain, is_reasonable, SimulatedChannel, SimulatedUser};
use cforge_core::{
    run_elicitation, Configuration, Context, DomainSpec, QuerySet, SessionConfig, Solver, Value, WeightVector,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn synthetic(r: usize) -> DomainSpec {
    build_synthetic(r).unwrap()
}

fn config_strategy(r: usize) -> impl Strategy<Value = Configuration> {
    prop::collection::vec(0..r, r).prop_map(|v| Configuration(v.into_iter().map(|i| Value::Cat(i as u32)).collect()))
}

fn weights(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, d)
}

fn query(spec: &DomainSpec, items: Vec<Configuration>) -> QuerySet {
    QuerySet::new(spec, Context::empty(), items).unwrap()
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

fn small_trip() -> TripInstance {
    let city = |n: &str, cost: f64, acts: Vec<u32>| City {
        name: n.into(),
        daily_cost: cost,
        activities: acts,
    };
    TripInstance {
        name: "mini".into(),
        activities: vec!["museum".into(), "beach".into()],
        cities: vec![
            city("A", 3.0, vec![1, 0]),
            city("B", 2.0, vec![0, 2]),
            city("C", 4.0, vec![2, 1]),
            city("D", 1.0, vec![0, 0]),
        ],
        edges: vec![("A".into(), "B".into()), ("B".into(), "C".into()), ("C".into(), "D".into())],
        horizon: 4,
        cost_divisor: 1.0,
        context_sizes: vec![2, 3],
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn update_adds_scaled_delta(
        w0 in weights(9),
        items in prop::collection::vec(config_strategy(3), 2..5),
        chosen in 0usize..4,
        eta in prop::sample::select(vec![0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0]),
    ) {
        let spec = synthetic(3);
        let chosen = chosen % items.len();
        let q = query(&spec, items);
        let delta = compute_delta(&q, chosen).unwrap();
        let mut state = SessionState::new(9, 0);
        state.w = WeightVector(w0.clone());
        state.eta = eta;
        apply_update(&mut state, q.clone(), chosen, &delta);
        let expect: Vec<f64> = w0.iter().zip(&delta.delta).map(|(w, d)| w + eta * d).collect();
        prop_assert_eq!(&state.w.0, &expect);

        // Coordinates shared by every item contribute nothing.
        for j in 0..9 {
            if q.features.iter().all(|p| p[j] == q.features[0][j]) {
                prop_assert_eq!(delta.delta[j], 0.0);
            }
        }
        // Averaging the update over every possible choice cancels out.
        let k = q.k();
        for j in 0..9 {
            let s: f64 = (0..k).map(|c| compute_delta(&q, c).unwrap().delta[j]).sum();
            prop_assert!(s.abs() < 1e-9);
        }
    }

    #[test]
    fn equal_estimated_utilities_give_zero_gain(
        w in weights(4),
        k in 2usize..5,
        chosen in 0usize..4,
    ) {
        let d = 4;
        // Shift a base vector along a direction orthogonal to w.
        let base = vec![0.3, -1.2, 0.7, 2.0];
        let ortho = if w.iter().all(|&x| x == 0.0) { vec![1.0, 0.0, 0.0, 0.0] } else {
            let mut v = vec![w[1], -w[0], 0.0, 0.0];
            if v.iter().all(|&x| x == 0.0) { v = vec![0.0, 0.0, w[3], -w[2]]; }
            v
        };
        let features: Vec<Vec<f64>> = (0..k)
            .map(|i| (0..d).map(|j| base[j] + i as f64 * ortho[j]).collect())
            .collect();
        let q = QuerySet {
            context: Context::empty(),
            items: vec![Configuration(vec![]); k],
            features,
        };
        let delta = compute_delta(&q, chosen % k).unwrap();
        let g: f64 = w.iter().zip(&delta.delta).map(|(a, b)| a * b).sum();
        prop_assert!(g.abs() < 1e-9);
    }

    #[test]
    fn choice_probabilities_are_a_softmax(
        u in prop::collection::vec(-20.0f64..20.0, 2..6),
        c in -50.0f64..50.0,
        lambda in 0.0f64..4.0,
    ) {
        let p = choice_distribution(&u, lambda);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&x| x > 0.0 || lambda > 0.0));
        let shifted: Vec<f64> = u.iter().map(|x| x + c).collect();
        let q = choice_distribution(&shifted, lambda);
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn scaling_weights_matches_scaling_lambda(
        w in weights(9),
        items in prop::collection::vec(config_strategy(3), 2..5),
        c in 0.1f64..5.0,
        lambda in 0.1f64..3.0,
    ) {
        let spec = synthetic(3);
        let q = query(&spec, items);
        let scaled = WeightVector(w.iter().map(|x| c * x).collect());
        let a = SimulatedUser::new(0, scaled, lambda, 1).unwrap().choice_distribution(&q).unwrap();
        let b = SimulatedUser::new(0, WeightVector(w), c * lambda, 1).unwrap().choice_distribution(&q).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn reasonable_users_never_lose_in_expectation(
        u in prop::collection::vec(-30.0f64..30.0, 2..5),
        lambda in 0.0f64..3.0,
    ) {
        let p = choice_distribution(&u, lambda);
        let scores: Vec<f64> = u.iter().map(|x| lambda * x).collect();
        if lambda > 0.0 {
            prop_assert!(is_reasonable(&scores, &u));
        }
        prop_assert!(expected_gain(&p, &u) >= -1e-9);
        let flat = vec![u[0]; u.len()];
        prop_assert_eq!(expected_gain(&choice_distribution(&flat, lambda), &flat), 0.0);
    }

    #[test]
    fn selected_queries_are_valid(
        w in weights(9),
        gamma in 0.0f64..=1.0,
        k in 2usize..4,
        bnb in any::<bool>(),
    ) {
        let spec = synthetic(3);
        let solver = if bnb { Solver::branch_and_bound() } else { Solver::exhaustive() };
        let wv = WeightVector(w);
        let sel = select_query(&spec, &Context::empty(), &wv, k, gamma, &solver).unwrap();
        let q = &sel.query;
        prop_assert_eq!(q.k(), k);
        let u = q.utilities(&wv).unwrap();
        let best = spec
            .enumerate(&Context::empty(), 1000)
            .unwrap()
            .iter()
            .map(|y| {
                let p = spec.featurize(&Context::empty(), y).unwrap();
                p.iter().zip(&wv.0).map(|(a, b)| a * b).sum::<f64>()
            })
            .fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(u[0] >= best - 1e-6 * best.abs().max(1.0));
        for i in 0..k {
            for j in i + 1..k {
                prop_assert!(l1(&q.features[i], &q.features[j]) >= 1.0);
            }
            prop_assert!(spec.feasible(&Context::empty(), &q.items[i]).unwrap());
            // One-hot blocks: each attribute contributes exactly one active feature.
            prop_assert_eq!(q.features[i].iter().sum::<f64>(), 3.0);
        }
    }

    #[test]
    fn diversity_shrinks_as_gamma_falls(w in weights(9), g1 in 0.0f64..=1.0, g2 in 0.0f64..=1.0) {
        let spec = synthetic(3);
        let wv = WeightVector(w);
        let (lo, hi) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
        let a = select_query(&spec, &Context::empty(), &wv, 2, lo, &Solver::exhaustive()).unwrap();
        let b = select_query(&spec, &Context::empty(), &wv, 2, hi, &Solver::exhaustive()).unwrap();
        prop_assert!(b.stats.delta >= a.stats.delta - 1e-9);
    }

    #[test]
    fn regret_is_bracketed(
        w in weights(9),
        items in prop::collection::vec(config_strategy(3), 2..5),
    ) {
        let spec = synthetic(3);
        let wv = WeightVector(w);
        let q = query(&spec, items);
        let r = query_regret(&wv, &spec, &Context::empty(), &q, &Solver::exhaustive()).unwrap();
        prop_assert!(r.instantaneous >= 0.0);
        prop_assert!(r.instantaneous <= r.worst_case);
        prop_assert!(r.worst_case <= 2.0 * spec.radius() * wv.norm() + 1e-9);
    }

    #[test]
    fn trip_configurations_respect_context(seed in any::<u64>(), w in weights(11)) {
        let spec = build_trip(&small_trip(), TripVariant::Simplified).unwrap();
        prop_assert_eq!(spec.dim(), 11);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = sample_context(&spec, &mut rng);
        prop_assert!(x.fixed.len() == 2 || x.fixed.len() == 3);
        let wv = WeightVector(w);
        for bnb in [false, true] {
            let solver = if bnb { Solver::branch_and_bound() } else { Solver::exhaustive() };
            let a = cforge_core::query::argmax_utility(&spec, &x, &wv, &solver).unwrap();
            prop_assert!(spec.feasible(&x, &a.config).unwrap());
            let days: Vec<usize> = a.config.0[..4]
                .iter()
                .map(|v| match v { Value::Cat(i) => *i as usize, _ => usize::MAX })
                .collect();
            let adj = small_trip().adjacency();
            for s in 0..3 {
                prop_assert!(days[s] == days[s + 1] || adj[days[s]][days[s + 1]]);
            }
            for (name, _) in &x.fixed {
                let city = &name["visit_".len()..];
                let idx = small_trip().cities.iter().position(|c| c.name == city).unwrap();
                prop_assert!(days.contains(&idx));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn replay_reproduces_weights(seed in any::<u64>(), k in 2usize..4) {
        let spec = Arc::new(synthetic(3));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w: Vec<f64> = (0..9).map(|_| rand::Rng::random_range(&mut rng, 1.0..100.0)).collect();
        let mut user = SimulatedUser::new(0, WeightVector(w), 1.0, seed).unwrap();
        let mut ch = SimulatedChannel { user: &mut user, spec: &spec };
        let trace = run_elicitation(spec.clone(), &mut ch, SessionConfig::new(k, 6), Solver::exhaustive()).unwrap();
        prop_assert_eq!(trace.replay(), trace.final_weights.clone());
        let mut sum = 0.0;
        for (i, r) in trace.rows.iter().enumerate() {
            sum += r.regret.unwrap();
            let prefix = sum / (i + 1) as f64;
            prop_assert!(prefix >= 0.0);
            prop_assert!(r.diagnostics.gain_true.unwrap() >= -1e-9);
        }
    }
}
