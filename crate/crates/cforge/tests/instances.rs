use std::collections::BTreeMap;
use std::path::PathBuf;

use cforge::io::{domain_to_json, parse_domain, verify_checksums, Registry};
use cforge_core::{Configuration, Context, DomainSpec, Value};
use serde_json::Value as Json;

fn instances() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../instances")
}

/// Counts part combinations satisfying every Horn rule, straight from the
/// parts table.
fn nested_loop_pc_count(parts: &Json) -> u64 {
    let attrs: Vec<(String, Vec<String>)> = parts["attributes"]
        .as_array()
        .unwrap()
        .iter()
        .map(|a| {
            (
                a["name"].as_str().unwrap().to_string(),
                a["parts"].as_array().unwrap().iter().map(|p| p["name"].as_str().unwrap().to_string()).collect(),
            )
        })
        .collect();
    let rules: Vec<(Vec<String>, String)> = parts["rules"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| {
            (
                r["if"].as_array().unwrap().iter().map(|x| x.as_str().unwrap().to_string()).collect(),
                r["then"].as_str().unwrap().to_string(),
            )
        })
        .collect();
    fn go(attrs: &[(String, Vec<String>)], chosen: &mut Vec<String>, rules: &[(Vec<String>, String)]) -> u64 {
        if chosen.len() == attrs.len() {
            let holds = |lit: &String| chosen.contains(lit);
            return rules.iter().all(|(ante, cons)| !ante.iter().all(holds) || holds(cons)) as u64;
        }
        let (name, values) = &attrs[chosen.len()];
        let mut n = 0;
        for v in values {
            chosen.push(format!("{name}={v}"));
            n += go(attrs, chosen, rules);
            chosen.pop();
        }
        n
    }
    go(&attrs, &mut Vec::new(), &rules)
}

fn count(spec: &DomainSpec, x: &Context) -> u64 {
    spec.for_each_feasible(x, u64::MAX, |_, _| {}).unwrap()
}

#[test]
fn checksums_match() {
    let reports = verify_checksums(&instances()).unwrap();
    assert!(reports.len() >= 5);
    assert!(reports.iter().all(|r| r.ok), "{reports:?}");
}

#[test]
fn pc_feasible_count_matches_nested_loops() {
    let parts: Json = serde_json::from_str(&std::fs::read_to_string(instances().join("pc/parts.json")).unwrap()).unwrap();
    let sizes: Vec<usize> = parts["attributes"].as_array().unwrap().iter().map(|a| a["parts"].as_array().unwrap().len()).collect();
    assert_eq!(sizes.len(), 7);
    assert!(sizes.iter().all(|&s| (3..=8).contains(&s)), "{sizes:?}");
    let registry = Registry::load(&instances()).unwrap();
    let spec = registry.get("pc").unwrap();
    let expected = nested_loop_pc_count(&parts);
    assert!(expected > 0 && expected < sizes.iter().product::<usize>() as u64);
    assert_eq!(count(spec, &Context::empty()), expected);
}

#[test]
fn pc_price_feature_uses_resolved_prices() {
    let registry = Registry::load(&instances()).unwrap();
    let spec = registry.get("pc").unwrap();
    let price = spec.features().iter().position(|f| f.name == "price").unwrap();
    let mut seen = 0;
    spec.for_each_feasible(&Context::empty(), u64::MAX, |y, _| {
        if seen < 50 {
            seen += 1;
            let phi = spec.featurize(&Context::empty(), y).unwrap();
            let rendered: BTreeMap<String, String> = spec
                .attributes()
                .iter()
                .zip(y.values())
                .map(|(a, v)| (a.name.clone(), a.render(v)))
                .collect();
            let ssd256 = rendered["Storage"] == "SSD-256GB";
            let hdd1tb = rendered["Storage"] == "HDD-1TB";
            if ssd256 || hdd1tb {
                let mut other = y.clone();
                let storage = spec.attribute_index("Storage").unwrap();
                other.0[storage] = Value::Cat(if ssd256 { 1 } else { 2 });
                if spec.feasible(&Context::empty(), &other).unwrap() {
                    let phi2 = spec.featurize(&Context::empty(), &other).unwrap();
                    assert!((phi[price] - phi2[price]).abs() < 1e-12);
                }
            }
        }
    })
    .unwrap();
}

#[test]
fn trip_instances_have_expected_shape() {
    let registry = Registry::load(&instances()).unwrap();
    let trip = registry.get("trip").unwrap();
    let full = registry.get("trip-full").unwrap();
    let small = registry.get("trip-small").unwrap();
    assert_eq!(full.dim(), 127);
    assert_eq!(trip.dim(), 36);
    assert_eq!(trip.context_pool().unwrap().required_true.len(), 10);
    assert_eq!(trip.context_pool().unwrap().sizes, vec![2, 3]);
    assert_eq!(small.context_pool().unwrap().required_true.len(), 4);
}

/// Routes on the small trip instance, counted by walking the road graph.
#[test]
fn small_trip_routes_match_graph_walk() {
    let inst: Json =
        serde_json::from_str(&std::fs::read_to_string(instances().join("trip/cities-small.json")).unwrap()).unwrap();
    let cities: Vec<&str> = inst["cities"].as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap()).collect();
    let roads: Vec<(&str, &str)> = inst["edges"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| (e[0].as_str().unwrap(), e[1].as_str().unwrap()))
        .collect();
    let h = inst["horizon"].as_u64().unwrap() as usize;
    let ok = |a: &str, b: &str| a == b || roads.iter().any(|&(x, y)| (x, y) == (a, b) || (y, x) == (a, b));
    let mut routes: Vec<Vec<&str>> = cities.iter().map(|c| vec![*c]).collect();
    for _ in 1..h {
        routes = routes
            .into_iter()
            .flat_map(|r| {
                let last = *r.last().unwrap();
                cities.iter().filter(move |c| ok(last, c)).map(move |c| {
                    let mut n = r.clone();
                    n.push(c);
                    n
                })
            })
            .collect();
    }
    let registry = Registry::load(&instances()).unwrap();
    let spec = registry.get("trip-small").unwrap();
    assert_eq!(count(spec, &Context::empty()), routes.len() as u64);
    let must = Context::require_true(["visit_Rome", "visit_Milan"]);
    let expected = routes.iter().filter(|r| r.contains(&"Rome") && r.contains(&"Milan")).count();
    assert_eq!(count(spec, &must), expected as u64);
}

#[test]
fn domain_definitions_round_trip() {
    let registry = Registry::load(&instances()).unwrap();
    for (id, (_, spec)) in &registry.domains {
        let text = domain_to_json(spec.def());
        let def = parse_domain(&text).unwrap();
        assert_eq!(&def, spec.def(), "{id}");
        let again = DomainSpec::new(def).unwrap();
        assert_eq!(again.dim(), spec.dim());
        if spec.is_enumerable() && id != "trip" && id != "trip-full" {
            let mut firsts: Vec<Configuration> = Vec::new();
            let _ = spec.for_each_feasible(&Context::empty(), u64::MAX, |y, _| {
                if firsts.len() < 20 {
                    firsts.push(y.clone());
                }
            });
            for y in &firsts {
                assert_eq!(
                    spec.featurize(&Context::empty(), y).unwrap(),
                    again.featurize(&Context::empty(), y).unwrap()
                );
            }
        }
    }
}
