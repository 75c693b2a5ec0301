use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::domain::{
    Attribute, AttributeKind, Cmp, ConstraintDef, ContextPool, DomainDef, DomainSpec, FeatureDef,
};
use crate::error::DomainError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct City {
    pub name: String,
    pub daily_cost: f64,
    /// How many times each activity (in [`TripInstance::activities`]
    /// order) is available in this city.
    pub activities: Vec<u32>,
}

/// Cities, activity table and road graph (`cities.json`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TripInstance {
    #[serde(default)]
    pub name: String,
    pub activities: Vec<String>,
    pub cities: Vec<City>,
    /// Undirected roads between cities.
    pub edges: Vec<(String, String)>,
    /// Trip length in days.
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "one")]
    pub cost_divisor: f64,
    #[serde(default = "default_context_sizes")]
    pub context_sizes: Vec<usize>,
}

fn default_horizon() -> usize {
    10
}

fn one() -> f64 {
    1.0
}

fn default_context_sizes() -> Vec<usize> {
    vec![2, 3]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TripVariant {
    /// Stay, visit, activity and cost features.
    Simplified,
    /// Adds per-pair move counts and the total number of moves.
    FullSchema,
}

impl TripInstance {
    fn validate(&self) -> Result<(), DomainError> {
        let err = |m: String| Err(DomainError::Instance(m));
        if self.cities.len() < 2 {
            return err("a trip needs at least two cities".to_string());
        }
        if self.horizon < 1 {
            return err("trip horizon must be at least 1".to_string());
        }
        let mut names = BTreeSet::new();
        for c in &self.cities {
            if c.name.is_empty() || c.name.contains(['=', '_', ' ']) {
                return err(format!("invalid city name `{}`", c.name));
            }
            if !names.insert(c.name.as_str()) {
                return err(format!("duplicate city `{}`", c.name));
            }
            if c.activities.len() != self.activities.len() {
                return err(format!(
                    "city `{}` lists {} activity counts, expected {}",
                    c.name,
                    c.activities.len(),
                    self.activities.len()
                ));
            }
            if !c.daily_cost.is_finite() {
                return Err(DomainError::NonFinite(format!("daily cost of `{}`", c.name)));
            }
        }
        for (a, b) in &self.edges {
            for n in [a, b] {
                if !names.contains(n.as_str()) {
                    return err(format!("edge references unknown city `{n}`"));
                }
            }
        }
        let n = self.cities.len();
        if self.context_sizes.iter().any(|&s| s > n) {
            return err("context size exceeds number of cities".to_string());
        }
        Ok(())
    }

    /// Symmetric adjacency matrix (without self loops).
    pub fn adjacency(&self) -> Vec<Vec<bool>> {
        let n = self.cities.len();
        let idx = |name: &str| self.cities.iter().position(|c| c.name == name);
        let mut adj = vec![vec![false; n]; n];
        for (a, b) in &self.edges {
            if let (Some(i), Some(j)) = (idx(a), idx(b)) {
                if i != j {
                    adj[i][j] = true;
                    adj[j][i] = true;
                }
            }
        }
        adj
    }
}

/// Time-indexed route encoding: `day{s}` is the city of day `s`; staying
/// put is always allowed, moving requires a road. `stay_{c}` counts the
/// days spent in `c` and `visit_{c}` flags whether it is visited at all, so
/// routes may revisit cities.
pub fn build_trip(inst: &TripInstance, variant: TripVariant) -> Result<DomainSpec, DomainError> {
    inst.validate()?;
    let h = inst.horizon;
    let cities: Vec<&str> = inst.cities.iter().map(|c| c.name.as_str()).collect();
    let adj = inst.adjacency();
    let day = |s: usize, c: &str| format!("day{s}={c}");
    let mv = |s: usize, a: &str, b: &str| format!("move{s}_{a}_{b}");

    let mut attributes = Vec::new();
    for s in 1..=h {
        attributes.push(Attribute::new(
            format!("day{s}"),
            AttributeKind::Categorical {
                values: cities.iter().map(|c| c.to_string()).collect(),
            },
        ));
    }
    for c in &cities {
        attributes.push(Attribute::new(
            format!("stay_{c}"),
            AttributeKind::Integer { lo: 0, hi: h as i64 },
        ));
    }
    for c in &cities {
        attributes.push(Attribute::new(format!("visit_{c}"), AttributeKind::Boolean));
    }
    let full = variant == TripVariant::FullSchema;
    let mut moves: Vec<(usize, usize, usize)> = Vec::new();
    if full {
        for s in 1..h {
            for (i, a) in cities.iter().enumerate() {
                for (j, b) in cities.iter().enumerate() {
                    if adj[i][j] {
                        moves.push((s, i, j));
                        attributes.push(Attribute::new(mv(s, a, b), AttributeKind::Boolean));
                    }
                }
            }
        }
    }

    let mut constraints = Vec::new();
    for c in &cities {
        let mut terms: Vec<(String, f64)> = vec![(format!("stay_{c}"), 1.0)];
        terms.extend((1..=h).map(|s| (day(s, c), -1.0)));
        constraints.push(ConstraintDef::new(terms, Cmp::Eq, 0.0).named(format!("stay_{c}")));
        constraints.push(
            ConstraintDef::new(
                vec![(format!("visit_{c}"), 1.0), (format!("stay_{c}"), -1.0)],
                Cmp::Le,
                0.0,
            )
            .named(format!("visit_lo_{c}")),
        );
        constraints.push(
            ConstraintDef::new(
                vec![(format!("stay_{c}"), 1.0), (format!("visit_{c}"), -(h as f64))],
                Cmp::Le,
                0.0,
            )
            .named(format!("visit_hi_{c}")),
        );
    }
    // Flow: the city of day s+1 is the city of day s or one of its neighbours.
    for s in 1..h {
        for (j, b) in cities.iter().enumerate() {
            if (0..cities.len()).all(|i| i == j || adj[i][j]) {
                continue;
            }
            let mut terms = vec![(day(s + 1, b), 1.0)];
            terms.extend(
                cities
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| i == j || adj[i][j])
                    .map(|(_, a)| (day(s, a), -1.0)),
            );
            constraints.push(ConstraintDef::new(terms, Cmp::Le, 0.0).named(format!("road{s}_{b}")));
        }
    }
    for &(s, i, j) in &moves {
        let (a, b) = (cities[i], cities[j]);
        let m = mv(s, a, b);
        constraints.push(ConstraintDef::new(
            vec![(m.clone(), 1.0), (day(s, a), -1.0)],
            Cmp::Le,
            0.0,
        ));
        constraints.push(ConstraintDef::new(
            vec![(m.clone(), 1.0), (day(s + 1, b), -1.0)],
            Cmp::Le,
            0.0,
        ));
        constraints.push(ConstraintDef::new(
            vec![(m, 1.0), (day(s, a), -1.0), (day(s + 1, b), -1.0)],
            Cmp::Ge,
            -1.0,
        ));
    }

    let mut features = Vec::new();
    for c in &cities {
        features.push(FeatureDef::indicator(format!("stay_{c}")));
    }
    for c in &cities {
        features.push(FeatureDef::indicator(format!("visit_{c}")));
    }
    for (k, act) in inst.activities.iter().enumerate() {
        features.push(FeatureDef {
            name: format!("activity_{act}"),
            terms: inst
                .cities
                .iter()
                .filter(|c| c.activities[k] > 0)
                .map(|c| (format!("visit_{}", c.name), c.activities[k] as f64))
                .collect(),
            constant: 0.0,
        });
    }
    features.push(FeatureDef {
        name: "cost".to_string(),
        terms: inst
            .cities
            .iter()
            .filter(|c| c.daily_cost != 0.0)
            .map(|c| (format!("stay_{}", c.name), c.daily_cost))
            .collect(),
        constant: 0.0,
    });
    if full {
        for (i, a) in cities.iter().enumerate() {
            for (j, b) in cities.iter().enumerate() {
                if i == j {
                    continue;
                }
                let terms = if adj[i][j] {
                    (1..h).map(|s| (mv(s, a, b), 1.0)).collect()
                } else {
                    Vec::new()
                };
                features.push(FeatureDef {
                    name: format!("pair_{a}_{b}"),
                    terms,
                    constant: 0.0,
                });
            }
        }
        features.push(FeatureDef {
            name: "moves".to_string(),
            terms: moves
                .iter()
                .map(|&(s, i, j)| (mv(s, cities[i], cities[j]), 1.0))
                .collect(),
            constant: 0.0,
        });
    }

    let mut scale = alloc::collections::BTreeMap::new();
    if inst.cost_divisor != 1.0 {
        scale.insert("cost".to_string(), inst.cost_divisor);
    }
    let base = if inst.name.is_empty() { "trip" } else { inst.name.as_str() };
    DomainSpec::new(DomainDef {
        name: match variant {
            TripVariant::Simplified => base.to_string(),
            TripVariant::FullSchema => format!("{base}-full"),
        },
        attributes,
        constraints,
        features,
        scale,
        context: Some(ContextPool {
            required_true: cities.iter().map(|c| format!("visit_{c}")).collect(),
            sizes: inst.context_sizes.clone(),
        }),
    })
}
