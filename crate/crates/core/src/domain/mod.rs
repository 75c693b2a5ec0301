//! Hybrid combinatorial product spaces: schema, constraints and features.

mod context;
mod def;
mod enumerate;
mod linear;
mod schema;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

pub use context::{Context, ResolvedContext};
pub use def::{ConstraintDef, ContextPool, DomainDef, FeatureDef};
pub use linear::{Cmp, FeatureRow, LinearRow};
pub use schema::{utility, Attribute, AttributeKind, Configuration, Value, WeightVector};

use crate::error::DomainError;
use crate::math;
use crate::solver::VarKind;

/// Absolute tolerance for constraint checks on continuous terms.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Enumeration cap used when computing the feature radius exhaustively.
pub const RADIUS_ENUMERATION_LIMIT: u64 = 100_000;

/// A variable of the MILP encoding of one configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodingVar {
    pub name: String,
    pub kind: VarKind,
    pub lo: f64,
    pub hi: f64,
    pub attr: usize,
}

/// Immutable, validated domain: the space of configurations, its
/// encoding variables, feasibility rows and the feature map.
#[derive(Clone, Debug)]
pub struct DomainSpec {
    def: DomainDef,
    vars: Vec<EncodingVar>,
    attr_vars: Vec<Range<usize>>,
    var_index: BTreeMap<String, usize>,
    attr_index: BTreeMap<String, usize>,
    rows: Vec<LinearRow>,
    features: Vec<FeatureRow>,
    radius: f64,
    radius_exact: bool,
}

impl DomainSpec {
    pub fn new(def: DomainDef) -> Result<Self, DomainError> {
        let mut vars = Vec::new();
        let mut attr_vars = Vec::with_capacity(def.attributes.len());
        let mut attr_index = BTreeMap::new();
        for (a, attr) in def.attributes.iter().enumerate() {
            if attr_index.insert(attr.name.clone(), a).is_some() {
                return Err(DomainError::DuplicateAttribute(attr.name.clone()));
            }
            let start = vars.len();
            match &attr.kind {
                AttributeKind::Boolean => vars.push(EncodingVar {
                    name: attr.name.clone(),
                    kind: VarKind::Binary,
                    lo: 0.0,
                    hi: 1.0,
                    attr: a,
                }),
                AttributeKind::Categorical { values } => {
                    if values.len() < 2 {
                        return Err(DomainError::CategoricalTooSmall(attr.name.clone()));
                    }
                    for v in values {
                        vars.push(EncodingVar {
                            name: format!("{}={}", attr.name, v),
                            kind: VarKind::Binary,
                            lo: 0.0,
                            hi: 1.0,
                            attr: a,
                        });
                    }
                }
                AttributeKind::Integer { lo, hi } => {
                    if lo > hi {
                        return Err(DomainError::InvalidBounds(attr.name.clone()));
                    }
                    vars.push(EncodingVar {
                        name: attr.name.clone(),
                        kind: VarKind::Integer,
                        lo: *lo as f64,
                        hi: *hi as f64,
                        attr: a,
                    });
                }
                AttributeKind::Continuous { lo, hi } => {
                    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                        return Err(DomainError::InvalidBounds(attr.name.clone()));
                    }
                    vars.push(EncodingVar {
                        name: attr.name.clone(),
                        kind: VarKind::Continuous,
                        lo: *lo,
                        hi: *hi,
                        attr: a,
                    });
                }
            }
            attr_vars.push(start..vars.len());
        }

        let mut var_index = BTreeMap::new();
        for (j, v) in vars.iter().enumerate() {
            if var_index.insert(v.name.clone(), j).is_some() {
                return Err(DomainError::DuplicateAttribute(v.name.clone()));
            }
        }

        let mut spec = DomainSpec {
            def: DomainDef {
                constraints: Vec::new(),
                features: Vec::new(),
                ..def.clone()
            },
            vars,
            attr_vars,
            var_index,
            attr_index,
            rows: Vec::new(),
            features: Vec::new(),
            radius: 0.0,
            radius_exact: false,
        };

        let mut rows = Vec::with_capacity(def.constraints.len());
        for c in &def.constraints {
            rows.push(spec.resolve_constraint(c)?);
        }

        for name in def.scale.keys() {
            if !def.features.iter().any(|f| &f.name == name) {
                return Err(DomainError::UnknownFeature(name.clone()));
            }
        }
        let mut features = Vec::with_capacity(def.features.len());
        for f in &def.features {
            let divisor = def.scale.get(&f.name).copied().unwrap_or(1.0);
            if !(divisor.is_finite() && divisor > 0.0) {
                return Err(DomainError::InvalidScale(f.name.clone()));
            }
            if !f.constant.is_finite() {
                return Err(DomainError::NonFinite(format!("feature `{}`", f.name)));
            }
            features.push(FeatureRow {
                name: f.name.clone(),
                terms: spec.resolve_terms(&f.terms)?,
                constant: f.constant,
                divisor,
            });
        }

        spec.rows = rows;
        spec.features = features;
        spec.def = def;
        let (radius, exact) = spec.compute_radius();
        spec.radius = radius;
        spec.radius_exact = exact;
        Ok(spec)
    }

    fn resolve_terms(&self, terms: &[(String, f64)]) -> Result<Vec<(usize, f64)>, DomainError> {
        terms
            .iter()
            .map(|(name, c)| {
                if !c.is_finite() {
                    return Err(DomainError::NonFinite(format!("coefficient of `{name}`")));
                }
                self.var_index
                    .get(name)
                    .map(|&j| (j, *c))
                    .ok_or_else(|| DomainError::UnknownVariable(name.clone()))
            })
            .collect()
    }

    pub fn resolve_constraint(&self, c: &ConstraintDef) -> Result<LinearRow, DomainError> {
        if !c.rhs.is_finite() {
            return Err(DomainError::NonFinite("constraint right-hand side".to_string()));
        }
        Ok(LinearRow::new(self.resolve_terms(&c.terms)?, c.cmp, c.rhs))
    }

    pub fn name(&self) -> &str {
        &self.def.name
    }

    /// The definition this spec was built from.
    pub fn to_def(&self) -> DomainDef {
        self.def.clone()
    }

    pub fn def(&self) -> &DomainDef {
        &self.def
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.def.attributes
    }

    pub fn attribute_index(&self, name: &str) -> Option<usize> {
        self.attr_index.get(name).copied()
    }

    pub fn vars(&self) -> &[EncodingVar] {
        &self.vars
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.var_index.get(name).copied()
    }

    pub fn attr_vars(&self, attr: usize) -> Range<usize> {
        self.attr_vars[attr].clone()
    }

    pub fn rows(&self) -> &[LinearRow] {
        &self.rows
    }

    pub fn features(&self) -> &[FeatureRow] {
        &self.features
    }

    /// Feature dimension `d`.
    pub fn dim(&self) -> usize {
        self.features.len()
    }

    pub fn context_pool(&self) -> Option<&ContextPool> {
        self.def.context.as_ref()
    }

    /// Radius of a ball enclosing every feature vector.
    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Whether [`radius`](Self::radius) is the exact maximum norm (true) or
    /// an interval upper bound (false).
    pub fn radius_is_exact(&self) -> bool {
        self.radius_exact
    }

    pub fn is_enumerable(&self) -> bool {
        self.def.attributes.iter().all(|a| a.kind.is_discrete())
    }

    /// Per-feature value ranges from variable bounds.
    pub fn feature_intervals(&self) -> Vec<(f64, f64)> {
        let lo: Vec<f64> = self.vars.iter().map(|v| v.lo).collect();
        let hi: Vec<f64> = self.vars.iter().map(|v| v.hi).collect();
        self.features.iter().map(|f| f.interval(&lo, &hi)).collect()
    }

    /// Whether every feature takes integer values on integral encodings.
    pub fn features_integral(&self) -> bool {
        self.features.iter().all(|f| {
            f.divisor == 1.0
                && f.constant == math::round(f.constant)
                && f.terms.iter().all(|&(j, c)| {
                    c == math::round(c) && self.vars[j].kind != VarKind::Continuous
                })
        })
    }

    fn compute_radius(&self) -> (f64, bool) {
        if self.is_enumerable() {
            let mut max_sq: f64 = 0.0;
            let res = self.for_each_feasible(&Context::empty(), RADIUS_ENUMERATION_LIMIT, |_, enc| {
                let sq: f64 = self
                    .features
                    .iter()
                    .map(|f| {
                        let v = f.eval(enc);
                        v * v
                    })
                    .sum();
                max_sq = max_sq.max(sq);
            });
            if res.is_ok() {
                return (math::sqrt(max_sq), true);
            }
        }
        let sq: f64 = self
            .feature_intervals()
            .iter()
            .map(|(l, h)| {
                let m = math::abs(*l).max(math::abs(*h));
                m * m
            })
            .sum();
        (math::sqrt(sq), false)
    }

    pub fn check_conforms(&self, y: &Configuration) -> Result<(), DomainError> {
        let attrs = &self.def.attributes;
        if y.0.len() != attrs.len() {
            return Err(DomainError::DimensionMismatch {
                expected: attrs.len(),
                got: y.0.len(),
            });
        }
        for (a, v) in attrs.iter().zip(&y.0) {
            if !a.kind.conforms(v, FEASIBILITY_TOL) {
                return Err(DomainError::TypeMismatch(a.name.clone()));
            }
        }
        Ok(())
    }

    /// Encoding-variable values of a configuration.
    pub fn encode(&self, y: &Configuration) -> Result<Vec<f64>, DomainError> {
        self.check_conforms(y)?;
        let mut x = vec![0.0; self.vars.len()];
        for (a, v) in y.0.iter().enumerate() {
            self.write_value(a, v, &mut x);
        }
        Ok(x)
    }

    pub(crate) fn write_value(&self, attr: usize, v: &Value, x: &mut [f64]) {
        let r = self.attr_vars[attr].clone();
        match v {
            Value::Cat(i) => {
                for j in r.clone() {
                    x[j] = 0.0;
                }
                x[r.start + *i as usize] = 1.0;
            }
            other => x[r.start] = other.as_f64(),
        }
    }

    /// Reads a configuration back from (possibly slightly fractional)
    /// encoding-variable values produced by a solver.
    pub fn decode(&self, x: &[f64]) -> Configuration {
        let values = self
            .def
            .attributes
            .iter()
            .enumerate()
            .map(|(a, attr)| {
                let r = self.attr_vars[a].clone();
                match &attr.kind {
                    AttributeKind::Boolean => Value::Bool(x[r.start] > 0.5),
                    AttributeKind::Categorical { .. } => {
                        let mut best = r.start;
                        for j in r.clone() {
                            if x[j] > x[best] {
                                best = j;
                            }
                        }
                        Value::Cat((best - r.start) as u32)
                    }
                    AttributeKind::Integer { lo, hi } => {
                        Value::Int((math::round(x[r.start]) as i64).clamp(*lo, *hi))
                    }
                    AttributeKind::Continuous { lo, hi } => Value::Real(x[r.start].clamp(*lo, *hi)),
                }
            })
            .collect();
        Configuration(values)
    }

    pub fn features_of_encoding(&self, x: &[f64]) -> Vec<f64> {
        self.features.iter().map(|f| f.eval(x)).collect()
    }

    /// Feature vector `phi(x, y)`. Features do not depend on the context in
    /// the built-in domains; the context is accepted for interface symmetry.
    pub fn featurize(&self, _x: &Context, y: &Configuration) -> Result<Vec<f64>, DomainError> {
        Ok(self.features_of_encoding(&self.encode(y)?))
    }

    pub fn resolve_context(&self, x: &Context) -> Result<ResolvedContext, DomainError> {
        let mut out = ResolvedContext::default();
        for (name, v) in &x.fixed {
            let a = self
                .attribute_index(name)
                .ok_or_else(|| DomainError::UnknownAttribute(name.clone()))?;
            let attr = &self.def.attributes[a];
            if !attr.kind.conforms(v, FEASIBILITY_TOL) {
                return Err(DomainError::TypeMismatch(name.clone()));
            }
            let r = self.attr_vars[a].clone();
            let row = match v {
                Value::Cat(i) => LinearRow::new(vec![(r.start + *i as usize, 1.0)], Cmp::Eq, 1.0),
                other => LinearRow::new(vec![(r.start, 1.0)], Cmp::Eq, other.as_f64()),
            };
            out.rows.push(row);
            out.fixed.push((a, v.clone()));
        }
        for c in &x.constraints {
            out.rows.push(self.resolve_constraint(c)?);
        }
        Ok(out)
    }

    /// All base and context constraints hold (tolerance 1e-9).
    pub fn feasible(&self, x: &Context, y: &Configuration) -> Result<bool, DomainError> {
        let enc = self.encode(y)?;
        let ctx = self.resolve_context(x)?;
        Ok(self
            .rows
            .iter()
            .chain(&ctx.rows)
            .all(|r| r.satisfied(&enc, FEASIBILITY_TOL)))
    }

    /// Collects every feasible configuration; fails if there are more than
    /// `limit` of them.
    pub fn enumerate(&self, x: &Context, limit: u64) -> Result<Vec<Configuration>, DomainError> {
        let mut out = Vec::new();
        self.for_each_feasible(x, limit, |y, _| out.push(y.clone()))?;
        Ok(out)
    }

    /// Number of feasible configurations (up to `limit`).
    pub fn count_feasible(&self, x: &Context, limit: u64) -> Result<u64, DomainError> {
        self.for_each_feasible(x, limit, |_, _| {})
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn small_def() -> DomainDef {
        DomainDef {
            name: "small".to_string(),
            attributes: vec![
                Attribute::new(
                    "color",
                    AttributeKind::Categorical {
                        values: vec!["red".to_string(), "blue".to_string(), "green".to_string()],
                    },
                ),
                Attribute::new("turbo", AttributeKind::Boolean),
                Attribute::new("seats", AttributeKind::Integer { lo: 2, hi: 4 }),
            ],
            constraints: vec![ConstraintDef::new(
                vec![("color=red".to_string(), 1.0), ("turbo".to_string(), 1.0)],
                Cmp::Le,
                1.0,
            )],
            features: vec![
                FeatureDef::indicator("color=red"),
                FeatureDef::indicator("color=blue"),
                FeatureDef::indicator("color=green"),
                FeatureDef::indicator("turbo"),
                FeatureDef {
                    name: "seats".to_string(),
                    terms: vec![("seats".to_string(), 1.0)],
                    constant: 0.0,
                },
            ],
            scale: BTreeMap::new(),
            context: None,
        }
    }

    #[test]
    fn encoding_and_features() {
        let spec = DomainSpec::new(small_def()).unwrap();
        assert_eq!(spec.vars().len(), 5);
        assert_eq!(spec.dim(), 5);
        let y = Configuration(vec![Value::Cat(1), Value::Bool(true), Value::Int(3)]);
        let phi = spec.featurize(&Context::empty(), &y).unwrap();
        assert_eq!(phi, vec![0.0, 1.0, 0.0, 1.0, 3.0]);
        assert_eq!(spec.decode(&spec.encode(&y).unwrap()), y);
    }

    #[test]
    fn feasibility_and_enumeration_agree() {
        let spec = DomainSpec::new(small_def()).unwrap();
        let all = spec.enumerate(&Context::empty(), 1000).unwrap();
        // 3 colors * 2 * 3 seats minus (red, turbo, *)
        assert_eq!(all.len(), 18 - 3);
        for y in &all {
            assert!(spec.feasible(&Context::empty(), y).unwrap());
        }
        let bad = Configuration(vec![Value::Cat(0), Value::Bool(true), Value::Int(2)]);
        assert!(!spec.feasible(&Context::empty(), &bad).unwrap());
    }

    #[test]
    fn context_restricts_enumeration() {
        let spec = DomainSpec::new(small_def()).unwrap();
        let ctx = Context::require_true(["turbo"]);
        let all = spec.enumerate(&ctx, 1000).unwrap();
        assert_eq!(all.len(), 2 * 3);
        assert!(all.iter().all(|y| y.0[1] == Value::Bool(true)));
    }

    #[test]
    fn enumeration_limit() {
        let spec = DomainSpec::new(small_def()).unwrap();
        assert_eq!(
            spec.enumerate(&Context::empty(), 10).unwrap_err(),
            DomainError::EnumerationLimit(10)
        );
    }

    #[test]
    fn rejects_bad_schemas() {
        let mut def = small_def();
        def.attributes.push(Attribute::new("turbo", AttributeKind::Boolean));
        assert!(matches!(
            DomainSpec::new(def),
            Err(DomainError::DuplicateAttribute(_))
        ));

        let mut def = small_def();
        def.attributes[2].kind = AttributeKind::Integer { lo: 5, hi: 1 };
        assert!(matches!(DomainSpec::new(def), Err(DomainError::InvalidBounds(_))));

        let mut def = small_def();
        def.attributes[0].kind = AttributeKind::Categorical {
            values: vec!["only".to_string()],
        };
        assert!(matches!(
            DomainSpec::new(def),
            Err(DomainError::CategoricalTooSmall(_))
        ));

        let mut def = small_def();
        def.constraints[0].terms[0].0 = "color=purple".to_string();
        assert!(matches!(DomainSpec::new(def), Err(DomainError::UnknownVariable(_))));
    }

    #[test]
    fn type_mismatch_is_schema_error() {
        let spec = DomainSpec::new(small_def()).unwrap();
        let y = Configuration(vec![Value::Int(0), Value::Bool(true), Value::Int(3)]);
        assert!(matches!(
            spec.featurize(&Context::empty(), &y),
            Err(DomainError::TypeMismatch(_))
        ));
        let short = Configuration(vec![Value::Cat(0)]);
        assert!(matches!(
            spec.featurize(&Context::empty(), &short),
            Err(DomainError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn radius_is_exhaustive_max_for_enumerable_domains() {
        let spec = DomainSpec::new(small_def()).unwrap();
        assert!(spec.radius_is_exact());
        // best: blue/green + turbo + 4 seats => sqrt(1 + 1 + 16)
        assert!((spec.radius() - math::sqrt(18.0)).abs() < 1e-12);
    }

    #[test]
    fn scale_divides_feature() {
        let mut def = small_def();
        def.scale.insert("seats".to_string(), 2.0);
        let spec = DomainSpec::new(def).unwrap();
        let y = Configuration(vec![Value::Cat(1), Value::Bool(false), Value::Int(3)]);
        let phi = spec.featurize(&Context::empty(), &y).unwrap();
        assert_eq!(phi[4], 1.5);
        assert!(!spec.features_integral());
    }
}
