//! Serializable domain definition (the JSON domain file model).

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::linear::Cmp;
use super::schema::Attribute;

/// A linear constraint over named encoding variables.
///
/// Variables are referenced as `attr` (boolean, integer and continuous
/// attributes) or `attr=value` (one-hot indicator of a categorical value).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintDef {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub terms: Vec<(String, f64)>,
    pub cmp: Cmp,
    pub rhs: f64,
}

impl ConstraintDef {
    pub fn new(terms: Vec<(String, f64)>, cmp: Cmp, rhs: f64) -> Self {
        ConstraintDef {
            name: None,
            terms,
            cmp,
            rhs,
        }
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }
}

/// A feature row: a linear expression over named encoding variables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureDef {
    pub name: String,
    pub terms: Vec<(String, f64)>,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub constant: f64,
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

impl FeatureDef {
    pub fn indicator(var: impl Into<String>) -> Self {
        let var = var.into();
        FeatureDef {
            name: var.clone(),
            terms: alloc::vec![(var, 1.0)],
            constant: 0.0,
        }
    }
}

/// Contexts made of "must take value true" subsets of boolean attributes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContextPool {
    /// Boolean attributes that a context may force to true.
    pub required_true: Vec<String>,
    /// Allowed subset sizes.
    pub sizes: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainDef {
    #[serde(default)]
    pub name: String,
    pub attributes: Vec<Attribute>,
    #[serde(default)]
    pub constraints: Vec<ConstraintDef>,
    pub features: Vec<FeatureDef>,
    /// Per-feature divisors; missing features use 1.
    #[serde(default)]
    pub scale: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<ContextPool>,
}
