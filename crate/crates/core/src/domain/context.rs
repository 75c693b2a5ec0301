use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::def::ConstraintDef;
use super::linear::LinearRow;
use super::schema::Value;

/// Per-iteration context: fixed attribute values and extra constraints.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Context {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fixed: Vec<(String, Value)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub constraints: Vec<ConstraintDef>,
}

impl Context {
    pub fn empty() -> Self {
        Context::default()
    }

    pub fn is_empty(&self) -> bool {
        self.fixed.is_empty() && self.constraints.is_empty()
    }

    /// Context forcing each named boolean attribute to true.
    pub fn require_true<I, S>(attrs: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Context {
            fixed: attrs
                .into_iter()
                .map(|a| (a.into(), Value::Bool(true)))
                .collect(),
            constraints: Vec::new(),
        }
    }
}

/// A context resolved against a domain's encoding.
#[derive(Clone, Debug, Default)]
pub struct ResolvedContext {
    /// `(attribute index, value)`.
    pub fixed: Vec<(usize, Value)>,
    /// Rows over encoding variables, including the fixed assignments.
    pub rows: Vec<LinearRow>,
}
