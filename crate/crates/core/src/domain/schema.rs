use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math;

/// Kind of an attribute together with its bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AttributeKind {
    Boolean,
    Categorical { values: Vec<String> },
    Integer { lo: i64, hi: i64 },
    Continuous { lo: f64, hi: f64 },
}

impl AttributeKind {
    pub fn is_discrete(&self) -> bool {
        !matches!(self, AttributeKind::Continuous { .. })
    }

    /// Number of values for discrete kinds.
    pub fn cardinality(&self) -> Option<u64> {
        match self {
            AttributeKind::Boolean => Some(2),
            AttributeKind::Categorical { values } => Some(values.len() as u64),
            AttributeKind::Integer { lo, hi } => Some((hi - lo + 1) as u64),
            AttributeKind::Continuous { .. } => None,
        }
    }

    /// The `i`-th value in enumeration order.
    pub fn nth_value(&self, i: u64) -> Option<Value> {
        match self {
            AttributeKind::Boolean => match i {
                0 => Some(Value::Bool(false)),
                1 => Some(Value::Bool(true)),
                _ => None,
            },
            AttributeKind::Categorical { values } => {
                ((i as usize) < values.len()).then_some(Value::Cat(i as u32))
            }
            AttributeKind::Integer { lo, hi } => {
                let v = lo.checked_add(i as i64)?;
                (v <= *hi).then_some(Value::Int(v))
            }
            AttributeKind::Continuous { .. } => None,
        }
    }

    pub fn conforms(&self, v: &Value, tol: f64) -> bool {
        match (self, v) {
            (AttributeKind::Boolean, Value::Bool(_)) => true,
            (AttributeKind::Categorical { values }, Value::Cat(i)) => (*i as usize) < values.len(),
            (AttributeKind::Integer { lo, hi }, Value::Int(x)) => lo <= x && x <= hi,
            (AttributeKind::Continuous { lo, hi }, Value::Real(x)) => {
                x.is_finite() && *x >= lo - tol && *x <= hi + tol
            }
            _ => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    #[serde(flatten)]
    pub kind: AttributeKind,
}

impl Attribute {
    pub fn new(name: impl Into<String>, kind: AttributeKind) -> Self {
        Attribute {
            name: name.into(),
            kind,
        }
    }

    /// Human-readable rendering of a value of this attribute.
    pub fn render(&self, v: &Value) -> String {
        use alloc::format;
        match (&self.kind, v) {
            (AttributeKind::Categorical { values }, Value::Cat(i)) => values
                .get(*i as usize)
                .cloned()
                .unwrap_or_else(|| format!("#{i}")),
            (_, Value::Bool(b)) => format!("{b}"),
            (_, Value::Int(x)) => format!("{x}"),
            (_, Value::Real(x)) => format!("{x}"),
            (_, Value::Cat(i)) => format!("#{i}"),
        }
    }
}

/// A single attribute value. Categorical values are stored by index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Value {
    Bool(bool),
    Cat(u32),
    Int(i64),
    Real(f64),
}

impl Value {
    pub fn as_f64(&self) -> f64 {
        match self {
            Value::Bool(b) => f64::from(u8::from(*b)),
            Value::Cat(i) => f64::from(*i),
            Value::Int(x) => *x as f64,
            Value::Real(x) => *x,
        }
    }
}

/// One value per attribute, in schema order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Configuration(pub Vec<Value>);

impl Configuration {
    pub fn values(&self) -> &[Value] {
        &self.0
    }
}

/// Utility weights, either an estimate or a hidden ground truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeightVector(pub Vec<f64>);

impl WeightVector {
    pub fn zeros(d: usize) -> Self {
        WeightVector(alloc::vec![0.0; d])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        math::l2_norm(&self.0)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

/// Inner product `<w, phi>`, with no scaling.
pub fn utility(w: &WeightVector, phi: &[f64]) -> Result<f64, crate::DomainError> {
    if w.dim() != phi.len() {
        return Err(crate::DomainError::DimensionMismatch {
            expected: w.dim(),
            got: phi.len(),
        });
    }
    Ok(math::dot(&w.0, phi))
}
