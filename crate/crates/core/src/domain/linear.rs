use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Cmp {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = ">=")]
    Ge,
}

impl Cmp {
    pub fn holds(self, lhs: f64, rhs: f64, tol: f64) -> bool {
        match self {
            Cmp::Le => lhs <= rhs + tol,
            Cmp::Eq => lhs <= rhs + tol && lhs >= rhs - tol,
            Cmp::Ge => lhs >= rhs - tol,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Cmp::Le => "<=",
            Cmp::Eq => "=",
            Cmp::Ge => ">=",
        }
    }
}

/// `sum(coef * x[var]) cmp rhs` over variable indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearRow {
    pub terms: Vec<(usize, f64)>,
    pub cmp: Cmp,
    pub rhs: f64,
}

impl LinearRow {
    pub fn new(terms: Vec<(usize, f64)>, cmp: Cmp, rhs: f64) -> Self {
        LinearRow { terms, cmp, rhs }
    }

    pub fn lhs(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(j, c)| c * x[j]).sum()
    }

    pub fn satisfied(&self, x: &[f64], tol: f64) -> bool {
        self.cmp.holds(self.lhs(x), self.rhs, tol)
    }

    /// Whether the row can still hold given per-variable intervals.
    pub fn possible(&self, lo: &[f64], hi: &[f64], tol: f64) -> bool {
        let (mut min, mut max) = (0.0, 0.0);
        for &(j, c) in &self.terms {
            if c >= 0.0 {
                min += c * lo[j];
                max += c * hi[j];
            } else {
                min += c * hi[j];
                max += c * lo[j];
            }
        }
        match self.cmp {
            Cmp::Le => min <= self.rhs + tol,
            Cmp::Ge => max >= self.rhs - tol,
            Cmp::Eq => min <= self.rhs + tol && max >= self.rhs - tol,
        }
    }
}

/// Affine expression `(sum(coef * x[var]) + constant) / divisor`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub name: alloc::string::String,
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
    pub divisor: f64,
}

impl FeatureRow {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let s: f64 = self.terms.iter().map(|&(j, c)| c * x[j]).sum();
        (s + self.constant) / self.divisor
    }

    /// Terms with the divisor folded in, plus the folded constant.
    pub fn scaled(&self) -> (Vec<(usize, f64)>, f64) {
        (
            self.terms
                .iter()
                .map(|&(j, c)| (j, c / self.divisor))
                .collect(),
            self.constant / self.divisor,
        )
    }

    /// Range of the feature given per-variable bounds.
    pub fn interval(&self, lo: &[f64], hi: &[f64]) -> (f64, f64) {
        let (mut min, mut max) = (self.constant, self.constant);
        for &(j, c) in &self.terms {
            if c >= 0.0 {
                min += c * lo[j];
                max += c * hi[j];
            } else {
                min += c * hi[j];
                max += c * lo[j];
            }
        }
        (min / self.divisor, max / self.divisor)
    }
}
