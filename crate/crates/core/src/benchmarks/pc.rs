use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::domain::{
    Attribute, AttributeKind, Cmp, ConstraintDef, DomainDef, DomainSpec, FeatureDef,
};
use crate::error::DomainError;

/// A part option. Its price is either given directly or copied from
/// another part (`"Attribute=Part"`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Part {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub price: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub price_ref: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartAttribute {
    pub name: String,
    pub parts: Vec<Part>,
}

/// `all(if) => then`, over `"Attribute=Part"` indicators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HornRule {
    #[serde(rename = "if")]
    pub antecedents: Vec<String>,
    #[serde(rename = "then")]
    pub consequent: String,
}

/// Parts tables and compatibility rules (`parts.json`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcInstance {
    #[serde(default)]
    pub name: String,
    pub attributes: Vec<PartAttribute>,
    #[serde(default)]
    pub rules: Vec<HornRule>,
    /// Divisor applied to the price feature.
    #[serde(default = "one")]
    pub price_divisor: f64,
}

fn one() -> f64 {
    1.0
}

impl PcInstance {
    /// Resolved price of every part, keyed by `"Attribute=Part"`.
    pub fn resolved_prices(&self) -> Result<BTreeMap<String, f64>, DomainError> {
        let mut parts: BTreeMap<String, &Part> = BTreeMap::new();
        for a in &self.attributes {
            for p in &a.parts {
                parts.insert(format!("{}={}", a.name, p.name), p);
            }
        }
        let mut out = BTreeMap::new();
        for key in parts.keys() {
            let mut seen: Vec<&str> = Vec::new();
            let mut cur = key.as_str();
            let price = loop {
                if seen.contains(&cur) {
                    return Err(DomainError::Instance(format!(
                        "cyclic price definition through `{key}`"
                    )));
                }
                seen.push(cur);
                let part = parts
                    .get(cur)
                    .ok_or_else(|| DomainError::Instance(format!("dangling price reference `{cur}`")))?;
                match (&part.price, &part.price_ref) {
                    (Some(p), _) => break *p,
                    (None, Some(r)) => cur = r.as_str(),
                    (None, None) => {
                        return Err(DomainError::Instance(format!("part `{cur}` has no price")));
                    }
                }
            };
            if !price.is_finite() {
                return Err(DomainError::NonFinite(format!("price of `{key}`")));
            }
            out.insert(key.clone(), price);
        }
        Ok(out)
    }
}

/// One-hot part features plus a price feature; Horn rules become
/// `sum(antecedents) - consequent <= |antecedents| - 1`.
pub fn build_pc(inst: &PcInstance) -> Result<DomainSpec, DomainError> {
    let prices = inst.resolved_prices()?;
    let mut attributes = Vec::new();
    let mut features = Vec::new();
    let mut price_terms = Vec::new();
    for a in &inst.attributes {
        attributes.push(Attribute::new(
            a.name.clone(),
            AttributeKind::Categorical {
                values: a.parts.iter().map(|p| p.name.clone()).collect(),
            },
        ));
        for p in &a.parts {
            let key = format!("{}={}", a.name, p.name);
            features.push(FeatureDef::indicator(key.clone()));
            let price = prices[&key];
            if price != 0.0 {
                price_terms.push((key, price));
            }
        }
    }
    features.push(FeatureDef {
        name: "price".to_string(),
        terms: price_terms,
        constant: 0.0,
    });

    let mut constraints = Vec::new();
    for (i, rule) in inst.rules.iter().enumerate() {
        for name in rule.antecedents.iter().chain(core::iter::once(&rule.consequent)) {
            if !prices.contains_key(name) {
                return Err(DomainError::Instance(format!(
                    "rule {i} references unknown part `{name}`"
                )));
            }
        }
        let mut terms: Vec<(String, f64)> = rule.antecedents.iter().map(|a| (a.clone(), 1.0)).collect();
        terms.push((rule.consequent.clone(), -1.0));
        constraints.push(
            ConstraintDef::new(terms, Cmp::Le, rule.antecedents.len() as f64 - 1.0)
                .named(format!("horn{i}")),
        );
    }

    let mut scale = BTreeMap::new();
    if inst.price_divisor != 1.0 {
        scale.insert("price".to_string(), inst.price_divisor);
    }
    DomainSpec::new(DomainDef {
        name: if inst.name.is_empty() {
            "pc".to_string()
        } else {
            inst.name.clone()
        },
        attributes,
        constraints,
        features,
        scale,
        context: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use crate::domain::{Context, Value};

    fn part(name: &str, price: f64) -> Part {
        Part {
            name: name.to_string(),
            price: Some(price),
            price_ref: None,
        }
    }

    fn tiny() -> PcInstance {
        PcInstance {
            name: "tiny".to_string(),
            attributes: vec![
                PartAttribute {
                    name: "Manufacturer".to_string(),
                    parts: vec![part("Intel", 0.0), part("AMD", 0.0)],
                },
                PartAttribute {
                    name: "CPU".to_string(),
                    parts: vec![part("i5", 200.0), part("i7", 300.0), part("Ryzen5", 180.0)],
                },
            ],
            rules: vec![
                HornRule {
                    antecedents: vec!["CPU=i5".to_string()],
                    consequent: "Manufacturer=Intel".to_string(),
                },
                HornRule {
                    antecedents: vec!["CPU=i7".to_string()],
                    consequent: "Manufacturer=Intel".to_string(),
                },
                HornRule {
                    antecedents: vec!["CPU=Ryzen5".to_string()],
                    consequent: "Manufacturer=AMD".to_string(),
                },
            ],
            price_divisor: 1.0,
        }
    }

    #[test]
    fn horn_rules_filter_products() {
        let spec = build_pc(&tiny()).unwrap();
        let all = spec.enumerate(&Context::empty(), 100).unwrap();
        assert_eq!(all.len(), 3);
        for y in &all {
            let m = &y.0[0];
            let c = &y.0[1];
            let intel = *m == Value::Cat(0);
            let intel_cpu = *c != Value::Cat(2);
            assert_eq!(intel, intel_cpu);
        }
    }

    #[test]
    fn empty_rules_give_full_product() {
        let mut inst = tiny();
        inst.rules.clear();
        let spec = build_pc(&inst).unwrap();
        assert_eq!(spec.count_feasible(&Context::empty(), 100).unwrap(), 6);
    }

    #[test]
    fn price_references_and_errors() {
        let mut inst = tiny();
        inst.attributes[1].parts[2] = Part {
            name: "Ryzen5".to_string(),
            price: None,
            price_ref: Some("CPU=i5".to_string()),
        };
        assert_eq!(inst.resolved_prices().unwrap()["CPU=Ryzen5"], 200.0);

        inst.attributes[1].parts[0].price = None;
        inst.attributes[1].parts[0].price_ref = Some("CPU=Ryzen5".to_string());
        assert!(matches!(build_pc(&inst), Err(DomainError::Instance(m)) if m.contains("cyclic")));

        let mut inst = tiny();
        inst.rules[0].consequent = "Manufacturer=Via".to_string();
        assert!(matches!(build_pc(&inst), Err(DomainError::Instance(m)) if m.contains("unknown part")));

        let mut inst = tiny();
        inst.attributes[0].parts[0].price_ref = Some("GPU=none".to_string());
        inst.attributes[0].parts[0].price = None;
        assert!(matches!(build_pc(&inst), Err(DomainError::Instance(m)) if m.contains("dangling")));
    }
}
