use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;

use crate::domain::{Attribute, AttributeKind, DomainDef, DomainSpec, FeatureDef};
use crate::error::DomainError;

/// `r` categorical attributes with `r` values each, one-hot features
/// (`r^2` of them) and no constraints: `r^r` products.
pub fn build_synthetic(r: usize) -> Result<DomainSpec, DomainError> {
    if r < 2 {
        return Err(DomainError::Instance(format!(
            "synthetic domain needs r >= 2, got {r}"
        )));
    }
    let values: Vec<_> = (1..=r).map(|v| v.to_string()).collect();
    let attributes: Vec<Attribute> = (1..=r)
        .map(|i| {
            Attribute::new(
                format!("a{i}"),
                AttributeKind::Categorical {
                    values: values.clone(),
                },
            )
        })
        .collect();
    let features = attributes
        .iter()
        .flat_map(|a| values.iter().map(move |v| FeatureDef::indicator(format!("{}={}", a.name, v))))
        .collect();
    DomainSpec::new(DomainDef {
        name: format!("synthetic-r{r}"),
        attributes,
        constraints: Vec::new(),
        features,
        scale: Default::default(),
        context: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Configuration, Context, Value};
    use alloc::vec;

    #[test]
    fn sizes() {
        for (r, d, n) in [(2, 4, 4), (3, 9, 27), (4, 16, 256)] {
            let s = build_synthetic(r).unwrap();
            assert_eq!(s.dim(), d);
            assert_eq!(s.count_feasible(&Context::empty(), 1 << 20).unwrap(), n);
        }
        assert!(build_synthetic(1).is_err());
    }

    #[test]
    fn all_ones_product_has_four_hot_features() {
        let s = build_synthetic(4).unwrap();
        let y = Configuration(vec![Value::Cat(0); 4]);
        let phi = s.featurize(&Context::empty(), &y).unwrap();
        assert_eq!(phi.len(), 16);
        assert_eq!(phi.iter().filter(|&&v| v == 1.0).count(), 4);
        assert_eq!(phi.iter().filter(|&&v| v == 0.0).count(), 12);
        assert_eq!(s.radius(), 2.0);
    }
}
