//! Fixed-length real encoding of genotypes.
//!
//! Categorical dimensions are one-hot (one slot per choice), integer
//! dimensions take a single slot normalized to `[0, 1]`. Inactive integer
//! dimensions hold [`INACTIVE_SENTINEL`] so that every genotype of a space
//! encodes to the same length.

use serde::{Deserialize, Serialize};

use super::{Dim, DimDomain, DimValue, Genotype, SearchSpaceDef, SpaceError};

pub const INACTIVE_SENTINEL: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SlotKind {
    OneHot { choice: usize },
    Scalar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    pub dim: Dim,
    pub kind: SlotKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedVector {
    pub values: Vec<f64>,
}

impl EncodedVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn layout(space: &SearchSpaceDef) -> Vec<Slot> {
    let mut slots = Vec::new();
    for dim in space.dims() {
        match space.domain(dim) {
            DimDomain::Categorical(n) => {
                slots.extend((0..n).map(|choice| Slot {
                    dim,
                    kind: SlotKind::OneHot { choice },
                }));
            }
            DimDomain::Integer(_) => slots.push(Slot {
                dim,
                kind: SlotKind::Scalar,
            }),
        }
    }
    slots
}

pub fn encode(g: &Genotype, space: &SearchSpaceDef) -> EncodedVector {
    let mut values = Vec::new();
    for ((dim, domain), value) in space.domains().into_iter().zip(space.values(g)) {
        match (domain, value) {
            (DimDomain::Categorical(n), Some(DimValue::Choice(c))) => {
                values.extend((0..n).map(|i| if i == c { 1.0 } else { 0.0 }));
            }
            (DimDomain::Categorical(n), _) => {
                debug_assert!(false, "categorical {dim} without a value");
                values.extend(std::iter::repeat_n(0.0, n));
            }
            (DimDomain::Integer(r), Some(DimValue::Int(v))) => values.push(r.normalize(v)),
            (DimDomain::Integer(_), _) => values.push(INACTIVE_SENTINEL),
        }
    }
    EncodedVector { values }
}

/// Decodes any real vector of the right length: integer slots are clipped
/// and rounded, categorical slots resolved by argmax (lowest index on ties).
pub fn decode(v: &EncodedVector, space: &SearchSpaceDef) -> Result<Genotype, SpaceError> {
    let domains = space.domains();
    let expected: usize = domains
        .iter()
        .map(|(_, d)| match d {
            DimDomain::Categorical(n) => *n,
            DimDomain::Integer(_) => 1,
        })
        .sum();
    if v.values.len() != expected {
        return Err(SpaceError::LayoutMismatch {
            expected,
            actual: v.values.len(),
        });
    }
    let mut raw = Vec::with_capacity(domains.len());
    let mut at = 0;
    for (_, domain) in &domains {
        match *domain {
            DimDomain::Categorical(n) => {
                let slots = &v.values[at..at + n];
                let mut best = 0;
                let mut best_value = f64::NEG_INFINITY;
                for (i, &x) in slots.iter().enumerate() {
                    if x > best_value {
                        best = i;
                        best_value = x;
                    }
                }
                raw.push(DimValue::Choice(best));
                at += n;
            }
            DimDomain::Integer(r) => {
                raw.push(DimValue::Int(r.denormalize(v.values[at])));
                at += 1;
            }
        }
    }
    let choice_of = |dim: Dim| {
        domains
            .iter()
            .position(|(d, _)| *d == dim)
            .map(|i| match raw[i] {
                DimValue::Choice(c) => c,
                DimValue::Int(_) => 0,
            })
            .unwrap_or(0)
    };
    let layer_type = space.seq_layer_types[choice_of(super::Dim::LayerType)];
    let fusion = space.fusion_modes[choice_of(super::Dim::Fusion)];
    let values: Vec<Option<DimValue>> = domains
        .iter()
        .zip(raw)
        .map(|((dim, _), value)| space.is_active(*dim, layer_type, fusion).then_some(value))
        .collect();
    Ok(space.genotype_from_values(&values))
}
