use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    Dim, DimDomain, DimValue, DimValues, FusionMode, Genotype, LayerType, SearchSpaceDef,
    SpaceError,
};

/// Hill-climbing step per integer dimension. Layer counts and unit counts use
/// the same step for sequence blocks and the head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct StepSizes {
    pub layers: u32,
    pub units: u32,
    pub ff_dim: u32,
    pub heads: u32,
}

impl Default for StepSizes {
    fn default() -> Self {
        Self {
            layers: 1,
            units: 8,
            ff_dim: 16,
            heads: 2,
        }
    }
}

impl StepSizes {
    pub fn for_dim(&self, dim: Dim) -> u32 {
        match dim {
            Dim::Layers(_) | Dim::HeadLayers => self.layers,
            Dim::Units(_) | Dim::HeadUnits => self.units,
            Dim::FfDim(_) => self.ff_dim,
            Dim::Heads(_) => self.heads,
            Dim::LayerType | Dim::Fusion => 0,
        }
    }
}

/// A single-dimension change, indexed into [`SearchSpaceDef::dims`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Move {
    pub dim: usize,
    pub kind: MoveKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MoveKind {
    Step(i64),
    Switch(usize),
}

fn index_of(value: DimValue, domain: DimDomain) -> usize {
    match (value, domain) {
        (DimValue::Choice(c), _) => c,
        (DimValue::Int(v), DimDomain::Integer(r)) => (v - r.min) as usize,
        (DimValue::Int(_), DimDomain::Categorical(_)) => 0,
    }
}

fn value_at(domain: DimDomain, k: usize) -> DimValue {
    match domain {
        DimDomain::Categorical(_) => DimValue::Choice(k),
        DimDomain::Integer(r) => DimValue::Int(r.min + k as u32),
    }
}

fn categorical_choices(
    space: &SearchSpaceDef,
    domains: &[(Dim, DimDomain)],
    values: &[Option<DimValue>],
) -> (LayerType, FusionMode) {
    let mut layer_type = space.seq_layer_types[0];
    let mut fusion = space.fusion_modes[0];
    for ((dim, _), value) in domains.iter().zip(values) {
        match (dim, value) {
            (Dim::LayerType, Some(DimValue::Choice(c))) => layer_type = space.seq_layer_types[*c],
            (Dim::Fusion, Some(DimValue::Choice(c))) => fusion = space.fusion_modes[*c],
            _ => {}
        }
    }
    (layer_type, fusion)
}

/// Clears values of dimensions that became inactive and fills the ones that
/// became active through `fill`.
fn repair(
    space: &SearchSpaceDef,
    domains: &[(Dim, DimDomain)],
    values: &mut [Option<DimValue>],
    mut fill: impl FnMut(Dim, DimDomain) -> DimValue,
) {
    let (layer_type, fusion) = categorical_choices(space, domains, values);
    for ((dim, domain), value) in domains.iter().zip(values.iter_mut()) {
        let active = space.is_active(*dim, layer_type, fusion);
        match (active, value.is_some()) {
            (true, false) => *value = Some(fill(*dim, *domain)),
            (false, true) => *value = None,
            _ => {}
        }
    }
}

fn uniform_value<R: Rng + ?Sized>(rng: &mut R, domain: DimDomain) -> DimValue {
    match domain {
        DimDomain::Categorical(n) => DimValue::Choice(rng.random_range(0..n)),
        DimDomain::Integer(r) => DimValue::Int(rng.random_range(r.min..=r.max)),
    }
}

/// Draws a genotype with every active dimension uniform over its range.
pub fn sample_with<R: Rng + ?Sized>(space: &SearchSpaceDef, rng: &mut R) -> Genotype {
    let domains = space.domains();
    let mut values: DimValues = vec![None; domains.len()];
    let mut layer_type = space.seq_layer_types[0];
    let mut fusion = space.fusion_modes[0];
    for (i, &(dim, domain)) in domains.iter().enumerate() {
        match dim {
            Dim::LayerType => {
                let c = rng.random_range(0..space.seq_layer_types.len());
                layer_type = space.seq_layer_types[c];
                values[i] = Some(DimValue::Choice(c));
            }
            Dim::Fusion => {
                let c = rng.random_range(0..space.fusion_modes.len());
                fusion = space.fusion_modes[c];
                values[i] = Some(DimValue::Choice(c));
            }
            _ if space.is_active(dim, layer_type, fusion) => {
                values[i] = Some(uniform_value(rng, domain));
            }
            _ => {}
        }
    }
    space.genotype_from_values(&values)
}

pub fn sample_uniform(space: &SearchSpaceDef, rng_seed: u64) -> Result<Genotype, SpaceError> {
    space.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    Ok(sample_with(space, &mut rng))
}

/// Re-samples exactly one active dimension (excluding its current value).
/// Layer-type and fusion changes sample the dimensions they activate and
/// clear the ones they deactivate.
pub fn mutate_with<R: Rng + ?Sized>(g: &Genotype, space: &SearchSpaceDef, rng: &mut R) -> Genotype {
    let domains = space.domains();
    let mut values = space.values(g);
    let mutable: Vec<usize> = (0..domains.len())
        .filter(|&i| values[i].is_some() && domains[i].1.cardinality() >= 2)
        .collect();
    if mutable.is_empty() {
        return g.clone();
    }
    let i = mutable[rng.random_range(0..mutable.len())];
    let domain = domains[i].1;
    let current = index_of(values[i].expect("active"), domain);
    let mut k = rng.random_range(0..domain.cardinality() - 1);
    if k >= current {
        k += 1;
    }
    values[i] = Some(value_at(domain, k));
    repair(space, &domains, &mut values, |_, d| uniform_value(rng, d));
    space.genotype_from_values(&values)
}

pub fn mutate(g: &Genotype, space: &SearchSpaceDef, rng_seed: u64) -> Genotype {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    mutate_with(g, space, &mut rng)
}

/// Every genotype one move away from `g`, paired with the move.
///
/// Integer dimensions move by `±step` (moves leaving the range are dropped),
/// categorical dimensions switch to each other choice. Switching to TST sets
/// the feed-forward width and head count to their minima; switching to a
/// fusion mode with more blocks copies the last existing block.
pub fn neighbor_moves(
    g: &Genotype,
    space: &SearchSpaceDef,
    steps: &StepSizes,
) -> Vec<(Move, Genotype)> {
    let domains = space.domains();
    let base = space.values(g);
    let mut out: Vec<(Move, Genotype)> = Vec::new();
    let mut push = |mv: Move, candidate: Genotype| {
        if candidate != *g && !out.iter().any(|(_, c)| *c == candidate) {
            out.push((mv, candidate));
        }
    };
    for (i, &(dim, domain)) in domains.iter().enumerate() {
        let Some(value) = base[i] else { continue };
        match (value, domain) {
            (DimValue::Int(v), DimDomain::Integer(r)) => {
                let step = i64::from(steps.for_dim(dim));
                if step == 0 {
                    continue;
                }
                for delta in [-step, step] {
                    let nv = i64::from(v) + delta;
                    if nv < i64::from(r.min) || nv > i64::from(r.max) {
                        continue;
                    }
                    let mut values = base.clone();
                    values[i] = Some(DimValue::Int(nv as u32));
                    push(
                        Move {
                            dim: i,
                            kind: MoveKind::Step(delta),
                        },
                        space.genotype_from_values(&values),
                    );
                }
            }
            (DimValue::Choice(c), DimDomain::Categorical(n)) => {
                let old_count = g.branches.len();
                for other in (0..n).filter(|&o| o != c) {
                    let mut values = base.clone();
                    values[i] = Some(DimValue::Choice(other));
                    repair(space, &domains, &mut values, |d, dom| {
                        inherited_value(g, old_count, d).unwrap_or_else(|| minimum(dom))
                    });
                    push(
                        Move {
                            dim: i,
                            kind: MoveKind::Switch(other),
                        },
                        space.genotype_from_values(&values),
                    );
                }
            }
            _ => {}
        }
    }
    out
}

fn minimum(domain: DimDomain) -> DimValue {
    value_at(domain, 0)
}

fn inherited_value(g: &Genotype, old_count: usize, dim: Dim) -> Option<DimValue> {
    let (b, pick): (usize, fn(&super::SequenceBlock) -> Option<u32>) = match dim {
        Dim::Layers(b) => (b, |x| Some(x.num_layers)),
        Dim::Units(b) => (b, |x| Some(x.num_units)),
        Dim::FfDim(b) => (b, |x| x.ff_dim),
        Dim::Heads(b) => (b, |x| x.attention_heads),
        _ => return None,
    };
    if b < old_count {
        return None;
    }
    g.branches.last().and_then(pick).map(DimValue::Int)
}

pub fn neighbors(g: &Genotype, space: &SearchSpaceDef, steps: &StepSizes) -> Vec<Genotype> {
    neighbor_moves(g, space, steps)
        .into_iter()
        .map(|(_, candidate)| candidate)
        .collect()
}

/// Per-dimension distance averaged over all dimensions of the space:
/// normalized absolute difference for integers, 0/1 mismatch for
/// categoricals, 0 when inactive in both and 1 when active in exactly one.
///
/// Every term is a pseudometric on its own and the denominator is fixed, so
/// the mean satisfies the triangle inequality.
pub fn value_distance(
    domains: &[(Dim, DimDomain)],
    a: &[Option<DimValue>],
    b: &[Option<DimValue>],
) -> f64 {
    if domains.is_empty() {
        return 0.0;
    }
    let total: f64 = domains
        .iter()
        .zip(a.iter().zip(b))
        .map(|((_, domain), pair)| match pair {
            (None, None) => 0.0,
            (Some(_), None) | (None, Some(_)) => 1.0,
            (Some(DimValue::Choice(x)), Some(DimValue::Choice(y))) => f64::from(u8::from(x != y)),
            (Some(DimValue::Int(x)), Some(DimValue::Int(y))) => match domain {
                DimDomain::Integer(r) if r.width() > 0 => {
                    f64::from(x.abs_diff(*y)) / f64::from(r.width())
                }
                _ => 0.0,
            },
            _ => 1.0,
        })
        .sum();
    total / domains.len() as f64
}

pub fn distance(a: &Genotype, b: &Genotype, space: &SearchSpaceDef) -> f64 {
    value_distance(&space.domains(), &space.values(a), &space.values(b))
}

/// Lists every genotype of the space, refusing spaces above `cap`.
pub fn enumerate(space: &SearchSpaceDef, cap: usize) -> Result<Vec<Genotype>, SpaceError> {
    space.validate()?;
    let domains = space.domains();
    let mut size: u128 = 0;
    for &layer_type in &space.seq_layer_types {
        for &fusion in &space.fusion_modes {
            size += domains
                .iter()
                .filter(|(d, _)| !matches!(d, Dim::LayerType | Dim::Fusion))
                .filter(|(d, _)| space.is_active(*d, layer_type, fusion))
                .map(|(_, dom)| dom.cardinality() as u128)
                .product::<u128>();
        }
    }
    if size > cap as u128 {
        return Err(SpaceError::TooLarge { size, cap });
    }
    let mut out = Vec::with_capacity(size as usize);
    for (ti, &layer_type) in space.seq_layer_types.iter().enumerate() {
        for (fi, &fusion) in space.fusion_modes.iter().enumerate() {
            let mut values: DimValues = domains
                .iter()
                .map(|&(d, dom)| match d {
                    Dim::LayerType => Some(DimValue::Choice(ti)),
                    Dim::Fusion => Some(DimValue::Choice(fi)),
                    _ if space.is_active(d, layer_type, fusion) => Some(minimum(dom)),
                    _ => None,
                })
                .collect();
            let free: Vec<usize> = (0..domains.len())
                .filter(|&i| {
                    values[i].is_some() && !matches!(domains[i].0, Dim::LayerType | Dim::Fusion)
                })
                .collect();
            // odometer over the active integer dimensions
            loop {
                out.push(space.genotype_from_values(&values));
                let mut carry = true;
                for &i in free.iter().rev() {
                    let DimDomain::Integer(r) = domains[i].1 else {
                        continue;
                    };
                    let Some(DimValue::Int(v)) = values[i] else {
                        continue;
                    };
                    if v < r.max {
                        values[i] = Some(DimValue::Int(v + 1));
                        carry = false;
                        break;
                    }
                    values[i] = Some(DimValue::Int(r.min));
                }
                if carry {
                    break;
                }
            }
        }
    }
    Ok(out)
}
