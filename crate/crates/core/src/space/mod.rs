//! Block-encoded architecture search space.
//!
//! An architecture is a sequence-representation block (LSTM, TCN or TST)
//! followed by a dense classification head. Multimodal spaces add a fusion
//! choice that decides how many sequence blocks the genotype carries:
//!
//! | fusion         | blocks                                   |
//! |----------------|------------------------------------------|
//! | `none`/`early` | 1                                        |
//! | `late`         | one per modality                         |
//! | `intermediate` | one per modality plus one shared block   |
//!
//! Every operation on genotypes works on a flat list of logical dimensions
//! ([`Dim`]); see [`SearchSpaceDef::dims`] for the canonical order.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

mod encoding;
mod ops;

pub use encoding::{decode, encode, layout, EncodedVector, Slot, SlotKind};
pub use ops::{
    distance, enumerate, mutate, mutate_with, neighbor_moves, neighbors, sample_uniform,
    sample_with, value_distance, Move, MoveKind, StepSizes,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpaceError {
    #[error("invalid search space: {}", .0.join("; "))]
    InvalidSpace(Vec<String>),
    #[error("genotype does not fit the search space: {}", .0.join("; "))]
    InvalidGenotype(Vec<String>),
    #[error("encoded vector has {actual} slots, layout expects {expected}")]
    LayoutMismatch { expected: usize, actual: usize },
    #[error("search space holds {size} genotypes, above the enumeration cap of {cap}")]
    TooLarge { size: u128, cap: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LayerType {
    #[serde(rename = "LSTM")]
    Lstm,
    #[serde(rename = "TCN")]
    Tcn,
    #[serde(rename = "TST")]
    Tst,
}

impl LayerType {
    pub const ALL: [LayerType; 3] = [LayerType::Lstm, LayerType::Tcn, LayerType::Tst];

    pub fn as_str(self) -> &'static str {
        match self {
            LayerType::Lstm => "LSTM",
            LayerType::Tcn => "TCN",
            LayerType::Tst => "TST",
        }
    }
}

impl fmt::Display for LayerType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LayerType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "LSTM" => Ok(LayerType::Lstm),
            "TCN" => Ok(LayerType::Tcn),
            "TST" => Ok(LayerType::Tst),
            other => Err(format!("unknown layer type `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionMode {
    None,
    Early,
    Intermediate,
    Late,
}

impl FusionMode {
    pub const ALL: [FusionMode; 4] = [
        FusionMode::None,
        FusionMode::Early,
        FusionMode::Intermediate,
        FusionMode::Late,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FusionMode::None => "none",
            FusionMode::Early => "early",
            FusionMode::Intermediate => "intermediate",
            FusionMode::Late => "late",
        }
    }
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FusionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(FusionMode::None),
            "early" => Ok(FusionMode::Early),
            "intermediate" => Ok(FusionMode::Intermediate),
            "late" => Ok(FusionMode::Late),
            other => Err(format!("unknown fusion mode `{other}`")),
        }
    }
}

/// Inclusive integer range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IntRange {
    pub min: u32,
    pub max: u32,
}

impl IntRange {
    pub const fn new(min: u32, max: u32) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, v: u32) -> bool {
        self.min <= v && v <= self.max
    }

    pub fn width(&self) -> u32 {
        self.max - self.min
    }

    pub fn cardinality(&self) -> usize {
        (self.max - self.min) as usize + 1
    }

    /// Maps `v` onto `[0, 1]`; a single-valued range maps to 0.
    pub fn normalize(&self, v: u32) -> f64 {
        if self.max == self.min {
            0.0
        } else {
            (f64::from(v) - f64::from(self.min)) / f64::from(self.width())
        }
    }

    /// Inverse of [`normalize`](Self::normalize): clips to `[0, 1]` and rounds
    /// to the nearest integer value.
    pub fn denormalize(&self, x: f64) -> u32 {
        let x = if x.is_nan() { 0.0 } else { x.clamp(0.0, 1.0) };
        let offset = (x * f64::from(self.width())).round() as u32;
        (self.min + offset).min(self.max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSpaceDef {
    pub seq_layer_types: Vec<LayerType>,
    pub seq_num_layers: IntRange,
    pub seq_num_units: IntRange,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tst_ff_dim: Option<IntRange>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tst_attention_heads: Option<IntRange>,
    pub head_num_layers: IntRange,
    pub head_num_units: IntRange,
    #[serde(default = "default_fusion_modes")]
    pub fusion_modes: Vec<FusionMode>,
    #[serde(default = "default_modalities")]
    pub num_modalities: u32,
}

fn default_fusion_modes() -> Vec<FusionMode> {
    vec![FusionMode::None]
}

fn default_modalities() -> u32 {
    1
}

/// One logical dimension of a search space. Branch dimensions carry the
/// index of the sequence block they belong to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Dim {
    LayerType,
    Fusion,
    Layers(usize),
    Units(usize),
    FfDim(usize),
    Heads(usize),
    HeadLayers,
    HeadUnits,
}

impl fmt::Display for Dim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dim::LayerType => write!(f, "layer_type"),
            Dim::Fusion => write!(f, "fusion"),
            Dim::Layers(b) => write!(f, "branches[{b}].num_layers"),
            Dim::Units(b) => write!(f, "branches[{b}].num_units"),
            Dim::FfDim(b) => write!(f, "branches[{b}].ff_dim"),
            Dim::Heads(b) => write!(f, "branches[{b}].attention_heads"),
            Dim::HeadLayers => write!(f, "head.num_layers"),
            Dim::HeadUnits => write!(f, "head.num_units"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DimDomain {
    /// Index into the space's list of choices.
    Categorical(usize),
    Integer(IntRange),
}

impl DimDomain {
    pub fn cardinality(&self) -> usize {
        match self {
            DimDomain::Categorical(n) => *n,
            DimDomain::Integer(r) => r.cardinality(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DimValue {
    Choice(usize),
    Int(u32),
}

/// Values of a genotype along [`SearchSpaceDef::dims`]; `None` marks an
/// inactive dimension.
pub type DimValues = Vec<Option<DimValue>>;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SequenceBlock {
    pub num_layers: u32,
    pub num_units: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ff_dim: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attention_heads: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ClassificationHead {
    pub num_layers: u32,
    pub num_units: u32,
}

/// One concrete architecture.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Genotype {
    pub layer_type: LayerType,
    pub fusion: FusionMode,
    pub branches: Vec<SequenceBlock>,
    pub head: ClassificationHead,
}

impl Genotype {
    pub fn validate(&self, space: &SearchSpaceDef) -> Result<(), SpaceError> {
        let mut issues = Vec::new();
        if !space.seq_layer_types.contains(&self.layer_type) {
            issues.push(format!("layer_type {} not in space", self.layer_type));
        }
        if !space.fusion_modes.contains(&self.fusion) {
            issues.push(format!("fusion {} not in space", self.fusion));
        }
        let expected = space.branch_count(self.fusion);
        if self.branches.len() != expected {
            issues.push(format!(
                "branches: fusion {} needs {expected} blocks, found {}",
                self.fusion,
                self.branches.len()
            ));
        }
        let is_tst = self.layer_type == LayerType::Tst;
        for (b, block) in self.branches.iter().enumerate() {
            check_range(
                &mut issues,
                &format!("branches[{b}].num_layers"),
                space.seq_num_layers,
                block.num_layers,
            );
            check_range(
                &mut issues,
                &format!("branches[{b}].num_units"),
                space.seq_num_units,
                block.num_units,
            );
            for (name, value, range) in [
                ("ff_dim", block.ff_dim, space.tst_ff_dim),
                (
                    "attention_heads",
                    block.attention_heads,
                    space.tst_attention_heads,
                ),
            ] {
                match (is_tst, value, range) {
                    (true, Some(v), Some(r)) => {
                        check_range(&mut issues, &format!("branches[{b}].{name}"), r, v)
                    }
                    (true, None, _) => {
                        issues.push(format!("branches[{b}].{name} required for TST"))
                    }
                    (false, Some(_), _) => {
                        issues.push(format!("branches[{b}].{name} only allowed for TST"))
                    }
                    _ => {}
                }
            }
        }
        check_range(
            &mut issues,
            "head.num_layers",
            space.head_num_layers,
            self.head.num_layers,
        );
        check_range(
            &mut issues,
            "head.num_units",
            space.head_num_units,
            self.head.num_units,
        );
        if issues.is_empty() {
            Ok(())
        } else {
            Err(SpaceError::InvalidGenotype(issues))
        }
    }

    /// Short human-readable label, e.g. `TST/late`.
    pub fn label(&self) -> String {
        format!("{}/{}", self.layer_type, self.fusion)
    }
}

fn check_range(issues: &mut Vec<String>, field: &str, range: IntRange, v: u32) {
    if !range.contains(v) {
        issues.push(format!(
            "{field} = {v} outside [{}, {}]",
            range.min, range.max
        ));
    }
}

impl SearchSpaceDef {
    /// The single-modality space: LSTM/TCN/TST, 1-4 layers of 8-256 units,
    /// TST feed-forward 16-256 and 2-16 heads, head of 1-3 layers with 8-128 units.
    pub fn standard() -> Self {
        Self {
            seq_layer_types: LayerType::ALL.to_vec(),
            seq_num_layers: IntRange::new(1, 4),
            seq_num_units: IntRange::new(8, 256),
            tst_ff_dim: Some(IntRange::new(16, 256)),
            tst_attention_heads: Some(IntRange::new(2, 16)),
            head_num_layers: IntRange::new(1, 3),
            head_num_units: IntRange::new(8, 128),
            fusion_modes: vec![FusionMode::None],
            num_modalities: 1,
        }
    }

    /// The standard space over `num_modalities` inputs with early, intermediate
    /// and late fusion.
    pub fn standard_multimodal(num_modalities: u32) -> Self {
        Self {
            fusion_modes: vec![
                FusionMode::Early,
                FusionMode::Intermediate,
                FusionMode::Late,
            ],
            num_modalities,
            ..Self::standard()
        }
    }

    pub fn validate(&self) -> Result<(), SpaceError> {
        let mut issues = Vec::new();
        if self.seq_layer_types.is_empty() {
            issues.push("seq_layer_types: empty".to_string());
        }
        if has_duplicates(&self.seq_layer_types) {
            issues.push("seq_layer_types: duplicate entries".to_string());
        }
        for (name, r) in [
            ("seq_num_layers", Some(self.seq_num_layers)),
            ("seq_num_units", Some(self.seq_num_units)),
            ("tst_ff_dim", self.tst_ff_dim),
            ("tst_attention_heads", self.tst_attention_heads),
            ("head_num_layers", Some(self.head_num_layers)),
            ("head_num_units", Some(self.head_num_units)),
        ] {
            if let Some(r) = r {
                if r.min > r.max {
                    issues.push(format!("{name}: min {} > max {}", r.min, r.max));
                }
                if r.min == 0 {
                    issues.push(format!("{name}: min must be at least 1"));
                }
            }
        }
        let has_tst = self.has_tst();
        for (name, r) in [
            ("tst_ff_dim", self.tst_ff_dim),
            ("tst_attention_heads", self.tst_attention_heads),
        ] {
            match (has_tst, r.is_some()) {
                (true, false) => issues.push(format!("{name}: required when TST is searched")),
                (false, true) => issues.push(format!("{name}: only allowed when TST is searched")),
                _ => {}
            }
        }
        if self.fusion_modes.is_empty() {
            issues.push("fusion_modes: empty".to_string());
        }
        if has_duplicates(&self.fusion_modes) {
            issues.push("fusion_modes: duplicate entries".to_string());
        }
        if self.num_modalities == 0 {
            issues.push("num_modalities: must be at least 1".to_string());
        } else if self.num_modalities == 1 {
            if self.fusion_modes != [FusionMode::None] {
                issues.push("fusion_modes: a single modality only allows [none]".to_string());
            }
        } else if self.fusion_modes.contains(&FusionMode::None) {
            issues.push("fusion_modes: `none` requires num_modalities = 1".to_string());
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(SpaceError::InvalidSpace(issues))
        }
    }

    pub fn has_tst(&self) -> bool {
        self.seq_layer_types.contains(&LayerType::Tst)
    }

    /// Number of sequence blocks a genotype with `fusion` carries.
    pub fn branch_count(&self, fusion: FusionMode) -> usize {
        let m = self.num_modalities as usize;
        match fusion {
            FusionMode::None | FusionMode::Early => 1,
            FusionMode::Late => m,
            FusionMode::Intermediate => m + 1,
        }
    }

    pub fn max_branches(&self) -> usize {
        self.fusion_modes
            .iter()
            .map(|&f| self.branch_count(f))
            .max()
            .unwrap_or(1)
    }

    /// Logical dimensions in canonical order: layer type, fusion (multimodal
    /// spaces only), per-block dimensions for every possible block, then the head.
    pub fn dims(&self) -> Vec<Dim> {
        let mut dims = vec![Dim::LayerType];
        if self.num_modalities > 1 {
            dims.push(Dim::Fusion);
        }
        let has_tst = self.has_tst();
        for b in 0..self.max_branches() {
            dims.push(Dim::Layers(b));
            dims.push(Dim::Units(b));
            if has_tst {
                dims.push(Dim::FfDim(b));
                dims.push(Dim::Heads(b));
            }
        }
        dims.push(Dim::HeadLayers);
        dims.push(Dim::HeadUnits);
        dims
    }

    pub fn domain(&self, dim: Dim) -> DimDomain {
        match dim {
            Dim::LayerType => DimDomain::Categorical(self.seq_layer_types.len()),
            Dim::Fusion => DimDomain::Categorical(self.fusion_modes.len()),
            Dim::Layers(_) => DimDomain::Integer(self.seq_num_layers),
            Dim::Units(_) => DimDomain::Integer(self.seq_num_units),
            Dim::FfDim(_) => DimDomain::Integer(self.tst_ff_dim.unwrap_or(IntRange::new(1, 1))),
            Dim::Heads(_) => {
                DimDomain::Integer(self.tst_attention_heads.unwrap_or(IntRange::new(1, 1)))
            }
            Dim::HeadLayers => DimDomain::Integer(self.head_num_layers),
            Dim::HeadUnits => DimDomain::Integer(self.head_num_units),
        }
    }

    pub fn domains(&self) -> Vec<(Dim, DimDomain)> {
        self.dims()
            .into_iter()
            .map(|d| (d, self.domain(d)))
            .collect()
    }

    /// Whether `dim` is active for a genotype with the given categorical choices.
    pub fn is_active(&self, dim: Dim, layer_type: LayerType, fusion: FusionMode) -> bool {
        let count = self.branch_count(fusion);
        match dim {
            Dim::LayerType | Dim::Fusion | Dim::HeadLayers | Dim::HeadUnits => true,
            Dim::Layers(b) | Dim::Units(b) => b < count,
            Dim::FfDim(b) | Dim::Heads(b) => b < count && layer_type == LayerType::Tst,
        }
    }

    /// Projects `g` onto [`dims`](Self::dims). `g` must be valid for the space.
    pub fn values(&self, g: &Genotype) -> DimValues {
        self.dims()
            .into_iter()
            .map(|d| match d {
                Dim::LayerType => self
                    .seq_layer_types
                    .iter()
                    .position(|&t| t == g.layer_type)
                    .map(DimValue::Choice),
                Dim::Fusion => self
                    .fusion_modes
                    .iter()
                    .position(|&f| f == g.fusion)
                    .map(DimValue::Choice),
                Dim::Layers(b) => g.branches.get(b).map(|x| DimValue::Int(x.num_layers)),
                Dim::Units(b) => g.branches.get(b).map(|x| DimValue::Int(x.num_units)),
                Dim::FfDim(b) => g.branches.get(b).and_then(|x| x.ff_dim).map(DimValue::Int),
                Dim::Heads(b) => g
                    .branches
                    .get(b)
                    .and_then(|x| x.attention_heads)
                    .map(DimValue::Int),
                Dim::HeadLayers => Some(DimValue::Int(g.head.num_layers)),
                Dim::HeadUnits => Some(DimValue::Int(g.head.num_units)),
            })
            .collect()
    }

    /// Builds a genotype from values along [`dims`](Self::dims). Inactive
    /// values are ignored; missing active values fall back to range minima.
    pub fn genotype_from_values(&self, values: &[Option<DimValue>]) -> Genotype {
        let dims = self.dims();
        debug_assert_eq!(dims.len(), values.len());
        let choice = |dim: Dim| {
            dims.iter()
                .position(|&d| d == dim)
                .and_then(|i| values[i])
                .map(|v| match v {
                    DimValue::Choice(c) => c,
                    DimValue::Int(_) => 0,
                })
                .unwrap_or(0)
        };
        let layer_type =
            self.seq_layer_types[choice(Dim::LayerType).min(self.seq_layer_types.len() - 1)];
        let fusion = if self.num_modalities > 1 {
            self.fusion_modes[choice(Dim::Fusion).min(self.fusion_modes.len() - 1)]
        } else {
            self.fusion_modes[0]
        };
        let int = |i: usize, dim: Dim| -> u32 {
            match values[i] {
                Some(DimValue::Int(v)) => v,
                _ => match self.domain(dim) {
                    DimDomain::Integer(r) => r.min,
                    DimDomain::Categorical(_) => 0,
                },
            }
        };
        let count = self.branch_count(fusion);
        let is_tst = layer_type == LayerType::Tst;
        let mut branches = vec![
            SequenceBlock {
                num_layers: 0,
                num_units: 0,
                ff_dim: None,
                attention_heads: None,
            };
            count
        ];
        let mut head = ClassificationHead {
            num_layers: 0,
            num_units: 0,
        };
        for (i, &d) in dims.iter().enumerate() {
            match d {
                Dim::Layers(b) if b < count => branches[b].num_layers = int(i, d),
                Dim::Units(b) if b < count => branches[b].num_units = int(i, d),
                Dim::FfDim(b) if b < count && is_tst => branches[b].ff_dim = Some(int(i, d)),
                Dim::Heads(b) if b < count && is_tst => {
                    branches[b].attention_heads = Some(int(i, d))
                }
                Dim::HeadLayers => head.num_layers = int(i, d),
                Dim::HeadUnits => head.num_units = int(i, d),
                _ => {}
            }
        }
        Genotype {
            layer_type,
            fusion,
            branches,
            head,
        }
    }

    /// The most compact architecture: smallest layer type and fusion mode in
    /// canonical order, every numeric dimension at its minimum.
    pub fn minimal_genotype(&self) -> Genotype {
        let layer_type = *self.seq_layer_types.iter().min().expect("validated space");
        let fusion = *self.fusion_modes.iter().min().expect("validated space");
        let is_tst = layer_type == LayerType::Tst;
        let block = SequenceBlock {
            num_layers: self.seq_num_layers.min,
            num_units: self.seq_num_units.min,
            ff_dim: is_tst.then(|| self.tst_ff_dim.map(|r| r.min)).flatten(),
            attention_heads: is_tst
                .then(|| self.tst_attention_heads.map(|r| r.min))
                .flatten(),
        };
        Genotype {
            layer_type,
            fusion,
            branches: vec![block; self.branch_count(fusion)],
            head: ClassificationHead {
                num_layers: self.head_num_layers.min,
                num_units: self.head_num_units.min,
            },
        }
    }

    /// Restricts the space to one layer type and/or one fusion mode.
    pub fn project(
        &self,
        layer_type: Option<LayerType>,
        fusion: Option<FusionMode>,
    ) -> Result<SearchSpaceDef, SpaceError> {
        let mut out = self.clone();
        if let Some(t) = layer_type {
            if !self.seq_layer_types.contains(&t) {
                return Err(SpaceError::InvalidSpace(vec![format!(
                    "layer_type_restriction: {t} is not searched by this space"
                )]));
            }
            out.seq_layer_types = vec![t];
            if t != LayerType::Tst {
                out.tst_ff_dim = None;
                out.tst_attention_heads = None;
            }
        }
        if let Some(f) = fusion {
            if !self.fusion_modes.contains(&f) {
                return Err(SpaceError::InvalidSpace(vec![format!(
                    "fusion_restriction: {f} is not searched by this space"
                )]));
            }
            out.fusion_modes = vec![f];
        }
        out.validate()?;
        Ok(out)
    }
}

fn has_duplicates<T: PartialEq>(items: &[T]) -> bool {
    items
        .iter()
        .enumerate()
        .any(|(i, a)| items[i + 1..].contains(a))
}
