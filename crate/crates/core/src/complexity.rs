//! Forward-pass FLOPs of a genotype.
//!
//! Counting convention (inference only, batch of one):
//!
//! * one scalar multiply, add, divide or exponential is 1 FLOP; every
//!   activation (sigmoid, tanh, ReLU, GELU) is 1 FLOP per element;
//! * a dense map `d_in -> d_out` with bias costs `(2 d_in + 1) d_out`: each
//!   output accumulates `d_in` products from zero and adds the bias;
//! * softmax costs 3 FLOPs per element (exp, accumulate, divide);
//! * normalization layers are folded into the adjacent projections and not
//!   counted, dropout is inactive.
//!
//! Blocks:
//!
//! * **LSTM** layer with input `i` and `h` units, per time step: four gate
//!   maps `(i + h) -> h`, five activations per unit (three sigmoid gates,
//!   tanh candidate, tanh of the cell) and three multiplies plus one add per
//!   unit for the cell and hidden updates.
//! * **TCN** layer: one residual block of two causal convolutions
//!   (`kernel_size` taps, dilation `2^layer`, zero padding with every tap
//!   counted), each followed by ReLU; a 1x1 projection of the input when its
//!   width differs from the block width; residual add and a final ReLU.
//! * **TST**: linear token projection plus positional-encoding add, then per
//!   layer the Q/K/V projections, `2 T^2 d` for scores, one scaling multiply
//!   per score, softmax per score row, `2 T^2 d` for the weighted sum, output
//!   projection, residual add, feed-forward `d -> ff -> d` with GELU and a
//!   second residual add. The model width `d` is `num_units` rounded up to a
//!   multiple of `attention_heads`.
//! * **Head**: applied to the final time step; `num_layers - 1` hidden dense
//!   maps of `num_units` with ReLU, an output map to `num_classes`, softmax.
//! * **Fusion**: early concatenates modality features before a single block;
//!   intermediate runs one block per modality, concatenates their sequences
//!   and feeds a shared block; late runs block and head per modality and
//!   averages the class distributions (`(M - 1) C` adds and `C` divides).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::space::{FusionMode, Genotype, LayerType, SequenceBlock};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ComplexityError {
    #[error("input shape: {0}")]
    Shape(String),
    #[error("genotype: {0}")]
    Genotype(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputShape {
    pub seq_len: u32,
    pub feature_dims: Vec<u32>,
    pub num_classes: u32,
}

impl InputShape {
    pub fn validate(&self) -> Result<(), ComplexityError> {
        if self.seq_len == 0 {
            return Err(ComplexityError::Shape("seq_len must be at least 1".into()));
        }
        if self.feature_dims.is_empty() {
            return Err(ComplexityError::Shape("feature_dims is empty".into()));
        }
        if let Some(i) = self.feature_dims.iter().position(|&d| d == 0) {
            return Err(ComplexityError::Shape(format!("feature_dims[{i}] is zero")));
        }
        if self.num_classes < 2 {
            return Err(ComplexityError::Shape(
                "num_classes must be at least 2".into(),
            ));
        }
        Ok(())
    }
}

/// Per-block FLOP counts; `total` is their sum.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlopsBreakdown {
    pub total: u64,
    pub per_block: Vec<BlockFlops>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockFlops {
    pub block: String,
    pub flops: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ComplexityConfig {
    pub tcn_kernel_size: u32,
}

impl Default for ComplexityConfig {
    fn default() -> Self {
        Self { tcn_kernel_size: 3 }
    }
}

pub fn dense_flops(d_in: u64, d_out: u64) -> u64 {
    (2 * d_in + 1) * d_out
}

pub fn softmax_flops(n: u64) -> u64 {
    3 * n
}

/// Width the TST block actually runs at.
pub fn tst_model_width(units: u32, heads: u32) -> u32 {
    let heads = heads.max(1);
    units.div_ceil(heads) * heads
}

fn lstm_flops(seq_len: u64, d_in: u64, block: &SequenceBlock) -> u64 {
    let h = u64::from(block.num_units);
    let mut total = 0;
    let mut input = d_in;
    for _ in 0..block.num_layers {
        let per_step = 4 * dense_flops(input + h, h) + 9 * h;
        total += seq_len * per_step;
        input = h;
    }
    total
}

fn tcn_flops(seq_len: u64, d_in: u64, block: &SequenceBlock, kernel: u64) -> u64 {
    let u = u64::from(block.num_units);
    let mut total = 0;
    let mut input = d_in;
    for _ in 0..block.num_layers {
        let mut per_step = dense_flops(kernel * input, u) + u;
        per_step += dense_flops(kernel * u, u) + u;
        if input != u {
            per_step += dense_flops(input, u);
        }
        per_step += 2 * u;
        total += seq_len * per_step;
        input = u;
    }
    total
}

fn tst_flops(seq_len: u64, d_in: u64, block: &SequenceBlock) -> Result<u64, ComplexityError> {
    let (Some(ff), Some(heads)) = (block.ff_dim, block.attention_heads) else {
        return Err(ComplexityError::Genotype(
            "TST block without ff_dim/attention_heads".into(),
        ));
    };
    let d = u64::from(tst_model_width(block.num_units, heads));
    let heads = u64::from(heads);
    let ff = u64::from(ff);
    let t = seq_len;
    let mut total = t * (dense_flops(d_in, d) + d);
    for _ in 0..block.num_layers {
        let attention = 3 * t * dense_flops(d, d)
            + 2 * t * t * d
            + heads * t * t
            + heads * t * softmax_flops(t)
            + 2 * t * t * d
            + t * dense_flops(d, d)
            + t * d;
        let feed_forward = t * (dense_flops(d, ff) + ff + dense_flops(ff, d) + d);
        total += attention + feed_forward;
    }
    Ok(total)
}

/// Output width of a sequence block.
pub fn block_width(layer_type: LayerType, block: &SequenceBlock) -> u32 {
    match layer_type {
        LayerType::Tst => tst_model_width(block.num_units, block.attention_heads.unwrap_or(1)),
        LayerType::Lstm | LayerType::Tcn => block.num_units,
    }
}

pub fn sequence_block_flops(
    layer_type: LayerType,
    seq_len: u32,
    d_in: u32,
    block: &SequenceBlock,
    config: &ComplexityConfig,
) -> Result<u64, ComplexityError> {
    let (t, i) = (u64::from(seq_len), u64::from(d_in));
    match layer_type {
        LayerType::Lstm => Ok(lstm_flops(t, i, block)),
        LayerType::Tcn => Ok(tcn_flops(t, i, block, u64::from(config.tcn_kernel_size))),
        LayerType::Tst => tst_flops(t, i, block),
    }
}

/// Head applied once to a representation of width `d_in`, softmax included.
pub fn head_flops(d_in: u32, num_layers: u32, num_units: u32, num_classes: u32) -> u64 {
    let (u, c) = (u64::from(num_units), u64::from(num_classes));
    let mut total = 0;
    let mut input = u64::from(d_in);
    for _ in 1..num_layers {
        total += dense_flops(input, u) + u;
        input = u;
    }
    total + dense_flops(input, c) + softmax_flops(c)
}

pub fn estimate_flops(g: &Genotype, shape: &InputShape) -> Result<FlopsBreakdown, ComplexityError> {
    estimate_flops_with(g, shape, &ComplexityConfig::default())
}

pub fn estimate_flops_with(
    g: &Genotype,
    shape: &InputShape,
    config: &ComplexityConfig,
) -> Result<FlopsBreakdown, ComplexityError> {
    shape.validate()?;
    let m = shape.feature_dims.len();
    let expected_branches = match g.fusion {
        FusionMode::None | FusionMode::Early => 1,
        FusionMode::Late => m,
        FusionMode::Intermediate => m + 1,
    };
    if g.fusion == FusionMode::None && m != 1 {
        return Err(ComplexityError::Shape(format!(
            "fusion none takes one modality, shape has {m}"
        )));
    }
    if g.fusion != FusionMode::None && m < 2 {
        return Err(ComplexityError::Shape(format!(
            "fusion {} needs at least two modalities",
            g.fusion
        )));
    }
    if g.branches.len() != expected_branches {
        return Err(ComplexityError::Genotype(format!(
            "fusion {} over {m} modalities needs {expected_branches} blocks, genotype has {}",
            g.fusion,
            g.branches.len()
        )));
    }
    let (t, c) = (shape.seq_len, shape.num_classes);
    let head = |d: u32| head_flops(d, g.head.num_layers, g.head.num_units, c);
    let block =
        |d_in: u32, b: &SequenceBlock| sequence_block_flops(g.layer_type, t, d_in, b, config);
    let mut per_block = Vec::new();
    match g.fusion {
        FusionMode::None | FusionMode::Early => {
            let d_in: u32 = shape.feature_dims.iter().sum();
            per_block.push(("sequence".to_string(), block(d_in, &g.branches[0])?));
            per_block.push((
                "head".to_string(),
                head(block_width(g.layer_type, &g.branches[0])),
            ));
        }
        FusionMode::Intermediate => {
            let mut concat = 0;
            for (k, &dim) in shape.feature_dims.iter().enumerate() {
                per_block.push((format!("sequence[{k}]"), block(dim, &g.branches[k])?));
                concat += block_width(g.layer_type, &g.branches[k]);
            }
            let shared = &g.branches[m];
            per_block.push(("sequence[shared]".to_string(), block(concat, shared)?));
            per_block.push(("head".to_string(), head(block_width(g.layer_type, shared))));
        }
        FusionMode::Late => {
            for (k, &dim) in shape.feature_dims.iter().enumerate() {
                per_block.push((format!("sequence[{k}]"), block(dim, &g.branches[k])?));
                per_block.push((
                    format!("head[{k}]"),
                    head(block_width(g.layer_type, &g.branches[k])),
                ));
            }
            per_block.push(("late_average".to_string(), m as u64 * u64::from(c)));
        }
    }
    let per_block: Vec<BlockFlops> = per_block
        .into_iter()
        .map(|(block, flops)| BlockFlops { block, flops })
        .collect();
    Ok(FlopsBreakdown {
        total: per_block.iter().map(|b| b.flops).sum(),
        per_block,
    })
}
