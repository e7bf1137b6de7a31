//! Counts multiply-accumulates for one architecture of each layer type on
//! the same input.

use archsearch::complexity::{estimate_flops, InputShape};
use archsearch::space::{ClassificationHead, FusionMode, Genotype, LayerType, SequenceBlock};

fn genotype(layer_type: LayerType) -> Genotype {
    let tst = layer_type == LayerType::Tst;
    Genotype {
        layer_type,
        fusion: FusionMode::None,
        branches: vec![SequenceBlock {
            num_layers: 2,
            num_units: 64,
            ff_dim: tst.then_some(128),
            attention_heads: tst.then_some(4),
        }],
        head: ClassificationHead {
            num_layers: 1,
            num_units: 32,
        },
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let shape = InputShape {
        seq_len: 90,
        feature_dims: vec![12],
        num_classes: 3,
    };
    for layer_type in LayerType::ALL {
        let f = estimate_flops(&genotype(layer_type), &shape)?;
        println!("{layer_type}: {:.3}e8", f.total as f64 / 1e8);
        for b in &f.per_block {
            println!("  {:<12} {:>12}", b.block, b.flops);
        }
    }
    Ok(())
}
