#[path = "common/flops_oracle.rs"]
mod oracle;

use archsearch::complexity::{estimate_flops, InputShape};
use archsearch::space::{
    sample_uniform, ClassificationHead, FusionMode, Genotype, IntRange, LayerType, SearchSpaceDef,
    SequenceBlock,
};
use nalgebra::{DMatrix, DVector};
use oracle::count_forward_flops;

fn small_space(layer_type: LayerType, modalities: u32) -> SearchSpaceDef {
    let tst = layer_type == LayerType::Tst;
    SearchSpaceDef {
        seq_layer_types: vec![layer_type],
        seq_num_layers: IntRange::new(1, 3),
        seq_num_units: IntRange::new(1, 7),
        tst_ff_dim: tst.then(|| IntRange::new(1, 6)),
        tst_attention_heads: tst.then(|| IntRange::new(1, 3)),
        head_num_layers: IntRange::new(1, 3),
        head_num_units: IntRange::new(1, 6),
        fusion_modes: if modalities == 1 {
            vec![FusionMode::None]
        } else {
            vec![
                FusionMode::Early,
                FusionMode::Intermediate,
                FusionMode::Late,
            ]
        },
        num_modalities: modalities,
    }
}

#[test]
fn estimator_matches_counting_oracle() {
    let mut checked = std::collections::BTreeMap::new();
    for layer_type in LayerType::ALL {
        for (modalities, fusion) in [
            (1, FusionMode::None),
            (2, FusionMode::Early),
            (3, FusionMode::Intermediate),
            (2, FusionMode::Late),
        ] {
            let space = small_space(layer_type, modalities)
                .project(None, Some(fusion))
                .unwrap();
            for seed in 0..12u64 {
                let g = sample_uniform(&space, seed).unwrap();
                let shape = InputShape {
                    seq_len: 2 + (seed % 4) as u32,
                    feature_dims: (0..modalities)
                        .map(|m| 1 + ((seed + u64::from(m)) % 4) as u32)
                        .collect(),
                    num_classes: 2 + (seed % 3) as u32,
                };
                let estimate = estimate_flops(&g, &shape).unwrap();
                let counted = count_forward_flops(&g, &shape, 3);
                assert_eq!(estimate.total, counted, "{g:?} on {shape:?}");
                *checked.entry((layer_type, fusion)).or_insert(0) += 1;
            }
        }
    }
    assert!(checked.values().all(|&n| n >= 10));
}

#[test]
fn fixed_lstm_matches_oracle() {
    let g = Genotype {
        layer_type: LayerType::Lstm,
        fusion: FusionMode::None,
        branches: vec![SequenceBlock {
            num_layers: 1,
            num_units: 8,
            ff_dim: None,
            attention_heads: None,
        }],
        head: ClassificationHead {
            num_layers: 1,
            num_units: 8,
        },
    };
    let shape = InputShape {
        seq_len: 10,
        feature_dims: vec![3],
        num_classes: 3,
    };
    assert_eq!(
        estimate_flops(&g, &shape).unwrap().total,
        count_forward_flops(&g, &shape, 3)
    );
}

#[test]
fn late_fusion_of_identical_blocks() {
    let block = SequenceBlock {
        num_layers: 2,
        num_units: 5,
        ff_dim: Some(4),
        attention_heads: Some(2),
    };
    let head = ClassificationHead {
        num_layers: 2,
        num_units: 4,
    };
    let single = Genotype {
        layer_type: LayerType::Tst,
        fusion: FusionMode::None,
        branches: vec![block.clone()],
        head: head.clone(),
    };
    let late = Genotype {
        fusion: FusionMode::Late,
        branches: vec![block.clone(), block],
        ..single.clone()
    };
    let one = InputShape {
        seq_len: 4,
        feature_dims: vec![3],
        num_classes: 3,
    };
    let two = InputShape {
        seq_len: 4,
        feature_dims: vec![3, 3],
        num_classes: 3,
    };
    let branch = count_forward_flops(&single, &one, 3);
    let fused = count_forward_flops(&late, &two, 3);
    assert_eq!(fused, 2 * branch + 2 * 3);
    assert_eq!(estimate_flops(&late, &two).unwrap().total, fused);
}

/// Least-squares fit of c0 + c1 T + c2 T^2 on counts at T in {8, 16, 32, 64}.
fn quadratic_coefficient(g: &Genotype) -> f64 {
    let ts: [f64; 4] = [8.0, 16.0, 32.0, 64.0];
    let x = DMatrix::from_fn(4, 3, |r, c| ts[r].powi(c as i32));
    let y = DVector::from_iterator(
        4,
        ts.iter().map(|&t| {
            let shape = InputShape {
                seq_len: t as u32,
                feature_dims: vec![4],
                num_classes: 3,
            };
            estimate_flops(g, &shape).unwrap().total as f64
        }),
    );
    let coeffs = (x.transpose() * &x).try_inverse().unwrap() * x.transpose() * y;
    coeffs[2]
}

#[test]
fn sequence_length_degree() {
    for layer_type in LayerType::ALL {
        let space = small_space(layer_type, 1);
        for seed in 0..5 {
            let g = sample_uniform(&space, seed).unwrap();
            let c2 = quadratic_coefficient(&g);
            if layer_type == LayerType::Tst {
                assert!(c2 > 1.0, "{layer_type}: {c2}");
            } else {
                assert!(c2.abs() < 1e-3, "{layer_type}: {c2}");
            }
        }
    }
}
