//! Draws a few genotypes from the standard space and looks at them through
//! the encoding, the distance and the neighborhood.
//!
//! cargo run --example sample_space -- [seed]

use archsearch::space::{
    distance, encode, layout, mutate, neighbors, sample_uniform, SearchSpaceDef, StepSizes,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed: u64 = std::env::args().nth(1).map_or(Ok(7), |s| s.parse())?;
    let space = SearchSpaceDef::standard();
    println!("{} encoded slots per genotype", layout(&space).len());

    let a = sample_uniform(&space, seed)?;
    let b = sample_uniform(&space, seed + 1)?;
    for g in [&a, &b] {
        println!("{}", serde_json::to_string(g)?);
    }
    println!("distance(a, b) = {:.4}", distance(&a, &b, &space));

    let m = mutate(&a, &space, seed);
    println!(
        "one mutation away: {} (distance {:.4})",
        m.label(),
        distance(&a, &m, &space)
    );

    let steps = StepSizes::default();
    let near = neighbors(&a, &space, &steps);
    let closest = near
        .iter()
        .map(|n| distance(&a, n, &space))
        .fold(f64::INFINITY, f64::min);
    println!("{} neighbors, the closest at {closest:.4}", near.len());

    let v = encode(&a, &space);
    let shown: Vec<String> = v
        .values
        .iter()
        .take(12)
        .map(|x| format!("{x:.2}"))
        .collect();
    println!("encoding starts [{} ...]", shown.join(", "));
    Ok(())
}
