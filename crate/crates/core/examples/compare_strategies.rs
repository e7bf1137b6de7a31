//! Every strategy with default settings against the same distance surrogate,
//! same seed and budget. Prints the best objective each one found.
//!
//! cargo run --release --example compare_strategies -- [trials] [seed]

use archsearch::complexity::InputShape;
use archsearch::engine::{best_trial, run_search_with, RunConfig, RunOptions};
use archsearch::strategies::StrategyConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let trials: u64 = args.next().map_or(Ok(50), |s| s.parse())?;
    let seed: u64 = args.next().map_or(Ok(1), |s| s.parse())?;
    let root = tempfile::tempdir()?;
    let shape = InputShape {
        seq_len: 64,
        feature_dims: vec![8],
        num_classes: 3,
    };
    let options = RunOptions {
        sync: false,
        snapshot_every: 0,
        ..RunOptions::default()
    };

    println!(
        "{:<24} {:>10} {:>8}  best",
        "strategy", "objective", "trial"
    );
    for strategy in StrategyConfig::all_defaults() {
        let name = strategy.name();
        let mut config = RunConfig::new(
            strategy,
            "surrogate:distance".parse()?,
            shape.clone(),
            root.path().join(name),
        );
        config.trials = trials;
        config.seed = seed;
        let record = run_search_with(&config, &options)?;
        let best = best_trial(&record.trials).expect("some trial succeeded");
        println!(
            "{name:<24} {:>10.4} {:>8}  {}",
            best.objective.unwrap_or(f64::NAN),
            best.trial_id,
            best.genotype.label()
        );
    }
    Ok(())
}
