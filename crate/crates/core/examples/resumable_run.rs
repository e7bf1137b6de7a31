//! Stops a search halfway, tears the last line of the trial log the way a
//! crash would, and resumes. The resumed run ends where an uninterrupted one
//! with the same seed ends.

use std::fs::OpenOptions;
use std::io::Write;

use archsearch::complexity::InputShape;
use archsearch::engine::{
    best_trial, read_trial_log, run_search, run_search_with, RunConfig, RunOptions,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = tempfile::tempdir()?;
    let shape = InputShape {
        seq_len: 64,
        feature_dims: vec![8],
        num_classes: 3,
    };
    let config = |dir: &str| -> Result<RunConfig, Box<dyn std::error::Error>> {
        let mut c = RunConfig::new(
            "tpe".parse()?,
            "surrogate:noisy_distance".parse()?,
            shape.clone(),
            root.path().join(dir),
        );
        c.trials = 30;
        c.seed = 5;
        Ok(c)
    };

    let reference = run_search(&config("straight")?)?;

    let interrupted = config("interrupted")?;
    let first = run_search_with(
        &interrupted,
        &RunOptions {
            stop_after: Some(13),
            ..RunOptions::default()
        },
    )?;
    println!(
        "stopped after {} trials ({:?})",
        first.trials.len(),
        first.status
    );

    let log = interrupted.output_dir.join("trials.jsonl");
    OpenOptions::new()
        .append(true)
        .open(&log)?
        .write_all(br#"{"trial_id":14,"genot"#)?;
    let torn = read_trial_log(&log)?;
    println!(
        "log holds {} complete records, torn tail: {}",
        torn.trials.len(),
        torn.torn_tail
    );

    let resumed = run_search(&interrupted)?;
    let (a, b) = (best_trial(&reference.trials), best_trial(&resumed.trials));
    println!(
        "resumed to {} trials ({:?})",
        resumed.trials.len(),
        resumed.status
    );
    println!(
        "best: straight {:?}, resumed {:?}",
        a.map(|t| (t.trial_id, t.objective)),
        b.map(|t| (t.trial_id, t.objective))
    );
    assert_eq!(reference.trials, resumed.trials);
    Ok(())
}
