use std::collections::{BTreeMap, VecDeque};
use std::fs;
use std::sync::mpsc;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::runlog::{read_json_lines, read_trial_log, write_json_atomic, TrialLog};
use super::select::best_trial;
use super::{
    EvaluatorConfig, RunConfig, RunError, RunRecord, RunStatus, RunSummary, TrialTiming,
    CONFIG_FILE, RUN_FILE, STATE_FILE, TIMINGS_FILE, TRIALS_FILE,
};
use crate::complexity::estimate_flops_with;
use crate::evaluation::{
    EvalRequest, EvaluationBudget, EvaluationResult, Evaluator, Surrogate, TrainerSession,
};
use crate::space::{sample_uniform, Genotype, SearchSpaceDef};
use crate::strategies::{derive_seed, Proposal, Strategy, TrialRecord};

const STRATEGY_SALT: u64 = 0x5eed_5717;
const FALLBACK_SALT: u64 = 0xfa11_bacc;

/// Failure share above which a run aborts.
const MAX_FAILURE_RATE: f64 = 0.5;
/// Trials completed before the failure share is checked.
const FAILURE_GRACE: u64 = 10;

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Stop (as if interrupted) once the log holds this many trials.
    pub stop_after: Option<u64>,
    /// Sync the trial log to disk after every record.
    pub sync: bool,
    /// Write the strategy snapshot after every this many trials; 0 writes
    /// it only when the loop stops. Without a fresh snapshot a resume
    /// replays the log instead, so this trades resume time for I/O.
    pub snapshot_every: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            stop_after: None,
            sync: true,
            snapshot_every: 1,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    next_trial_id: u64,
    strategy: Strategy,
}

struct Job {
    request: EvalRequest,
    fallback: bool,
}

struct Done {
    job: Job,
    result: EvaluationResult,
    wall_time: f64,
}

/// Runs (or resumes) the search described by `config`.
pub fn run_search(config: &RunConfig) -> Result<RunRecord, RunError> {
    run_search_with(config, &RunOptions::default())
}

pub fn run_search_with(config: &RunConfig, options: &RunOptions) -> Result<RunRecord, RunError> {
    let config = config.clone().resolved()?;
    let factory: Box<dyn Fn() -> Box<dyn Evaluator> + Sync> = match &config.evaluator {
        EvaluatorConfig::Surrogate(spec) => {
            let surrogate = Surrogate::new(spec.clone(), config.space.clone())?;
            Box::new(move || Box::new(surrogate.clone()))
        }
        EvaluatorConfig::Subprocess(endpoint) => {
            let (endpoint, shape) = (endpoint.clone(), config.input_shape.clone());
            Box::new(move || Box::new(TrainerSession::new(endpoint.clone(), shape.clone())))
        }
    };
    run_search_custom(&config, options, &*factory)
}

fn check_config_file(config: &RunConfig) -> Result<(), RunError> {
    let path = config.output_dir.join(CONFIG_FILE);
    match fs::read_to_string(&path) {
        Ok(text) => {
            let stored: RunConfig = serde_json::from_str(&text).map_err(|e| RunError::Corrupt {
                path: path.clone(),
                message: e.to_string(),
            })?;
            let same = RunConfig {
                output_dir: config.output_dir.clone(),
                ..stored
            };
            if &same != config {
                return Err(RunError::Config(format!(
                    "{} holds a run with a different configuration",
                    config.output_dir.display()
                )));
            }
            Ok(())
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            write_json_atomic(&path, config, true)
        }
        Err(e) => Err(RunError::io(path, e)),
    }
}

fn load_snapshot(config: &RunConfig, space: &SearchSpaceDef) -> Result<(Strategy, u64), RunError> {
    let path = config.output_dir.join(STATE_FILE);
    if let Ok(text) = fs::read_to_string(&path) {
        match serde_json::from_str::<Snapshot>(&text) {
            Ok(s) if s.strategy.config() == &config.strategy && s.strategy.space() == space => {
                return Ok((s.strategy, s.next_trial_id));
            }
            Ok(_) => log::warn!(
                "{}: snapshot belongs to another strategy; replaying the log",
                path.display()
            ),
            Err(e) => log::warn!(
                "{}: unreadable snapshot ({e}); replaying the log",
                path.display()
            ),
        }
    }
    let strategy = Strategy::new(
        config.strategy.clone(),
        space.clone(),
        derive_seed(config.seed, STRATEGY_SALT),
    )?;
    Ok((strategy, 1))
}

fn propose(strategy: &mut Strategy, id: u64, seed: u64) -> Result<(Genotype, bool), RunError> {
    match strategy.propose(id) {
        Proposal::Candidate(g) => Ok((g, false)),
        Proposal::Exhausted => {
            log::info!(
                "{} has no candidate for trial {id}; sampling uniformly",
                strategy.name()
            );
            let g = sample_uniform(strategy.space(), derive_seed(seed ^ FALLBACK_SALT, id))?;
            strategy.mark_pending(id, g.clone());
            Ok((g, true))
        }
    }
}

/// [`run_search_with`] with evaluators built by `factory`, one per worker.
pub fn run_search_custom(
    config: &RunConfig,
    options: &RunOptions,
    factory: &(dyn Fn() -> Box<dyn Evaluator> + Sync),
) -> Result<RunRecord, RunError> {
    let config = &config.clone().resolved()?;
    config.validate()?;
    let dir = &config.output_dir;
    fs::create_dir_all(dir).map_err(|e| RunError::io(dir, e))?;
    check_config_file(config)?;
    let space = config.search_space()?;

    let log_path = dir.join(TRIALS_FILE);
    let contents = read_trial_log(&log_path)?;
    if contents.torn_tail {
        log::warn!(
            "{}: dropping a partially written last record",
            log_path.display()
        );
    }
    let mut trials = contents.trials;
    let mut ids = std::collections::BTreeSet::new();
    for t in &trials {
        if t.trial_id == 0 || t.trial_id > config.trials || !ids.insert(t.trial_id) {
            return Err(RunError::Corrupt {
                path: log_path.clone(),
                message: format!("unexpected trial id {}", t.trial_id),
            });
        }
    }
    if trials.is_empty() {
        log::info!(
            "{}: starting {} for {} trials",
            dir.display(),
            config.strategy.name(),
            config.trials
        );
    } else {
        log::info!(
            "{}: resuming {} after {} logged trials",
            dir.display(),
            config.strategy.name(),
            trials.len()
        );
    }
    let mut log = TrialLog::open(&log_path, contents.valid_len, options.sync)?;
    let mut timings_log = TrialLog::open(
        &dir.join(TIMINGS_FILE),
        fs::metadata(dir.join(TIMINGS_FILE)).map_or(0, |m| m.len()),
        false,
    )?;

    // bring the strategy up to the log
    let (mut strategy, mut next_id) = load_snapshot(config, &space)?;
    let mut fallbacks = BTreeMap::new();
    for t in &trials {
        if strategy.has_observed(t.trial_id) {
            continue;
        }
        while next_id <= t.trial_id {
            let (_, fb) = propose(&mut strategy, next_id, config.seed)?;
            fallbacks.insert(next_id, fb);
            next_id += 1;
        }
        strategy.observe(t)?;
    }
    // proposed before the interruption but never logged
    let mut requeue: VecDeque<(u64, Genotype)> = strategy
        .pending()
        .iter()
        .filter(|(id, _)| !ids.contains(id))
        .map(|(id, g)| (*id, g.clone()))
        .collect();

    let save = |strategy: &Strategy, next_id: u64| {
        write_json_atomic(
            &dir.join(STATE_FILE),
            &Snapshot {
                next_trial_id: next_id,
                strategy: strategy.clone(),
            },
            options.sync,
        )
    };
    let budget_for = |id: u64| EvaluationBudget {
        seed: derive_seed(config.seed, id),
        ..config.budget
    };
    let stop_at = options.stop_after.unwrap_or(u64::MAX).min(config.trials);
    let mut status = RunStatus::Completed;
    let mut outcome: Result<(), RunError> = Ok(());

    if (trials.len() as u64) < stop_at {
        let workers = config
            .concurrency
            .min((config.trials - trials.len() as u64) as usize)
            .max(1);
        let (job_tx, job_rx) = mpsc::channel::<Job>();
        let job_rx = Arc::new(Mutex::new(job_rx));
        let (done_tx, done_rx) = mpsc::channel::<Done>();
        thread::scope(|scope| {
            for _ in 0..workers {
                let job_rx = Arc::clone(&job_rx);
                let done_tx = done_tx.clone();
                scope.spawn(move || {
                    let mut evaluator = factory();
                    loop {
                        let job = job_rx.lock().expect("job queue").recv();
                        let Ok(job) = job else { break };
                        let t0 = Instant::now();
                        let result = evaluator.evaluate(&job.request);
                        let wall_time = t0.elapsed().as_secs_f64();
                        if done_tx
                            .send(Done {
                                job,
                                result,
                                wall_time,
                            })
                            .is_err()
                        {
                            break;
                        }
                    }
                });
            }
            drop(done_tx);
            let mut in_flight = 0usize;
            let mut dispatched = trials.len() as u64;
            loop {
                while in_flight < workers && dispatched < stop_at {
                    let next = match requeue.pop_front() {
                        Some((id, g)) => Ok((id, g, fallbacks.get(&id).copied().unwrap_or(false))),
                        None if next_id <= config.trials => {
                            let id = next_id;
                            next_id += 1;
                            propose(&mut strategy, id, config.seed).map(|(g, fb)| (id, g, fb))
                        }
                        None => break,
                    };
                    let (id, genotype, fallback) = match next {
                        Ok(n) => n,
                        Err(e) => {
                            outcome = Err(e);
                            break;
                        }
                    };
                    let request = EvalRequest {
                        trial_id: id,
                        genotype,
                        budget: budget_for(id),
                    };
                    job_tx
                        .send(Job { request, fallback })
                        .expect("workers alive");
                    in_flight += 1;
                    dispatched += 1;
                }
                if in_flight == 0 || outcome.is_err() {
                    break;
                }
                let Ok(done) = done_rx.recv() else { break };
                in_flight -= 1;
                let step = (|| {
                    let record = trial_record(config, &done)?;
                    log.append(&record)?;
                    timings_log.append(&TrialTiming {
                        trial_id: record.trial_id,
                        wall_time: done.wall_time,
                    })?;
                    strategy.observe(&record)?;
                    trials.push(record);
                    let n = trials.len() as u64;
                    if n >= stop_at
                        || (options.snapshot_every > 0 && n.is_multiple_of(options.snapshot_every))
                    {
                        save(&strategy, next_id)?;
                    }
                    let completed = trials.len();
                    let failed = trials.iter().filter(|t| !t.status.is_ok()).count();
                    if completed as u64 >= FAILURE_GRACE.min(config.trials)
                        && failed as f64 > MAX_FAILURE_RATE * completed as f64
                    {
                        return Err(RunError::FailureThreshold { failed, completed });
                    }
                    Ok(())
                })();
                if let Err(e) = step {
                    outcome = Err(e);
                    break;
                }
                if trials.len() as u64 >= stop_at {
                    break;
                }
            }
            drop(job_tx);
        });
    }

    if let Err(e) = outcome {
        if matches!(e, RunError::FailureThreshold { .. }) {
            status = RunStatus::Aborted;
            write_summary(config, &trials, status)?;
        }
        return Err(e);
    }
    if (trials.len() as u64) < config.trials {
        status = RunStatus::Interrupted;
    } else {
        write_summary(config, &trials, status)?;
    }
    Ok(RunRecord {
        engine_version: env!("CARGO_PKG_VERSION").to_owned(),
        status,
        config: config.clone(),
        best: best_trial(&trials).cloned(),
        timings: read_timings(config),
        trials,
    })
}

fn trial_record(config: &RunConfig, done: &Done) -> Result<TrialRecord, RunError> {
    let r = &done.result;
    let g = &done.job.request.genotype;
    let flops = estimate_flops_with(g, &config.input_shape, &config.complexity)?.total;
    if let (Some(reported), true) = (r.flops, r.is_ok()) {
        if reported != flops {
            log::debug!(
                "trial {}: evaluator reports {reported} FLOPs, estimate {flops}",
                done.job.request.trial_id
            );
        }
    }
    let ok = r.is_ok();
    Ok(TrialRecord {
        trial_id: done.job.request.trial_id,
        genotype: g.clone(),
        status: r.status.trial_status(),
        objective: if ok { r.objective } else { None },
        metrics: if ok { r.metrics } else { None },
        flops,
        seed: done.job.request.budget.seed,
        fallback: done.job.fallback,
        message: r.message.clone(),
        raw: r.raw.clone(),
    })
}

fn read_timings(config: &RunConfig) -> Vec<TrialTiming> {
    let mut by_id = BTreeMap::new();
    for t in read_json_lines::<TrialTiming>(&config.output_dir.join(TIMINGS_FILE)) {
        by_id.insert(t.trial_id, t);
    }
    by_id.into_values().collect()
}

fn write_summary(
    config: &RunConfig,
    trials: &[TrialRecord],
    status: RunStatus,
) -> Result<(), RunError> {
    let timings = read_timings(config);
    let summary = RunSummary {
        engine_version: env!("CARGO_PKG_VERSION").to_owned(),
        status,
        strategy: config.strategy.name().to_owned(),
        trials: trials.len(),
        failed: trials.iter().filter(|t| !t.status.is_ok()).count(),
        best: best_trial(trials).cloned(),
        total_wall_time: timings.iter().map(|t| t.wall_time).sum(),
    };
    write_json_atomic(&config.output_dir.join(RUN_FILE), &summary, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complexity::InputShape;
    use crate::evaluation::EvalStatus;

    fn config(dir: &std::path::Path, strategy: &str, trials: u64) -> RunConfig {
        let mut c = RunConfig::new(
            strategy.parse().unwrap(),
            "surrogate:distance".parse().unwrap(),
            InputShape {
                seq_len: 8,
                feature_dims: vec![3],
                num_classes: 3,
            },
            dir,
        );
        c.trials = trials;
        c.seed = 3;
        c
    }

    #[test]
    fn random_search_bookkeeping() {
        let dir = tempfile::tempdir().unwrap();
        let c = config(dir.path(), "random", 50);
        let run = run_search(&c).unwrap();
        assert_eq!(run.trials.len(), 50);
        assert_eq!(run.status, RunStatus::Completed);
        let min = run
            .trials
            .iter()
            .filter_map(|t| t.objective)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(run.best.unwrap().objective, Some(min));
        let ids: Vec<u64> = run.trials.iter().map(|t| t.trial_id).collect();
        assert_eq!(ids, (1..=50).collect::<Vec<_>>());
        for f in [CONFIG_FILE, TRIALS_FILE, STATE_FILE, TIMINGS_FILE, RUN_FILE] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        assert_eq!(run.timings.len(), 50);
    }

    #[test]
    fn rerun_is_byte_identical_and_complete_run_is_idempotent() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        run_search(&config(a.path(), "tpe", 20)).unwrap();
        run_search(&config(b.path(), "tpe", 20)).unwrap();
        let la = fs::read(a.path().join(TRIALS_FILE)).unwrap();
        assert_eq!(la, fs::read(b.path().join(TRIALS_FILE)).unwrap());
        let again = run_search(&config(a.path(), "tpe", 20)).unwrap();
        assert_eq!(again.trials.len(), 20);
        assert_eq!(fs::read(a.path().join(TRIALS_FILE)).unwrap(), la);
    }

    #[test]
    fn interrupted_run_resumes_to_the_same_log() {
        let whole = tempfile::tempdir().unwrap();
        run_search(&config(whole.path(), "regularized_evolution", 30)).unwrap();
        let part = tempfile::tempdir().unwrap();
        let c = config(part.path(), "regularized_evolution", 30);
        let first = run_search_with(
            &c,
            &RunOptions {
                stop_after: Some(12),
                sync: false,
                ..RunOptions::default()
            },
        )
        .unwrap();
        assert_eq!(
            (first.status, first.trials.len()),
            (RunStatus::Interrupted, 12)
        );
        fs::remove_file(part.path().join(STATE_FILE)).unwrap();
        run_search(&c).unwrap();
        assert_eq!(
            fs::read(whole.path().join(TRIALS_FILE)).unwrap(),
            fs::read(part.path().join(TRIALS_FILE)).unwrap()
        );
    }

    #[test]
    fn changed_config_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        run_search_with(&config(dir.path(), "random", 5), &RunOptions::default()).unwrap();
        assert!(matches!(
            run_search(&config(dir.path(), "tpe", 5)),
            Err(RunError::Config(_))
        ));
    }

    struct Flaky {
        fail_every: u64,
        offset: u64,
    }

    impl Evaluator for Flaky {
        fn evaluate(&mut self, request: &EvalRequest) -> EvaluationResult {
            if !(request.trial_id + self.offset).is_multiple_of(self.fail_every) {
                EvaluationResult::failed(
                    EvalStatus::TrainerError,
                    "boom",
                    Some("{\"raw\":1}".into()),
                )
            } else {
                let m = crate::metrics::MetricReport {
                    cross_entropy: 0.5,
                    accuracy: 50.0,
                    precision_macro: 50.0,
                    recall_macro: 50.0,
                    f1_macro: 50.0,
                };
                EvaluationResult::ok(0.5, m)
            }
        }
    }

    #[test]
    fn failure_threshold_aborts_after_grace() {
        let dir = tempfile::tempdir().unwrap();
        let c = config(dir.path(), "random", 50).resolved().unwrap();
        let err = run_search_custom(&c, &RunOptions::default(), &|| {
            Box::new(Flaky {
                fail_every: 3,
                offset: 0,
            })
        })
        .unwrap_err();
        let RunError::FailureThreshold { completed, failed } = err else {
            panic!("{err}")
        };
        assert_eq!((completed, failed), (10, 7));
        let summary: RunSummary =
            serde_json::from_str(&fs::read_to_string(dir.path().join(RUN_FILE)).unwrap()).unwrap();
        assert_eq!(summary.status, RunStatus::Aborted);
        let logged = read_trial_log(&dir.path().join(TRIALS_FILE))
            .unwrap()
            .trials;
        assert_eq!(logged[0].raw.as_deref(), Some("{\"raw\":1}"));
        assert_eq!(logged[0].message.as_deref(), Some("boom"));
    }

    #[test]
    fn tolerable_failures_complete() {
        let dir = tempfile::tempdir().unwrap();
        let c = config(dir.path(), "tpe", 20).resolved().unwrap();
        let run = run_search_custom(&c, &RunOptions::default(), &|| {
            Box::new(Flaky {
                fail_every: 1,
                offset: 0,
            })
        })
        .unwrap();
        assert_eq!(run.failed_count(), 0);
        let dir = tempfile::tempdir().unwrap();
        let c = config(dir.path(), "hill_climbing", 20).resolved().unwrap();
        let run = run_search_custom(&c, &RunOptions::default(), &|| {
            Box::new(Flaky {
                fail_every: 2,
                offset: 1,
            })
        })
        .unwrap();
        assert_eq!((run.trials.len(), run.failed_count()), (20, 10));
    }

    #[test]
    fn concurrent_run_completes_every_trial() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = config(dir.path(), "gaussian_process", 24);
        c.concurrency = 4;
        let run = run_search(&c).unwrap();
        let mut ids: Vec<u64> = run.trials.iter().map(|t| t.trial_id).collect();
        ids.sort();
        assert_eq!(ids, (1..=24).collect::<Vec<_>>());
    }

    #[test]
    fn restrictions_project_the_space() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = config(dir.path(), "random", 15);
        c.layer_type_restriction = Some(crate::space::LayerType::Tcn);
        let run = run_search(&c).unwrap();
        assert!(run
            .trials
            .iter()
            .all(|t| t.genotype.layer_type == crate::space::LayerType::Tcn));
    }
}
