//! Command-line front end. `main` only forwards to [`run`].
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime error, 3 the run was
//! aborted because too many evaluations failed.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use crate::complexity::{estimate_flops_with, ComplexityConfig, InputShape};
use crate::engine::{
    cross_validate, report, run_search, EvaluatorConfig, ReportFormat, RunConfig, RunError,
};
use crate::evaluation::{EvaluationBudget, TrainerEndpoint, TrainerMode};
use crate::space::{sample_with, Genotype, SearchSpaceDef};
use crate::strategies::StrategyConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_FAILURE_THRESHOLD: i32 = 3;

/// Environment variable holding the log filter, e.g. `info` or `archsearch=debug`.
pub const LOG_ENV: &str = "ARCHSEARCH_LOG";

#[derive(Debug, Parser)]
#[command(
    name = "archsearch",
    version,
    about = "Multi-trial architecture search for sequence classifiers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run (or resume) a search described by a run config.
    Search(SearchArgs),
    /// Summarize finished runs.
    Report(ReportArgs),
    /// FLOPs of one genotype for one input shape.
    Flops(FlopsArgs),
    /// Search-space utilities.
    Space {
        #[command(subcommand)]
        command: SpaceCommand,
    },
    /// k-fold cross-validation of genotypes through an external trainer.
    Cv(CvArgs),
}

#[derive(Debug, Args)]
struct SearchArgs {
    #[arg(long)]
    config: PathBuf,
    /// Strategy name; replaces the config's strategy with its defaults.
    #[arg(long)]
    strategy: Option<StrategyConfig>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// `surrogate:<kind>` or `subprocess:<command>`.
    #[arg(long)]
    evaluator: Option<EvaluatorConfig>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    concurrency: Option<usize>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long, num_args = 1.., required = true)]
    runs: Vec<PathBuf>,
    /// table, csv or scatter-data.
    #[arg(long, default_value = "table")]
    format: ReportFormat,
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
    top_k: u64,
}

#[derive(Debug, Args)]
struct FlopsArgs {
    #[arg(long)]
    genotype: PathBuf,
    #[arg(long)]
    shape: PathBuf,
    #[arg(long, default_value_t = ComplexityConfig::default().tcn_kernel_size)]
    tcn_kernel_size: u32,
}

#[derive(Debug, Subcommand)]
enum SpaceCommand {
    /// Uniform samples, one genotype per line.
    Sample {
        /// Space definition; the standard space when omitted.
        #[arg(long)]
        space: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Args)]
struct CvArgs {
    /// JSON array of genotypes, or one genotype per line.
    #[arg(long)]
    genotypes: PathBuf,
    /// Trainer command line.
    #[arg(long)]
    trainer: String,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u32).range(2..))]
    folds: u32,
    #[arg(long)]
    shape: PathBuf,
    #[arg(long, default_value = "synthetic")]
    dataset: String,
    #[arg(long, default_value_t = EvaluationBudget::default().max_epochs)]
    max_epochs: u32,
    #[arg(long, default_value_t = EvaluationBudget::default().early_stopping_patience)]
    patience: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Keep one trainer process for all folds.
    #[arg(long)]
    session: bool,
    #[arg(long, default_value_t = 3600.0)]
    timeout_secs: f64,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Runtime(String),
    Threshold(String),
}

impl From<RunError> for CliError {
    fn from(e: RunError) -> Self {
        match e {
            RunError::FailureThreshold { .. } => CliError::Threshold(e.to_string()),
            RunError::Config(_) => CliError::Usage(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn read_genotypes(path: &Path) -> Result<Vec<Genotype>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    if text.trim_start().starts_with('[') {
        return serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())));
    }
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| CliError::Usage(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

fn search(args: SearchArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut config: RunConfig = read_json(&args.config)?;
    if let Some(s) = args.strategy {
        config.strategy = s;
    }
    if let Some(t) = args.trials {
        config.trials = t;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(e) = args.evaluator {
        config.evaluator = e;
    }
    if let Some(d) = args.output_dir {
        config.output_dir = d;
    }
    if let Some(w) = args.concurrency {
        config.concurrency = w;
    }
    let record = run_search(&config)?;
    let best = record.best.as_ref().map_or("none".to_string(), |b| {
        format!(
            "trial {} objective {:.6} flops {} ({})",
            b.trial_id,
            b.objective.unwrap_or(f64::NAN),
            b.flops,
            b.genotype.label()
        )
    });
    writeln!(
        out,
        "{}: {} trials, {} failed, best {best}",
        config.output_dir.display(),
        record.trials.len(),
        record.failed_count()
    )
    .map_err(|e| CliError::Runtime(e.to_string()))
}

fn cv(args: CvArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let genotypes = read_genotypes(&args.genotypes)?;
    let shape: InputShape = read_json(&args.shape)?;
    shape
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let budget = EvaluationBudget {
        max_epochs: args.max_epochs,
        early_stopping_patience: args.patience,
        fold: 0,
        seed: args.seed,
    };
    budget
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let endpoint = TrainerEndpoint {
        command: args.trainer,
        mode: if args.session {
            TrainerMode::Session
        } else {
            TrainerMode::Stateless
        },
        timeout_secs: args.timeout_secs,
        dataset: args.dataset,
    };
    let reports = cross_validate(&genotypes, &endpoint, &shape, args.folds, &budget);
    writeln!(out, "genotype | CE | Acc | Pr | Re | F1")
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    for r in &reports {
        writeln!(out, "{} | {}", r.genotype.label(), r.format())
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    if reports.iter().all(|r| r.summary.is_none()) && !reports.is_empty() {
        return Err(CliError::Runtime(
            "every fold of every genotype failed".into(),
        ));
    }
    Ok(())
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Runtime(e.to_string());
    match cli.command {
        Command::Search(args) => search(args, out),
        Command::Report(args) => {
            let (doc, warnings) = report(&args.runs, args.format, args.top_k as usize);
            for w in &warnings {
                eprintln!("warning: {w}");
            }
            if warnings.len() == args.runs.len() {
                return Err(CliError::Runtime("no readable run".into()));
            }
            out.write_all(doc.as_bytes()).map_err(io)
        }
        Command::Flops(args) => {
            let g: Genotype = read_json(&args.genotype)?;
            let shape: InputShape = read_json(&args.shape)?;
            let cfg = ComplexityConfig {
                tcn_kernel_size: args.tcn_kernel_size,
            };
            let flops = estimate_flops_with(&g, &shape, &cfg)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            let json = serde_json::to_string_pretty(&flops).expect("flops serialize");
            writeln!(out, "{json}").map_err(io)
        }
        Command::Space {
            command: SpaceCommand::Sample { space, n, seed },
        } => {
            let space: SearchSpaceDef = match space {
                Some(p) => read_json(&p)?,
                None => SearchSpaceDef::standard(),
            };
            space
                .validate()
                .map_err(|e| CliError::Usage(e.to_string()))?;
            let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
            for _ in 0..n {
                let g = sample_with(&space, &mut rng);
                writeln!(
                    out,
                    "{}",
                    serde_json::to_string(&g).expect("genotype serializes")
                )
                .map_err(io)?;
            }
            Ok(())
        }
        Command::Cv(args) => cv(args, out),
    }
}

/// Parses `args` (including the program name) and runs the command, writing
/// results to `out`. Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli, out) {
        Ok(()) => EXIT_OK,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            EXIT_USAGE
        }
        Err(CliError::Runtime(m)) => {
            eprintln!("error: {m}");
            EXIT_RUNTIME
        }
        Err(CliError::Threshold(m)) => {
            eprintln!("error: {m}");
            EXIT_FAILURE_THRESHOLD
        }
    }
}

pub fn init_logging() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn")).init();
}
