//! Run orchestration: the propose, evaluate, observe loop with a durable
//! trial log, top-k selection, cross-validation and reports.
//!
//! A run directory holds
//!
//! | file                  | written                                  |
//! |-----------------------|------------------------------------------|
//! | `config.json`         | once, at start (with the resolved target) |
//! | `trials.jsonl`        | one [`TrialRecord`] per line, appended and synced before observe |
//! | `strategy_state.json` | after every observe, by atomic rename    |
//! | `timings.jsonl`       | wall time per trial                      |
//! | `run.json`            | when the run ends                        |
//!
//! Wall times stay out of `trials.jsonl` so that two runs of the same
//! configuration produce byte-identical logs.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::complexity::{ComplexityConfig, ComplexityError, InputShape};
use crate::evaluation::{EvaluationBudget, EvaluationError, SurrogateSpec, TrainerEndpoint};
use crate::space::{sample_uniform, FusionMode, LayerType, SearchSpaceDef, SpaceError};
use crate::strategies::{derive_seed, StrategyConfig, StrategyError, TrialRecord};

mod report;
mod run;
mod runlog;
mod select;

pub use report::{
    format_sig, load_run, parse_report_csv, render_csv, render_scatter, render_table, report,
    report_runs, LoadedRun, ReportFormat, ReportRow,
};
pub use run::{run_search, run_search_custom, run_search_with, RunOptions};
pub use runlog::{read_trial_log, TrialLog, TrialLogContents};
pub use select::{
    best_trial, cross_validate, cross_validate_with, format_pm, top_k, CvReport, MetricSummary,
};

pub const CONFIG_FILE: &str = "config.json";
pub const TRIALS_FILE: &str = "trials.jsonl";
pub const STATE_FILE: &str = "strategy_state.json";
pub const TIMINGS_FILE: &str = "timings.jsonl";
pub const RUN_FILE: &str = "run.json";

/// Salt for the hidden surrogate target when the config leaves it out.
const TARGET_SALT: u64 = 0x007a_29e7;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid run config: {0}")]
    Config(String),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error(transparent)]
    Evaluation(#[from] EvaluationError),
    #[error(transparent)]
    Complexity(#[from] ComplexityError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error("{failed} of {completed} trials failed; aborting run")]
    FailureThreshold { failed: usize, completed: usize },
}

impl RunError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        RunError::Io {
            path: path.into(),
            source,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EvaluatorConfig {
    Surrogate(SurrogateSpec),
    Subprocess(TrainerEndpoint),
}

impl std::str::FromStr for EvaluatorConfig {
    type Err = String;

    /// `surrogate:<kind>` or `subprocess:<command>`.
    fn from_str(s: &str) -> Result<Self, String> {
        match s.split_once(':') {
            Some(("surrogate", kind)) => Ok(EvaluatorConfig::Surrogate(SurrogateSpec {
                kind: kind.parse()?,
                target: None,
                noise_sigma: 0.0,
                table_path: None,
            })),
            Some(("subprocess", cmd)) if !cmd.trim().is_empty() => {
                Ok(EvaluatorConfig::Subprocess(TrainerEndpoint::new(cmd)))
            }
            _ => Err(format!(
                "expected surrogate:<kind> or subprocess:<command>, got {s:?}"
            )),
        }
    }
}

fn default_space() -> SearchSpaceDef {
    SearchSpaceDef::standard()
}

fn default_trials() -> u64 {
    50
}

fn default_concurrency() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default = "default_space")]
    pub space: SearchSpaceDef,
    pub strategy: StrategyConfig,
    pub evaluator: EvaluatorConfig,
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer_type_restriction: Option<LayerType>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fusion_restriction: Option<FusionMode>,
    pub output_dir: PathBuf,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    pub input_shape: InputShape,
    #[serde(default)]
    pub budget: EvaluationBudget,
    #[serde(default)]
    pub complexity: ComplexityConfig,
}

impl RunConfig {
    pub fn new(
        strategy: StrategyConfig,
        evaluator: EvaluatorConfig,
        input_shape: InputShape,
        output_dir: impl Into<PathBuf>,
    ) -> Self {
        Self {
            space: default_space(),
            strategy,
            evaluator,
            trials: default_trials(),
            seed: 0,
            layer_type_restriction: None,
            fusion_restriction: None,
            output_dir: output_dir.into(),
            concurrency: default_concurrency(),
            input_shape,
            budget: EvaluationBudget::default(),
            complexity: ComplexityConfig::default(),
        }
    }

    /// The space after applying the restrictions.
    pub fn search_space(&self) -> Result<SearchSpaceDef, RunError> {
        Ok(self
            .space
            .project(self.layer_type_restriction, self.fusion_restriction)?)
    }

    /// Fills in defaults that depend on the seed (the surrogate target).
    pub fn resolved(mut self) -> Result<Self, RunError> {
        if let EvaluatorConfig::Surrogate(spec) = &mut self.evaluator {
            if spec.target.is_none() && spec.kind != crate::evaluation::SurrogateKind::Tabular {
                spec.target = Some(sample_uniform(
                    &self.space,
                    derive_seed(self.seed, TARGET_SALT),
                )?);
            }
        }
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), RunError> {
        if self.trials == 0 {
            return Err(RunError::Config("trials must be at least 1".into()));
        }
        if self.concurrency == 0 {
            return Err(RunError::Config("concurrency must be at least 1".into()));
        }
        self.space.validate()?;
        self.search_space()?;
        self.strategy.validate()?;
        self.budget.validate()?;
        self.input_shape.validate()?;
        if self.input_shape.feature_dims.len() != self.space.num_modalities as usize {
            return Err(RunError::Config(format!(
                "input_shape has {} modalities, the space {}",
                self.input_shape.feature_dims.len(),
                self.space.num_modalities
            )));
        }
        match &self.evaluator {
            EvaluatorConfig::Surrogate(spec) => spec.validate(&self.space)?,
            EvaluatorConfig::Subprocess(ep) => {
                if ep.command.trim().is_empty() {
                    return Err(RunError::Config("trainer command is empty".into()));
                }
                if !(ep.timeout_secs > 0.0) {
                    return Err(RunError::Config("timeout_secs must be positive".into()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Aborted,
    Interrupted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialTiming {
    pub trial_id: u64,
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub engine_version: String,
    pub status: RunStatus,
    pub config: RunConfig,
    pub trials: Vec<TrialRecord>,
    pub best: Option<TrialRecord>,
    pub timings: Vec<TrialTiming>,
}

impl RunRecord {
    pub fn failed_count(&self) -> usize {
        self.trials.iter().filter(|t| !t.status.is_ok()).count()
    }
}

/// Summary written to `run.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct RunSummary {
    pub engine_version: String,
    pub status: RunStatus,
    pub strategy: String,
    pub trials: usize,
    pub failed: usize,
    pub best: Option<TrialRecord>,
    pub total_wall_time: f64,
}
