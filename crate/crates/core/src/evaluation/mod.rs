//! Performance estimation: built-in surrogate objectives and external
//! trainers reached over a line-delimited JSON protocol.
//!
//! Both paths produce an [`EvaluationResult`]. Its `objective` is what the
//! strategies minimize: the surrogate value, or the validation cross-entropy
//! reported by a trainer.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::MetricReport;
use crate::space::{Genotype, SpaceError};
use crate::strategies::TrialStatus;

pub mod protocol;
mod subprocess;
mod surrogate;

pub use subprocess::{evaluate_external, TrainerEndpoint, TrainerMode, TrainerSession};
pub use surrogate::{
    deceptive, evaluate_surrogate, genotype_hash, load_table, write_table, Surrogate,
    SurrogateKind, SurrogateSpec,
};

#[derive(Debug, Error)]
pub enum EvaluationError {
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error("no table entry for {0}")]
    TableMiss(String),
    #[error("invalid surrogate: {0}")]
    InvalidSpec(String),
    #[error("{path}: {message}")]
    Table { path: String, message: String },
    #[error("invalid budget: {0}")]
    InvalidBudget(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluationBudget {
    pub max_epochs: u32,
    pub early_stopping_patience: u32,
    pub fold: u32,
    pub seed: u64,
}

impl Default for EvaluationBudget {
    fn default() -> Self {
        Self {
            max_epochs: 100,
            early_stopping_patience: 25,
            fold: 0,
            seed: 0,
        }
    }
}

impl EvaluationBudget {
    pub fn validate(&self) -> Result<(), EvaluationError> {
        if self.max_epochs == 0 {
            return Err(EvaluationError::InvalidBudget(
                "max_epochs must be at least 1".into(),
            ));
        }
        if self.early_stopping_patience > self.max_epochs {
            return Err(EvaluationError::InvalidBudget(format!(
                "patience {} exceeds max_epochs {}",
                self.early_stopping_patience, self.max_epochs
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalStatus {
    Ok,
    Timeout,
    SpawnFailed,
    ProtocolViolation,
    TrainerError,
}

impl EvalStatus {
    pub fn trial_status(self) -> TrialStatus {
        match self {
            EvalStatus::Ok => TrialStatus::Ok,
            EvalStatus::Timeout => TrialStatus::Timeout,
            _ => TrialStatus::Failed,
        }
    }
}

impl fmt::Display for EvalStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvalStatus::Ok => "ok",
            EvalStatus::Timeout => "timeout",
            EvalStatus::SpawnFailed => "spawn_failed",
            EvalStatus::ProtocolViolation => "protocol_violation",
            EvalStatus::TrainerError => "trainer_error",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationResult {
    pub status: EvalStatus,
    pub objective: Option<f64>,
    pub metrics: Option<MetricReport>,
    /// FLOPs reported by the evaluator, if any.
    pub flops: Option<u64>,
    pub epochs_ran: Option<u32>,
    pub message: Option<String>,
    /// Response line exactly as received, kept for failed external evaluations.
    pub raw: Option<String>,
}

impl EvaluationResult {
    pub fn ok(objective: f64, metrics: MetricReport) -> Self {
        Self {
            status: EvalStatus::Ok,
            objective: Some(objective),
            metrics: Some(metrics),
            flops: None,
            epochs_ran: None,
            message: None,
            raw: None,
        }
    }

    pub fn failed(status: EvalStatus, message: impl Into<String>, raw: Option<String>) -> Self {
        debug_assert!(status != EvalStatus::Ok);
        Self {
            status,
            objective: None,
            metrics: None,
            flops: None,
            epochs_ran: None,
            message: Some(message.into()),
            raw,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == EvalStatus::Ok
    }
}

/// What the engine asks an evaluator for.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRequest {
    pub trial_id: u64,
    pub genotype: Genotype,
    pub budget: EvaluationBudget,
}

/// Something that scores genotypes. The engine creates one per worker.
pub trait Evaluator: Send {
    fn evaluate(&mut self, request: &EvalRequest) -> EvaluationResult;
}

impl Evaluator for Surrogate {
    fn evaluate(&mut self, request: &EvalRequest) -> EvaluationResult {
        match Surrogate::evaluate(self, &request.genotype, request.budget.seed) {
            Ok(r) => r,
            Err(e) => EvaluationResult::failed(EvalStatus::TrainerError, e.to_string(), None),
        }
    }
}
