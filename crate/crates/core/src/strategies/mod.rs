//! Search strategies behind one propose/observe interface.
//!
//! A [`Strategy`] owns the per-variant [`StrategyState`] plus the bookkeeping
//! every variant shares: the observed history, proposals still in flight and
//! the penalty applied to failed trials. Everything serializes, so a run can
//! snapshot a strategy after any observation and resume from it.
//!
//! Objectives are minimized. Failed and timed-out trials are fed to the
//! variant with `worst + 0.1 * range` over the successful trials seen so far;
//! failures that arrive before any success are held back until one does.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::MetricReport;
use crate::space::{Genotype, SearchSpaceDef, SpaceError};

mod evolution;
mod gp;
mod hill_climb;
mod lanas;
mod linalg;
mod pso;
mod random;
mod reinforce;
mod tpe;

pub use evolution::{EvoState, EvolutionConfig};
pub use gp::{
    expected_improvement, fit_with_escalating_noise, gp_posterior, GpConfig, GpError, GpModel,
    GpState, KernelParams, JITTER,
};
pub use hill_climb::{HillClimbConfig, HillClimbState};
pub use lanas::{ucb1_score, LanasConfig, LanasNode, LanasState, SplitRule};
pub use pso::{Particle, PsoConfig, PsoState};
pub use random::RandomState;
pub use reinforce::{DimPolicy, ReinforceConfig, RlState};
pub use tpe::{tpe_models, DimModel, ParzenEstimator, TpeConfig, TpeState};

/// Fraction of the observed objective range added to the worst objective
/// for failed trials.
pub const FAILURE_PENALTY: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrialStatus {
    Ok,
    Failed,
    Timeout,
}

impl TrialStatus {
    pub fn is_ok(self) -> bool {
        self == TrialStatus::Ok
    }
}

impl fmt::Display for TrialStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrialStatus::Ok => "ok",
            TrialStatus::Failed => "failed",
            TrialStatus::Timeout => "timeout",
        })
    }
}

/// One evaluated architecture. `objective` and `metrics` are present for
/// successful trials only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_id: u64,
    pub genotype: Genotype,
    pub status: TrialStatus,
    pub objective: Option<f64>,
    pub metrics: Option<MetricReport>,
    pub flops: u64,
    pub seed: u64,
    /// Proposed by the uniform fallback after the strategy ran out of candidates.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub fallback: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    /// Evaluator output kept verbatim for failed trials.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<String>,
}

impl TrialRecord {
    pub fn ok_objective(&self) -> Option<f64> {
        if self.status.is_ok() {
            self.objective
        } else {
            None
        }
    }
}

/// A trial as the strategy variants see it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub trial_id: u64,
    pub genotype: Genotype,
    /// Effective objective; penalized for failed trials.
    pub objective: f64,
    pub ok: bool,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StrategyError {
    #[error("trial {0} was already observed")]
    DuplicateTrial(u64),
    #[error("trial {0} has status ok but no finite objective")]
    MissingObjective(u64),
    #[error("invalid strategy configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Space(#[from] SpaceError),
}

/// Strategy name plus hyperparameters, tagged by `name` in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum StrategyConfig {
    #[serde(alias = "random_search")]
    Random,
    #[serde(alias = "hill_climb", alias = "hillclimbing")]
    HillClimbing(HillClimbConfig),
    #[serde(alias = "particle_swarm")]
    Pso(PsoConfig),
    #[serde(alias = "evolution", alias = "reg_evo")]
    RegularizedEvolution(EvolutionConfig),
    #[serde(alias = "gp", alias = "bayesian", alias = "bayesian_optimization")]
    GaussianProcess(GpConfig),
    #[serde(alias = "tree_parzen")]
    Tpe(TpeConfig),
    #[serde(alias = "rl", alias = "policy_gradient")]
    Reinforce(ReinforceConfig),
    #[serde(alias = "la_nas", alias = "mcts")]
    Lanas(LanasConfig),
}

impl StrategyConfig {
    pub const NAMES: [&'static str; 8] = [
        "random",
        "hill_climbing",
        "pso",
        "regularized_evolution",
        "gaussian_process",
        "tpe",
        "reinforce",
        "lanas",
    ];

    /// Every strategy with default hyperparameters.
    pub fn all_defaults() -> Vec<StrategyConfig> {
        Self::NAMES
            .iter()
            .map(|n| n.parse().expect("known name"))
            .collect()
    }

    pub fn name(&self) -> &'static str {
        match self {
            StrategyConfig::Random => "random",
            StrategyConfig::HillClimbing(_) => "hill_climbing",
            StrategyConfig::Pso(_) => "pso",
            StrategyConfig::RegularizedEvolution(_) => "regularized_evolution",
            StrategyConfig::GaussianProcess(_) => "gaussian_process",
            StrategyConfig::Tpe(_) => "tpe",
            StrategyConfig::Reinforce(_) => "reinforce",
            StrategyConfig::Lanas(_) => "lanas",
        }
    }

    pub fn validate(&self) -> Result<(), StrategyError> {
        let bad = |msg: &str| {
            Err(StrategyError::InvalidConfig(format!(
                "{}: {msg}",
                self.name()
            )))
        };
        match self {
            StrategyConfig::Random | StrategyConfig::HillClimbing(_) => Ok(()),
            StrategyConfig::Pso(c) if c.particles == 0 => bad("particles must be at least 1"),
            StrategyConfig::RegularizedEvolution(c) if c.population == 0 || c.sample_size == 0 => {
                bad("population and sample_size must be at least 1")
            }
            StrategyConfig::GaussianProcess(c) if !(c.length_scale > 0.0) || c.noise < 0.0 => {
                bad("length_scale must be positive and noise non-negative")
            }
            StrategyConfig::Tpe(c) if !(c.gamma > 0.0 && c.gamma < 1.0) || c.n_candidates == 0 => {
                bad("gamma must lie in (0, 1) and n_candidates be at least 1")
            }
            StrategyConfig::Reinforce(c)
                if c.max_bins < 1 || !(0.0..1.0).contains(&c.baseline_decay) =>
            {
                bad("max_bins must be at least 1 and baseline_decay in [0, 1)")
            }
            StrategyConfig::Lanas(c) if c.split_threshold < 2 || c.exploration < 0.0 => {
                bad("split_threshold must be at least 2 and exploration non-negative")
            }
            _ => Ok(()),
        }
    }
}

impl FromStr for StrategyConfig {
    type Err = StrategyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let quoted = serde_json::json!({ "name": s.trim().to_ascii_lowercase().replace('-', "_") });
        serde_json::from_value(quoted)
            .map_err(|_| StrategyError::InvalidConfig(format!("unknown strategy `{s}`")))
    }
}

/// Per-variant persistent state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyState {
    Random(RandomState),
    HillClimb(HillClimbState),
    Pso(PsoState),
    Evo(EvoState),
    Gp(GpState),
    Tpe(TpeState),
    Rl(RlState),
    Lanas(LanasState),
}

/// Result of asking a strategy for its next candidate.
#[derive(Debug, Clone, PartialEq)]
pub enum Proposal {
    Candidate(Genotype),
    /// No unexplored candidate left (a converged hill climb).
    Exhausted,
}

/// What a variant sees when proposing or observing.
pub(crate) struct Context<'a> {
    pub space: &'a SearchSpaceDef,
    pub history: &'a [Observation],
    pub pending: &'a BTreeMap<u64, Genotype>,
}

impl Context<'_> {
    pub fn best_objective(&self) -> Option<f64> {
        self.history
            .iter()
            .map(|o| o.objective)
            .min_by(f64::total_cmp)
    }

    /// History plus in-flight proposals observed at the current best value.
    pub fn with_constant_liar(&self) -> Vec<(Genotype, f64)> {
        let mut out: Vec<(Genotype, f64)> = self
            .history
            .iter()
            .map(|o| (o.genotype.clone(), o.objective))
            .collect();
        if let Some(best) = self.best_objective() {
            out.extend(self.pending.values().map(|g| (g.clone(), best)));
        }
        out
    }

    pub fn is_evaluated(&self, g: &Genotype) -> bool {
        self.history.iter().any(|o| o.genotype == *g) || self.pending.values().any(|p| p == g)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Strategy {
    config: StrategyConfig,
    space: SearchSpaceDef,
    state: StrategyState,
    history: Vec<Observation>,
    pending: BTreeMap<u64, Genotype>,
    deferred: Vec<(u64, Genotype)>,
    seen: BTreeSet<u64>,
}

impl Strategy {
    pub fn new(
        config: StrategyConfig,
        space: SearchSpaceDef,
        seed: u64,
    ) -> Result<Self, StrategyError> {
        space.validate()?;
        config.validate()?;
        let state = match &config {
            StrategyConfig::Random => StrategyState::Random(RandomState::new(seed)),
            StrategyConfig::HillClimbing(c) => {
                StrategyState::HillClimb(HillClimbState::new(c.clone(), seed))
            }
            StrategyConfig::Pso(c) => StrategyState::Pso(PsoState::new(c.clone(), &space, seed)),
            StrategyConfig::RegularizedEvolution(c) => {
                StrategyState::Evo(EvoState::new(c.clone(), seed))
            }
            StrategyConfig::GaussianProcess(c) => StrategyState::Gp(GpState::new(c.clone(), seed)),
            StrategyConfig::Tpe(c) => StrategyState::Tpe(TpeState::new(c.clone(), seed)),
            StrategyConfig::Reinforce(c) => {
                StrategyState::Rl(RlState::new(c.clone(), &space, seed))
            }
            StrategyConfig::Lanas(c) => StrategyState::Lanas(LanasState::new(c.clone(), seed)),
        };
        Ok(Self {
            config,
            space,
            state,
            history: Vec::new(),
            pending: BTreeMap::new(),
            deferred: Vec::new(),
            seen: BTreeSet::new(),
        })
    }

    pub fn name(&self) -> &'static str {
        self.config.name()
    }

    pub fn config(&self) -> &StrategyConfig {
        &self.config
    }

    pub fn space(&self) -> &SearchSpaceDef {
        &self.space
    }

    pub fn state(&self) -> &StrategyState {
        &self.state
    }

    /// Observations delivered to the variant, in delivery order.
    pub fn history(&self) -> &[Observation] {
        &self.history
    }

    /// Number of trials accepted by [`observe`](Self::observe), including
    /// failures still held back.
    pub fn observed_count(&self) -> usize {
        self.seen.len()
    }

    /// Proposals not observed yet, by trial id.
    pub fn pending(&self) -> &BTreeMap<u64, Genotype> {
        &self.pending
    }

    pub fn has_observed(&self, trial_id: u64) -> bool {
        self.seen.contains(&trial_id)
    }

    /// Records `g` as in flight under `trial_id` without asking the variant,
    /// e.g. for a fallback sample after [`Proposal::Exhausted`].
    pub fn mark_pending(&mut self, trial_id: u64, g: Genotype) {
        self.pending.insert(trial_id, g);
    }

    pub fn propose(&mut self, trial_id: u64) -> Proposal {
        let ctx = Context {
            space: &self.space,
            history: &self.history,
            pending: &self.pending,
        };
        let proposal = match &mut self.state {
            StrategyState::Random(s) => Proposal::Candidate(s.propose(&ctx)),
            StrategyState::HillClimb(s) => s.propose(&ctx),
            StrategyState::Pso(s) => Proposal::Candidate(s.propose(&ctx, trial_id)),
            StrategyState::Evo(s) => Proposal::Candidate(s.propose(&ctx)),
            StrategyState::Gp(s) => Proposal::Candidate(s.propose(&ctx)),
            StrategyState::Tpe(s) => Proposal::Candidate(s.propose(&ctx)),
            StrategyState::Rl(s) => Proposal::Candidate(s.propose(&ctx)),
            StrategyState::Lanas(s) => Proposal::Candidate(s.propose(&ctx)),
        };
        if let Proposal::Candidate(g) = &proposal {
            debug_assert!(
                g.validate(&self.space).is_ok(),
                "{} proposed {g:?}",
                self.name()
            );
            self.pending.insert(trial_id, g.clone());
        }
        proposal
    }

    /// Feeds a finished trial back. Trials may arrive out of proposal order
    /// and need not have been proposed by this strategy.
    pub fn observe(&mut self, trial: &TrialRecord) -> Result<(), StrategyError> {
        if self.seen.contains(&trial.trial_id) {
            return Err(StrategyError::DuplicateTrial(trial.trial_id));
        }
        let objective = match trial.ok_objective() {
            Some(y) if y.is_finite() => Some(y),
            Some(_) => return Err(StrategyError::MissingObjective(trial.trial_id)),
            None if trial.status.is_ok() => {
                return Err(StrategyError::MissingObjective(trial.trial_id))
            }
            None => None,
        };
        self.seen.insert(trial.trial_id);
        self.pending.remove(&trial.trial_id);
        match objective {
            Some(y) => {
                self.deliver(Observation {
                    trial_id: trial.trial_id,
                    genotype: trial.genotype.clone(),
                    objective: y,
                    ok: true,
                });
                for (id, g) in std::mem::take(&mut self.deferred) {
                    self.deliver_failure(id, g);
                }
            }
            None if self.history.iter().any(|o| o.ok) => {
                self.deliver_failure(trial.trial_id, trial.genotype.clone());
            }
            None => self.deferred.push((trial.trial_id, trial.genotype.clone())),
        }
        Ok(())
    }

    /// Objective assigned to a failure given the successful trials so far.
    pub fn failure_objective(&self) -> Option<f64> {
        failure_objective(self.history.iter().filter(|o| o.ok).map(|o| o.objective))
    }

    fn deliver_failure(&mut self, trial_id: u64, genotype: Genotype) {
        let objective = self.failure_objective().expect("at least one ok trial");
        self.deliver(Observation {
            trial_id,
            genotype,
            objective,
            ok: false,
        });
    }

    fn deliver(&mut self, obs: Observation) {
        let ctx = Context {
            space: &self.space,
            history: &self.history,
            pending: &self.pending,
        };
        match &mut self.state {
            StrategyState::Random(_) => {}
            StrategyState::HillClimb(s) => s.observe(&ctx, &obs),
            StrategyState::Pso(s) => s.observe(&ctx, &obs),
            StrategyState::Evo(s) => s.observe(&obs),
            StrategyState::Gp(_) | StrategyState::Tpe(_) => {}
            StrategyState::Rl(s) => s.observe(&ctx, &obs),
            StrategyState::Lanas(s) => s.observe(&ctx, &obs),
        }
        self.history.push(obs);
    }
}

/// `worst + 0.1 * range` over successful objectives, or `worst + 0.1 *
/// max(|worst|, 1)` when they are all equal. `None` without any success.
pub fn failure_objective(ok_objectives: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for y in ok_objectives {
        lo = lo.min(y);
        hi = hi.max(y);
    }
    if hi == f64::NEG_INFINITY {
        return None;
    }
    let range = hi - lo;
    let spread = if range > 0.0 {
        range
    } else {
        hi.abs().max(1.0)
    };
    Some(hi + FAILURE_PENALTY * spread)
}

/// Splits `seed` into an independent stream for `salt`.
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
