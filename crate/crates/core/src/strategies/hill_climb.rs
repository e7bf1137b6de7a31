//! First-improvement hill climbing from the most compact architecture.
//!
//! The single-step neighborhood of the incumbent is visited in shuffled
//! order, except that the move which produced the incumbent is retried first.
//! The first neighbor that beats the incumbent replaces it. When every
//! neighbor has been tried without improvement the climb has converged and
//! proposals report [`Proposal::Exhausted`]; an observation that beats the
//! incumbent (for instance an injected one) restarts the climb from there.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Context, Observation, Proposal};
use crate::space::{neighbor_moves, sample_with, Genotype, Move, MoveKind, StepSizes};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HillClimbConfig {
    pub step_sizes: StepSizes,
    /// Retry the last successful integer move before the rest of the neighborhood.
    pub momentum: bool,
}

impl Default for HillClimbConfig {
    fn default() -> Self {
        Self {
            step_sizes: StepSizes::default(),
            momentum: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HillClimbState {
    config: HillClimbConfig,
    rng: ChaCha8Rng,
    incumbent: Option<(Genotype, f64)>,
    /// Untried neighbors of the incumbent, next one last.
    pending_neighbors: Vec<(Move, Genotype)>,
    in_flight: Vec<(Move, Genotype)>,
    visited: BTreeSet<Genotype>,
    last_move: Option<Move>,
    started: bool,
}

impl HillClimbState {
    pub fn new(config: HillClimbConfig, seed: u64) -> Self {
        Self {
            config,
            rng: ChaCha8Rng::seed_from_u64(seed),
            incumbent: None,
            pending_neighbors: Vec::new(),
            in_flight: Vec::new(),
            visited: BTreeSet::new(),
            last_move: None,
            started: false,
        }
    }

    pub fn incumbent(&self) -> Option<&(Genotype, f64)> {
        self.incumbent.as_ref()
    }

    pub fn is_converged(&self) -> bool {
        self.incumbent.is_some() && self.pending_neighbors.is_empty() && self.in_flight.is_empty()
    }

    pub(crate) fn propose(&mut self, ctx: &Context) -> Proposal {
        if !self.started {
            self.started = true;
            let g = ctx.space.minimal_genotype();
            self.visited.insert(g.clone());
            return Proposal::Candidate(g);
        }
        if self.incumbent.is_none() {
            // still waiting for the first result; keep a batch busy
            return Proposal::Candidate(sample_with(ctx.space, &mut self.rng));
        }
        while let Some((mv, g)) = self.pending_neighbors.pop() {
            if self.visited.insert(g.clone()) {
                self.in_flight.push((mv, g.clone()));
                return Proposal::Candidate(g);
            }
        }
        Proposal::Exhausted
    }

    pub(crate) fn observe(&mut self, ctx: &Context, obs: &Observation) {
        self.visited.insert(obs.genotype.clone());
        let mv = self
            .in_flight
            .iter()
            .position(|(_, g)| *g == obs.genotype)
            .map(|i| self.in_flight.swap_remove(i).0);
        let improves = self
            .incumbent
            .as_ref()
            .is_none_or(|(_, y)| obs.objective < *y);
        if !improves {
            return;
        }
        self.incumbent = Some((obs.genotype.clone(), obs.objective));
        self.last_move = mv;
        let mut moves = neighbor_moves(&obs.genotype, ctx.space, &self.config.step_sizes);
        moves.shuffle(&mut self.rng);
        if let (true, Some(last)) = (self.config.momentum, self.last_move) {
            if matches!(last.kind, MoveKind::Step(_)) {
                if let Some(i) = moves.iter().position(|(m, _)| *m == last) {
                    let repeat = moves.remove(i);
                    moves.insert(0, repeat);
                }
            }
        }
        moves.reverse();
        self.pending_neighbors = moves;
    }
}
