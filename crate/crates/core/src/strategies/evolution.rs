//! Regularized (aging) evolution.
//!
//! The first `population` proposals are uniform samples. After that, each
//! proposal draws `sample_size` distinct members of the population, takes the
//! best of them and mutates it. Observations join the back of the queue and
//! the oldest member leaves once the queue exceeds its capacity, whatever its
//! fitness.

use std::collections::VecDeque;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Context, Observation};
use crate::space::{mutate_with, sample_with, Genotype};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvolutionConfig {
    pub population: usize,
    pub sample_size: usize,
    /// Redraw children that were already evaluated, up to this many times.
    pub max_duplicate_retries: u32,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            population: 10,
            sample_size: 3,
            max_duplicate_retries: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvoState {
    config: EvolutionConfig,
    rng: ChaCha8Rng,
    population: VecDeque<(Genotype, f64)>,
    initial_proposed: usize,
}

impl EvoState {
    pub fn new(config: EvolutionConfig, seed: u64) -> Self {
        Self {
            config,
            rng: ChaCha8Rng::seed_from_u64(seed),
            population: VecDeque::new(),
            initial_proposed: 0,
        }
    }

    /// Current members, oldest first.
    pub fn population(&self) -> impl Iterator<Item = &(Genotype, f64)> {
        self.population.iter()
    }

    pub fn capacity(&self) -> usize {
        self.config.population
    }

    pub(crate) fn propose(&mut self, ctx: &Context) -> Genotype {
        if self.initial_proposed < self.config.population || self.population.is_empty() {
            self.initial_proposed += 1;
            return sample_with(ctx.space, &mut self.rng);
        }
        let parent = self.tournament().clone();
        let mut child = mutate_with(&parent, ctx.space, &mut self.rng);
        for _ in 0..self.config.max_duplicate_retries {
            if !ctx.is_evaluated(&child) {
                break;
            }
            child = mutate_with(&parent, ctx.space, &mut self.rng);
        }
        child
    }

    fn tournament(&mut self) -> &Genotype {
        let n = self.population.len();
        let k = self.config.sample_size.min(n);
        let mut picks = index::sample(&mut self.rng, n, k).into_vec();
        picks.sort_unstable();
        let best = picks
            .into_iter()
            .min_by(|&a, &b| self.population[a].1.total_cmp(&self.population[b].1))
            .expect("non-empty sample");
        &self.population[best].0
    }

    pub(crate) fn observe(&mut self, obs: &Observation) {
        self.population
            .push_back((obs.genotype.clone(), obs.objective));
        while self.population.len() > self.config.population {
            self.population.pop_front();
        }
    }
}
