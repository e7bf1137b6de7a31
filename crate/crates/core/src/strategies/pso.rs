//! Particle swarm over the encoded space.
//!
//! Particles live in `[0, 1]^n` (the encoded layout) and are decoded when
//! proposed. Proposals go round-robin over the swarm. When a particle's trial
//! comes back its personal and the global best are updated, then it moves:
//!
//! ```text
//! v <- w v + c1 r1 (pbest - x) + c2 r2 (gbest - x)    r1, r2 ~ U(0, 1)
//! x <- clip(x + clamp(v), 0, 1)
//! ```

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Context, Observation};
use crate::space::{decode, encode, layout, EncodedVector, Genotype, SearchSpaceDef};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PsoConfig {
    pub particles: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    /// Per-slot bound on |velocity|.
    pub velocity_clamp: f64,
}

impl Default for PsoConfig {
    fn default() -> Self {
        Self {
            particles: 8,
            inertia: 0.729,
            cognitive: 1.49445,
            social: 1.49445,
            velocity_clamp: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    pub personal_best: Option<(Vec<f64>, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsoState {
    config: PsoConfig,
    rng: ChaCha8Rng,
    particles: Vec<Particle>,
    global_best: Option<(Vec<f64>, f64)>,
    next: usize,
    in_flight: BTreeMap<u64, usize>,
}

impl PsoState {
    pub fn new(config: PsoConfig, space: &SearchSpaceDef, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = layout(space).len();
        let vmax = config.velocity_clamp;
        let particles = (0..config.particles)
            .map(|_| Particle {
                position: (0..n).map(|_| rng.random::<f64>()).collect(),
                velocity: (0..n)
                    .map(|_| {
                        if vmax > 0.0 {
                            rng.random_range(-vmax..=vmax)
                        } else {
                            0.0
                        }
                    })
                    .collect(),
                personal_best: None,
            })
            .collect();
        Self {
            config,
            rng,
            particles,
            global_best: None,
            next: 0,
            in_flight: BTreeMap::new(),
        }
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    pub fn global_best(&self) -> Option<&(Vec<f64>, f64)> {
        self.global_best.as_ref()
    }

    pub(crate) fn propose(&mut self, ctx: &Context, trial_id: u64) -> Genotype {
        let k = self.next;
        self.next = (self.next + 1) % self.particles.len();
        self.in_flight.insert(trial_id, k);
        let v = EncodedVector {
            values: self.particles[k].position.clone(),
        };
        decode(&v, ctx.space).expect("particle dimension matches the layout")
    }

    pub(crate) fn observe(&mut self, ctx: &Context, obs: &Observation) {
        let Some(k) = self.in_flight.remove(&obs.trial_id) else {
            // not one of ours; it can still lead the swarm
            let x = encode(&obs.genotype, ctx.space).values;
            self.offer_global(&x, obs.objective);
            return;
        };
        let x = self.particles[k].position.clone();
        let p = &mut self.particles[k];
        if p.personal_best
            .as_ref()
            .is_none_or(|(_, y)| obs.objective < *y)
        {
            p.personal_best = Some((x.clone(), obs.objective));
        }
        self.offer_global(&x, obs.objective);
        self.step(k);
    }

    fn offer_global(&mut self, x: &[f64], y: f64) {
        if self.global_best.as_ref().is_none_or(|(_, best)| y < *best) {
            self.global_best = Some((x.to_vec(), y));
        }
    }

    fn step(&mut self, k: usize) {
        let PsoConfig {
            inertia,
            cognitive,
            social,
            velocity_clamp,
            ..
        } = self.config;
        let r1: f64 = self.rng.random();
        let r2: f64 = self.rng.random();
        let gbest = self.global_best.as_ref().map(|g| g.0.clone());
        let p = &mut self.particles[k];
        let pbest = p.personal_best.as_ref().map(|b| b.0.clone());
        for i in 0..p.position.len() {
            let x = p.position[i];
            let mut v = inertia * p.velocity[i];
            if let Some(pb) = &pbest {
                v += cognitive * r1 * (pb[i] - x);
            }
            if let Some(gb) = &gbest {
                v += social * r2 * (gb[i] - x);
            }
            if velocity_clamp > 0.0 {
                v = v.clamp(-velocity_clamp, velocity_clamp);
            }
            p.velocity[i] = v;
            p.position[i] = (x + v).clamp(0.0, 1.0);
        }
    }
}
