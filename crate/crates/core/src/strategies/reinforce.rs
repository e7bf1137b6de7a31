//! Policy-gradient controller with one independent categorical per dimension.
//!
//! Integer dimensions are split into at most `max_bins` contiguous bins; the
//! policy picks a bin and the value is uniform inside it. For a genotype with
//! actions `a_d` on its active dimensions
//!
//! ```text
//! log pi = sum_d [ log softmax(theta_d)[a_d] - ln |bin(a_d)| ]
//! theta_d += lr * (r - b) * (onehot(a_d) - softmax(theta_d))
//! ```
//!
//! with reward `r = -objective` and `b` an exponential moving average of
//! past rewards, started at the first reward.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Context, Observation};
use crate::space::{Dim, DimDomain, DimValue, Genotype, SearchSpaceDef};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReinforceConfig {
    pub learning_rate: f64,
    pub baseline_decay: f64,
    pub max_bins: usize,
}

impl Default for ReinforceConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            baseline_decay: 0.9,
            max_bins: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimPolicy {
    pub dim: Dim,
    pub logits: Vec<f64>,
    /// Inclusive value ranges per action for integer dimensions; empty for categoricals.
    pub bins: Vec<(u32, u32)>,
}

impl DimPolicy {
    fn new(dim: Dim, domain: DimDomain, max_bins: usize) -> Self {
        match domain {
            DimDomain::Categorical(k) => Self {
                dim,
                logits: vec![0.0; k],
                bins: Vec::new(),
            },
            DimDomain::Integer(r) => {
                let card = r.cardinality();
                let k = card.min(max_bins);
                let bins = (0..k)
                    .map(|b| {
                        let lo = r.min + (b * card / k) as u32;
                        let hi = r.min + ((b + 1) * card / k) as u32 - 1;
                        (lo, hi)
                    })
                    .collect();
                Self {
                    dim,
                    logits: vec![0.0; k],
                    bins,
                }
            }
        }
    }

    pub fn probabilities(&self) -> Vec<f64> {
        softmax(&self.logits)
    }

    fn action_of(&self, value: DimValue) -> usize {
        match value {
            DimValue::Choice(c) => c,
            DimValue::Int(v) => self
                .bins
                .iter()
                .position(|&(lo, hi)| lo <= v && v <= hi)
                .unwrap_or(0),
        }
    }

    fn bin_size(&self, action: usize) -> f64 {
        self.bins
            .get(action)
            .map_or(1.0, |&(lo, hi)| f64::from(hi - lo + 1))
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RlState {
    config: ReinforceConfig,
    rng: ChaCha8Rng,
    policies: Vec<DimPolicy>,
    baseline: Option<f64>,
    updates: u64,
}

impl RlState {
    pub fn new(config: ReinforceConfig, space: &SearchSpaceDef, seed: u64) -> Self {
        let policies = space
            .domains()
            .into_iter()
            .map(|(dim, domain)| DimPolicy::new(dim, domain, config.max_bins))
            .collect();
        Self {
            config,
            rng: ChaCha8Rng::seed_from_u64(seed),
            policies,
            baseline: None,
            updates: 0,
        }
    }

    pub fn policies(&self) -> &[DimPolicy] {
        &self.policies
    }

    pub fn policies_mut(&mut self) -> &mut [DimPolicy] {
        &mut self.policies
    }

    pub fn baseline(&self) -> Option<f64> {
        self.baseline
    }

    /// Actions of `g` on its active dimensions, `None` where inactive.
    fn actions(&self, space: &SearchSpaceDef, g: &Genotype) -> Vec<Option<usize>> {
        space
            .values(g)
            .into_iter()
            .zip(&self.policies)
            .map(|(v, p)| v.map(|v| p.action_of(v)))
            .collect()
    }

    pub fn log_prob(&self, space: &SearchSpaceDef, g: &Genotype) -> f64 {
        self.actions(space, g)
            .into_iter()
            .zip(&self.policies)
            .filter_map(|(a, p)| a.map(|a| (a, p)))
            .map(|(a, p)| p.probabilities()[a].ln() - p.bin_size(a).ln())
            .sum()
    }

    /// Gradient of [`log_prob`](Self::log_prob) with respect to every logit.
    pub fn log_prob_gradient(&self, space: &SearchSpaceDef, g: &Genotype) -> Vec<Vec<f64>> {
        self.actions(space, g)
            .into_iter()
            .zip(&self.policies)
            .map(|(a, p)| match a {
                None => vec![0.0; p.logits.len()],
                Some(a) => p
                    .probabilities()
                    .into_iter()
                    .enumerate()
                    .map(|(i, q)| f64::from(u8::from(i == a)) - q)
                    .collect(),
            })
            .collect()
    }

    /// One REINFORCE step for `g` scored at `objective`.
    pub fn reinforce_update(&mut self, space: &SearchSpaceDef, g: &Genotype, objective: f64) {
        let reward = -objective;
        let baseline = *self.baseline.get_or_insert(reward);
        let advantage = reward - baseline;
        if advantage != 0.0 {
            let grad = self.log_prob_gradient(space, g);
            let lr = self.config.learning_rate;
            for (p, gd) in self.policies.iter_mut().zip(grad) {
                for (l, d) in p.logits.iter_mut().zip(gd) {
                    *l += lr * advantage * d;
                }
            }
        }
        let decay = self.config.baseline_decay;
        self.baseline = Some(decay * baseline + (1.0 - decay) * reward);
        self.updates += 1;
    }

    pub fn sample<R: Rng + ?Sized>(&self, space: &SearchSpaceDef, rng: &mut R) -> Genotype {
        let mut values = vec![None; self.policies.len()];
        let mut layer_type = space.seq_layer_types[0];
        let mut fusion = space.fusion_modes[0];
        for (i, p) in self.policies.iter().enumerate() {
            if !space.is_active(p.dim, layer_type, fusion) {
                continue;
            }
            let probs = p.probabilities();
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut a = probs.len() - 1;
            for (k, q) in probs.iter().enumerate() {
                acc += q;
                if u < acc {
                    a = k;
                    break;
                }
            }
            values[i] = Some(match p.bins.get(a) {
                Some(&(lo, hi)) => DimValue::Int(rng.random_range(lo..=hi)),
                None => DimValue::Choice(a),
            });
            match p.dim {
                Dim::LayerType => layer_type = space.seq_layer_types[a],
                Dim::Fusion => fusion = space.fusion_modes[a],
                _ => {}
            }
        }
        space.genotype_from_values(&values)
    }

    pub(crate) fn propose(&mut self, ctx: &Context) -> Genotype {
        let mut rng = self.rng.clone();
        let g = self.sample(ctx.space, &mut rng);
        self.rng = rng;
        g
    }

    pub(crate) fn observe(&mut self, ctx: &Context, obs: &Observation) {
        self.reinforce_update(ctx.space, &obs.genotype, obs.objective);
    }
}
