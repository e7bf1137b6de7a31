//! Tree-structured Parzen estimator.
//!
//! The history is split into the `max(1, ceil(gamma n))` lowest objectives
//! (the good group, density `l`) and the rest (`g`). Each group gets an
//! independent model per dimension, fitted on the observations where that
//! dimension is active:
//!
//! * categorical: `(count + 1) / (m + K)`;
//! * integer: mixture of Gaussians truncated to `[0, 1]` on the normalized
//!   value, one per observation, bandwidth `max(std * m^(-1/5), floor)`,
//!   plus a uniform component of weight `prior_weight`;
//! * no active observation: uniform.
//!
//! The joint density of a genotype is the product over its active
//! dimensions. Candidates are drawn from `l` and the one maximizing `l / g`
//! is proposed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use super::Context;
use crate::space::{sample_with, Dim, DimDomain, DimValue, Genotype, SearchSpaceDef};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TpeConfig {
    pub gamma: f64,
    pub n_candidates: usize,
    /// Uniform proposals before the first fit (at least 4).
    pub n_startup: usize,
    pub bandwidth_floor: f64,
    /// Weight of the uniform component in every numeric mixture.
    pub prior_weight: f64,
}

impl Default for TpeConfig {
    fn default() -> Self {
        Self {
            gamma: 0.25,
            n_candidates: 24,
            n_startup: 10,
            bandwidth_floor: 0.05,
            prior_weight: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DimModel {
    Categorical {
        probs: Vec<f64>,
    },
    Numeric {
        centers: Vec<f64>,
        bandwidth: f64,
        prior_weight: f64,
    },
    Uniform,
}

/// Product of independent per-dimension Parzen models.
#[derive(Debug, Clone, PartialEq)]
pub struct ParzenEstimator {
    dims: Vec<(Dim, DimDomain, DimModel)>,
}

fn truncated_normal_pdf(x: f64, mu: f64, sigma: f64) -> f64 {
    let n = Normal::standard();
    let mass = n.cdf((1.0 - mu) / sigma) - n.cdf(-mu / sigma);
    n.pdf((x - mu) / sigma) / sigma / mass
}

fn normalized(domain: DimDomain, value: DimValue) -> f64 {
    match (domain, value) {
        (DimDomain::Integer(r), DimValue::Int(v)) => r.normalize(v),
        _ => 0.0,
    }
}

impl ParzenEstimator {
    pub fn fit(
        space: &SearchSpaceDef,
        group: &[Genotype],
        bandwidth_floor: f64,
        prior_weight: f64,
    ) -> Self {
        let domains = space.domains();
        let values: Vec<_> = group.iter().map(|g| space.values(g)).collect();
        let dims = domains
            .iter()
            .enumerate()
            .map(|(i, &(dim, domain))| {
                let active: Vec<DimValue> = values.iter().filter_map(|v| v[i]).collect();
                let model = match domain {
                    DimDomain::Categorical(k) => {
                        let mut probs = vec![1.0; k];
                        for v in &active {
                            if let DimValue::Choice(c) = v {
                                probs[*c] += 1.0;
                            }
                        }
                        let total = (active.len() + k) as f64;
                        probs.iter_mut().for_each(|p| *p /= total);
                        DimModel::Categorical { probs }
                    }
                    DimDomain::Integer(_) if active.is_empty() => DimModel::Uniform,
                    DimDomain::Integer(_) => {
                        let centers: Vec<f64> =
                            active.iter().map(|&v| normalized(domain, v)).collect();
                        let m = centers.len() as f64;
                        let mean = centers.iter().sum::<f64>() / m;
                        let std =
                            (centers.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / m).sqrt();
                        let bandwidth = (std * m.powf(-0.2)).max(bandwidth_floor);
                        DimModel::Numeric {
                            centers,
                            bandwidth,
                            prior_weight,
                        }
                    }
                };
                (dim, domain, model)
            })
            .collect();
        Self { dims }
    }

    pub fn models(&self) -> impl Iterator<Item = &DimModel> {
        self.dims.iter().map(|d| &d.2)
    }

    /// Log density of `g` over its active dimensions.
    pub fn log_density(&self, space: &SearchSpaceDef, g: &Genotype) -> f64 {
        space
            .values(g)
            .into_iter()
            .zip(&self.dims)
            .filter_map(|(v, (_, domain, model))| v.map(|v| (v, domain, model)))
            .map(|(v, &domain, model)| match (model, v) {
                (DimModel::Categorical { probs }, DimValue::Choice(c)) => probs[c].ln(),
                (
                    DimModel::Numeric {
                        centers,
                        bandwidth,
                        prior_weight,
                    },
                    v,
                ) => {
                    let x = normalized(domain, v);
                    let s: f64 = centers
                        .iter()
                        .map(|&c| truncated_normal_pdf(x, c, *bandwidth))
                        .sum();
                    ((s + prior_weight) / (centers.len() as f64 + prior_weight)).ln()
                }
                _ => 0.0,
            })
            .sum()
    }

    pub fn density(&self, space: &SearchSpaceDef, g: &Genotype) -> f64 {
        self.log_density(space, g).exp()
    }

    pub fn sample<R: Rng + ?Sized>(&self, space: &SearchSpaceDef, rng: &mut R) -> Genotype {
        let mut values = vec![None; self.dims.len()];
        let mut layer_type = space.seq_layer_types[0];
        let mut fusion = space.fusion_modes[0];
        for (i, (dim, domain, model)) in self.dims.iter().enumerate() {
            if !space.is_active(*dim, layer_type, fusion) {
                continue;
            }
            let value = match (model, domain) {
                (DimModel::Categorical { probs }, _) => {
                    let u: f64 = rng.random();
                    let mut acc = 0.0;
                    let mut pick = probs.len() - 1;
                    for (c, p) in probs.iter().enumerate() {
                        acc += p;
                        if u < acc {
                            pick = c;
                            break;
                        }
                    }
                    DimValue::Choice(pick)
                }
                (
                    DimModel::Numeric {
                        centers,
                        bandwidth,
                        prior_weight,
                    },
                    DimDomain::Integer(r),
                ) => {
                    let m = centers.len() as f64;
                    if rng.random::<f64>() * (m + prior_weight) >= m {
                        values[i] = Some(DimValue::Int(rng.random_range(r.min..=r.max)));
                        continue;
                    }
                    let mu = centers[rng.random_range(0..centers.len())];
                    let mut x = mu;
                    for _ in 0..64 {
                        let z: f64 = rng.sample(rand_distr::StandardNormal);
                        let candidate = mu + bandwidth * z;
                        if (0.0..=1.0).contains(&candidate) {
                            x = candidate;
                            break;
                        }
                    }
                    DimValue::Int(r.denormalize(x))
                }
                (_, DimDomain::Integer(r)) => DimValue::Int(rng.random_range(r.min..=r.max)),
                (_, DimDomain::Categorical(k)) => DimValue::Choice(rng.random_range(0..*k)),
            };
            match (dim, value) {
                (Dim::LayerType, DimValue::Choice(c)) => layer_type = space.seq_layer_types[c],
                (Dim::Fusion, DimValue::Choice(c)) => fusion = space.fusion_modes[c],
                _ => {}
            }
            values[i] = Some(value);
        }
        space.genotype_from_values(&values)
    }
}

/// Fits the good (`l`) and bad (`g`) models on `history`, or `None` when the
/// split is degenerate (fewer than two trials or all objectives equal).
pub fn tpe_models(
    space: &SearchSpaceDef,
    history: &[(Genotype, f64)],
    config: &TpeConfig,
) -> Option<(ParzenEstimator, ParzenEstimator)> {
    let TpeConfig {
        gamma,
        bandwidth_floor,
        prior_weight,
        ..
    } = *config;
    let n = history.len();
    if n < 2 {
        return None;
    }
    let first = history[0].1;
    if history.iter().all(|h| h.1 == first) {
        return None;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| history[a].1.total_cmp(&history[b].1).then(a.cmp(&b)));
    let n_good = ((gamma * n as f64).ceil() as usize).clamp(1, n - 1);
    let good: Vec<Genotype> = order[..n_good]
        .iter()
        .map(|&i| history[i].0.clone())
        .collect();
    let bad: Vec<Genotype> = order[n_good..]
        .iter()
        .map(|&i| history[i].0.clone())
        .collect();
    Some((
        ParzenEstimator::fit(space, &good, bandwidth_floor, prior_weight),
        ParzenEstimator::fit(space, &bad, bandwidth_floor, prior_weight),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TpeState {
    config: TpeConfig,
    rng: ChaCha8Rng,
}

impl TpeState {
    pub fn new(config: TpeConfig, seed: u64) -> Self {
        Self {
            config,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub(crate) fn propose(&mut self, ctx: &Context) -> Genotype {
        let space = ctx.space;
        let data = ctx.with_constant_liar();
        if data.len() < self.config.n_startup.max(4) {
            return sample_with(space, &mut self.rng);
        }
        let Some((l, g)) = tpe_models(space, &data, &self.config) else {
            log::info!("tpe: all objectives equal, sampling uniformly");
            return sample_with(space, &mut self.rng);
        };
        let mut best: Option<(Genotype, f64, bool)> = None;
        for _ in 0..self.config.n_candidates {
            let cand = l.sample(space, &mut self.rng);
            let score = l.log_density(space, &cand) - g.log_density(space, &cand);
            let fresh = !ctx.is_evaluated(&cand);
            let better = match &best {
                None => true,
                Some((_, s, f)) => (fresh && !f) || (fresh == *f && score > *s),
            };
            if better {
                best = Some((cand, score, fresh));
            }
        }
        best.expect("n_candidates >= 1").0
    }
}
