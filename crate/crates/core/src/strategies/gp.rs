//! Gaussian-process Bayesian optimization with expected improvement.
//!
//! The surrogate is GP regression with a constant prior mean (the mean of the
//! observed objectives) and a squared-exponential kernel over the search
//! space distance:
//!
//! ```text
//! k(a, b) = sf2 * exp(-d(a, b)^2 / (2 l^2))
//! ```
//!
//! Each proposal scores uniform candidates plus the incumbent's neighbors by
//! expected improvement and returns the best one not evaluated yet.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};
use thiserror::Error;

use super::linalg::{cholesky, solve_lower, solve_upper_transposed};
use super::Context;
use crate::space::{neighbors, sample_with, value_distance, Genotype, StepSizes};

/// Added to the kernel diagonal before factorization.
pub const JITTER: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GpError {
    #[error("GP needs at least one observation")]
    EmptyHistory,
    #[error("kernel matrix is not positive definite after jitter")]
    Singular,
    #[error("invalid kernel parameters: {0}")]
    InvalidKernel(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub length_scale: f64,
    pub signal_variance: f64,
    pub noise: f64,
}

impl KernelParams {
    pub fn covariance(&self, d: f64) -> f64 {
        self.signal_variance * (-d * d / (2.0 * self.length_scale * self.length_scale)).exp()
    }

    fn validate(&self) -> Result<(), GpError> {
        if !(self.length_scale > 0.0) || !(self.signal_variance > 0.0) || !(self.noise >= 0.0) {
            return Err(GpError::InvalidKernel(format!("{self:?}")));
        }
        Ok(())
    }
}

/// A GP conditioned on a history of `(point, objective)` pairs.
#[derive(Debug, Clone)]
pub struct GpModel<T> {
    points: Vec<T>,
    chol: Vec<Vec<f64>>,
    alpha: Vec<f64>,
    prior_mean: f64,
    kernel: KernelParams,
}

impl<T: Clone> GpModel<T> {
    pub fn fit(
        history: &[(T, f64)],
        kernel: KernelParams,
        distance: impl Fn(&T, &T) -> f64,
    ) -> Result<Self, GpError> {
        kernel.validate()?;
        if history.is_empty() {
            return Err(GpError::EmptyHistory);
        }
        let n = history.len();
        let prior_mean = history.iter().map(|h| h.1).sum::<f64>() / n as f64;
        let mut k = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..i {
                let c = kernel.covariance(distance(&history[i].0, &history[j].0));
                k[i][j] = c;
                k[j][i] = c;
            }
            k[i][i] = kernel.signal_variance + kernel.noise + JITTER;
        }
        let chol = cholesky(&k).ok_or(GpError::Singular)?;
        let centered: Vec<f64> = history.iter().map(|h| h.1 - prior_mean).collect();
        let alpha = solve_upper_transposed(&chol, &solve_lower(&chol, &centered));
        Ok(Self {
            points: history.iter().map(|h| h.0.clone()).collect(),
            chol,
            alpha,
            prior_mean,
            kernel,
        })
    }

    pub fn prior_mean(&self) -> f64 {
        self.prior_mean
    }

    /// Posterior mean and variance of the latent function at `query`.
    pub fn predict(&self, query: &T, distance: impl Fn(&T, &T) -> f64) -> (f64, f64) {
        let ks: Vec<f64> = self
            .points
            .iter()
            .map(|p| self.kernel.covariance(distance(p, query)))
            .collect();
        let mean = self.prior_mean + ks.iter().zip(&self.alpha).map(|(a, b)| a * b).sum::<f64>();
        let v = solve_lower(&self.chol, &ks);
        let var = self.kernel.signal_variance - v.iter().map(|x| x * x).sum::<f64>();
        (mean, var.max(0.0))
    }
}

/// The squared-exponential kernel is not positive definite for every
/// pseudometric, so a failed fit is retried with the noise raised one decade
/// at a time, from `1e-6 * sf2` up to `sf2`.
pub fn fit_with_escalating_noise<T: Clone>(
    history: &[(T, f64)],
    kernel: KernelParams,
    distance: impl Fn(&T, &T) -> f64,
) -> Option<(GpModel<T>, KernelParams)> {
    if let Ok(m) = GpModel::fit(history, kernel, &distance) {
        return Some((m, kernel));
    }
    (-6..=0).find_map(|e| {
        let floor = kernel.signal_variance * 10f64.powi(e);
        if floor <= kernel.noise {
            return None;
        }
        let k = KernelParams {
            noise: floor,
            ..kernel
        };
        let m = GpModel::fit(history, k, &distance).ok()?;
        log::debug!("gaussian_process: fitted with noise raised to {floor:.3e}");
        Some((m, k))
    })
}

pub fn gp_posterior<T: Clone>(
    history: &[(T, f64)],
    query: &T,
    kernel: KernelParams,
    distance: impl Fn(&T, &T) -> f64,
) -> Result<(f64, f64), GpError> {
    let model = GpModel::fit(history, kernel, &distance)?;
    Ok(model.predict(query, &distance))
}

/// Expected improvement below `best_so_far` for a Gaussian posterior.
pub fn expected_improvement(mean: f64, variance: f64, best_so_far: f64) -> f64 {
    let improvement = best_so_far - mean;
    let sigma = variance.max(0.0).sqrt();
    if sigma == 0.0 {
        return improvement.max(0.0);
    }
    let z = improvement / sigma;
    let normal = Normal::standard();
    (improvement * normal.cdf(z) + sigma * normal.pdf(z)).max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GpConfig {
    /// Uniform proposals before the first fit.
    pub n_initial: usize,
    pub n_candidates: usize,
    pub length_scale: f64,
    /// Fixed signal variance; by default the variance of the observed objectives.
    pub signal_variance: Option<f64>,
    pub noise: f64,
    pub step_sizes: StepSizes,
}

impl Default for GpConfig {
    fn default() -> Self {
        Self {
            n_initial: 5,
            n_candidates: 512,
            length_scale: 0.25,
            signal_variance: None,
            noise: 1e-6,
            step_sizes: StepSizes::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpState {
    config: GpConfig,
    rng: ChaCha8Rng,
    /// Kernel and prior mean of the most recent fit.
    kernel_params: Option<KernelParams>,
    prior_mean: Option<f64>,
}

impl GpState {
    pub fn new(config: GpConfig, seed: u64) -> Self {
        Self {
            config,
            rng: ChaCha8Rng::seed_from_u64(seed),
            kernel_params: None,
            prior_mean: None,
        }
    }

    pub fn kernel_params(&self) -> Option<KernelParams> {
        self.kernel_params
    }

    pub fn prior_mean(&self) -> Option<f64> {
        self.prior_mean
    }

    pub(crate) fn propose(&mut self, ctx: &Context) -> Genotype {
        let data = ctx.with_constant_liar();
        if data.len() < self.config.n_initial.max(1) {
            return sample_with(ctx.space, &mut self.rng);
        }
        let space = ctx.space;
        let domains = space.domains();
        let ys: Vec<f64> = data.iter().map(|d| d.1).collect();
        let mean = ys.iter().sum::<f64>() / ys.len() as f64;
        let empirical = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / ys.len() as f64;
        let kernel = KernelParams {
            length_scale: self.config.length_scale,
            signal_variance: self.config.signal_variance.unwrap_or(empirical.max(1e-6)),
            noise: self.config.noise,
        };
        let history: Vec<_> = data.iter().map(|(g, y)| (space.values(g), *y)).collect();
        let dist = |a: &crate::space::DimValues, b: &crate::space::DimValues| {
            value_distance(&domains, a, b)
        };
        let Some((model, kernel)) = fit_with_escalating_noise(&history, kernel, dist) else {
            log::warn!(
                "gaussian_process: kernel matrix singular at every noise level; sampling uniformly"
            );
            return sample_with(space, &mut self.rng);
        };
        self.kernel_params = Some(kernel);
        self.prior_mean = Some(model.prior_mean());

        let best = data
            .iter()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("non-empty");
        let mut seen = BTreeSet::new();
        let mut candidates = Vec::new();
        let pool = (0..self.config.n_candidates)
            .map(|_| sample_with(space, &mut self.rng))
            .chain(neighbors(&best.0, space, &self.config.step_sizes));
        for g in pool {
            if !ctx.is_evaluated(&g) && seen.insert(g.clone()) {
                candidates.push(g);
            }
        }
        let mut choice: Option<(Genotype, f64)> = None;
        for g in candidates {
            let (mu, var) = model.predict(&space.values(&g), dist);
            let ei = expected_improvement(mu, var, best.1);
            if choice.as_ref().is_none_or(|c| ei > c.1) {
                choice = Some((g, ei));
            }
        }
        match choice {
            Some((g, _)) => g,
            None => sample_with(space, &mut self.rng),
        }
    }
}
