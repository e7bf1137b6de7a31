use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::complexity::InputShape;
use crate::evaluation::{
    EvalRequest, EvaluationBudget, Evaluator, TrainerEndpoint, TrainerSession,
};
use crate::metrics::MetricReport;
use crate::space::Genotype;
use crate::strategies::TrialRecord;

/// Ranking key: objective, then FLOPs, then trial id.
fn rank(a: &TrialRecord, b: &TrialRecord) -> Ordering {
    let ya = a.ok_objective().expect("ranked trials are ok");
    let yb = b.ok_objective().expect("ranked trials are ok");
    ya.total_cmp(&yb)
        .then(a.flops.cmp(&b.flops))
        .then(a.trial_id.cmp(&b.trial_id))
}

/// The `k` best successful trials, best first.
pub fn top_k(trials: &[TrialRecord], k: usize) -> Vec<TrialRecord> {
    let mut ok: Vec<&TrialRecord> = trials
        .iter()
        .filter(|t| t.ok_objective().is_some())
        .collect();
    if k < ok.len() {
        ok.select_nth_unstable_by(k, |a, b| rank(a, b));
        ok.truncate(k);
    }
    ok.sort_by(|a, b| rank(a, b));
    ok.into_iter().cloned().collect()
}

pub fn best_trial(trials: &[TrialRecord]) -> Option<&TrialRecord> {
    trials
        .iter()
        .filter(|t| t.ok_objective().is_some())
        .min_by(|a, b| rank(a, b))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: MetricReport,
    /// Population standard deviation.
    pub std: MetricReport,
}

fn fields(m: &MetricReport) -> [f64; 5] {
    [
        m.cross_entropy,
        m.accuracy,
        m.precision_macro,
        m.recall_macro,
        m.f1_macro,
    ]
}

fn from_fields(f: [f64; 5]) -> MetricReport {
    MetricReport {
        cross_entropy: f[0],
        accuracy: f[1],
        precision_macro: f[2],
        recall_macro: f[3],
        f1_macro: f[4],
    }
}

impl MetricSummary {
    pub fn of(reports: &[MetricReport]) -> Option<Self> {
        if reports.is_empty() {
            return None;
        }
        let n = reports.len() as f64;
        let mut mean = [0.0; 5];
        for r in reports {
            for (m, x) in mean.iter_mut().zip(fields(r)) {
                *m += x / n;
            }
        }
        let mut var = [0.0; 5];
        for r in reports {
            for ((v, x), m) in var.iter_mut().zip(fields(r)).zip(mean) {
                *v += (x - m) * (x - m) / n;
            }
        }
        Some(Self {
            mean: from_fields(mean),
            std: from_fields(var.map(f64::sqrt)),
        })
    }
}

/// `mean ± std` with `decimals` digits after the point.
pub fn format_pm(mean: f64, std: f64, decimals: usize) -> String {
    format!("{mean:.decimals$} ± {std:.decimals$}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub genotype: Genotype,
    /// Per fold; `None` where the fold failed.
    pub folds: Vec<Option<MetricReport>>,
    /// Over the successful folds.
    pub summary: Option<MetricSummary>,
    /// Some fold failed.
    pub partial: bool,
}

impl CvReport {
    /// One line in table convention: CE with 3 decimals, percentages with 2.
    pub fn format(&self) -> String {
        let Some(s) = &self.summary else {
            return "no successful fold".into();
        };
        let cells: Vec<String> = fields(&s.mean)
            .iter()
            .zip(fields(&s.std))
            .enumerate()
            .map(|(i, (m, sd))| format_pm(*m, sd, if i == 0 { 3 } else { 2 }))
            .collect();
        let mut line = cells.join(" | ");
        if self.partial {
            line.push_str(" (partial)");
        }
        line
    }
}

/// Evaluates every genotype on folds `0..folds` through `evaluator`.
pub fn cross_validate_with(
    genotypes: &[Genotype],
    folds: u32,
    budget: &EvaluationBudget,
    evaluator: &mut dyn Evaluator,
) -> Vec<CvReport> {
    let mut trial_id = 0;
    genotypes
        .iter()
        .map(|g| {
            let results: Vec<Option<MetricReport>> = (0..folds)
                .map(|fold| {
                    trial_id += 1;
                    let request = EvalRequest {
                        trial_id,
                        genotype: g.clone(),
                        budget: EvaluationBudget { fold, ..*budget },
                    };
                    let r = evaluator.evaluate(&request);
                    if !r.is_ok() {
                        log::warn!(
                            "fold {fold} of {} failed: {}",
                            g.label(),
                            r.message.unwrap_or_default()
                        );
                    }
                    r.metrics.filter(|_| r.status.trial_status().is_ok())
                })
                .collect();
            let ok: Vec<MetricReport> = results.iter().flatten().copied().collect();
            CvReport {
                genotype: g.clone(),
                partial: ok.len() < results.len(),
                summary: MetricSummary::of(&ok),
                folds: results,
            }
        })
        .collect()
}

pub fn cross_validate(
    genotypes: &[Genotype],
    endpoint: &TrainerEndpoint,
    input_shape: &InputShape,
    folds: u32,
    budget: &EvaluationBudget,
) -> Vec<CvReport> {
    let mut session = TrainerSession::new(endpoint.clone(), input_shape.clone());
    cross_validate_with(genotypes, folds, budget, &mut session)
}
