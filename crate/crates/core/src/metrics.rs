//! Cross-entropy scoring and macro-averaged classification metrics.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Lower clip applied to the probability of the true class.
pub const PROB_EPSILON: f64 = 1e-12;
/// Allowed deviation of a probability row sum from 1.
pub const ROW_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("empty batch")]
    Empty,
    #[error("need at least 2 classes, found {0}")]
    TooFewClasses(usize),
    #[error("{labels} labels for {rows} probability rows")]
    LengthMismatch { rows: usize, labels: usize },
    #[error("row {row} has {found} columns, expected {expected}")]
    Ragged {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("row {row}: probability {value} outside [0, 1]")]
    OutOfRange { row: usize, value: f64 },
    #[error("row {row} sums to {sum}, not 1")]
    NotNormalized { row: usize, sum: f64 },
    #[error("row {row}: label {label} outside [0, {classes})")]
    BadLabel {
        row: usize,
        label: usize,
        classes: usize,
    },
}

/// N predicted distributions over C classes with their true labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionBatch {
    probabilities: Vec<Vec<f64>>,
    labels: Vec<usize>,
    classes: usize,
}

impl PredictionBatch {
    pub fn new(probabilities: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self, MetricsError> {
        if probabilities.is_empty() {
            return Err(MetricsError::Empty);
        }
        if probabilities.len() != labels.len() {
            return Err(MetricsError::LengthMismatch {
                rows: probabilities.len(),
                labels: labels.len(),
            });
        }
        let classes = probabilities[0].len();
        if classes < 2 {
            return Err(MetricsError::TooFewClasses(classes));
        }
        for (row, (p, &label)) in probabilities.iter().zip(&labels).enumerate() {
            if p.len() != classes {
                return Err(MetricsError::Ragged {
                    row,
                    expected: classes,
                    found: p.len(),
                });
            }
            if let Some(&value) = p.iter().find(|x| !(0.0..=1.0).contains(*x)) {
                return Err(MetricsError::OutOfRange { row, value });
            }
            let sum: f64 = p.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(MetricsError::NotNormalized { row, sum });
            }
            if label >= classes {
                return Err(MetricsError::BadLabel {
                    row,
                    label,
                    classes,
                });
            }
        }
        Ok(Self {
            probabilities,
            labels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn probabilities(&self) -> &[Vec<f64>] {
        &self.probabilities
    }

    /// Argmax per row, ties resolved to the lowest class index.
    pub fn predictions(&self) -> Vec<usize> {
        self.probabilities
            .iter()
            .map(|p| {
                let mut best = 0;
                for (i, &x) in p.iter().enumerate() {
                    if x > p[best] {
                        best = i;
                    }
                }
                best
            })
            .collect()
    }
}

/// CE and macro metrics; every percentage lies in `[0, 100]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    #[serde(rename = "ce")]
    pub cross_entropy: f64,
    pub accuracy: f64,
    pub precision_macro: f64,
    pub recall_macro: f64,
    pub f1_macro: f64,
}

impl MetricReport {
    pub fn is_finite(&self) -> bool {
        [
            self.cross_entropy,
            self.accuracy,
            self.precision_macro,
            self.recall_macro,
            self.f1_macro,
        ]
        .iter()
        .all(|x| x.is_finite())
    }
}

/// Mean negative natural-log likelihood of the true class.
pub fn cross_entropy(batch: &PredictionBatch) -> f64 {
    let total: f64 = batch
        .probabilities
        .iter()
        .zip(&batch.labels)
        .map(|(p, &y)| -p[y].clamp(PROB_EPSILON, 1.0).ln())
        .sum();
    total / batch.len() as f64
}

/// Per-class precision, recall and F1 (fractions, not percent) for the
/// classes appearing in labels or predictions, in ascending class order.
pub fn per_class_scores(batch: &PredictionBatch) -> Vec<(usize, f64, f64, f64)> {
    let predictions = batch.predictions();
    let classes: BTreeSet<usize> = batch.labels.iter().chain(&predictions).copied().collect();
    classes
        .into_iter()
        .map(|c| {
            let mut tp = 0usize;
            let mut predicted = 0usize;
            let mut actual = 0usize;
            for (&y, &p) in batch.labels.iter().zip(&predictions) {
                tp += usize::from(y == c && p == c);
                predicted += usize::from(p == c);
                actual += usize::from(y == c);
            }
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, actual);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            (c, precision, recall, f1)
        })
        .collect()
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn classification_report(batch: &PredictionBatch) -> MetricReport {
    let predictions = batch.predictions();
    let correct = batch
        .labels
        .iter()
        .zip(&predictions)
        .filter(|(y, p)| y == p)
        .count();
    let scores = per_class_scores(batch);
    let k = scores.len() as f64;
    let mean =
        |f: fn(&(usize, f64, f64, f64)) -> f64| 100.0 * scores.iter().map(f).sum::<f64>() / k;
    MetricReport {
        cross_entropy: cross_entropy(batch),
        accuracy: 100.0 * correct as f64 / batch.len() as f64,
        precision_macro: mean(|s| s.1),
        recall_macro: mean(|s| s.2),
        f1_macro: mean(|s| s.3),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn batch(rows: &[&[f64]], labels: &[usize]) -> PredictionBatch {
        PredictionBatch::new(rows.iter().map(|r| r.to_vec()).collect(), labels.to_vec()).unwrap()
    }

    #[test]
    fn cross_entropy_fixed_values() {
        let ce = cross_entropy(&batch(&[&[0.1, 0.6, 0.3]], &[1]));
        assert!((ce - 0.510_825_6).abs() < 1e-6, "{ce}");
        let perfect = cross_entropy(&batch(&[&[0.0, 1.0, 0.0]], &[1]));
        assert!(perfect.abs() <= 1e-12);
        let third = 1.0 / 3.0;
        let uniform = cross_entropy(&batch(&[&[third, third, third]], &[2]));
        assert!((uniform - 3f64.ln()).abs() < 1e-6);
        let worse = cross_entropy(&batch(&[&[0.2, 0.5, 0.3]], &[1]));
        assert!(ce < worse);
    }

    #[test]
    fn zero_probability_is_clipped() {
        let ce = cross_entropy(&batch(&[&[1.0, 0.0]], &[1]));
        assert!((ce + PROB_EPSILON.ln()).abs() < 1e-9);
    }

    #[test]
    fn invalid_batches() {
        let err = PredictionBatch::new(vec![vec![0.5, 0.6]], vec![0]).unwrap_err();
        assert!(matches!(err, MetricsError::NotNormalized { row: 0, .. }));
        assert!(matches!(
            PredictionBatch::new(vec![vec![1.0]], vec![0]),
            Err(MetricsError::TooFewClasses(1))
        ));
        assert!(matches!(
            PredictionBatch::new(vec![vec![0.5, 0.5]], vec![2]),
            Err(MetricsError::BadLabel { .. })
        ));
        assert!(matches!(
            PredictionBatch::new(vec![vec![1.5, -0.5]], vec![0]),
            Err(MetricsError::OutOfRange { .. })
        ));
        assert!(matches!(
            PredictionBatch::new(vec![], vec![]),
            Err(MetricsError::Empty)
        ));
    }

    #[test]
    fn perfect_predictions_score_100() {
        let r = classification_report(&batch(
            &[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]],
            &[0, 1, 2],
        ));
        assert_eq!(r.accuracy, 100.0);
        assert_eq!(r.precision_macro, 100.0);
        assert_eq!(r.recall_macro, 100.0);
        assert_eq!(r.f1_macro, 100.0);
    }

    #[test]
    fn all_positive_binary_predictions() {
        let rows: Vec<&[f64]> = vec![&[0.2, 0.8]; 10];
        let labels = [1, 1, 1, 1, 1, 0, 0, 0, 0, 0];
        let r = classification_report(&batch(&rows, &labels));
        assert_eq!(r.accuracy, 50.0);
        assert_eq!(r.precision_macro, 25.0);
        assert_eq!(r.recall_macro, 50.0);
    }

    #[test]
    fn argmax_ties_go_to_lowest_class() {
        let b = batch(&[&[0.5, 0.5], &[0.25, 0.75]], &[0, 1]);
        assert_eq!(b.predictions(), vec![0, 1]);
    }

    proptest! {
        #[test]
        fn ce_decreases_with_true_class_confidence(
            p in 0.001f64..0.998, bump in 0.0005f64..0.001, rest in 0.0f64..1.0
        ) {
            let q = (p + bump).min(0.999);
            prop_assume!(q > p);
            let row = |t: f64| vec![t, (1.0 - t) * rest, (1.0 - t) * (1.0 - rest)];
            let lo = cross_entropy(&PredictionBatch::new(vec![row(p)], vec![0]).unwrap());
            let hi = cross_entropy(&PredictionBatch::new(vec![row(q)], vec![0]).unwrap());
            prop_assert!(hi < lo);
        }

        #[test]
        fn metrics_invariant_under_row_permutation(
            rows in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0, 0usize..3), 1..30),
            seed in any::<u64>(),
        ) {
            let probs: Vec<Vec<f64>> = rows
                .iter()
                .map(|&(a, b, _)| {
                    let c = 1.0 - a * 0.5 - b * 0.5;
                    let s = a * 0.5 + b * 0.5 + c;
                    vec![a * 0.5 / s, b * 0.5 / s, c / s]
                })
                .collect();
            let labels: Vec<usize> = rows.iter().map(|r| r.2).collect();
            let original = PredictionBatch::new(probs.clone(), labels.clone()).unwrap();
            let mut order: Vec<usize> = (0..rows.len()).collect();
            order.sort_by_key(|&i| (i as u64).wrapping_mul(seed | 1).rotate_left(17));
            let shuffled = PredictionBatch::new(
                order.iter().map(|&i| probs[i].clone()).collect(),
                order.iter().map(|&i| labels[i]).collect(),
            ).unwrap();
            let a = classification_report(&original);
            let b = classification_report(&shuffled);
            prop_assert!((a.cross_entropy - b.cross_entropy).abs() < 1e-12);
            prop_assert!((a.accuracy - b.accuracy).abs() < 1e-12);
            prop_assert!((a.f1_macro - b.f1_macro).abs() < 1e-12);
            prop_assert!((0.0..=100.0).contains(&a.accuracy));
            for (_, p, r, f1) in per_class_scores(&original) {
                let harmonic = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
                prop_assert!((f1 - harmonic).abs() < 1e-12);
            }
        }
    }
}
