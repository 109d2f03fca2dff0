use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::kernels::{argmax, kl_row};
use crate::numcore::Tensor;

fn check_lengths(what: &str, a: usize, b: usize) -> Result<()> {
    if a == 0 {
        return Err(Error::config(format!("{what}: empty input")));
    }
    if a != b {
        return Err(Error::contract(format!("{what}: {a} predictions for {b} labels")));
    }
    Ok(())
}

pub fn accuracy(preds: &[usize], labels: &[usize]) -> Result<f64> {
    check_lengths("accuracy", preds.len(), labels.len())?;
    Ok(preds.iter().zip(labels).filter(|(p, y)| p == y).count() as f64 / preds.len() as f64)
}

/// Unweighted mean of per-class F1. A class with no true and no predicted
/// samples scores 0.
pub fn macro_f1(preds: &[usize], labels: &[usize], num_classes: usize) -> Result<f64> {
    check_lengths("macro_f1", preds.len(), labels.len())?;
    if num_classes == 0 {
        return Err(Error::config("macro_f1 needs at least one class"));
    }
    let mut tp = vec![0usize; num_classes];
    let mut pred_count = vec![0usize; num_classes];
    let mut true_count = vec![0usize; num_classes];
    for (&p, &y) in preds.iter().zip(labels) {
        if p >= num_classes || y >= num_classes {
            return Err(Error::contract(format!(
                "class index out of range for {num_classes} classes"
            )));
        }
        pred_count[p] += 1;
        true_count[y] += 1;
        if p == y {
            tp[p] += 1;
        }
    }
    let total: f64 = (0..num_classes)
        .map(|k| {
            let denom = pred_count[k] + true_count[k];
            if denom == 0 {
                0.0
            } else {
                2.0 * tp[k] as f64 / denom as f64
            }
        })
        .sum();
    Ok(total / num_classes as f64)
}

/// How well corrected distributions recover the true labels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectionMetrics {
    /// Among samples whose argmax differs from the noisy label, the
    /// fraction whose argmax is the true label. `None` without corrections.
    pub precision: Option<f64>,
    /// Among corrupted samples, the fraction corrected to the true label.
    /// `None` when no sample is corrupted.
    pub recall: Option<f64>,
    pub corrected_label_accuracy: f64,
}

pub fn correction_metrics(corrected: &Tensor, noisy: &[usize], truth: &[usize]) -> Result<CorrectionMetrics> {
    check_lengths("correction_metrics", corrected.rows(), noisy.len())?;
    check_lengths("correction_metrics", noisy.len(), truth.len())?;
    let (mut changed, mut changed_right, mut corrupted, mut recovered, mut right) = (0, 0, 0, 0, 0);
    for r in 0..noisy.len() {
        let k = argmax(corrected.row(r));
        if k == truth[r] {
            right += 1;
        }
        if k != noisy[r] {
            changed += 1;
            if k == truth[r] {
                changed_right += 1;
            }
        }
        if noisy[r] != truth[r] {
            corrupted += 1;
            if k == truth[r] {
                recovered += 1;
            }
        }
    }
    let ratio = |a: usize, b: usize| (b > 0).then(|| a as f64 / b as f64);
    Ok(CorrectionMetrics {
        precision: ratio(changed_right, changed),
        recall: ratio(recovered, corrupted),
        corrected_label_accuracy: right as f64 / noisy.len() as f64,
    })
}

/// Mean over rows of `KL(target || pred)`.
pub fn mean_kl(targets: &Tensor, preds: &Tensor) -> Result<f64> {
    check_lengths("mean_kl", targets.rows(), preds.rows())?;
    let s: f64 = (0..targets.rows()).map(|r| kl_row(targets.row(r), preds.row(r))).sum();
    Ok(s / targets.rows() as f64)
}

/// Metrics of one seeded run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedMetrics {
    pub seed: u64,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub corrected_label_accuracy: f64,
    pub correction_precision: Option<f64>,
    pub correction_recall: Option<f64>,
    pub mean_kl: Option<f64>,
    pub epoch_seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub std: f64,
    pub n: usize,
}

impl Stat {
    /// `None` for an empty slice.
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Stat { mean, std, n })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_seed: Vec<SeedMetrics>,
    /// Mean and spread of each metric over the seeds where it is defined.
    pub summary: BTreeMap<String, Stat>,
}

type Column = (&'static str, fn(&SeedMetrics) -> Option<f64>);

impl MetricsReport {
    pub fn from_seeds(per_seed: Vec<SeedMetrics>) -> Self {
        let mut summary = BTreeMap::new();
        let columns: [Column; 7] = [
            ("accuracy", |m| Some(m.accuracy)),
            ("macro_f1", |m| Some(m.macro_f1)),
            ("corrected_label_accuracy", |m| Some(m.corrected_label_accuracy)),
            ("correction_precision", |m| m.correction_precision),
            ("correction_recall", |m| m.correction_recall),
            ("mean_kl", |m| m.mean_kl),
            ("epoch_seconds", |m| Some(m.epoch_seconds)),
        ];
        for (name, get) in columns {
            let values: Vec<f64> = per_seed.iter().filter_map(get).collect();
            if let Some(s) = Stat::of(&values) {
                summary.insert(name.to_string(), s);
            }
        }
        MetricsReport { per_seed, summary }
    }

    pub fn mean(&self, metric: &str) -> Option<f64> {
        self.summary.get(metric).map(|s| s.mean)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::onehot_rows;

    #[test]
    fn perfect_predictions() {
        let y = [0, 1, 2, 1, 0];
        assert_eq!(accuracy(&y, &y).unwrap(), 1.0);
        assert_eq!(macro_f1(&y, &y, 3).unwrap(), 1.0);
    }

    #[test]
    fn binary_hand_example() {
        let p = [1, 1, 0, 0];
        let y = [1, 0, 0, 0];
        assert_eq!(accuracy(&p, &y).unwrap(), 0.75);
        let expected = (2.0 * 0.5 / 1.5 + 0.8) / 2.0;
        assert!((macro_f1(&p, &y, 2).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.733_333_333_333_333_3).abs() < 1e-12);
    }

    #[test]
    fn constant_predictor_on_balanced_classes() {
        let y: Vec<usize> = (0..400).map(|i| i % 4).collect();
        assert_eq!(accuracy(&vec![2; 400], &y).unwrap(), 0.25);
    }

    #[test]
    fn absent_classes_score_zero() {
        assert_eq!(macro_f1(&[0, 0], &[0, 0], 2).unwrap(), 0.5);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(accuracy(&[], &[]).is_err());
        assert!(macro_f1(&[], &[], 3).is_err());
        assert!(accuracy(&[1], &[1, 2]).is_err());
    }

    #[test]
    fn correction_metric_endpoints() {
        let truth = [0, 1, 2, 0, 1];
        let noisy = [0, 2, 2, 1, 1];
        let perfect = correction_metrics(&onehot_rows(&truth, 3).unwrap(), &noisy, &truth).unwrap();
        assert_eq!(perfect.precision, Some(1.0));
        assert_eq!(perfect.recall, Some(1.0));
        assert_eq!(perfect.corrected_label_accuracy, 1.0);
        let keep = correction_metrics(&onehot_rows(&noisy, 3).unwrap(), &noisy, &truth).unwrap();
        assert_eq!(keep.precision, None);
        assert_eq!(keep.recall, Some(0.0));
        assert_eq!(keep.corrected_label_accuracy, 0.6);
    }

    #[test]
    fn correction_metrics_mixed_case() {
        // sample 0: clean, left alone; 1: corrupted, fixed;
        // 2: corrupted, changed to a wrong class; 3: clean, wrongly changed
        let truth = [0, 1, 2, 0];
        let noisy = [0, 0, 0, 0];
        let guesses = [0, 1, 1, 2];
        let m = correction_metrics(&onehot_rows(&guesses, 3).unwrap(), &noisy, &truth).unwrap();
        assert_eq!(m.precision, Some(1.0 / 3.0));
        assert_eq!(m.recall, Some(0.5));
        assert_eq!(m.corrected_label_accuracy, 0.5);
    }

    #[test]
    fn report_summaries() {
        let seed = |s: u64, acc: f64, prec: Option<f64>| SeedMetrics {
            seed: s,
            accuracy: acc,
            macro_f1: acc,
            corrected_label_accuracy: 0.5,
            correction_precision: prec,
            correction_recall: None,
            mean_kl: None,
            epoch_seconds: 0.1,
        };
        let r = MetricsReport::from_seeds(vec![seed(0, 0.8, None), seed(1, 0.9, Some(0.5)), seed(2, 1.0, None)]);
        let acc = r.summary["accuracy"];
        assert!((acc.mean - 0.9).abs() < 1e-12);
        assert!((acc.std - 0.1).abs() < 1e-12);
        assert_eq!(r.summary["correction_precision"].n, 1);
        assert!(!r.summary.contains_key("correction_recall"));
        let json = serde_json::to_string(&r).unwrap();
        assert!(!json.contains("NaN"));
    }
}
