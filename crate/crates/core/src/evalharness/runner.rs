use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{prepare_data, ExperimentConfig};
use super::metrics::{accuracy, correction_metrics, macro_f1, MetricsReport, SeedMetrics};
use crate::baselines::run_method;
use crate::basemodel::Mlp;
use crate::datagen::NoisyDataset;
use crate::error::{Error, Result};
use crate::metaloop::{meta_test, RunLog, SnapshotSet};
use crate::numcore::Tensor;

/// Top-level result written as `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub experiment_id: String,
    pub config_hash: String,
    pub metrics: MetricsReport,
    pub wallclock_s: f64,
}

impl ExperimentSummary {
    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Accuracy and macro-F1 of `model` on the test set, or on the true labels
/// of the training rows `rows` when there is no test set.
fn evaluate(model: &Mlp, train: &NoisyDataset, rows: &[usize], test: Option<&NoisyDataset>) -> Result<(f64, f64)> {
    let (preds, labels, c) = match test {
        Some(t) => (model.predict(&t.features)?, t.true_labels.clone(), t.num_classes),
        None => {
            let x = train.features.gather_rows(rows);
            let labels = rows.iter().map(|&i| train.true_labels[i]).collect();
            (model.predict(&x)?, labels, train.num_classes)
        }
    };
    Ok((accuracy(&preds, &labels)?, macro_f1(&preds, &labels, c)?))
}

/// Metrics of one finished run.
#[allow(clippy::too_many_arguments)]
pub fn seed_metrics(
    seed: u64,
    model: &Mlp,
    train: &NoisyDataset,
    test: Option<&NoisyDataset>,
    rows: &[usize],
    corrected: &Tensor,
    log: &RunLog,
    epoch_seconds: &[f64],
) -> Result<SeedMetrics> {
    let (acc, f1) = evaluate(model, train, rows, test)?;
    let noisy: Vec<usize> = rows.iter().map(|&i| train.noisy_labels[i]).collect();
    let truth: Vec<usize> = rows.iter().map(|&i| train.true_labels[i]).collect();
    let cm = correction_metrics(&corrected.gather_rows(rows), &noisy, &truth)?;
    Ok(SeedMetrics {
        seed,
        accuracy: acc,
        macro_f1: f1,
        corrected_label_accuracy: cm.corrected_label_accuracy,
        correction_precision: cm.precision,
        correction_recall: cm.recall,
        mean_kl: log.last().and_then(|r| r.kl_meta),
        epoch_seconds: median(epoch_seconds),
    })
}

fn seed_dir(root: &Path, seed: u64) -> PathBuf {
    root.join(format!("seed{seed}"))
}

fn create(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Runs the configured method once per seed, writing logs, method
/// metadata, snapshots and `summary.json` under
/// `output_dir/experiment_id`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentSummary> {
    cfg.validate()?;
    let start = Instant::now();
    let root = cfg.output_dir.join(&cfg.experiment_id);
    create(&root)?;
    let mut per_seed = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let (train, test) = prepare_data(&cfg.dataset, &cfg.noise, seed)?;
        let out = run_method(&cfg.method, &train, test.as_ref(), None, &cfg.model, &cfg.meta, seed)?;
        let dir = seed_dir(&root, seed);
        create(&dir)?;
        out.log.write_csv(&dir.join("log.csv"))?;
        out.metadata.write(&dir.join("method.json"))?;
        if let Some(s) = &out.snapshots {
            s.save_dir(&dir.join("snapshots"))?;
        }
        per_seed.push(seed_metrics(
            seed,
            &out.model,
            &train,
            test.as_ref(),
            &out.update_indices,
            &out.corrected,
            &out.log,
            &out.epoch_seconds,
        )?);
    }
    finish(cfg, &root, per_seed, start)
}

fn finish(
    cfg: &ExperimentConfig,
    root: &Path,
    per_seed: Vec<SeedMetrics>,
    start: Instant,
) -> Result<ExperimentSummary> {
    let summary = ExperimentSummary {
        experiment_id: cfg.experiment_id.clone(),
        config_hash: cfg.hash(),
        metrics: MetricsReport::from_seeds(per_seed),
        wallclock_s: start.elapsed().as_secs_f64(),
    };
    summary.write(&root.join("summary.json"))?;
    Ok(summary)
}

/// Trains a fresh model per seed with labels corrected by frozen snapshots.
pub fn run_meta_test(cfg: &ExperimentConfig, snapshots: &SnapshotSet) -> Result<ExperimentSummary> {
    cfg.validate()?;
    cfg.meta.validate(cfg.model.epochs)?;
    let start = Instant::now();
    let root = cfg.output_dir.join(&cfg.experiment_id);
    create(&root)?;
    let mut per_seed = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let (train, test) = prepare_data(&cfg.dataset, &cfg.noise, seed)?;
        let out = meta_test(&train, test.as_ref(), &cfg.model, snapshots, &cfg.meta, seed)?;
        let dir = seed_dir(&root, seed);
        create(&dir)?;
        out.log.write_csv(&dir.join("log.csv"))?;
        let rows: Vec<usize> = (0..train.len()).collect();
        per_seed.push(seed_metrics(
            seed,
            &out.model,
            &train,
            test.as_ref(),
            &rows,
            &out.corrected,
            &out.log,
            &out.epoch_seconds,
        )?);
    }
    finish(cfg, &root, per_seed, start)
}
