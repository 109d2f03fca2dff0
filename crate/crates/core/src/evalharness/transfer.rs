use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{prepare_data, ExperimentConfig, TaskSpec};
use super::metrics::{MetricsReport, SeedMetrics};
use super::runner::seed_metrics;
use crate::baselines::run_ce;
use crate::error::{Error, Result};
use crate::metaloop::{meta_test, meta_train, snapshot_feature_spec, SnapshotSet, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CellOutcome {
    Done { metrics: MetricsReport },
    Skipped { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferCell {
    pub source: String,
    pub target: String,
    pub outcome: CellOutcome,
}

/// Meta-test results for every (source, target) pair plus a CE reference
/// per target. `cells[i][j]` pairs source `i` with target `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferGrid {
    pub sources: Vec<String>,
    pub targets: Vec<String>,
    pub cells: Vec<Vec<TransferCell>>,
    pub ce_reference: Vec<MetricsReport>,
}

impl TransferGrid {
    pub fn cell(&self, source: &str, target: &str) -> Option<&TransferCell> {
        let i = self.sources.iter().position(|s| s == source)?;
        let j = self.targets.iter().position(|t| t == target)?;
        Some(&self.cells[i][j])
    }

    /// One row per cell: source, target, status, mean and std accuracy,
    /// CE reference accuracy, skip reason.
    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "source",
            "target",
            "status",
            "accuracy_mean",
            "accuracy_std",
            "ce_accuracy_mean",
            "reason",
        ])?;
        for row in &self.cells {
            for (j, cell) in row.iter().enumerate() {
                let ce = self.ce_reference[j]
                    .summary
                    .get("accuracy")
                    .map(|s| s.mean.to_string())
                    .unwrap_or_default();
                let (status, mean, std, reason) = match &cell.outcome {
                    CellOutcome::Done { metrics } => {
                        let acc = metrics.summary.get("accuracy");
                        (
                            "done",
                            acc.map(|s| s.mean.to_string()).unwrap_or_default(),
                            acc.map(|s| s.std.to_string()).unwrap_or_default(),
                            String::new(),
                        )
                    }
                    CellOutcome::Skipped { reason } => ("skipped", String::new(), String::new(), reason.clone()),
                };
                w.write_record([cell.source.as_str(), &cell.target, status, &mean, &std, &ce, &reason])?;
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::contract(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::contract(e.to_string()))
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let csv_path = dir.join("transfer.csv");
        std::fs::write(&csv_path, self.to_csv_string()?).map_err(|e| Error::io(&csv_path, e))?;
        let json_path = dir.join("transfer.json");
        let text = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(&json_path, text).map_err(|e| Error::io(&json_path, e))
    }
}

fn meta_train_task(cfg: &ExperimentConfig, task: &TaskSpec, seed: u64) -> Result<SnapshotSet> {
    let (train, _) = prepare_data(&task.dataset, &task.noise, seed)?;
    Ok(meta_train(&train, None, &cfg.model, &cfg.meta, seed)?.snapshots)
}

fn ce_task(model: &TrainConfig, task: &TaskSpec, seed: u64) -> Result<SeedMetrics> {
    let (train, test) = prepare_data(&task.dataset, &task.noise, seed)?;
    let out = run_ce(&train, test.as_ref(), model, seed)?;
    seed_metrics(
        seed,
        &out.model,
        &train,
        test.as_ref(),
        &out.update_indices,
        &out.corrected,
        &out.log,
        &out.epoch_seconds,
    )
}

/// The inner error holds the reason when the snapshots cannot serve the
/// target task.
fn meta_test_task(
    cfg: &ExperimentConfig,
    model: &TrainConfig,
    snapshots: &SnapshotSet,
    task: &TaskSpec,
    seed: u64,
) -> Result<std::result::Result<SeedMetrics, String>> {
    let (train, test) = prepare_data(&task.dataset, &task.noise, seed)?;
    let c = train.num_classes;
    let compatible = snapshot_feature_spec(&snapshots.snapshots()[0].corrector, c).and_then(|spec| {
        snapshots
            .snapshots()
            .iter()
            .try_for_each(|s| s.check_task(c, spec.width(c)))
    });
    if let Err(e) = compatible {
        return Ok(Err(e.to_string()));
    }
    let out = meta_test(&train, test.as_ref(), model, snapshots, &cfg.meta, seed)?;
    let rows: Vec<usize> = (0..train.len()).collect();
    Ok(Ok(seed_metrics(
        seed,
        &out.model,
        &train,
        test.as_ref(),
        &rows,
        &out.corrected,
        &out.log,
        &out.epoch_seconds,
    )?))
}

/// Meta-trains once per (source, seed), then meta-tests every
/// (source, target, seed) cell with frozen snapshots, using up to `jobs`
/// threads. Incompatible cells are reported as skipped.
pub fn transfer_grid(cfg: &ExperimentConfig, jobs: usize) -> Result<TransferGrid> {
    cfg.validate()?;
    let spec = cfg
        .transfer
        .as_ref()
        .ok_or_else(|| Error::config("the configuration has no 'transfer' section"))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::config(format!("thread pool: {e}")))?;
    let test_model = TrainConfig {
        epochs: spec.test_epochs.unwrap_or(cfg.model.epochs),
        ..cfg.model.clone()
    };
    let seeds = &cfg.seeds;
    pool.install(|| {
        let train_jobs: Vec<(usize, u64)> = (0..spec.sources.len())
            .flat_map(|i| seeds.iter().map(move |&s| (i, s)))
            .collect();
        let trained: Vec<SnapshotSet> = train_jobs
            .par_iter()
            .map(|&(i, s)| meta_train_task(cfg, &spec.sources[i], s))
            .collect::<Result<_>>()?;

        let ce_jobs: Vec<(usize, u64)> = (0..spec.targets.len())
            .flat_map(|j| seeds.iter().map(move |&s| (j, s)))
            .collect();
        let ce: Vec<SeedMetrics> = ce_jobs
            .par_iter()
            .map(|&(j, s)| ce_task(&test_model, &spec.targets[j], s))
            .collect::<Result<_>>()?;

        let cell_jobs: Vec<(usize, usize, usize)> = (0..spec.sources.len())
            .flat_map(|i| (0..spec.targets.len()).flat_map(move |j| (0..seeds.len()).map(move |k| (i, j, k))))
            .collect();
        let results: Vec<std::result::Result<SeedMetrics, String>> = cell_jobs
            .par_iter()
            .map(|&(i, j, k)| {
                let snaps = &trained[i * seeds.len() + k];
                meta_test_task(cfg, &test_model, snaps, &spec.targets[j], seeds[k])
            })
            .collect::<Result<_>>()?;

        let mut cells = Vec::with_capacity(spec.sources.len());
        for (i, source) in spec.sources.iter().enumerate() {
            let mut row = Vec::with_capacity(spec.targets.len());
            for (j, target) in spec.targets.iter().enumerate() {
                let base = (i * spec.targets.len() + j) * seeds.len();
                let runs = &results[base..base + seeds.len()];
                let outcome = match runs.iter().find_map(|r| r.as_ref().err()) {
                    Some(reason) => CellOutcome::Skipped { reason: reason.clone() },
                    None => CellOutcome::Done {
                        metrics: MetricsReport::from_seeds(runs.iter().filter_map(|r| r.clone().ok()).collect()),
                    },
                };
                row.push(TransferCell {
                    source: source.name.clone(),
                    target: target.name.clone(),
                    outcome,
                });
            }
            cells.push(row);
        }
        let ce_reference = (0..spec.targets.len())
            .map(|j| MetricsReport::from_seeds(ce[j * seeds.len()..(j + 1) * seeds.len()].to_vec()))
            .collect();
        Ok(TransferGrid {
            sources: spec.sources.iter().map(|t| t.name.clone()).collect(),
            targets: spec.targets.iter().map(|t| t.name.clone()).collect(),
            cells,
            ce_reference,
        })
    })
}
