use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::metrics::Stat;
use crate::error::{Error, Result};
use crate::metaloop::{EpochRow, RunLog};

/// Final-epoch columns summarised by [`aggregate`].
pub const REPORT_METRICS: [&str; 7] = [
    "acc_test",
    "acc_train_true",
    "acc_train_noisy",
    "corrected_label_acc",
    "loss_base",
    "loss_meta",
    "kl_meta",
];

fn metric(row: &EpochRow, name: &str) -> Option<f64> {
    match name {
        "acc_test" => row.acc_test,
        "acc_train_true" => Some(row.acc_train_true),
        "acc_train_noisy" => Some(row.acc_train_noisy),
        "corrected_label_acc" => Some(row.corrected_label_acc),
        "loss_base" => Some(row.loss_base),
        "loss_meta" => row.loss_meta,
        "kl_meta" => row.kl_meta,
        _ => None,
    }
}

/// Summary of the runs that share a parent directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunGroup {
    /// Path relative to the report root, `/`-separated; `.` for the root.
    pub name: String,
    pub runs: usize,
    pub metrics: BTreeMap<String, Stat>,
}

fn find_logs(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            find_logs(&p, out)?;
        } else if p.file_name().is_some_and(|n| n == "log.csv") {
            out.push(p);
        }
    }
    Ok(())
}

/// Runs live in `<group>/seed<k>/log.csv`; a log outside a seed directory
/// forms a group on its own.
fn group_of(root: &Path, log: &Path) -> String {
    let mut dir = log.parent().unwrap_or(root);
    if dir != root
        && dir
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.starts_with("seed"))
    {
        dir = dir.parent().unwrap_or(root);
    }
    let rel = dir.strip_prefix(root).unwrap_or(dir);
    let parts: Vec<String> = rel
        .components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect();
    if parts.is_empty() {
        ".".to_string()
    } else {
        parts.join("/")
    }
}

/// Groups every `log.csv` below `dir` and summarises the final epoch of
/// each run. Reads nothing but the logs.
pub fn aggregate(dir: &Path) -> Result<Vec<RunGroup>> {
    let mut logs = Vec::new();
    find_logs(dir, &mut logs)?;
    let mut groups: BTreeMap<String, Vec<EpochRow>> = BTreeMap::new();
    for path in &logs {
        let log = RunLog::read_csv(path)?;
        if let Some(last) = log.rows.last() {
            groups.entry(group_of(dir, path)).or_default().push(last.clone());
        }
    }
    Ok(groups
        .into_iter()
        .map(|(name, rows)| {
            let metrics = REPORT_METRICS
                .iter()
                .filter_map(|&m| {
                    let values: Vec<f64> = rows.iter().filter_map(|r| metric(r, m)).collect();
                    Stat::of(&values).map(|s| (m.to_string(), s))
                })
                .collect();
            RunGroup {
                name,
                runs: rows.len(),
                metrics,
            }
        })
        .collect())
}

/// One row per group with `<metric>_mean` and `<metric>_std` columns; empty
/// cells where a metric was never logged.
pub fn report_csv(groups: &[RunGroup]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["group".to_string(), "runs".to_string()];
    for m in REPORT_METRICS {
        header.push(format!("{m}_mean"));
        header.push(format!("{m}_std"));
    }
    w.write_record(&header)?;
    for g in groups {
        let mut rec = vec![g.name.clone(), g.runs.to_string()];
        for m in REPORT_METRICS {
            match g.metrics.get(m) {
                Some(s) => {
                    rec.push(s.mean.to_string());
                    rec.push(s.std.to_string());
                }
                None => rec.extend([String::new(), String::new()]),
            }
        }
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::contract(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::contract(e.to_string()))
}

pub fn report_text(groups: &[RunGroup]) -> String {
    let mut out = String::new();
    for g in groups {
        let _ = writeln!(out, "{} ({} runs)", g.name, g.runs);
        for (m, s) in &g.metrics {
            let _ = writeln!(out, "  {m:<20} {:.4} ± {:.4}", s.mean, s.std);
        }
    }
    out
}

/// Aggregates `dir` and writes `report.csv` and `report.txt` into it.
pub fn write_report(dir: &Path) -> Result<Vec<RunGroup>> {
    let groups = aggregate(dir)?;
    let csv_path = dir.join("report.csv");
    std::fs::write(&csv_path, report_csv(&groups)?).map_err(|e| Error::io(&csv_path, e))?;
    let txt_path = dir.join("report.txt");
    std::fs::write(&txt_path, report_text(&groups)).map_err(|e| Error::io(&txt_path, e))?;
    Ok(groups)
}
