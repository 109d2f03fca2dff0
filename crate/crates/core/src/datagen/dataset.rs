use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::NoiseSpec;
use crate::error::{Error, Result};
use crate::numcore::Tensor;

/// Samples with both their true and observed (possibly corrupted) labels.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyDataset {
    pub name: String,
    /// `N x d` feature matrix.
    pub features: Tensor,
    pub true_labels: Vec<usize>,
    pub noisy_labels: Vec<usize>,
    pub num_classes: usize,
    /// The noise model that produced `noisy_labels`; `None` while clean.
    pub noise: Option<NoiseSpec>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SampleRecord {
    features: Vec<f64>,
    y: usize,
    y_noisy: usize,
}

impl NoisyDataset {
    /// A dataset whose observed labels equal the true labels.
    pub fn clean(name: impl Into<String>, features: Tensor, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        let ds = NoisyDataset {
            name: name.into(),
            features,
            noisy_labels: labels.clone(),
            true_labels: labels,
            num_classes,
            noise: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.true_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.true_labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.true_labels.len();
        if self.features.rows() != n && n > 0 || self.noisy_labels.len() != n {
            return Err(Error::Dimension {
                op: "dataset",
                left: self.features.shape().to_vec(),
                right: vec![n, self.noisy_labels.len()],
            });
        }
        if self.num_classes < 2 {
            return Err(Error::config("a dataset needs at least two classes"));
        }
        let bad = self
            .true_labels
            .iter()
            .chain(&self.noisy_labels)
            .any(|&y| y >= self.num_classes);
        if bad {
            return Err(Error::config(format!(
                "{}: label outside [0, {})",
                self.name, self.num_classes
            )));
        }
        if !self.features.all_finite() {
            return Err(Error::config(format!("{}: non-finite feature", self.name)));
        }
        Ok(())
    }

    /// Fraction of samples whose observed label differs from the true one.
    pub fn flip_fraction(&self) -> f64 {
        let flips = self
            .true_labels
            .iter()
            .zip(&self.noisy_labels)
            .filter(|(a, b)| a != b)
            .count();
        flips as f64 / self.len().max(1) as f64
    }

    /// Row-normalized confusion `P(noisy = c' | true = c)`.
    pub fn empirical_confusion(&self) -> Tensor {
        let c = self.num_classes;
        let mut counts = vec![0.0; c * c];
        let mut totals = vec![0.0; c];
        for (&y, &yn) in self.true_labels.iter().zip(&self.noisy_labels) {
            counts[y * c + yn] += 1.0;
            totals[y] += 1.0;
        }
        for y in 0..c {
            if totals[y] > 0.0 {
                for v in &mut counts[y * c..(y + 1) * c] {
                    *v /= totals[y];
                }
            }
        }
        Tensor::matrix(c, c, counts).expect("c*c entries")
    }

    /// Restricts the dataset to the given sample indices, in order.
    pub fn subset(&self, idx: &[usize]) -> NoisyDataset {
        NoisyDataset {
            name: self.name.clone(),
            features: self.features.gather_rows(idx),
            true_labels: idx.iter().map(|&i| self.true_labels[i]).collect(),
            noisy_labels: idx.iter().map(|&i| self.noisy_labels[i]).collect(),
            num_classes: self.num_classes,
            noise: self.noise.clone(),
        }
    }

    /// One JSON object per line: `{"features": [...], "y": .., "y_noisy": ..}`.
    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for i in 0..self.len() {
            let rec = SampleRecord {
                features: self.features.row(i).to_vec(),
                y: self.true_labels[i],
                y_noisy: self.noisy_labels[i],
            };
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_jsonl(path: &Path, num_classes: usize) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut rows = Vec::new();
        let (mut ys, mut yns) = (Vec::new(), Vec::new());
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: SampleRecord = serde_json::from_str(&line)?;
            rows.push(rec.features);
            ys.push(rec.y);
            yns.push(rec.y_noisy);
        }
        let name = path
            .file_stem()
            .map_or_else(|| "jsonl".to_string(), |s| s.to_string_lossy().into_owned());
        let ds = NoisyDataset {
            name,
            features: Tensor::from_rows(&rows)?,
            true_labels: ys,
            noisy_labels: yns,
            num_classes,
            noise: None,
        };
        ds.validate()?;
        Ok(ds)
    }
}
