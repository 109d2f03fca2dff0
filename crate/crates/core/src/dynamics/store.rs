use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::Tensor;

/// Hidden and cell vectors of one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

/// One exported observation of a sample's training dynamics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsRecord {
    pub index: usize,
    pub epoch: usize,
    pub cnl: f64,
    pub gnl: f64,
    pub pe: f64,
    pub loss: f64,
    pub noisy_label: usize,
    pub true_label: usize,
}

/// Per-sample observation kept in the history ring.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub epoch: usize,
    pub features: Vec<f64>,
    pub loss: f64,
}

/// Per-sample recurrent state plus a bounded history of observations.
///
/// States start at zero. The previous-epoch prediction used by the mixing
/// decoder starts uniform.
#[derive(Debug, Clone)]
pub struct DynamicsStore {
    hidden: usize,
    num_classes: usize,
    h: Tensor,
    c: Tensor,
    prev_probs: Tensor,
    history: HistoryRing,
    epoch: usize,
}

/// Fixed-depth ring of observations per sample in flat buffers. The feature
/// width is fixed by the first recorded batch.
#[derive(Debug, Clone)]
struct HistoryRing {
    samples: usize,
    depth: usize,
    width: usize,
    features: Vec<f64>,
    epochs: Vec<usize>,
    losses: Vec<f64>,
    /// Slot of the oldest observation and number retained, per sample.
    head: Vec<usize>,
    count: Vec<usize>,
}

impl HistoryRing {
    fn new(samples: usize, depth: usize) -> Self {
        HistoryRing {
            samples,
            depth,
            width: 0,
            features: Vec::new(),
            epochs: vec![0; samples * depth],
            losses: vec![0.0; samples * depth],
            head: vec![0; samples],
            count: vec![0; samples],
        }
    }

    fn push(&mut self, i: usize, epoch: usize, features: &[f64], loss: f64) {
        let slot = if self.count[i] < self.depth {
            self.count[i] += 1;
            (self.head[i] + self.count[i] - 1) % self.depth
        } else {
            let s = self.head[i];
            self.head[i] = (s + 1) % self.depth;
            s
        };
        let k = i * self.depth + slot;
        self.epochs[k] = epoch;
        self.losses[k] = loss;
        self.features[k * self.width..(k + 1) * self.width].copy_from_slice(features);
    }

    fn observations(&self, i: usize) -> impl Iterator<Item = Observation> + '_ {
        (0..self.count[i]).map(move |n| {
            let k = i * self.depth + (self.head[i] + n) % self.depth;
            Observation {
                epoch: self.epochs[k],
                features: self.features[k * self.width..(k + 1) * self.width].to_vec(),
                loss: self.losses[k],
            }
        })
    }
}

impl DynamicsStore {
    pub fn new(num_samples: usize, hidden: usize, num_classes: usize) -> Self {
        DynamicsStore::with_history(num_samples, hidden, num_classes, 1)
    }

    pub fn with_history(num_samples: usize, hidden: usize, num_classes: usize, depth: usize) -> Self {
        DynamicsStore {
            hidden,
            num_classes,
            h: Tensor::zeros(&[num_samples, hidden]),
            c: Tensor::zeros(&[num_samples, hidden]),
            prev_probs: Tensor::full(&[num_samples, num_classes], 1.0 / num_classes as f64),
            history: HistoryRing::new(num_samples, depth),
            epoch: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.history.samples
    }

    pub fn is_empty(&self) -> bool {
        self.history.samples == 0
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn set_epoch(&mut self, epoch: usize) {
        self.epoch = epoch;
    }

    fn check(&self, indices: &[usize]) -> Result<()> {
        match indices.iter().find(|&&i| i >= self.len()) {
            Some(bad) => Err(Error::contract(format!(
                "sample index {bad} out of range for a store of {} samples",
                self.len()
            ))),
            None => Ok(()),
        }
    }

    fn check_rows(&self, what: &str, indices: &[usize], t: &Tensor, cols: usize) -> Result<()> {
        if t.rows() != indices.len() || t.cols() != cols || t.len() != indices.len() * cols {
            return Err(Error::contract(format!(
                "{what} has shape {:?}, expected [{}, {cols}]",
                t.shape(),
                indices.len()
            )));
        }
        Ok(())
    }

    /// Hidden and cell matrices (`[B x H]`) for the given samples.
    pub fn get(&self, indices: &[usize]) -> Result<(Tensor, Tensor)> {
        self.check(indices)?;
        let h = self.h.gather_rows(indices).reshape(vec![indices.len(), self.hidden])?;
        let c = self.c.gather_rows(indices).reshape(vec![indices.len(), self.hidden])?;
        Ok((h, c))
    }

    pub fn state(&self, index: usize) -> Result<RecurrentState> {
        self.check(&[index])?;
        Ok(RecurrentState {
            h: self.h.row(index).to_vec(),
            c: self.c.row(index).to_vec(),
        })
    }

    pub fn update(&mut self, indices: &[usize], h: &Tensor, c: &Tensor) -> Result<()> {
        self.check(indices)?;
        self.check_rows("hidden state", indices, h, self.hidden)?;
        self.check_rows("cell state", indices, c, self.hidden)?;
        for (r, &i) in indices.iter().enumerate() {
            let w = self.hidden;
            self.h.data_mut()[i * w..(i + 1) * w].copy_from_slice(&h.data()[r * w..(r + 1) * w]);
            self.c.data_mut()[i * w..(i + 1) * w].copy_from_slice(&c.data()[r * w..(r + 1) * w]);
        }
        Ok(())
    }

    /// Prediction recorded for each sample at its previous visit.
    pub fn prev_probs(&self, indices: &[usize]) -> Result<Tensor> {
        self.check(indices)?;
        self.prev_probs
            .gather_rows(indices)
            .reshape(vec![indices.len(), self.num_classes])
    }

    pub fn set_prev_probs(&mut self, indices: &[usize], probs: &Tensor) -> Result<()> {
        self.check(indices)?;
        self.check_rows("prediction", indices, probs, self.num_classes)?;
        let w = self.num_classes;
        for (r, &i) in indices.iter().enumerate() {
            self.prev_probs.data_mut()[i * w..(i + 1) * w].copy_from_slice(&probs.data()[r * w..(r + 1) * w]);
        }
        Ok(())
    }

    /// Appends one observation per sample, dropping the oldest beyond the
    /// configured depth.
    pub fn record(&mut self, indices: &[usize], features: &Tensor, losses: &[f64]) -> Result<()> {
        self.check(indices)?;
        let ring = &mut self.history;
        if ring.depth == 0 {
            return Ok(());
        }
        if features.rows() != indices.len() || losses.len() != indices.len() {
            return Err(Error::contract("observation batch does not match the indices"));
        }
        if ring.features.is_empty() {
            ring.width = features.cols();
            ring.features = vec![0.0; ring.samples * ring.depth * ring.width];
        } else if features.cols() != ring.width {
            return Err(Error::contract(format!(
                "observation width {} differs from the recorded width {}",
                features.cols(),
                ring.width
            )));
        }
        for (r, &i) in indices.iter().enumerate() {
            ring.push(i, self.epoch, features.row(r), losses[r]);
        }
        Ok(())
    }

    /// Retained observations of one sample, oldest first.
    pub fn history(&self, index: usize) -> Result<Vec<Observation>> {
        self.check(&[index])?;
        Ok(self.history.observations(index).collect())
    }

    /// Export of every retained observation, ordered by sample then epoch.
    /// Observations must come from normalized features.
    pub fn records(&self, noisy_labels: &[usize], true_labels: &[usize]) -> Result<Vec<DynamicsRecord>> {
        if noisy_labels.len() != self.len() || true_labels.len() != self.len() {
            return Err(Error::contract("label lists do not match the store size"));
        }
        let mut out = Vec::new();
        for i in 0..self.len() {
            for o in self.history.observations(i) {
                if o.features.len() < 3 {
                    return Err(Error::contract("observation too short for export"));
                }
                out.push(DynamicsRecord {
                    index: i,
                    epoch: o.epoch,
                    cnl: o.features[0],
                    gnl: o.features[1],
                    pe: o.features[2],
                    loss: o.loss,
                    noisy_label: noisy_labels[i],
                    true_label: true_labels[i],
                });
            }
        }
        Ok(out)
    }
}

/// Writes records as JSON lines.
pub fn write_dynamics_jsonl(path: &Path, records: &[DynamicsRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fresh_store_is_zero() {
        let s = DynamicsStore::new(4, 3, 2);
        let (h, c) = s.get(&[0, 3]).unwrap();
        assert_eq!(h, Tensor::zeros(&[2, 3]));
        assert_eq!(c, Tensor::zeros(&[2, 3]));
        assert_eq!(s.prev_probs(&[1]).unwrap().data(), &[0.5, 0.5]);
    }

    #[test]
    fn write_then_read_leaves_others_untouched() {
        let mut s = DynamicsStore::new(4, 2, 2);
        let h = Tensor::matrix(2, 2, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let c = Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        s.update(&[2, 0], &h, &c).unwrap();
        let (h2, c2) = s.get(&[2, 0]).unwrap();
        assert_eq!(h2, h);
        assert_eq!(c2, c);
        assert_eq!(s.state(1).unwrap().h, vec![0.0, 0.0]);
        assert_eq!(s.state(3).unwrap().c, vec![0.0, 0.0]);
        assert_eq!(s.state(0).unwrap().h, vec![0.3, 0.4]);
    }

    #[test]
    fn out_of_range_and_shape_errors() {
        let mut s = DynamicsStore::new(2, 2, 2);
        assert!(s.get(&[2]).is_err());
        let bad = Tensor::zeros(&[1, 3]);
        assert!(s.update(&[0], &bad, &bad).is_err());
    }

    #[test]
    fn history_ring_and_export() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = DynamicsStore::with_history(2, 1, 2, 2);
        for epoch in 1..=3 {
            s.set_epoch(epoch);
            let f = Tensor::matrix(2, 5, vec![epoch as f64; 10]).unwrap();
            s.record(&[0, 1], &f, &[0.5, 0.25]).unwrap();
        }
        let ring = s.history(0).unwrap();
        assert_eq!(ring.iter().map(|o| o.epoch).collect::<Vec<_>>(), vec![2, 3]);
        let recs = s.records(&[0, 1], &[0, 0]).unwrap();
        assert_eq!(recs.len(), 4);
        assert_eq!(recs[3].true_label, 0);
        assert_eq!(recs[3].noisy_label, 1);
        let path = dir.path().join("dyn.jsonl");
        write_dynamics_jsonl(&path, &recs).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let back: Vec<DynamicsRecord> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(back, recs);
    }
}
