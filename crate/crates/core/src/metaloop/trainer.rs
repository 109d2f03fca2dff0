//! The base-model training loop shared by every method. Methods differ only
//! in how they build soft targets (and, for forward correction, in what the
//! loss sees as the prediction).

use std::time::Instant;

use rand::seq::SliceRandom;

use super::{EpochRow, RunLog, TrainConfig};
use crate::basemodel::{Mlp, Optimizer};
use crate::datagen::NoisyDataset;
use crate::dynamics::noisy_label_losses;
use crate::error::{Error, Result};
use crate::numcore::kernels::{argmax, check_simplex};
use crate::numcore::{Graph, NodeId, Tensor};
use crate::rng::{derive_seed, rng_for, Stream};

/// Data seen by one training run.
#[derive(Debug, Clone, Copy)]
pub struct TrainData<'a> {
    pub train: &'a NoisyDataset,
    /// Rows of `train` that drive base-model updates.
    pub update_indices: &'a [usize],
    pub test: Option<&'a NoisyDataset>,
}

/// Everything a target policy may look at for one mini-batch.
#[derive(Debug)]
pub struct BatchContext<'a> {
    pub epoch: usize,
    pub batch: usize,
    pub indices: &'a [usize],
    pub probs: &'a Tensor,
    /// Cross-entropy of each prediction against its noisy label.
    pub losses: &'a [f64],
    pub noisy_labels: &'a [usize],
    pub num_classes: usize,
}

/// Soft targets for the base loss, plus the corrector's own distribution
/// when it differs from the targets.
#[derive(Debug, Clone)]
pub struct BatchTargets {
    pub targets: Tensor,
    pub corrected: Option<Tensor>,
}

/// State visible at the end of an epoch, after the last base update.
pub struct EpochContext<'a> {
    pub epoch: usize,
    pub model: &'a Mlp,
    pub data: TrainData<'a>,
    pub batch_size: usize,
    /// Base learning rate in effect during this epoch.
    pub learning_rate: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EpochReport {
    pub loss_meta: Option<f64>,
    pub kl_meta: Option<f64>,
}

pub trait TargetPolicy {
    /// Value of the `split` column.
    fn phase(&self) -> &'static str;

    fn begin_epoch(&mut self, _epoch: usize) -> Result<()> {
        Ok(())
    }

    fn targets(&mut self, ctx: &BatchContext) -> Result<BatchTargets>;

    /// The prediction that enters the loss; the model output by default.
    fn loss_input(&self, _g: &mut Graph, probs: NodeId) -> Result<NodeId> {
        Ok(probs)
    }

    fn end_epoch(&mut self, _ctx: &EpochContext) -> Result<EpochReport> {
        Ok(EpochReport::default())
    }
}

/// Result of [`train`].
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Mlp,
    pub log: RunLog,
    /// Wall time of each epoch, evaluation included.
    pub epoch_seconds: Vec<f64>,
    /// Latest corrected distribution for every row of the training set
    /// (uniform for rows that never took part in an update).
    pub corrected: Tensor,
}

pub(crate) fn fraction_equal(a: &[usize], b: &[usize]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / a.len() as f64
}

fn divergence(epoch: usize, batch: usize, message: impl Into<String>) -> Error {
    Error::Divergence {
        epoch,
        batch,
        message: message.into(),
    }
}

/// Trains a freshly initialised model for `config.epochs` epochs.
pub fn train(data: TrainData, config: &TrainConfig, seed: u64, policy: &mut dyn TargetPolicy) -> Result<TrainOutcome> {
    config.validate()?;
    let ds = data.train;
    ds.validate()?;
    if data.update_indices.is_empty() {
        return Err(Error::config("no samples to train on"));
    }
    if let Some(&bad) = data.update_indices.iter().find(|&&i| i >= ds.len()) {
        return Err(Error::contract(format!("training index {bad} out of range")));
    }
    if let Some(test) = data.test {
        if test.dim() != ds.dim() || test.num_classes != ds.num_classes {
            return Err(Error::config("test set does not match the training set's shape"));
        }
    }
    let c = ds.num_classes;
    let sizes = config.layer_sizes(ds.dim(), c);
    let mut model = Mlp::init(&sizes, derive_seed(seed, Stream::ModelInit))?;
    let mut opt = Optimizer::new(config.optimizer.clone(), model.params())?;
    let mut shuffle_rng = rng_for(seed, Stream::Shuffle);
    let mut order = data.update_indices.to_vec();
    let mut corrected = Tensor::full(&[ds.len(), c], 1.0 / c as f64);
    let mut log = RunLog::default();
    let mut epoch_seconds = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        let start = Instant::now();
        let lr = config.optimizer.lr_at(epoch);
        policy.begin_epoch(epoch)?;
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            let x = ds.features.gather_rows(idx).reshape(vec![idx.len(), ds.dim()])?;
            let noisy: Vec<usize> = idx.iter().map(|&i| ds.noisy_labels[i]).collect();
            let mut g = Graph::new();
            let xn = g.constant(x);
            let fwd = model.forward(&mut g, xn, true)?;
            let probs = g.value(fwd.probs).clone();
            let losses = noisy_label_losses(&probs, &noisy);
            let ctx = BatchContext {
                epoch,
                batch: b,
                indices: idx,
                probs: &probs,
                losses: &losses,
                noisy_labels: &noisy,
                num_classes: c,
            };
            let bt = policy.targets(&ctx)?;
            if bt.targets.rows() != idx.len() || bt.targets.cols() != c {
                return Err(Error::contract(format!(
                    "policy returned targets of shape {:?} for a batch of {}",
                    bt.targets.shape(),
                    idx.len()
                )));
            }
            for r in 0..idx.len() {
                check_simplex("training target", bt.targets.row(r)).map_err(|e| divergence(epoch, b, e.to_string()))?;
            }
            let shown = bt.corrected.as_ref().unwrap_or(&bt.targets);
            for (r, &i) in idx.iter().enumerate() {
                corrected.row_mut(i).copy_from_slice(shown.row(r));
            }
            let pin = policy.loss_input(&mut g, fwd.probs)?;
            let t = g.constant(bt.targets);
            let per_sample = g.soft_cross_entropy(pin, t)?;
            let loss = g.mean(per_sample);
            let lv = g.value(loss).item();
            if !lv.is_finite() {
                return Err(divergence(epoch, b, format!("non-finite base loss {lv}")));
            }
            g.backward(loss)?;
            let grads: Vec<Tensor> = fwd.params.iter().map(|&p| g.grad(p)).collect();
            opt.step(model.params_mut(), &grads, lr)
                .map_err(|e| divergence(epoch, b, e.to_string()))?;
            loss_sum += lv;
            batches += 1;
        }
        let report = policy.end_epoch(&EpochContext {
            epoch,
            model: &model,
            data,
            batch_size: config.batch_size,
            learning_rate: lr,
        })?;

        let preds = model.predict(&ds.features)?;
        let sel = |labels: &[usize]| -> Vec<usize> { data.update_indices.iter().map(|&i| labels[i]).collect() };
        let pred_sel: Vec<usize> = data.update_indices.iter().map(|&i| preds[i]).collect();
        let true_sel = sel(&ds.true_labels);
        let corrected_sel: Vec<usize> = data.update_indices.iter().map(|&i| argmax(corrected.row(i))).collect();
        let acc_test = match data.test {
            Some(test) => Some(fraction_equal(&model.predict(&test.features)?, &test.true_labels)),
            None => None,
        };
        log.rows.push(EpochRow {
            epoch,
            split: policy.phase().to_string(),
            loss_base: loss_sum / batches as f64,
            loss_meta: report.loss_meta,
            acc_train_noisy: fraction_equal(&pred_sel, &sel(&ds.noisy_labels)),
            acc_train_true: fraction_equal(&pred_sel, &true_sel),
            acc_test,
            corrected_label_acc: fraction_equal(&corrected_sel, &true_sel),
            kl_meta: report.kl_meta,
        });
        epoch_seconds.push(start.elapsed().as_secs_f64());
    }
    Ok(TrainOutcome {
        model,
        log,
        epoch_seconds,
        corrected,
    })
}
