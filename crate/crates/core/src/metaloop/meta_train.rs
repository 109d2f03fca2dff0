use rand::seq::index::sample;

use super::correction::{feature_spec, softened_rows, Correction};
use super::outer::{direct_meta_gradient, lookahead_meta_gradient, MetaBatch};
use super::trainer::{train, BatchContext, BatchTargets, EpochContext, EpochReport, TargetPolicy, TrainData};
use super::{MetaConfig, MetaSupervision, RunLog, SnapshotSet, TrainConfig, Variant};
use crate::basemodel::{Mlp, Optimizer};
use crate::corrector::{Corrector, Snapshot};
use crate::datagen::{split_support_query, DataSplit, NoisyDataset};
use crate::dynamics::{noisy_label_losses, onehot_rows, DynamicsStore};
use crate::error::{Error, Result};
use crate::numcore::{kernels, Tensor};
use crate::rng::{derive_seed, rng_for, Rng, Stream};

/// Result of [`meta_train`].
#[derive(Debug, Clone)]
pub struct MetaTrainOutcome {
    pub model: Mlp,
    pub corrector: Corrector,
    pub snapshots: SnapshotSet,
    pub log: RunLog,
    pub epoch_seconds: Vec<f64>,
    pub split: DataSplit,
    /// Latest corrected distribution per training row.
    pub corrected: Tensor,
    pub outer_updates: usize,
}

struct MetaTrainPolicy<'a> {
    meta: &'a MetaConfig,
    net: Corrector,
    outer: Optimizer,
    correction: Correction,
    query: &'a [usize],
    support: &'a [usize],
    meta_batch: usize,
    query_rng: Rng,
    support_rng: Rng,
    snapshot_epochs: Vec<usize>,
    snapshots: Vec<Snapshot>,
    /// States and predictions at the start of the epoch (lookahead only).
    epoch_start: Option<DynamicsStore>,
    lookahead: bool,
    outer_updates: usize,
}

impl MetaTrainPolicy<'_> {
    fn meta_targets(&self, ds: &NoisyDataset, idx: &[usize]) -> Result<Tensor> {
        match self.meta.meta_supervision {
            MetaSupervision::SoftenedNoisy => {
                let noisy: Vec<usize> = idx.iter().map(|&i| ds.noisy_labels[i]).collect();
                softened_rows(&noisy, self.meta.smoothing, ds.num_classes)
            }
            MetaSupervision::CleanMeta => {
                let clean: Vec<usize> = idx.iter().map(|&i| ds.true_labels[i]).collect();
                onehot_rows(&clean, ds.num_classes)
            }
        }
    }

    fn meta_batch(&self, ds: &NoisyDataset, store: &DynamicsStore, idx: &[usize]) -> Result<MetaBatch> {
        let stateful = self.correction.stateful();
        Ok(MetaBatch {
            x: ds.features.gather_rows(idx).reshape(vec![idx.len(), ds.dim()])?,
            noisy_labels: idx.iter().map(|&i| ds.noisy_labels[i]).collect(),
            state: if stateful { Some(store.get(idx)?) } else { None },
            prev: if stateful { Some(store.prev_probs(idx)?) } else { None },
            targets: self.meta_targets(ds, idx)?,
        })
    }

    fn draw(rng: &mut Rng, pool: &[usize], amount: usize) -> Vec<usize> {
        let amount = amount.min(pool.len());
        let mut picked: Vec<usize> = sample(rng, pool.len(), amount).into_iter().map(|k| pool[k]).collect();
        picked.sort_unstable();
        picked
    }

    fn outer_step(&mut self, ctx: &EpochContext) -> Result<f64> {
        let ds = ctx.data.train;
        let q_idx = Self::draw(&mut self.query_rng, self.query, self.meta_batch);
        let query = self.meta_batch(ds, &self.correction.store, &q_idx)?;
        let spec = self.correction.spec;
        let (loss, grads) = if self.lookahead {
            let s_idx = Self::draw(&mut self.support_rng, self.support, ctx.batch_size);
            let start = self.epoch_start.as_ref().expect("lookahead keeps epoch-start states");
            let support = self.meta_batch(ds, start, &s_idx)?;
            lookahead_meta_gradient(ctx.model, &self.net, spec, &support, &query, ctx.learning_rate)?
        } else {
            direct_meta_gradient(ctx.model, &self.net, spec, &query)?
        };
        self.outer
            .step(
                self.net.params_mut(),
                &grads,
                self.meta.outer_optimizer.lr_at(ctx.epoch),
            )
            .map_err(|e| Error::Divergence {
                epoch: ctx.epoch,
                batch: 0,
                message: format!("meta update: {e}"),
            })?;
        self.outer_updates += 1;
        Ok(loss)
    }

    /// Advances every query sample by one step and returns the mean KL
    /// between meta targets and corrected distributions.
    fn sweep_query(&mut self, ctx: &EpochContext) -> Result<f64> {
        let ds = ctx.data.train;
        let mut kl_sum = 0.0;
        for idx in self.query.chunks(ctx.batch_size) {
            let x = ds.features.gather_rows(idx).reshape(vec![idx.len(), ds.dim()])?;
            let probs = ctx.model.predict_probs(&x)?;
            let noisy: Vec<usize> = idx.iter().map(|&i| ds.noisy_labels[i]).collect();
            let losses = noisy_label_losses(&probs, &noisy);
            let bctx = BatchContext {
                epoch: ctx.epoch,
                batch: 0,
                indices: idx,
                probs: &probs,
                losses: &losses,
                noisy_labels: &noisy,
                num_classes: ds.num_classes,
            };
            let out = self.correction.correct(&self.net, &bctx)?;
            let y = out.corrected.expect("correction reports its distribution");
            let t = self.meta_targets(ds, idx)?;
            for r in 0..idx.len() {
                kl_sum += kernels::kl_row(t.row(r), y.row(r));
            }
        }
        Ok(kl_sum / self.query.len() as f64)
    }
}

impl TargetPolicy for MetaTrainPolicy<'_> {
    fn phase(&self) -> &'static str {
        "meta_train"
    }

    fn begin_epoch(&mut self, epoch: usize) -> Result<()> {
        self.correction.store.set_epoch(epoch);
        if self.lookahead {
            self.epoch_start = Some(self.correction.store.clone());
        }
        Ok(())
    }

    fn targets(&mut self, ctx: &BatchContext) -> Result<BatchTargets> {
        self.correction.correct(&self.net, ctx)
    }

    fn end_epoch(&mut self, ctx: &EpochContext) -> Result<EpochReport> {
        let loss_meta = if ctx.epoch.is_multiple_of(self.meta.update_period) {
            Some(self.outer_step(ctx)?)
        } else {
            None
        };
        if self.snapshot_epochs.contains(&ctx.epoch) {
            self.snapshots.push(Snapshot::new(ctx.epoch, self.net.clone()));
        }
        let kl_meta = self.sweep_query(ctx)?;
        Ok(EpochReport {
            loss_meta,
            kl_meta: Some(kl_meta),
        })
    }
}

/// Meta-trains a corrector alongside a base model on the support part of
/// `dataset`, using the query part for outer updates.
pub fn meta_train(
    dataset: &NoisyDataset,
    test: Option<&NoisyDataset>,
    train_cfg: &TrainConfig,
    meta: &MetaConfig,
    seed: u64,
) -> Result<MetaTrainOutcome> {
    train_cfg.validate()?;
    meta.validate(train_cfg.epochs)?;
    let split = split_support_query(dataset, meta.query_fraction, derive_seed(seed, Stream::Split))?;
    meta_train_with_split(dataset, &split, test, train_cfg, meta, seed)
}

pub fn meta_train_with_split(
    dataset: &NoisyDataset,
    split: &DataSplit,
    test: Option<&NoisyDataset>,
    train_cfg: &TrainConfig,
    meta: &MetaConfig,
    seed: u64,
) -> Result<MetaTrainOutcome> {
    train_cfg.validate()?;
    meta.validate(train_cfg.epochs)?;
    if split.query_indices.is_empty() || split.support_indices.is_empty() {
        return Err(Error::config("support and query sets must both be nonempty"));
    }
    let c = dataset.num_classes;
    let probe = Corrector::zeros(meta.corrector.clone(), 1, c)?;
    let spec = feature_spec(meta.variant, &probe);
    let net = Corrector::init(
        meta.corrector.clone(),
        spec.width(c),
        c,
        derive_seed(seed, Stream::CorrectorInit),
    )?;
    let mut warnings = Vec::new();
    let lookahead = if meta.lookahead && meta.variant == Variant::WithoutSd {
        warnings.push(
            "lookahead disabled: hard one-hot targets are not differentiable; using the direct update".to_string(),
        );
        false
    } else {
        meta.lookahead
    };
    let outer = Optimizer::new(meta.outer_optimizer.clone(), net.params())?;
    let store = DynamicsStore::with_history(dataset.len(), meta.corrector.hidden_size, c, meta.history_depth);
    let mut policy = MetaTrainPolicy {
        meta,
        net,
        outer,
        correction: Correction {
            store,
            spec,
            variant: meta.variant,
            warmup_epochs: meta.warmup_epochs,
            smoothing: meta.smoothing,
        },
        query: &split.query_indices,
        support: &split.support_indices,
        meta_batch: meta.meta_batch_size.unwrap_or(train_cfg.batch_size),
        query_rng: rng_for(seed, Stream::QuerySample),
        support_rng: rng_for(seed, Stream::SupportSample),
        snapshot_epochs: meta.snapshot_epochs(train_cfg.epochs),
        snapshots: Vec::new(),
        epoch_start: None,
        lookahead,
        outer_updates: 0,
    };
    let data = TrainData {
        train: dataset,
        update_indices: &split.support_indices,
        test,
    };
    let mut out = train(data, train_cfg, seed, &mut policy)?;
    out.log.warnings.extend(warnings);
    Ok(MetaTrainOutcome {
        model: out.model,
        corrector: policy.net,
        snapshots: SnapshotSet::new(policy.snapshots)?,
        log: out.log,
        epoch_seconds: out.epoch_seconds,
        split: split.clone(),
        corrected: out.corrected,
        outer_updates: policy.outer_updates,
    })
}
