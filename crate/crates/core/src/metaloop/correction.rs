//! Turning corrector outputs into training targets.

use super::{soften_label, BatchContext, BatchTargets, Variant};
use crate::corrector::Corrector;
use crate::dynamics::{DynamicsStore, FeatureSpec, LossFeatures};
use crate::error::Result;
use crate::numcore::kernels::argmax;
use crate::numcore::Tensor;

/// Feature layout implied by a variant and a corrector mode.
pub fn feature_spec(variant: Variant, corrector: &Corrector) -> FeatureSpec {
    let losses = match variant {
        Variant::WithoutNnp => LossFeatures::Raw,
        _ => LossFeatures::Normalized,
    };
    FeatureSpec::new(corrector.mode(), losses)
}

pub fn softened_rows(labels: &[usize], smoothing: f64, num_classes: usize) -> Result<Tensor> {
    let data = labels
        .iter()
        .flat_map(|&y| soften_label(y, smoothing, num_classes))
        .collect();
    Tensor::matrix(labels.len(), num_classes, data)
}

pub fn hard_rows(dist: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(dist.shape());
    for r in 0..dist.rows() {
        let k = argmax(dist.row(r));
        out.row_mut(r)[k] = 1.0;
    }
    out
}

/// Per-run correction state: the dynamics store plus the rules that turn
/// corrected distributions into targets.
#[derive(Debug, Clone)]
pub struct Correction {
    pub store: DynamicsStore,
    pub spec: FeatureSpec,
    pub variant: Variant,
    pub warmup_epochs: usize,
    pub smoothing: f64,
}

impl Correction {
    pub fn stateful(&self) -> bool {
        self.variant != Variant::WithoutTse
    }

    /// Corrects one training batch with `net` and advances the states.
    pub fn correct(&mut self, net: &Corrector, ctx: &BatchContext) -> Result<BatchTargets> {
        let corrected = if self.stateful() {
            net.correct_batch(
                ctx.probs,
                ctx.losses,
                ctx.noisy_labels,
                ctx.indices,
                &mut self.store,
                self.spec,
            )?
        } else {
            let out = net.forward_batch(ctx.probs, ctx.losses, ctx.noisy_labels, self.spec, None, None)?;
            self.store.record(ctx.indices, &out.features, ctx.losses)?;
            out.corrected
        };
        let targets = if ctx.epoch <= self.warmup_epochs {
            softened_rows(ctx.noisy_labels, self.smoothing, ctx.num_classes)?
        } else if self.variant == Variant::WithoutSd {
            hard_rows(&corrected)
        } else {
            corrected.clone()
        };
        Ok(BatchTargets {
            targets,
            corrected: Some(corrected),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corrector::CorrectorConfig;
    use crate::dynamics::noisy_label_losses;
    use crate::numcore::kernels;
    use crate::rng::rng_from;
    use rand::Rng as _;

    fn setup(variant: Variant) -> (Corrector, Correction) {
        let cfg = CorrectorConfig {
            hidden_size: 3,
            ..CorrectorConfig::default()
        };
        let probe = Corrector::zeros(cfg.clone(), 1, 3).unwrap();
        let spec = feature_spec(variant, &probe);
        let net = Corrector::init(cfg, spec.width(3), 3, 4).unwrap();
        let correction = Correction {
            store: DynamicsStore::new(8, 3, 3),
            spec,
            variant,
            warmup_epochs: 1,
            smoothing: 0.1,
        };
        (net, correction)
    }

    fn batch(seed: u64) -> (Tensor, Vec<usize>) {
        let mut rng = rng_from(seed);
        let logits = Tensor::new(vec![8, 3], (0..24).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
        (
            kernels::softmax(&logits),
            (0..8).map(|_| rng.random_range(0..3)).collect(),
        )
    }

    fn run(net: &Corrector, corr: &mut Correction, epoch: usize, seed: u64) -> BatchTargets {
        let (probs, labels) = batch(seed);
        let losses = noisy_label_losses(&probs, &labels);
        let idx: Vec<usize> = (0..8).collect();
        let ctx = BatchContext {
            epoch,
            batch: 0,
            indices: &idx,
            probs: &probs,
            losses: &losses,
            noisy_labels: &labels,
            num_classes: 3,
        };
        corr.correct(net, &ctx).unwrap()
    }

    #[test]
    fn without_soft_decoding_targets_are_one_hot() {
        let (net, mut corr) = setup(Variant::WithoutSd);
        let out = run(&net, &mut corr, 3, 1);
        for r in 0..8 {
            let row = out.targets.row(r);
            assert_eq!(row.iter().filter(|&&v| v == 1.0).count(), 1);
            assert_eq!(row.iter().filter(|&&v| v == 0.0).count(), 2);
            assert_eq!(argmax(row), argmax(out.corrected.as_ref().unwrap().row(r)));
        }
    }

    #[test]
    fn without_time_series_output_ignores_history() {
        let (net, mut a) = setup(Variant::WithoutTse);
        let (_, mut b) = setup(Variant::WithoutTse);
        run(&net, &mut a, 1, 10);
        run(&net, &mut a, 2, 11);
        run(&net, &mut b, 1, 11);
        run(&net, &mut b, 2, 10);
        let ya = run(&net, &mut a, 3, 12);
        let yb = run(&net, &mut b, 3, 12);
        assert_eq!(ya.targets, yb.targets);

        let (net, mut a) = setup(Variant::Full);
        let (_, mut b) = setup(Variant::Full);
        run(&net, &mut a, 1, 10);
        run(&net, &mut a, 2, 11);
        run(&net, &mut b, 1, 11);
        run(&net, &mut b, 2, 10);
        assert_ne!(run(&net, &mut a, 3, 12).targets, run(&net, &mut b, 3, 12).targets);
    }

    #[test]
    fn warmup_uses_softened_noisy_labels() {
        let (net, mut corr) = setup(Variant::Full);
        let (_, labels) = batch(5);
        let out = run(&net, &mut corr, 1, 5);
        assert_eq!(out.targets, softened_rows(&labels, 0.1, 3).unwrap());
        let later = run(&net, &mut corr, 2, 5);
        assert_eq!(&later.targets, later.corrected.as_ref().unwrap());
    }

    #[test]
    fn hard_rows_are_one_hot_with_low_ties() {
        let d = Tensor::from_rows(&[vec![0.2, 0.5, 0.3], vec![0.4, 0.4, 0.2]]).unwrap();
        let h = hard_rows(&d);
        assert_eq!(h.row(0), &[0.0, 1.0, 0.0]);
        assert_eq!(h.row(1), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn softened_rows_floor() {
        let t = softened_rows(&[0, 2], 0.3, 3).unwrap();
        let min = t.data().iter().cloned().fold(f64::INFINITY, f64::min);
        let max = t.data().iter().cloned().fold(0.0, f64::max);
        assert!((min - 0.1).abs() < 1e-15);
        assert!((max - (0.7 + 0.1)).abs() < 1e-15);
    }
}
