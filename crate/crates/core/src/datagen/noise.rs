//! Label-noise models.

use std::collections::BTreeMap;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::NoisyDataset;
use crate::error::{Error, Result};
use crate::numcore::kernels::sigmoid;
use crate::numcore::Tensor;
use crate::rng::rng_from;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    None,
    Symmetric,
    Asymmetric,
    InstanceDependent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    #[serde(default)]
    pub rate: f64,
    /// Class -> class flips for asymmetric noise. Classes without an entry
    /// are never flipped.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_map: Option<BTreeMap<usize, usize>>,
    #[serde(default)]
    pub seed: u64,
}

impl NoiseSpec {
    pub fn none() -> Self {
        NoiseSpec {
            kind: NoiseKind::None,
            rate: 0.0,
            pair_map: None,
            seed: 0,
        }
    }

    pub fn symmetric(rate: f64, seed: u64) -> Self {
        NoiseSpec {
            kind: NoiseKind::Symmetric,
            rate,
            pair_map: None,
            seed,
        }
    }

    pub fn asymmetric(rate: f64, pairs: &[(usize, usize)], seed: u64) -> Self {
        NoiseSpec {
            kind: NoiseKind::Asymmetric,
            rate,
            pair_map: Some(pairs.iter().copied().collect()),
            seed,
        }
    }

    pub fn instance_dependent(rate: f64, seed: u64) -> Self {
        NoiseSpec {
            kind: NoiseKind::InstanceDependent,
            rate,
            pair_map: None,
            seed,
        }
    }

    /// A cyclic `c -> c + 1 mod C` pairing, a common asymmetric default.
    pub fn cyclic_pairs(num_classes: usize) -> Vec<(usize, usize)> {
        (0..num_classes).map(|c| (c, (c + 1) % num_classes)).collect()
    }

    pub fn validate(&self, num_classes: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rate) {
            return Err(Error::config(format!("noise rate {} outside [0, 1]", self.rate)));
        }
        if self.kind == NoiseKind::Asymmetric {
            let map = self
                .pair_map
                .as_ref()
                .ok_or_else(|| Error::config("asymmetric noise needs a pair_map"))?;
            if map.is_empty() {
                return Err(Error::config("asymmetric pair_map is empty"));
            }
            for (&from, &to) in map {
                if from >= num_classes || to >= num_classes {
                    return Err(Error::config(format!("pair {from}->{to} outside [0, {num_classes})")));
                }
                if from == to {
                    return Err(Error::config(format!("pair_map maps class {from} to itself")));
                }
            }
        }
        Ok(())
    }
}

/// `Q[c][c'] = P(noisy = c' | true = c)` implied by a class-level noise model.
///
/// Instance-dependent noise has no class-level matrix (flip probabilities
/// depend on each sample's features) and is rejected.
pub fn transition_matrix(spec: &NoiseSpec, num_classes: usize) -> Result<Tensor> {
    spec.validate(num_classes)?;
    let c = num_classes;
    let r = spec.rate;
    let mut q = Tensor::identity(c);
    match spec.kind {
        NoiseKind::None => {}
        NoiseKind::Symmetric => {
            for a in 0..c {
                for b in 0..c {
                    q.set(a, b, if a == b { 1.0 - r } else { r / (c - 1) as f64 });
                }
            }
        }
        NoiseKind::Asymmetric => {
            for (&from, &to) in spec.pair_map.as_ref().expect("validated") {
                q.set(from, from, 1.0 - r);
                q.set(from, to, r);
            }
        }
        NoiseKind::InstanceDependent => {
            return Err(Error::config(
                "instance-dependent noise has no class-level transition matrix",
            ))
        }
    }
    Ok(q)
}

/// Checks that every row of `q` is a probability vector.
pub fn check_row_stochastic(q: &Tensor, num_classes: usize) -> Result<()> {
    if q.shape() != [num_classes, num_classes] {
        return Err(Error::config(format!(
            "transition matrix has shape {:?}, expected [{num_classes}, {num_classes}]",
            q.shape()
        )));
    }
    for r in 0..num_classes {
        let row = q.row(r);
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > 1e-9 || row.iter().any(|&v| v < 0.0) {
            return Err(Error::config(format!("transition matrix row {r} is not stochastic")));
        }
    }
    Ok(())
}

fn other_class(rng: &mut crate::rng::Rng, y: usize, c: usize) -> usize {
    let k = rng.random_range(0..c - 1);
    if k >= y {
        k + 1
    } else {
        k
    }
}

/// Corrupts the observed labels of a clean dataset.
///
/// Symmetric and asymmetric noise resample every label from its row of the
/// transition matrix. Instance-dependent noise flips sample `i` with
/// probability `rate * s_i / mean(s)` (clamped to [0, 1]) where
/// `s_i = sigmoid(w . (x_i - mean x))` for a Gaussian projection `w` drawn
/// from the spec seed; the new label is uniform over the other classes.
pub fn inject_noise(dataset: &NoisyDataset, spec: &NoiseSpec) -> Result<NoisyDataset> {
    if dataset.noisy_labels != dataset.true_labels {
        return Err(Error::contract(format!(
            "{} already carries noisy labels",
            dataset.name
        )));
    }
    let c = dataset.num_classes;
    spec.validate(c)?;
    let mut rng = rng_from(spec.seed);
    let mut out = dataset.clone();
    out.noise = Some(spec.clone());

    match spec.kind {
        NoiseKind::None => {}
        NoiseKind::Symmetric => {
            for y in &mut out.noisy_labels {
                if rng.random::<f64>() < spec.rate {
                    *y = other_class(&mut rng, *y, c);
                }
            }
        }
        NoiseKind::Asymmetric => {
            let map = spec.pair_map.as_ref().expect("validated");
            for y in &mut out.noisy_labels {
                let u = rng.random::<f64>();
                if let Some(&to) = map.get(y) {
                    if u < spec.rate {
                        *y = to;
                    }
                }
            }
        }
        NoiseKind::InstanceDependent => {
            let d = dataset.dim();
            let w: Vec<f64> = (0..d)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z / (d as f64).sqrt()
                })
                .collect();
            let n = dataset.len();
            let mut mean_x = vec![0.0; d];
            for i in 0..n {
                for (m, v) in mean_x.iter_mut().zip(dataset.features.row(i)) {
                    *m += v / n as f64;
                }
            }
            let scores: Vec<f64> = (0..n)
                .map(|i| {
                    let row = dataset.features.row(i);
                    sigmoid(row.iter().zip(&mean_x).zip(&w).map(|((x, m), w)| (x - m) * w).sum())
                })
                .collect();
            let mean_score = scores.iter().sum::<f64>() / n.max(1) as f64;
            for (y, s) in out.noisy_labels.iter_mut().zip(&scores) {
                let p = (spec.rate * s / mean_score.max(1e-12)).clamp(0.0, 1.0);
                if rng.random::<f64>() < p {
                    *y = other_class(&mut rng, *y, c);
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::gen_blobs;

    fn balanced(n_per: usize, c: usize) -> NoisyDataset {
        let labels: Vec<usize> = (0..c).flat_map(|k| std::iter::repeat_n(k, n_per)).collect();
        let n = labels.len();
        NoisyDataset::clean("bal", Tensor::zeros(&[n, 1]), labels, c).unwrap()
    }

    #[test]
    fn symmetric_matrix_formula() {
        let q = transition_matrix(&NoiseSpec::symmetric(0.0, 0), 4).unwrap();
        assert_eq!(q, Tensor::identity(4));
        let q = transition_matrix(&NoiseSpec::symmetric(0.4, 0), 10).unwrap();
        assert!((q.get(3, 3) - 0.6).abs() < 1e-15);
        assert!((q.get(3, 4) - 0.4 / 9.0).abs() < 1e-15);
        assert!((q.get(3, 4) - 0.04444).abs() < 1e-5);
        check_row_stochastic(&q, 10).unwrap();
    }

    #[test]
    fn asymmetric_matrix_formula() {
        let q = transition_matrix(&NoiseSpec::asymmetric(0.3, &[(0, 1)], 0), 4).unwrap();
        assert_eq!(q.row(0), &[0.7, 0.3, 0.0, 0.0]);
        assert_eq!(q.row(2), &[0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn asymmetric_requires_valid_pairs() {
        let mut spec = NoiseSpec::asymmetric(0.3, &[(0, 0)], 0);
        assert!(transition_matrix(&spec, 3).is_err());
        spec.pair_map = None;
        assert!(transition_matrix(&spec, 3).is_err());
        assert!(transition_matrix(&NoiseSpec::asymmetric(0.3, &[(0, 5)], 0), 3).is_err());
    }

    #[test]
    fn zero_rate_keeps_labels() {
        let ds = balanced(100, 5);
        for spec in [
            NoiseSpec::symmetric(0.0, 1),
            NoiseSpec::asymmetric(0.0, &NoiseSpec::cyclic_pairs(5), 1),
            NoiseSpec::instance_dependent(0.0, 1),
        ] {
            let noisy = inject_noise(&ds, &spec).unwrap();
            assert_eq!(noisy.noisy_labels, noisy.true_labels);
        }
    }

    #[test]
    fn asymmetric_flips_follow_the_pair_map() {
        let ds = balanced(2000, 4);
        let noisy = inject_noise(&ds, &NoiseSpec::asymmetric(0.4, &[(0, 1)], 3)).unwrap();
        let mut flipped = 0;
        for (y, yn) in noisy.true_labels.iter().zip(&noisy.noisy_labels) {
            if *y == 0 && *yn != 0 {
                assert_eq!(*yn, 1);
                flipped += 1;
            }
            if *y != 0 {
                assert_eq!(y, yn);
            }
        }
        assert!(flipped > 0);
    }

    #[test]
    fn symmetric_rate_concentrates() {
        // 3-sigma binomial margin at N = 100000 is 0.0046
        let ds = balanced(10_000, 10);
        let noisy = inject_noise(&ds, &NoiseSpec::symmetric(0.4, 17)).unwrap();
        let frac = noisy.flip_fraction();
        assert!((frac - 0.4).abs() <= 0.005, "{frac}");
    }

    #[test]
    fn instance_dependent_hits_target_rate_on_average() {
        let ds = gen_blobs(4, 5000, 3, 1.0, 2).unwrap();
        let noisy = inject_noise(&ds, &NoiseSpec::instance_dependent(0.3, 8)).unwrap();
        let frac = noisy.flip_fraction();
        assert!((frac - 0.3).abs() < 0.03, "{frac}");
        assert!(transition_matrix(noisy.noise.as_ref().unwrap(), 4).is_err());
    }

    #[test]
    fn injecting_twice_is_rejected() {
        let ds = balanced(100, 3);
        let noisy = inject_noise(&ds, &NoiseSpec::symmetric(0.5, 1)).unwrap();
        assert!(inject_noise(&noisy, &NoiseSpec::symmetric(0.5, 1)).is_err());
    }

    #[test]
    fn noise_is_a_pure_function_of_seed() {
        let ds = balanced(500, 3);
        let a = inject_noise(&ds, &NoiseSpec::symmetric(0.3, 5)).unwrap();
        let b = inject_noise(&ds, &NoiseSpec::symmetric(0.3, 5)).unwrap();
        assert_eq!(a, b);
    }
}
