use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::MethodSpec;
use crate::datagen::{gen_blobs, gen_rings, gen_two_moons, inject_noise, load_idx, NoiseKind, NoiseSpec, NoisyDataset};
use crate::error::{Error, Result};
use crate::metaloop::{MetaConfig, TrainConfig};
use crate::rng::{derive_seed, Stream};

fn default_dim() -> usize {
    2
}
fn default_spread() -> f64 {
    0.5
}
fn default_moon_noise() -> f64 {
    0.1
}

/// Where training (and optionally test) samples come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    Blobs {
        num_classes: usize,
        per_class: usize,
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default = "default_spread")]
        spread: f64,
        /// Clean test samples per class; no test set when 0.
        #[serde(default)]
        test_per_class: usize,
        /// Mixed with the run seed; tasks that differ only here draw
        /// different samples from the same distribution.
        #[serde(default)]
        seed: u64,
    },
    TwoMoons {
        n: usize,
        #[serde(default = "default_moon_noise")]
        noise_std: f64,
        #[serde(default)]
        test_n: usize,
        #[serde(default)]
        seed: u64,
    },
    Rings {
        n: usize,
        #[serde(default)]
        test_n: usize,
        #[serde(default)]
        seed: u64,
    },
    /// Lines of `{"features": [...], "y": .., "y_noisy": ..}`.
    Jsonl {
        path: PathBuf,
        num_classes: usize,
        #[serde(default)]
        test_path: Option<PathBuf>,
    },
    /// IDX image and label files.
    Idx {
        images: PathBuf,
        labels: PathBuf,
        #[serde(default)]
        test_images: Option<PathBuf>,
        #[serde(default)]
        test_labels: Option<PathBuf>,
    },
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            DatasetSpec::Blobs {
                num_classes,
                per_class,
                dim,
                spread,
                ..
            } => {
                if *num_classes < 2 || *per_class == 0 || *dim == 0 || !(*spread > 0.0) {
                    return Err(Error::config(
                        "blobs need num_classes >= 2, per_class >= 1, dim >= 1 and spread > 0",
                    ));
                }
            }
            DatasetSpec::TwoMoons { n, noise_std, .. } => {
                if *n < 2 || !(*noise_std >= 0.0) {
                    return Err(Error::config("two_moons needs n >= 2 and noise_std >= 0"));
                }
            }
            DatasetSpec::Rings { n, .. } => {
                if *n < 2 {
                    return Err(Error::config("rings need n >= 2"));
                }
            }
            DatasetSpec::Jsonl { num_classes, .. } => {
                if *num_classes < 2 {
                    return Err(Error::config("jsonl datasets need num_classes >= 2"));
                }
            }
            DatasetSpec::Idx {
                test_images,
                test_labels,
                ..
            } => {
                if test_images.is_some() != test_labels.is_some() {
                    return Err(Error::config("idx test set needs both test_images and test_labels"));
                }
            }
        }
        Ok(())
    }

    pub fn num_classes(&self) -> Option<usize> {
        match self {
            DatasetSpec::Blobs { num_classes, .. } | DatasetSpec::Jsonl { num_classes, .. } => Some(*num_classes),
            DatasetSpec::TwoMoons { .. } | DatasetSpec::Rings { .. } => Some(2),
            DatasetSpec::Idx { .. } => None,
        }
    }

    fn seed_offset(&self) -> u64 {
        match self {
            DatasetSpec::Blobs { seed, .. } | DatasetSpec::TwoMoons { seed, .. } | DatasetSpec::Rings { seed, .. } => {
                *seed
            }
            DatasetSpec::Jsonl { .. } | DatasetSpec::Idx { .. } => 0,
        }
    }

    /// Training set with clean labels (or the labels stored on disk) and
    /// the optional test set, for run seed `seed`.
    pub fn load(&self, seed: u64) -> Result<(NoisyDataset, Option<NoisyDataset>)> {
        self.validate()?;
        let train_seed = derive_seed(seed ^ self.seed_offset(), Stream::Data);
        let test_seed = derive_seed(seed ^ self.seed_offset(), Stream::TestData);
        Ok(match self {
            DatasetSpec::Blobs {
                num_classes,
                per_class,
                dim,
                spread,
                test_per_class,
                ..
            } => (
                gen_blobs(*num_classes, *per_class, *dim, *spread, train_seed)?,
                (*test_per_class > 0)
                    .then(|| gen_blobs(*num_classes, *test_per_class, *dim, *spread, test_seed))
                    .transpose()?,
            ),
            DatasetSpec::TwoMoons {
                n, noise_std, test_n, ..
            } => (
                gen_two_moons(*n, *noise_std, train_seed)?,
                (*test_n > 0)
                    .then(|| gen_two_moons(*test_n, *noise_std, test_seed))
                    .transpose()?,
            ),
            DatasetSpec::Rings { n, test_n, .. } => (
                gen_rings(*n, train_seed)?,
                (*test_n > 0).then(|| gen_rings(*test_n, test_seed)).transpose()?,
            ),
            DatasetSpec::Jsonl {
                path,
                num_classes,
                test_path,
            } => (
                NoisyDataset::read_jsonl(path, *num_classes)?,
                test_path
                    .as_ref()
                    .map(|p| NoisyDataset::read_jsonl(p, *num_classes))
                    .transpose()?,
            ),
            DatasetSpec::Idx {
                images,
                labels,
                test_images,
                test_labels,
            } => (
                load_idx(images, labels)?,
                match (test_images, test_labels) {
                    (Some(i), Some(l)) => Some(load_idx(i, l)?),
                    _ => None,
                },
            ),
        })
    }
}

/// The noise model applied in the run with seed `seed`: `noise.seed` is
/// mixed with the run seed so that every run draws its own corruption.
pub fn run_noise(noise: &NoiseSpec, seed: u64) -> NoiseSpec {
    NoiseSpec {
        seed: derive_seed(seed ^ noise.seed, Stream::Noise),
        ..noise.clone()
    }
}

/// Loads the data for one run and corrupts its training labels.
pub fn prepare_data(
    dataset: &DatasetSpec,
    noise: &NoiseSpec,
    seed: u64,
) -> Result<(NoisyDataset, Option<NoisyDataset>)> {
    let (train, test) = dataset.load(seed)?;
    noise.validate(train.num_classes)?;
    let train = if noise.kind == NoiseKind::None {
        train
    } else {
        inject_noise(&train, &run_noise(noise, seed))?
    };
    Ok((train, test))
}

fn default_noise() -> NoiseSpec {
    NoiseSpec::none()
}
fn default_seeds() -> Vec<u64> {
    vec![0]
}
fn default_output() -> PathBuf {
    PathBuf::from("out")
}

/// One named data source with its noise model, used by transfer grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub name: String,
    pub dataset: DatasetSpec,
    #[serde(default = "default_noise")]
    pub noise: NoiseSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferSpec {
    pub sources: Vec<TaskSpec>,
    pub targets: Vec<TaskSpec>,
    /// Epochs of every meta-test run; the training epochs when absent.
    #[serde(default)]
    pub test_epochs: Option<usize>,
}

/// Everything one experiment needs. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment_id: String,
    pub dataset: DatasetSpec,
    #[serde(default = "default_noise")]
    pub noise: NoiseSpec,
    pub model: TrainConfig,
    pub method: MethodSpec,
    #[serde(default)]
    pub meta: MetaConfig,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transfer: Option<TransferSpec>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }

    /// Checks every part of the configuration; run before any compute.
    pub fn validate(&self) -> Result<()> {
        if self.experiment_id.is_empty() {
            return Err(Error::config("experiment_id must not be empty"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds must list at least one seed"));
        }
        self.dataset.validate()?;
        if let Some(c) = self.dataset.num_classes() {
            self.noise.validate(c)?;
        }
        self.model.validate()?;
        self.method.validate()?;
        if self.method.variant().is_some() || self.transfer.is_some() {
            self.meta.validate(self.model.epochs)?;
        }
        if let Some(t) = &self.transfer {
            if t.sources.is_empty() || t.targets.is_empty() {
                return Err(Error::config("transfer needs at least one source and one target"));
            }
            for task in t.sources.iter().chain(&t.targets) {
                task.dataset.validate()?;
                if let Some(c) = task.dataset.num_classes() {
                    task.noise.validate(c)?;
                }
            }
            if let Some(e) = t.test_epochs {
                self.meta.validate(e)?;
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("configs always serialize");
        Sha256::digest(text.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "experiment_id": "t",
        "dataset": {"kind": "blobs", "num_classes": 3, "per_class": 10, "test_per_class": 5},
        "noise": {"kind": "symmetric", "rate": 0.4},
        "model": {"epochs": 8, "optimizer": {"kind": "sgd_momentum", "learning_rate": 0.1}},
        "method": {"kind": "tmlc"},
        "seeds": [1, 2]
    }"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = ExperimentConfig::from_json(MINIMAL).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.meta, MetaConfig::default());
        assert_eq!(cfg.output_dir, PathBuf::from("out"));
        assert_eq!(cfg.model.batch_size, 64);
        let back = ExperimentConfig::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = MINIMAL.replace("\"seeds\"", "\"sedes\"");
        assert!(ExperimentConfig::from_json(&bad).unwrap_err().is_config());
        let nested = MINIMAL.replace("\"per_class\": 10", "\"per_class\": 10, \"colour\": 1");
        assert!(ExperimentConfig::from_json(&nested).is_err());
    }

    #[test]
    fn validation_catches_bad_values() {
        let mut cfg = ExperimentConfig::from_json(MINIMAL).unwrap();
        cfg.model.epochs = 5;
        assert!(cfg.validate().unwrap_err().is_config());
        cfg.method = MethodSpec::Ce;
        cfg.validate().unwrap();
        cfg.seeds.clear();
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::from_json(MINIMAL).unwrap();
        cfg.noise.rate = 1.5;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn hash_changes_with_content() {
        let a = ExperimentConfig::from_json(MINIMAL).unwrap();
        let mut b = a.clone();
        b.seeds.push(3);
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn runs_draw_distinct_noise() {
        let cfg = ExperimentConfig::from_json(MINIMAL).unwrap();
        let (a, test) = prepare_data(&cfg.dataset, &cfg.noise, 1).unwrap();
        let (b, _) = prepare_data(&cfg.dataset, &cfg.noise, 2).unwrap();
        let (a2, _) = prepare_data(&cfg.dataset, &cfg.noise, 1).unwrap();
        assert_eq!(a, a2);
        assert_ne!(a.noisy_labels, b.noisy_labels);
        assert_eq!(test.unwrap().len(), 15);
    }

    #[test]
    fn dataset_seed_gives_fresh_samples() {
        let spec = |seed: u64| DatasetSpec::Blobs {
            num_classes: 3,
            per_class: 10,
            dim: 2,
            spread: 0.5,
            test_per_class: 0,
            seed,
        };
        let (a, _) = spec(0).load(4).unwrap();
        let (b, _) = spec(9).load(4).unwrap();
        assert_eq!(a.true_labels, b.true_labels);
        assert_ne!(a.features, b.features);
        assert_eq!(spec(9).load(4).unwrap().0, b);
    }
}
