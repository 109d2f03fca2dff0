use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::basemodel::OptimizerConfig;
use crate::corrector::CorrectorConfig;
use crate::error::{Error, Result};

fn default_hidden_layers() -> Vec<usize> {
    vec![32]
}
fn default_batch_size() -> usize {
    64
}

/// Base-model training shared by every method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_hidden_layers")]
    pub hidden_layers: Vec<usize>,
    pub optimizer: OptimizerConfig,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if self.hidden_layers.contains(&0) {
            return Err(Error::config("hidden layers must have positive width"));
        }
        self.optimizer.validate()
    }

    pub fn layer_sizes(&self, input_dim: usize, num_classes: usize) -> Vec<usize> {
        let mut sizes = vec![input_dim];
        sizes.extend_from_slice(&self.hidden_layers);
        sizes.push(num_classes);
        sizes
    }
}

/// What the meta-learner is asked to reproduce on the query set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetaSupervision {
    /// Smoothed observed labels.
    #[default]
    SoftenedNoisy,
    /// One-hot true labels; needs a trusted query set.
    CleanMeta,
}

impl FromStr for MetaSupervision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "softened_noisy" => Ok(MetaSupervision::SoftenedNoisy),
            "clean_meta" => Ok(MetaSupervision::CleanMeta),
            other => Err(Error::config(format!(
                "unknown meta supervision '{other}' (expected softened_noisy or clean_meta)"
            ))),
        }
    }
}

impl fmt::Display for MetaSupervision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MetaSupervision::SoftenedNoisy => "softened_noisy",
            MetaSupervision::CleanMeta => "clean_meta",
        })
    }
}

/// Full corrector or one of its ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[default]
    Full,
    /// Raw loss and entropy instead of the normalized losses.
    WithoutNnp,
    /// Every step starts from zero state; nothing is carried across epochs.
    WithoutTse,
    /// The corrected distribution is collapsed to a one-hot of its argmax.
    WithoutSd,
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::Full => "tmlc",
            Variant::WithoutNnp => "tmlc_wo_nnp",
            Variant::WithoutTse => "tmlc_wo_tse",
            Variant::WithoutSd => "tmlc_wo_sd",
        }
    }
}

fn default_smoothing() -> f64 {
    0.1
}
fn default_update_period() -> usize {
    1
}
fn default_warmup() -> usize {
    5
}
fn default_fractions() -> Vec<f64> {
    vec![1.0 / 3.0, 2.0 / 3.0, 1.0]
}
fn default_query_fraction() -> f64 {
    0.1
}
fn default_outer() -> OptimizerConfig {
    OptimizerConfig::adam(0.01)
}
fn default_history() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetaConfig {
    #[serde(default = "default_smoothing")]
    pub smoothing: f64,
    /// Outer updates happen at epochs divisible by this period.
    #[serde(default = "default_update_period")]
    pub update_period: usize,
    #[serde(default = "default_warmup")]
    pub warmup_epochs: usize,
    #[serde(default = "default_fractions")]
    pub snapshot_fractions: Vec<f64>,
    #[serde(default = "default_query_fraction")]
    pub query_fraction: f64,
    /// Query batch size for outer updates; the base batch size when absent.
    #[serde(default)]
    pub meta_batch_size: Option<usize>,
    #[serde(default)]
    pub meta_supervision: MetaSupervision,
    #[serde(default = "default_outer")]
    pub outer_optimizer: OptimizerConfig,
    #[serde(default)]
    pub corrector: CorrectorConfig,
    #[serde(default)]
    pub lookahead: bool,
    #[serde(default)]
    pub variant: Variant,
    #[serde(default = "default_history")]
    pub history_depth: usize,
}

impl Default for MetaConfig {
    fn default() -> Self {
        MetaConfig {
            smoothing: default_smoothing(),
            update_period: default_update_period(),
            warmup_epochs: default_warmup(),
            snapshot_fractions: default_fractions(),
            query_fraction: default_query_fraction(),
            meta_batch_size: None,
            meta_supervision: MetaSupervision::default(),
            outer_optimizer: default_outer(),
            corrector: CorrectorConfig::default(),
            lookahead: false,
            variant: Variant::Full,
            history_depth: default_history(),
        }
    }
}

impl MetaConfig {
    pub fn validate(&self, epochs: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.smoothing) {
            return Err(Error::config(format!(
                "smoothing must lie in [0, 1], got {}",
                self.smoothing
            )));
        }
        if self.update_period == 0 {
            return Err(Error::config("update_period must be at least 1"));
        }
        if self.warmup_epochs >= epochs {
            return Err(Error::config(format!(
                "warmup_epochs ({}) must be below epochs ({epochs})",
                self.warmup_epochs
            )));
        }
        if self.snapshot_fractions.is_empty() || self.snapshot_fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
            return Err(Error::config("snapshot_fractions must be a nonempty list in (0, 1]"));
        }
        if !(self.query_fraction > 0.0 && self.query_fraction < 1.0) {
            return Err(Error::config("query_fraction must lie in (0, 1)"));
        }
        if self.meta_batch_size == Some(0) {
            return Err(Error::config("meta_batch_size must be at least 1"));
        }
        self.corrector.validate()?;
        self.outer_optimizer.validate()
    }

    /// Epochs `ceil(f * T)` for each fraction, sorted and deduplicated.
    pub fn snapshot_epochs(&self, epochs: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .snapshot_fractions
            .iter()
            .map(|f| ((f * epochs as f64 - 1e-9).ceil() as usize).clamp(1, epochs))
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// `(1 - eps) * onehot(label) + eps / C`.
pub fn soften_label(label: usize, smoothing: f64, num_classes: usize) -> Vec<f64> {
    let floor = smoothing / num_classes as f64;
    (0..num_classes)
        .map(|k| if k == label { (1.0 - smoothing) + floor } else { floor })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn soften_examples() {
        let t = soften_label(3, 0.1, 10);
        assert!((t[3] - 0.91).abs() < 1e-15);
        assert!(t.iter().enumerate().all(|(k, &v)| k == 3 || (v - 0.01).abs() < 1e-15));
        assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(soften_label(1, 0.0, 3), vec![0.0, 1.0, 0.0]);
        assert!(soften_label(2, 1.0, 4).iter().all(|&v| v == 0.25));
    }

    #[test]
    fn snapshot_schedule() {
        let mut m = MetaConfig {
            snapshot_fractions: vec![1.0],
            ..MetaConfig::default()
        };
        assert_eq!(m.snapshot_epochs(3), vec![3]);
        m.snapshot_fractions = default_fractions();
        assert_eq!(m.snapshot_epochs(60), vec![20, 40, 60]);
        assert_eq!(m.snapshot_epochs(9), vec![3, 6, 9]);
        assert_eq!(m.snapshot_epochs(2), vec![1, 2]);
    }

    #[test]
    fn validation() {
        let m = MetaConfig::default();
        assert!(m.validate(60).is_ok());
        assert!(m.validate(5).is_err());
        let bad = MetaConfig {
            smoothing: 1.5,
            ..MetaConfig::default()
        };
        assert!(bad.validate(60).is_err());
        let bad = MetaConfig {
            update_period: 0,
            ..MetaConfig::default()
        };
        assert!(bad.validate(60).is_err());
        assert!("other".parse::<MetaSupervision>().is_err());
        assert_eq!(
            "clean_meta".parse::<MetaSupervision>().unwrap(),
            MetaSupervision::CleanMeta
        );
    }

    #[test]
    fn config_json_rejects_unknown_keys() {
        let m: MetaConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(m, MetaConfig::default());
        assert!(serde_json::from_str::<MetaConfig>(r#"{"smoothng": 0.2}"#).is_err());
    }
}
