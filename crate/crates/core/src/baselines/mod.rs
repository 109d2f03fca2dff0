//! Reference training methods and the corrector ablations.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::basemodel::Mlp;
use crate::datagen::{check_row_stochastic, transition_matrix, NoiseSpec, NoisyDataset};
use crate::dynamics::onehot_rows;
use crate::error::{Error, Result};
use crate::metaloop::{
    meta_train, softened_rows, train, BatchContext, BatchTargets, MetaConfig, RunLog, SnapshotSet, TargetPolicy,
    TrainConfig, TrainData, Variant, LOG_COLUMNS,
};
use crate::numcore::{Graph, NodeId, Tensor};

/// Where forward correction gets its transition matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TransitionSource {
    /// The matrix implied by the noise model that produced the labels.
    True,
    Identity,
    Matrix(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", try_from = "RawMethod")]
pub enum MethodSpec {
    Ce,
    LabelSmoothing { smoothing: f64 },
    ForwardCorrection { transition: TransitionSource },
    Bootstrap { beta: f64 },
    Tmlc,
    TmlcWoNnp,
    TmlcWoTse,
    TmlcWoSd,
}

/// Flat form used for parsing, so that parameters belonging to another
/// method are rejected rather than ignored.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMethod {
    kind: String,
    smoothing: Option<f64>,
    transition: Option<TransitionSource>,
    beta: Option<f64>,
}

impl TryFrom<RawMethod> for MethodSpec {
    type Error = String;

    fn try_from(raw: RawMethod) -> std::result::Result<Self, String> {
        let mut spec = MethodSpec::parse_name(&raw.kind).map_err(|e| e.to_string())?;
        let mut extra = Vec::new();
        match &mut spec {
            MethodSpec::LabelSmoothing { smoothing } => {
                *smoothing = raw.smoothing.ok_or("label_smoothing needs 'smoothing'")?;
            }
            MethodSpec::ForwardCorrection { transition } => {
                if let Some(t) = raw.transition.clone() {
                    *transition = t;
                }
            }
            MethodSpec::Bootstrap { beta } => {
                *beta = raw.beta.ok_or("bootstrap needs 'beta'")?;
            }
            _ => {}
        }
        if raw.smoothing.is_some() && !matches!(spec, MethodSpec::LabelSmoothing { .. }) {
            extra.push("smoothing");
        }
        if raw.transition.is_some() && !matches!(spec, MethodSpec::ForwardCorrection { .. }) {
            extra.push("transition");
        }
        if raw.beta.is_some() && !matches!(spec, MethodSpec::Bootstrap { .. }) {
            extra.push("beta");
        }
        if !extra.is_empty() {
            return Err(format!("method '{}' does not take {}", raw.kind, extra.join(", ")));
        }
        Ok(spec)
    }
}

impl MethodSpec {
    pub fn name(&self) -> &'static str {
        match self {
            MethodSpec::Ce => "ce",
            MethodSpec::LabelSmoothing { .. } => "label_smoothing",
            MethodSpec::ForwardCorrection { .. } => "forward_correction",
            MethodSpec::Bootstrap { .. } => "bootstrap",
            MethodSpec::Tmlc => "tmlc",
            MethodSpec::TmlcWoNnp => "tmlc_wo_nnp",
            MethodSpec::TmlcWoTse => "tmlc_wo_tse",
            MethodSpec::TmlcWoSd => "tmlc_wo_sd",
        }
    }

    pub fn parse_name(name: &str) -> Result<MethodSpec> {
        Ok(match name {
            "ce" => MethodSpec::Ce,
            "label_smoothing" => MethodSpec::LabelSmoothing { smoothing: 0.1 },
            "forward_correction" => MethodSpec::ForwardCorrection {
                transition: TransitionSource::True,
            },
            "bootstrap" => MethodSpec::Bootstrap { beta: 0.8 },
            "tmlc" => MethodSpec::Tmlc,
            "tmlc_wo_nnp" => MethodSpec::TmlcWoNnp,
            "tmlc_wo_tse" => MethodSpec::TmlcWoTse,
            "tmlc_wo_sd" => MethodSpec::TmlcWoSd,
            other => return Err(Error::config(format!("unknown method '{other}'"))),
        })
    }

    /// The corrector variant for meta-learned methods.
    pub fn variant(&self) -> Option<Variant> {
        match self {
            MethodSpec::Tmlc => Some(Variant::Full),
            MethodSpec::TmlcWoNnp => Some(Variant::WithoutNnp),
            MethodSpec::TmlcWoTse => Some(Variant::WithoutTse),
            MethodSpec::TmlcWoSd => Some(Variant::WithoutSd),
            _ => None,
        }
    }

    pub fn is_ablation(&self) -> bool {
        matches!(
            self,
            MethodSpec::TmlcWoNnp | MethodSpec::TmlcWoTse | MethodSpec::TmlcWoSd
        )
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            MethodSpec::LabelSmoothing { smoothing } if !(0.0..1.0).contains(smoothing) => Err(Error::config(format!(
                "label smoothing must lie in [0, 1), got {smoothing}"
            ))),
            MethodSpec::Bootstrap { beta } if !(0.0..=1.0).contains(beta) => {
                Err(Error::config(format!("bootstrap beta must lie in [0, 1], got {beta}")))
            }
            _ => Ok(()),
        }
    }
}

/// Per-run header written next to every log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodMetadata {
    pub method: String,
    pub spec: MethodSpec,
    pub seed: u64,
    pub columns: Vec<String>,
    /// How forward correction composes prediction and transition matrix.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub forward_direction: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl MethodMetadata {
    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone)]
pub struct MethodOutcome {
    pub model: Mlp,
    pub log: RunLog,
    pub epoch_seconds: Vec<f64>,
    pub corrected: Tensor,
    /// Rows of the training set that drove base-model updates.
    pub update_indices: Vec<usize>,
    pub metadata: MethodMetadata,
    /// Snapshots of meta-learned methods.
    pub snapshots: Option<SnapshotSet>,
}

struct CePolicy;

impl TargetPolicy for CePolicy {
    fn phase(&self) -> &'static str {
        "train"
    }

    fn targets(&mut self, ctx: &BatchContext) -> Result<BatchTargets> {
        Ok(BatchTargets {
            targets: onehot_rows(ctx.noisy_labels, ctx.num_classes)?,
            corrected: None,
        })
    }
}

struct SmoothingPolicy {
    smoothing: f64,
}

impl TargetPolicy for SmoothingPolicy {
    fn phase(&self) -> &'static str {
        "train"
    }

    fn targets(&mut self, ctx: &BatchContext) -> Result<BatchTargets> {
        Ok(BatchTargets {
            targets: softened_rows(ctx.noisy_labels, self.smoothing, ctx.num_classes)?,
            corrected: None,
        })
    }
}

struct ForwardPolicy {
    transition: Tensor,
}

impl TargetPolicy for ForwardPolicy {
    fn phase(&self) -> &'static str {
        "train"
    }

    fn targets(&mut self, ctx: &BatchContext) -> Result<BatchTargets> {
        Ok(BatchTargets {
            targets: onehot_rows(ctx.noisy_labels, ctx.num_classes)?,
            corrected: None,
        })
    }

    /// Row `i` of the result is `Q^T p_i`, the predicted distribution of
    /// the noisy label.
    fn loss_input(&self, g: &mut Graph, probs: NodeId) -> Result<NodeId> {
        let q = g.constant(self.transition.clone());
        g.matmul(probs, q)
    }
}

struct BootstrapPolicy {
    beta: f64,
}

impl TargetPolicy for BootstrapPolicy {
    fn phase(&self) -> &'static str {
        "train"
    }

    fn targets(&mut self, ctx: &BatchContext) -> Result<BatchTargets> {
        let onehot = onehot_rows(ctx.noisy_labels, ctx.num_classes)?;
        let b = self.beta;
        Ok(BatchTargets {
            targets: onehot.zip_map(ctx.probs, |y, p| b * y + (1.0 - b) * p),
            corrected: None,
        })
    }
}

/// Resolves the forward-correction matrix for a dataset.
pub fn resolve_transition(source: &TransitionSource, noise: Option<&NoiseSpec>, num_classes: usize) -> Result<Tensor> {
    let q = match source {
        TransitionSource::Identity => Tensor::identity(num_classes),
        TransitionSource::True => {
            let spec =
                noise.ok_or_else(|| Error::config("forward correction with the true matrix needs a noise spec"))?;
            transition_matrix(spec, num_classes)?
        }
        TransitionSource::Matrix(rows) => Tensor::from_rows(rows).map_err(|e| Error::config(e.to_string()))?,
    };
    check_row_stochastic(&q, num_classes)?;
    Ok(q)
}

/// Trains with `method` on every row of `dataset` (support rows only for
/// meta-learned methods, which hold out a query set). `noise` defaults to
/// the noise model recorded in the dataset.
pub fn run_method(
    method: &MethodSpec,
    dataset: &NoisyDataset,
    test: Option<&NoisyDataset>,
    noise: Option<&NoiseSpec>,
    train_cfg: &TrainConfig,
    meta: &MetaConfig,
    seed: u64,
) -> Result<MethodOutcome> {
    method.validate()?;
    let noise = noise.or(dataset.noise.as_ref());
    let mut metadata = MethodMetadata {
        method: method.name().to_string(),
        spec: method.clone(),
        seed,
        columns: LOG_COLUMNS.iter().map(|s| s.to_string()).collect(),
        forward_direction: None,
        warnings: Vec::new(),
    };
    if let Some(variant) = method.variant() {
        let mut cfg = meta.clone();
        cfg.variant = variant;
        let out = meta_train(dataset, test, train_cfg, &cfg, seed)?;
        metadata.warnings = out.log.warnings.clone();
        return Ok(MethodOutcome {
            model: out.model,
            log: out.log,
            epoch_seconds: out.epoch_seconds,
            corrected: out.corrected,
            update_indices: out.split.support_indices,
            metadata,
            snapshots: Some(out.snapshots),
        });
    }
    let mut policy: Box<dyn TargetPolicy> = match method {
        MethodSpec::Ce => Box::new(CePolicy),
        MethodSpec::LabelSmoothing { smoothing } => Box::new(SmoothingPolicy { smoothing: *smoothing }),
        MethodSpec::ForwardCorrection { transition } => {
            metadata.forward_direction = Some("loss = CE(Q^T p, onehot(noisy label))".to_string());
            Box::new(ForwardPolicy {
                transition: resolve_transition(transition, noise, dataset.num_classes)?,
            })
        }
        MethodSpec::Bootstrap { beta } => Box::new(BootstrapPolicy { beta: *beta }),
        _ => unreachable!("meta-learned methods handled above"),
    };
    let all: Vec<usize> = (0..dataset.len()).collect();
    let data = TrainData {
        train: dataset,
        update_indices: &all,
        test,
    };
    let out = train(data, train_cfg, seed, policy.as_mut())?;
    Ok(MethodOutcome {
        model: out.model,
        log: out.log,
        epoch_seconds: out.epoch_seconds,
        corrected: out.corrected,
        update_indices: all,
        metadata,
        snapshots: None,
    })
}

pub fn run_ce(
    dataset: &NoisyDataset,
    test: Option<&NoisyDataset>,
    train_cfg: &TrainConfig,
    seed: u64,
) -> Result<MethodOutcome> {
    run_method(
        &MethodSpec::Ce,
        dataset,
        test,
        None,
        train_cfg,
        &MetaConfig::default(),
        seed,
    )
}

/// Runs one of the corrector ablations.
pub fn run_ablation(
    method: &MethodSpec,
    dataset: &NoisyDataset,
    test: Option<&NoisyDataset>,
    train_cfg: &TrainConfig,
    meta: &MetaConfig,
    seed: u64,
) -> Result<MethodOutcome> {
    if !method.is_ablation() {
        return Err(Error::config(format!("'{}' is not an ablation", method.name())));
    }
    run_method(method, dataset, test, None, train_cfg, meta, seed)
}
