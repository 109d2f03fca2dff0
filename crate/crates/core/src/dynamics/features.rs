use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::kernels::{self, argmax, entropy_row};
use crate::numcore::{Graph, NodeId, Tensor};

/// How the observed label enters the feature vector.
///
/// `Standard` appends a one-hot of the noisy label, so the width depends on
/// the class count. `Agnostic` appends the predicted probability of the noisy
/// label and whether the prediction agrees with it, giving a fixed width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    #[default]
    Standard,
    Agnostic,
}

impl FromStr for FeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(FeatureMode::Standard),
            "agnostic" => Ok(FeatureMode::Agnostic),
            other => Err(Error::config(format!(
                "unknown feature mode '{other}' (expected standard or agnostic)"
            ))),
        }
    }
}

impl fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureMode::Standard => "standard",
            FeatureMode::Agnostic => "agnostic",
        })
    }
}

/// Which loss statistics lead the feature vector.
///
/// `Normalized` gives `[class-normalized loss, batch-normalized loss,
/// entropy, label part]`. `Raw` gives `[loss, entropy, label part]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossFeatures {
    #[default]
    Normalized,
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub mode: FeatureMode,
    pub losses: LossFeatures,
}

impl FeatureSpec {
    pub fn new(mode: FeatureMode, losses: LossFeatures) -> Self {
        FeatureSpec { mode, losses }
    }

    pub fn width(&self, num_classes: usize) -> usize {
        let lead = match self.losses {
            LossFeatures::Normalized => 3,
            LossFeatures::Raw => 2,
        };
        lead + match self.mode {
            FeatureMode::Standard => num_classes,
            FeatureMode::Agnostic => 2,
        }
    }
}

/// Loss of each sample relative to the mean loss of batch members sharing its
/// noisy label.
pub fn compute_cnl(losses: &[f64], noisy_labels: &[usize]) -> Vec<f64> {
    kernels::group_normalize(losses, noisy_labels)
}

/// Loss of each sample relative to the batch mean.
pub fn compute_gnl(losses: &[f64]) -> Vec<f64> {
    kernels::group_normalize(losses, &vec![0; losses.len()])
}

/// Entropy of each predicted distribution.
pub fn compute_pe(probs: &Tensor) -> Vec<f64> {
    (0..probs.rows()).map(|r| entropy_row(probs.row(r))).collect()
}

/// Cross-entropy of each prediction against its hard noisy label.
pub fn noisy_label_losses(probs: &Tensor, noisy_labels: &[usize]) -> Vec<f64> {
    noisy_labels
        .iter()
        .enumerate()
        .map(|(r, &y)| -kernels::clamped_ln(probs.get(r, y)))
        .collect()
}

fn check_batch(losses: usize, probs: &Tensor, labels: &[usize]) -> Result<()> {
    if losses != probs.rows() || labels.len() != probs.rows() {
        return Err(Error::Dimension {
            op: "build_features",
            left: probs.shape().to_vec(),
            right: vec![losses, labels.len()],
        });
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= probs.cols()) {
        return Err(Error::config(format!(
            "noisy label {bad} out of range for {} classes",
            probs.cols()
        )));
    }
    Ok(())
}

/// Feature matrix `[B x width]` for one batch.
pub fn build_features(losses: &[f64], probs: &Tensor, noisy_labels: &[usize], spec: FeatureSpec) -> Result<Tensor> {
    check_batch(losses.len(), probs, noisy_labels)?;
    let c = probs.cols();
    let b = probs.rows();
    let width = spec.width(c);
    let pe = compute_pe(probs);
    let (first, second) = match spec.losses {
        LossFeatures::Normalized => (compute_cnl(losses, noisy_labels), Some(compute_gnl(losses))),
        LossFeatures::Raw => (losses.to_vec(), None),
    };
    let mut data = Vec::with_capacity(b * width);
    for r in 0..b {
        data.push(first[r]);
        if let Some(g) = &second {
            data.push(g[r]);
        }
        data.push(pe[r]);
        let y = noisy_labels[r];
        match spec.mode {
            FeatureMode::Standard => data.extend((0..c).map(|k| if k == y { 1.0 } else { 0.0 })),
            FeatureMode::Agnostic => {
                let row = probs.row(r);
                data.push(row[y]);
                data.push(if argmax(row) == y { 1.0 } else { 0.0 });
            }
        }
    }
    Tensor::matrix(b, width, data)
}

/// The same features built on a graph from `probs` (`[B x C]`), so that they
/// can be differentiated with respect to whatever produced the
/// probabilities. The label part and the agreement flag are constants.
pub fn build_features_graph(g: &mut Graph, probs: NodeId, noisy_labels: &[usize], spec: FeatureSpec) -> Result<NodeId> {
    let p = g.value(probs).clone();
    check_batch(noisy_labels.len(), &p, noisy_labels)?;
    let (b, c) = (p.rows(), p.cols());
    let onehot = onehot_rows(noisy_labels, c)?;
    let target = g.constant(onehot.clone());
    let losses = g.soft_cross_entropy(probs, target)?;
    let pe = g.entropy(probs);
    let pe = g.reshape(pe, &[b, 1])?;
    let mut parts = Vec::new();
    match spec.losses {
        LossFeatures::Normalized => {
            let cnl = g.group_normalize(losses, noisy_labels)?;
            parts.push(g.reshape(cnl, &[b, 1])?);
            let gnl = g.group_normalize(losses, &vec![0; b])?;
            parts.push(g.reshape(gnl, &[b, 1])?);
        }
        LossFeatures::Raw => parts.push(g.reshape(losses, &[b, 1])?),
    }
    parts.push(pe);
    match spec.mode {
        FeatureMode::Standard => parts.push(target),
        FeatureMode::Agnostic => {
            parts.push(g.pick_cols(probs, noisy_labels)?);
            let agree = (0..b)
                .map(|r| if argmax(p.row(r)) == noisy_labels[r] { 1.0 } else { 0.0 })
                .collect();
            parts.push(g.constant(Tensor::matrix(b, 1, agree)?));
        }
    }
    g.concat_cols(&parts)
}

/// One-hot rows for a list of labels.
pub fn onehot_rows(labels: &[usize], num_classes: usize) -> Result<Tensor> {
    let mut t = Tensor::zeros(&[labels.len(), num_classes]);
    for (r, &y) in labels.iter().enumerate() {
        if y >= num_classes {
            return Err(Error::config(format!(
                "label {y} out of range for {num_classes} classes"
            )));
        }
        t.set(r, y, 1.0);
    }
    Ok(t)
}
