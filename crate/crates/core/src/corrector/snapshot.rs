use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Corrector, CorrectorConfig, PARAM_NAMES};
use crate::dynamics::FeatureMode;
use crate::error::{Error, Result};
use crate::numcore::Tensor;

pub const SNAPSHOT_VERSION: u32 = 1;

/// Frozen corrector parameters tagged with the epoch they were taken at.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub epoch_tag: usize,
    pub corrector: Corrector,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SnapshotFile {
    version: u32,
    mode: FeatureMode,
    hidden_size: usize,
    decoder_hidden: usize,
    include_raw_features: bool,
    feature_width: usize,
    c_out: usize,
    epoch_tag: usize,
    params: BTreeMap<String, Vec<f64>>,
}

fn mismatch(field: &str, msg: String) -> Error {
    Error::format(0, format!("{field}: {msg}"))
}

impl Snapshot {
    pub fn new(epoch_tag: usize, corrector: Corrector) -> Self {
        Snapshot { epoch_tag, corrector }
    }

    pub fn to_json(&self) -> Result<String> {
        let c = &self.corrector;
        let file = SnapshotFile {
            version: SNAPSHOT_VERSION,
            mode: c.mode(),
            hidden_size: c.hidden_size(),
            decoder_hidden: c.config().decoder_width(),
            include_raw_features: c.config().include_raw_features,
            feature_width: c.feature_width(),
            c_out: c.c_out(),
            epoch_tag: self.epoch_tag,
            params: PARAM_NAMES
                .iter()
                .zip(c.params())
                .map(|(n, p)| (n.to_string(), p.data().to_vec()))
                .collect(),
        };
        let mut text = serde_json::to_string_pretty(&file)?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: SnapshotFile = serde_json::from_str(text).map_err(|e| {
            let offset = text
                .lines()
                .take(e.line().saturating_sub(1))
                .map(|l| l.len() + 1)
                .sum::<usize>()
                + e.column().saturating_sub(1);
            Error::format(offset, format!("invalid snapshot: {e}"))
        })?;
        if file.version != SNAPSHOT_VERSION {
            return Err(mismatch(
                "version",
                format!(
                    "unsupported snapshot version {} (expected {SNAPSHOT_VERSION})",
                    file.version
                ),
            ));
        }
        let config = CorrectorConfig {
            mode: file.mode,
            hidden_size: file.hidden_size,
            decoder_hidden: (file.decoder_hidden != file.hidden_size).then_some(file.decoder_hidden),
            include_raw_features: file.include_raw_features,
        };
        let expected_out = match file.mode {
            FeatureMode::Standard => file.c_out,
            FeatureMode::Agnostic => 3,
        };
        if file.c_out != expected_out || file.c_out < 2 {
            return Err(mismatch(
                "c_out",
                format!("{} is invalid for mode {}", file.c_out, file.mode),
            ));
        }
        let classes = match file.mode {
            FeatureMode::Standard => file.c_out,
            FeatureMode::Agnostic => 2,
        };
        let template = Corrector::zeros(config.clone(), file.feature_width, classes)
            .map_err(|e| mismatch("hidden_size", e.to_string()))?;
        let mut params = Vec::with_capacity(PARAM_NAMES.len());
        let mut named = file.params;
        for (name, t) in PARAM_NAMES.iter().zip(template.params()) {
            let data = named
                .remove(*name)
                .ok_or_else(|| mismatch(name, "missing parameter".to_string()))?;
            if data.len() != t.len() {
                return Err(mismatch(
                    name,
                    format!(
                        "expected {} values for shape {:?}, found {}",
                        t.len(),
                        t.shape(),
                        data.len()
                    ),
                ));
            }
            params.push(Tensor::new(t.shape().to_vec(), data)?);
        }
        if let Some(extra) = named.keys().next() {
            return Err(mismatch(extra, "unknown parameter".to_string()));
        }
        let corrector = Corrector::from_params(config, file.feature_width, file.c_out, params)?;
        Ok(Snapshot {
            epoch_tag: file.epoch_tag,
            corrector,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Snapshot::from_json(&text)
    }

    /// Checks that the snapshot can correct labels for a task with
    /// `num_classes` classes and features of width `feature_width`.
    pub fn check_task(&self, num_classes: usize, feature_width: usize) -> Result<()> {
        let c = &self.corrector;
        if c.mode() == FeatureMode::Standard && c.c_out() != num_classes {
            return Err(mismatch(
                "c_out",
                format!("snapshot predicts {} classes but the task has {num_classes}", c.c_out()),
            ));
        }
        if c.feature_width() != feature_width {
            return Err(mismatch(
                "feature_width",
                format!(
                    "snapshot expects {} features, the task produces {feature_width}",
                    c.feature_width()
                ),
            ));
        }
        Ok(())
    }
}

/// SHA-256 over the little-endian bytes of every parameter.
pub fn fingerprint(corrector: &Corrector) -> String {
    let mut h = Sha256::new();
    for p in corrector.params() {
        for v in p.data() {
            h.update(v.to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
