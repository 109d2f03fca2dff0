use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::NoisyDataset;
use crate::error::{Error, Result};
use crate::rng::rng_from;

/// Disjoint support (base-model training) and query (meta-learner) indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataSplit {
    pub support_indices: Vec<usize>,
    pub query_indices: Vec<usize>,
}

/// Splits the dataset stratified by observed label.
///
/// Each observed class contributes `round(query_fraction * n_c)` samples to
/// the query set, but never fewer than one and never all of them.
pub fn split_support_query(dataset: &NoisyDataset, query_fraction: f64, seed: u64) -> Result<DataSplit> {
    if !(query_fraction > 0.0 && query_fraction < 1.0) {
        return Err(Error::config(format!(
            "query_fraction must lie in (0, 1), got {query_fraction}"
        )));
    }
    let mut rng = rng_from(seed);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); dataset.num_classes];
    for (i, &y) in dataset.noisy_labels.iter().enumerate() {
        by_class[y].push(i);
    }
    let mut support = Vec::new();
    let mut query = Vec::new();
    for (c, mut members) in by_class.into_iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        if members.len() < 2 {
            return Err(Error::config(format!(
                "class {c} has a single sample and cannot be split"
            )));
        }
        members.shuffle(&mut rng);
        let q = ((query_fraction * members.len() as f64).round() as usize).clamp(1, members.len() - 1);
        query.extend_from_slice(&members[..q]);
        support.extend_from_slice(&members[q..]);
    }
    support.sort_unstable();
    query.sort_unstable();
    Ok(DataSplit {
        support_indices: support,
        query_indices: query,
    })
}
