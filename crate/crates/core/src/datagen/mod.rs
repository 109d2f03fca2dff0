//! Datasets, label-noise models and support/query splitting.

mod dataset;
pub mod idx;
mod noise;
mod split;
mod synth;

pub use dataset::NoisyDataset;
pub use idx::load_idx;
pub use noise::{check_row_stochastic, inject_noise, transition_matrix, NoiseKind, NoiseSpec};
pub use split::{split_support_query, DataSplit};
pub use synth::{blob_center, blob_radius, gen_blobs, gen_rings, gen_two_moons};
