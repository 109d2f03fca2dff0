//! Per-sample training-dynamics features and the recurrent-state store.

mod features;
mod store;

pub use features::{
    build_features, build_features_graph, compute_cnl, compute_gnl, compute_pe, noisy_label_losses, onehot_rows,
    FeatureMode, FeatureSpec, LossFeatures,
};
pub use store::{write_dynamics_jsonl, DynamicsRecord, DynamicsStore, Observation, RecurrentState};
