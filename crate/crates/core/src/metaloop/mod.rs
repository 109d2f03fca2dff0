//! Meta-training and meta-testing of the label corrector.

mod config;
mod correction;
mod log;
mod meta_train;
mod outer;
mod snapshots;
mod trainer;

pub use config::{soften_label, MetaConfig, MetaSupervision, TrainConfig, Variant};
pub use correction::{feature_spec, hard_rows, softened_rows, Correction};
pub use log::{EpochRow, RunLog, LOG_COLUMNS};
pub use meta_test::{meta_test, snapshot_feature_spec, MetaTestOutcome};
pub use meta_train::{meta_train, meta_train_with_split, MetaTrainOutcome};
pub use outer::{
    direct_meta_gradient, lookahead_gradcheck_cases, lookahead_meta_gradient, lookahead_objective, MetaBatch,
};
pub use snapshots::SnapshotSet;
pub use trainer::{
    train, BatchContext, BatchTargets, EpochContext, EpochReport, TargetPolicy, TrainData, TrainOutcome,
};
