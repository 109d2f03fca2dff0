//! The base classifier and first-order optimizers.

mod mlp;
mod optim;

pub use mlp::{per_sample_losses, Mlp, MlpForward, CHECKPOINT_VERSION};
pub use optim::{Optimizer, OptimizerConfig, OptimizerKind};
