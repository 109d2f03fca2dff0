//! Meta-learned label correction for training under noisy labels.
//!
//! The crate is organised bottom-up:
//!
//! * [`numcore`]: dense tensors and reverse-mode autodiff
//! * [`datagen`]: synthetic datasets, IDX loading and label-noise models
//! * [`basemodel`]: the MLP classifier and its optimizers
//! * [`dynamics`]: per-sample normalized training-dynamics features
//! * [`corrector`]: the recurrent label corrector and its snapshots
//! * [`metaloop`]: meta-training, frozen meta-testing and the shared trainer
//! * [`baselines`]: reference methods and ablations
//! * [`evalharness`]: metrics, experiment configs, transfer grids, reports

// NaN must fail range checks, so `!(x >= lo)` is used on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod basemodel;
pub mod corrector;
pub mod datagen;
pub mod dynamics;
pub mod error;
pub mod evalharness;
pub mod metaloop;
pub mod numcore;
pub mod rng;

pub use error::{Error, Result};
