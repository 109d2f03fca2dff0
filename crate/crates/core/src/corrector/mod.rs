//! The recurrent label corrector: an LSTM over per-sample dynamics features
//! followed by a decoder that emits a corrected label distribution.

mod gradcheck;
mod network;
mod snapshot;

pub use gradcheck::gradcheck_cases;
pub use network::{Corrector, CorrectorConfig, CorrectorNodes, CorrectorOutput, PARAM_NAMES};
pub use snapshot::{fingerprint, Snapshot, SNAPSHOT_VERSION};
