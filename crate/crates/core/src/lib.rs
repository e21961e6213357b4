//! Modal regression by learning an implicit function `f(x, y)` whose zero
//! level set, with slope `∂f/∂y = −1`, passes through the conditional modes.

// `!(a > b)` checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod cli;
pub mod datasets;
pub mod diagnostics;
pub mod error;
pub mod jets;
pub mod metrics;
pub mod network;
pub mod objective;
pub mod prediction;
pub mod training;

pub use datasets::{Dataset, LabeledSet, ModeOracle, TrueModes};
pub use error::{Error, Result};
pub use jets::Jet2;
pub use network::{Activation, MlpParams, NetConfig};
pub use prediction::{ModeGrid, ModeKind, ModeSet};
pub use training::{train, TrainConfig, TrainOutcome};
