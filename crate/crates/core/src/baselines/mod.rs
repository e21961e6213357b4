//! Comparison methods: squared-error and Huber regressors, a kernel density
//! estimate and a mixture density network.

pub mod kde;
pub mod mdn;
pub mod regression;

pub use kde::{kde_fit, kde_fit_with, KdeModel, KdeOptions, KernelKind};
pub use mdn::{mdn_mode, mdn_mode_sets, mdn_net_config, mdn_nll, mdn_train, MdnHead, MdnLoss};
pub use regression::{huber_train, l2_train, regress, regression_train, RegressionLoss, DEFAULT_HUBER_DELTA};
