//! Bayesian gain-loss asymmetry analysis of inverse statistics in price series.

// `!(x > 0.0)` is used on purpose so that NaN is rejected along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod detrend;
pub mod diagnostics;
pub mod error;
pub mod gbm;
pub mod inverse_stats;
pub mod models;
pub mod pipeline;
pub mod plot;
pub mod sampler;
pub mod series;

pub use error::{Error, Result};
