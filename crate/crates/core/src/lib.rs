//! Phase-only privatization of time series.
//!
//! A stationary residual is passed through a randomized all-pass filter whose
//! phase is designed from the spectrum of what an attacker cannot already
//! predict. The filter keeps the power spectrum (and so the autocorrelation)
//! while decorrelating the release from the sensitive values.

// `!(x > 0.0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod allpass;
pub mod error;
pub mod metrics;
pub mod phase;
pub mod pipeline;
pub mod series;
pub mod sim;
mod special;
pub mod spectra;

pub use error::{Error, Result};
pub use pipeline::{flip_compare_noise, flip_privatize, FlipConfig, FlipResult};
pub use series::TimeSeries;
