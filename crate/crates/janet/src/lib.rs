//! Joint prediction regions for multi-step time-series forecasts with
//! K-familywise error control.
//!
//! The crate covers the full pipeline: series handling and CSV I/O
//! ([`series`]), the cyclic block-permutation group used to calibrate on a
//! single series ([`permute`]), AR point forecasters and error-scale models
//! ([`forecast`]), the conformal scoring/quantile machinery that produces
//! joint prediction regions ([`conformal`]), classical baselines
//! ([`baselines`]), and a Monte Carlo harness ([`harness`]).

pub mod baselines;
pub mod conformal;
pub mod error;
pub mod forecast;
pub mod harness;
mod linalg;
pub mod permute;
pub mod series;
pub mod stats;

pub use error::{Error, Result};
