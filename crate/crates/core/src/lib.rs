//! Fixed-horizon active anomaly verification.
//!
//! A system of `M` components contains at most one anomaly. An agent probes
//! components for `N` steps and then declares the system safe or unsafe. The
//! crate provides the observation model, the max-min divergence machinery,
//! the belief recursion over log-likelihood ratios, component-selection and
//! inference rules, finite-horizon converse and achievability bounds, and a
//! seeded Monte Carlo engine for estimating verification probabilities.

// `!(x > 0.0)` style checks are intentional: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![cfg_attr(test, allow(clippy::approx_constant))]

pub mod belief;
pub mod bounds;
pub mod channels;
pub mod cli;
pub mod divergence;
mod error;
pub mod exec;
pub mod report;
pub mod sim;
pub mod strategies;

pub use error::{Error, Result};
