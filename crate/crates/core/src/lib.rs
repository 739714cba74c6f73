//! Lane-change extraction from highway trajectories, robustness analysis of
//! the extraction criteria, criticality metrics, and car-following scenario
//! sampling.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod criticality;
pub mod detect;
pub mod error;
pub mod filter;
pub mod io;
pub mod metrics;
pub mod mis;
pub mod peaks;
pub mod perturb;
pub mod pipeline;
pub mod robustness;
pub mod scenario;
pub mod stats;
pub mod synth;
pub mod traj;
pub mod w99;

pub use error::{Error, Result};
