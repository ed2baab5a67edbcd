//! Differential-drive rover simulation on procedural terrain, a from-scratch
//! PPO trainer for target reaching, and unsupervised flat/rough terrain
//! identification from the rolling standard deviation of sin(pitch).

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod env;
pub mod episode;
pub mod error;
pub mod evaluation;
pub mod gmm;
pub mod heightfield;
pub mod pipeline;
pub mod policy;
pub mod ppo;
pub mod robot;
pub mod telemetry;

pub use error::{Error, Result};
