//! Goal recognition through learned policies.
//!
//! The library trains one policy per candidate goal (a small actor-critic
//! network or a tabular baseline), scores partial and noisy observation
//! sequences against each policy with pluggable distance metrics, and turns
//! the scores into a posterior over goals. Companion modules generate
//! observation data, evaluate recognition quality, and handle on-disk
//! artifacts; the `draco` binary exposes the full pipeline.

pub mod config;
pub mod core;
pub mod envs;
pub mod error;
pub mod evalkit;
pub mod files;
pub mod learn;
pub mod nn;
pub mod obsgen;
pub mod recognize;
pub mod seeds;

pub use error::{Error, Result};
