//! Minimal neural toolkit for the policy learners: a dense tanh MLP with
//! explicit backprop, a flat-parameter Adam optimizer, and sampling /
//! log-density / moment helpers for policy distributions. Everything runs on
//! f64 and is deterministic given a seeded RNG.

mod adam;
mod dist;
mod mlp;

pub use adam::{adam_step, AdamState};
pub use dist::{dist_entropy, dist_logprob, dist_mean_std, dist_sample, softmax};
pub use mlp::{Mlp, MlpGrads, MlpTrace};
