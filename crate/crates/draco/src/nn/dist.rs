//! Sampling, log-densities, moments, and entropy for policy distributions.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::core::{ActionValue, PolicyDistribution, SIGMA_FLOOR};
use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Natural-log probability (categorical) or density (Gaussian) of an action.
/// The action variant must match the distribution.
pub fn dist_logprob(dist: &PolicyDistribution, action: &ActionValue) -> Result<f64> {
    match (dist, action) {
        (PolicyDistribution::Categorical { probs }, ActionValue::Discrete(i)) => {
            if *i >= probs.len() {
                return Err(Error::invalid(format!(
                    "action index {i} out of arity {}",
                    probs.len()
                )));
            }
            Ok(probs[*i].ln())
        }
        (PolicyDistribution::DiagGaussian { mean, std }, ActionValue::Continuous(a)) => {
            if a.len() != mean.len() {
                return Err(Error::invalid(format!(
                    "action dimension {} does not match distribution dimension {}",
                    a.len(),
                    mean.len()
                )));
            }
            let mut lp = 0.0;
            for i in 0..a.len() {
                let z = (a[i] - mean[i]) / std[i];
                lp += -0.5 * LN_2PI - std[i].ln() - 0.5 * z * z;
            }
            Ok(lp)
        }
        _ => Err(Error::incompatible("action variant does not match distribution")),
    }
}

/// Draw one action. Continuous samples are unbounded; callers clamp them to
/// the action space before stepping an environment or embedding them.
pub fn dist_sample(dist: &PolicyDistribution, rng: &mut impl Rng) -> ActionValue {
    match dist {
        PolicyDistribution::Categorical { probs } => {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (i, p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    return ActionValue::Discrete(i);
                }
            }
            // Float round-off can leave acc marginally below 1.
            ActionValue::Discrete(probs.len() - 1)
        }
        PolicyDistribution::DiagGaussian { mean, std } => {
            let v = mean
                .iter()
                .zip(std)
                .map(|(m, s)| {
                    let z: f64 = rng.sample(StandardNormal);
                    m + s * z
                })
                .collect();
            ActionValue::Continuous(v)
        }
    }
}

/// Per-dimension mean and standard deviation of the action random variable.
/// Categorical distributions are summarized by their index moments (one
/// dimension); stds are floored at [`SIGMA_FLOOR`].
pub fn dist_mean_std(dist: &PolicyDistribution) -> (Vec<f64>, Vec<f64>) {
    match dist {
        PolicyDistribution::Categorical { probs } => {
            let mean: f64 = probs.iter().enumerate().map(|(i, p)| i as f64 * p).sum();
            let ex2: f64 = probs
                .iter()
                .enumerate()
                .map(|(i, p)| (i as f64) * (i as f64) * p)
                .sum();
            let var = (ex2 - mean * mean).max(0.0);
            (vec![mean], vec![var.sqrt().max(SIGMA_FLOOR)])
        }
        PolicyDistribution::DiagGaussian { mean, std } => (
            mean.clone(),
            std.iter().map(|s| s.max(SIGMA_FLOOR)).collect(),
        ),
    }
}

/// Shannon entropy (categorical, nats) or differential entropy (Gaussian).
pub fn dist_entropy(dist: &PolicyDistribution) -> f64 {
    match dist {
        PolicyDistribution::Categorical { probs } => -probs
            .iter()
            .filter(|p| **p > 0.0)
            .map(|p| p * p.ln())
            .sum::<f64>(),
        PolicyDistribution::DiagGaussian { std, .. } => std
            .iter()
            .map(|s| 0.5 * (LN_2PI + 1.0) + s.ln())
            .sum(),
    }
}
