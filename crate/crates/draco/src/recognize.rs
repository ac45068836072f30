//! Distance metrics between an observation sequence and a goal's policy,
//! and the posterior that falls out of them. All metrics are "smaller means
//! more consistent with this goal"; the posterior is a softmin over per-goal
//! distances with a uniform prior.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::core::{
    confidence, softmin_posterior, ActionValue, GRProblem, ObservationSequence,
    PolicyDistribution, RecognitionResult, StateVec,
};
use crate::error::{Error, Result};
use crate::learn::GoalPolicy;
use crate::nn::dist_mean_std;
use crate::seeds::derive_rng;

/// Which observation-to-policy distance to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    /// Monte Carlo estimate of the L1 transport cost between the policy's
    /// action distribution and the observed action.
    Wasserstein,
    /// Mean per-dimension standardized deviation of the observed action.
    Zscore,
    /// Inverse sum of critic values along the observed states; needs no
    /// actions at all.
    StateOnly,
    /// KL divergence from a smoothed observation distribution to the policy,
    /// discrete actions only.
    Kl,
    /// L1 gap between the policy's greedy action and the observed action.
    MeanAction,
}

impl MetricKind {
    pub const ALL: [MetricKind; 5] = [
        MetricKind::Wasserstein,
        MetricKind::Zscore,
        MetricKind::StateOnly,
        MetricKind::Kl,
        MetricKind::MeanAction,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            MetricKind::Wasserstein => "wasserstein",
            MetricKind::Zscore => "zscore",
            MetricKind::StateOnly => "state_only",
            MetricKind::Kl => "kl",
            MetricKind::MeanAction => "mean_action",
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MetricKind::ALL
            .iter()
            .find(|m| m.name() == s)
            .copied()
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown metric '{s}', expected one of wasserstein, zscore, state_only, kl, mean_action"
                ))
            })
    }
}

/// Knobs shared by the metrics and the posterior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricConfig {
    /// Monte Carlo draws per observed step for the Wasserstein estimate.
    pub mc_samples: usize,
    /// Mass spread over unobserved actions when smoothing for KL.
    pub eps_smooth: f64,
    /// Floor on the magnitude of summed critic values.
    pub eps_v: f64,
    /// Softmin temperature for the posterior.
    pub beta: f64,
    pub seed: u64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            mc_samples: 32,
            eps_smooth: 0.01,
            eps_v: 1e-6,
            beta: 1.0,
            seed: 0,
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mc_samples == 0 {
            return Err(Error::invalid("mc_samples must be >= 1"));
        }
        if !(self.eps_smooth > 0.0 && self.eps_smooth < 0.5) {
            return Err(Error::invalid("eps_smooth must lie in (0, 0.5)"));
        }
        if !(self.eps_v > 0.0) || !self.eps_v.is_finite() {
            return Err(Error::invalid("eps_v must be positive and finite"));
        }
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(Error::invalid("beta must be positive and finite"));
        }
        Ok(())
    }
}

fn l1(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::incompatible(
            "action embeddings differ in dimension",
        ));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum())
}

/// One-step transport cost: mean L1 distance from `mc_samples` policy draws
/// to the observed action, in the policy's action embedding.
pub fn wasserstein_spot(
    policy: &GoalPolicy,
    state: &StateVec,
    action: &ActionValue,
    mc_samples: usize,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<f64> {
    if mc_samples == 0 {
        return Err(Error::invalid("mc_samples must be >= 1"));
    }
    let observed = policy.embed_action(action)?;
    let mut total = 0.0;
    for _ in 0..mc_samples {
        let draw = policy.sample_env_action(state, rng)?;
        total += l1(&policy.embed_action(&draw)?, &observed)?;
    }
    Ok(total / mc_samples as f64)
}

/// One-step standardized deviation: mean over action dimensions of
/// |observed - mean| / std under the policy at this state.
pub fn zscore_spot(policy: &GoalPolicy, state: &StateVec, action: &ActionValue) -> Result<f64> {
    let observed = policy.embed_action(action)?;
    let (mean, std) = dist_mean_std(&policy.action_dist(state)?);
    if mean.len() != observed.len() {
        return Err(Error::incompatible(
            "z-score needs policy moments in the action embedding space",
        ));
    }
    let sum: f64 = observed
        .iter()
        .zip(mean.iter().zip(&std))
        .map(|(a, (m, s))| ((a - m) / s).abs())
        .sum();
    Ok(sum / mean.len() as f64)
}

/// Action-free distance: reciprocal of the summed critic value over the
/// observed states. Critic values are negative for goal-distance rewards, so
/// sums near zero (good fit) map to strongly negative distances.
pub fn state_only_distance(
    policy: &GoalPolicy,
    observations: &ObservationSequence,
    eps_v: f64,
) -> Result<f64> {
    if !(eps_v > 0.0) {
        return Err(Error::invalid("eps_v must be positive"));
    }
    let mut sum = 0.0;
    for step in observations.steps() {
        sum += policy.value(&step.state)?;
    }
    let denom = if sum == 0.0 {
        -eps_v
    } else if sum.abs() < eps_v {
        log::debug!("critic value sum {sum} below floor {eps_v}, clamping");
        sum.signum() * eps_v
    } else {
        sum
    };
    Ok(1.0 / denom)
}

/// Per-step KL divergence from the smoothed observation distribution (mass
/// 1 - eps*(arity-1) on the seen action, eps elsewhere) to the policy's
/// categorical distribution, floored at eps and renormalized. Mean over
/// actioned steps.
pub fn kl_distance(
    policy: &GoalPolicy,
    observations: &ObservationSequence,
    eps_smooth: f64,
) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for step in observations.steps() {
        let Some(action) = &step.action else { continue };
        let idx = match action {
            ActionValue::Discrete(i) => *i,
            ActionValue::Continuous(_) => {
                return Err(Error::incompatible(
                    "kl distance requires discrete observed actions",
                ))
            }
        };
        let probs = match policy.action_dist(&step.state)? {
            PolicyDistribution::Categorical { probs } => probs,
            PolicyDistribution::DiagGaussian { .. } => {
                return Err(Error::incompatible(
                    "kl distance requires a categorical policy",
                ))
            }
        };
        let arity = probs.len();
        if idx >= arity {
            return Err(Error::incompatible("observed action outside policy arity"));
        }
        let hit = 1.0 - eps_smooth * (arity - 1) as f64;
        if hit <= eps_smooth {
            return Err(Error::invalid(
                "eps_smooth too large for this action arity",
            ));
        }
        let floored: Vec<f64> = probs.iter().map(|p| p.max(eps_smooth)).collect();
        let z: f64 = floored.iter().sum();
        let mut kl = 0.0;
        for (i, q) in floored.iter().enumerate() {
            let p = if i == idx { hit } else { eps_smooth };
            kl += p * (p / (q / z)).ln();
        }
        total += kl;
        count += 1;
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}

/// Mean L1 gap between the policy's greedy action and the observed action,
/// over actioned steps.
pub fn mean_action_distance(
    policy: &GoalPolicy,
    observations: &ObservationSequence,
) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for step in observations.steps() {
        let Some(action) = &step.action else { continue };
        let greedy = policy.greedy_embedded(&step.state)?;
        total += l1(&greedy, &policy.embed_action(action)?)?;
        count += 1;
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}

/// Distance between one policy and the whole observation sequence under the
/// chosen metric. Monte Carlo draws are seeded per observed time index, so
/// every goal scores against identical noise.
pub fn sequence_distance(
    policy: &GoalPolicy,
    observations: &ObservationSequence,
    metric: MetricKind,
    cfg: &MetricConfig,
) -> Result<f64> {
    cfg.validate()?;
    match metric {
        MetricKind::StateOnly => state_only_distance(policy, observations, cfg.eps_v),
        MetricKind::Kl => kl_distance(policy, observations, cfg.eps_smooth),
        MetricKind::MeanAction => mean_action_distance(policy, observations),
        MetricKind::Wasserstein => {
            let mut total = 0.0;
            let mut count = 0usize;
            for step in observations.steps() {
                let Some(action) = &step.action else { continue };
                let mut rng = derive_rng(cfg.seed, "wspot", &[step.t as u64]);
                total += wasserstein_spot(policy, &step.state, action, cfg.mc_samples, &mut rng)?;
                count += 1;
            }
            Ok(if count == 0 { 0.0 } else { total / count as f64 })
        }
        MetricKind::Zscore => {
            let mut total = 0.0;
            let mut count = 0usize;
            for step in observations.steps() {
                let Some(action) = &step.action else { continue };
                total += zscore_spot(policy, &step.state, action)?;
                count += 1;
            }
            Ok(if count == 0 { 0.0 } else { total / count as f64 })
        }
    }
}

/// Score every candidate goal against the observations and build the
/// posterior. `policies` must hold one policy per goal id, trained on the
/// problem's environment for that exact goal.
pub fn recognize(
    problem: &GRProblem,
    policies: &BTreeMap<String, GoalPolicy>,
    metric: MetricKind,
    cfg: &MetricConfig,
) -> Result<RecognitionResult> {
    cfg.validate()?;
    let mut resolved = Vec::with_capacity(problem.goals.len());
    for goal in &problem.goals {
        let policy = policies.get(&goal.id).ok_or_else(|| {
            Error::incompatible(format!("no policy provided for goal '{}'", goal.id))
        })?;
        if policy.env_id != problem.env_id {
            return Err(Error::incompatible(format!(
                "policy for goal '{}' was trained on environment '{}', problem uses '{}'",
                goal.id, policy.env_id, problem.env_id
            )));
        }
        if policy.goal.id != goal.id || policy.goal.target != goal.target {
            return Err(Error::incompatible(format!(
                "policy for goal '{}' was trained for a different target",
                goal.id
            )));
        }
        resolved.push((goal.id.clone(), policy));
    }
    let distances: BTreeMap<String, f64> = resolved
        .into_par_iter()
        .map(|(id, policy)| {
            sequence_distance(policy, &problem.observations, metric, cfg).map(|d| (id, d))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .collect();
    let posterior = softmin_posterior(&distances, None, cfg.beta)?;
    let mut ranking: Vec<String> = posterior.keys().cloned().collect();
    ranking.sort_by(|a, b| {
        posterior[b]
            .partial_cmp(&posterior[a])
            .expect("posterior probabilities are finite")
            .then_with(|| a.cmp(b))
    });
    let conf = confidence(&posterior)?;
    Ok(RecognitionResult {
        posterior,
        ranking,
        confidence: conf,
        distances,
    })
}
