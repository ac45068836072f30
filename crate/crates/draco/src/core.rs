//! Shared goal-recognition types and the posterior math that every metric
//! feeds into.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower bound applied to Gaussian standard deviations so densities and
/// z-scores stay finite when a policy collapses to near-determinism.
pub const SIGMA_FLOOR: f64 = 1e-4;

/// Environment state as a fixed-length coordinate vector. The environment
/// defines the dimension and the meaning of each coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateVec(pub Vec<f64>);

impl StateVec {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for StateVec {
    fn from(v: Vec<f64>) -> Self {
        StateVec(v)
    }
}

/// An action as recorded in an observation: a discrete index or a continuous
/// displacement vector in environment units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ActionValue {
    Discrete(usize),
    Continuous(Vec<f64>),
}

impl ActionValue {
    pub fn is_discrete(&self) -> bool {
        matches!(self, ActionValue::Discrete(_))
    }
}

/// One observed step: the state the agent was in at time `t` and, unless the
/// sequence is a state-only projection, the action it took there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationStep {
    pub t: usize,
    pub state: StateVec,
    pub action: Option<ActionValue>,
}

/// A possibly degraded observation sequence. `horizon` is the length of the
/// original full trajectory; step indices are strictly increasing and below
/// it, so gaps record which steps were dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSequence {
    steps: Vec<ObservationStep>,
    horizon: usize,
}

impl ObservationSequence {
    pub fn new(steps: Vec<ObservationStep>, horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::invalid("observation horizon must be positive"));
        }
        let mut dim = None;
        let mut prev_t = None;
        for step in &steps {
            if step.t >= horizon {
                return Err(Error::invalid(format!(
                    "step index {} out of horizon {horizon}",
                    step.t
                )));
            }
            if let Some(p) = prev_t {
                if step.t <= p {
                    return Err(Error::invalid("step indices must be strictly increasing"));
                }
            }
            prev_t = Some(step.t);
            match dim {
                None => dim = Some(step.state.dim()),
                Some(d) if d == step.state.dim() => {}
                Some(d) => {
                    return Err(Error::invalid(format!(
                        "state dimension mismatch: {} vs {d}",
                        step.state.dim()
                    )))
                }
            }
        }
        Ok(ObservationSequence { steps, horizon })
    }

    pub fn empty(horizon: usize) -> Result<Self> {
        Self::new(Vec::new(), horizon)
    }

    pub fn steps(&self) -> &[ObservationStep] {
        &self.steps
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// True when every step carries an action.
    pub fn fully_actioned(&self) -> bool {
        self.steps.iter().all(|s| s.action.is_some())
    }

    /// True when no step carries an action (state-only projection).
    pub fn state_only(&self) -> bool {
        self.steps.iter().all(|s| s.action.is_none())
    }
}

/// A candidate goal: identifier, target position, and the tolerance under
/// which a state counts as reaching it (max-norm on position coordinates).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalSpec {
    pub id: String,
    pub target: StateVec,
    pub tolerance: f64,
}

impl GoalSpec {
    pub fn new(id: impl Into<String>, target: Vec<f64>, tolerance: f64) -> Result<Self> {
        let id = id.into();
        if id.is_empty() {
            return Err(Error::invalid("goal id must be nonempty"));
        }
        if !(tolerance >= 0.0) {
            return Err(Error::invalid("goal tolerance must be >= 0"));
        }
        Ok(GoalSpec {
            id,
            target: StateVec(target),
            tolerance,
        })
    }
}

/// A goal-recognition problem: which goals are in play and what was observed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GRProblem {
    pub env_id: String,
    pub goals: Vec<GoalSpec>,
    pub observations: ObservationSequence,
}

impl GRProblem {
    pub fn new(
        env_id: impl Into<String>,
        goals: Vec<GoalSpec>,
        observations: ObservationSequence,
    ) -> Result<Self> {
        if goals.len() < 2 {
            return Err(Error::invalid("a recognition problem needs at least 2 goals"));
        }
        let mut ids: Vec<&str> = goals.iter().map(|g| g.id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != goals.len() {
            return Err(Error::invalid("goal ids must be unique"));
        }
        let dim = goals[0].target.dim();
        if goals.iter().any(|g| g.target.dim() != dim) {
            return Err(Error::invalid("goal targets must share one dimension"));
        }
        Ok(GRProblem {
            env_id: env_id.into(),
            goals,
            observations,
        })
    }
}

/// A policy's action distribution at one state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PolicyDistribution {
    Categorical { probs: Vec<f64> },
    DiagGaussian { mean: Vec<f64>, std: Vec<f64> },
}

impl PolicyDistribution {
    /// Validated categorical distribution: probabilities nonnegative and
    /// summing to 1 within 1e-9.
    pub fn categorical(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::invalid("categorical needs at least one probability"));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::invalid("categorical probabilities must be finite and >= 0"));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "categorical probabilities sum to {sum}, expected 1"
            )));
        }
        Ok(PolicyDistribution::Categorical { probs })
    }

    /// Validated diagonal Gaussian; std components are clamped up to
    /// [`SIGMA_FLOOR`].
    pub fn diag_gaussian(mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        if mean.is_empty() || mean.len() != std.len() {
            return Err(Error::invalid("gaussian mean/std must be nonempty and equal length"));
        }
        if mean.iter().chain(std.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("gaussian parameters must be finite"));
        }
        if std.iter().any(|s| *s < 0.0) {
            return Err(Error::invalid("gaussian std must be >= 0"));
        }
        let std = std.into_iter().map(|s| s.max(SIGMA_FLOOR)).collect();
        Ok(PolicyDistribution::DiagGaussian { mean, std })
    }

    /// Dimensionality of a sampled action: 1 for categorical (an index),
    /// the vector length for Gaussians.
    pub fn action_dim(&self) -> usize {
        match self {
            PolicyDistribution::Categorical { .. } => 1,
            PolicyDistribution::DiagGaussian { mean, .. } => mean.len(),
        }
    }
}

/// Output of recognition: posterior over goals, ranking by decreasing
/// probability, confidence in the top goal, and the raw per-goal distances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecognitionResult {
    pub posterior: BTreeMap<String, f64>,
    pub ranking: Vec<String>,
    pub confidence: f64,
    pub distances: BTreeMap<String, f64>,
}

/// Posterior over goals from per-goal distances: p(g) proportional to
/// prior(g) * exp(-beta * d_g). Lower distance means higher probability; the
/// result is invariant to shifting every distance by a constant.
///
/// `prior` defaults to uniform; when given it must cover exactly the same
/// goals and sum to 1 within 1e-9.
pub fn softmin_posterior(
    distances: &BTreeMap<String, f64>,
    prior: Option<&BTreeMap<String, f64>>,
    beta: f64,
) -> Result<BTreeMap<String, f64>> {
    if distances.is_empty() {
        return Err(Error::invalid("softmin over no goals"));
    }
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::invalid("softmin temperature beta must be finite and > 0"));
    }
    if let Some((g, d)) = distances.iter().find(|(_, d)| !d.is_finite()) {
        return Err(Error::invalid(format!("non-finite distance {d} for goal {g}")));
    }
    if let Some(p) = prior {
        if p.len() != distances.len() || !p.keys().eq(distances.keys()) {
            return Err(Error::invalid("prior must cover exactly the candidate goals"));
        }
        if p.values().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("prior probabilities must be finite and >= 0"));
        }
        let sum: f64 = p.values().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("prior sums to {sum}, expected 1")));
        }
    }
    // Shift by the minimum distance so every exponent is <= 0; this keeps the
    // computation stable even for large-magnitude (e.g. negative utility)
    // distances and implements the shift invariance directly.
    let min_d = distances.values().cloned().fold(f64::INFINITY, f64::min);
    let uniform = 1.0 / distances.len() as f64;
    let mut weights: BTreeMap<String, f64> = BTreeMap::new();
    let mut total = 0.0;
    for (g, d) in distances {
        let pr = prior.map_or(uniform, |p| p[g]);
        let w = pr * (-beta * (d - min_d)).exp();
        total += w;
        weights.insert(g.clone(), w);
    }
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::invalid("softmin weights degenerate (check prior and distances)"));
    }
    for w in weights.values_mut() {
        *w /= total;
    }
    Ok(weights)
}

/// Confidence in the most probable goal: (p1 - p2) / p1 for the two highest
/// posterior probabilities. 0 when the top two tie, 1 when the runner-up has
/// zero probability. Needs at least two goals.
pub fn confidence(posterior: &BTreeMap<String, f64>) -> Result<f64> {
    if posterior.len() < 2 {
        return Err(Error::invalid("confidence needs at least 2 goals"));
    }
    if posterior.values().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::invalid("posterior probabilities must be finite and >= 0"));
    }
    let mut p1 = f64::NEG_INFINITY;
    let mut p2 = f64::NEG_INFINITY;
    for &p in posterior.values() {
        if p > p1 {
            p2 = p1;
            p1 = p;
        } else if p > p2 {
            p2 = p;
        }
    }
    if p1 <= 0.0 {
        return Err(Error::invalid("posterior has no positive probability"));
    }
    Ok(((p1 - p2) / p1).clamp(0.0, 1.0))
}
