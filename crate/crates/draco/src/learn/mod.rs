//! Goal-conditioned policy learners and the portable policy artifact they
//! produce. One [`GoalPolicy`] is trained per candidate goal; recognition
//! later queries them for action distributions, state values, and greedy
//! actions without caring which learner built them.

pub mod ppo;
pub mod tabular;

pub use ppo::{collect_rollout, gae_advantages, ppo_update, train_goal_policy, PpoConfig, RolloutBatch};
pub use tabular::{q_update, train_q_policy, Discretizer, QLearnConfig, QTable};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::core::{ActionValue, GoalSpec, PolicyDistribution, StateVec, SIGMA_FLOOR};
use crate::envs::{ActionSpace, Env};
use crate::error::{Error, Result};
use crate::nn::{dist_sample, softmax, Mlp};

/// Stability bound on the Gaussian head's log standard deviation: actions are
/// small displacements, so stds above 1 are degenerate.
pub const LOG_STD_MAX: f64 = 0.0;

/// How raw environment states are fed to networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StateEncoder {
    /// Coordinates used as-is (already bounded, e.g. the unit box).
    Identity,
    /// Grid states: position normalized to [0, 1] per axis, orientation
    /// one-hot. Encodes [x, y, o] into 6 inputs.
    GridNorm { width: usize, height: usize },
}

impl StateEncoder {
    pub fn for_env(env: &Env) -> Self {
        match env {
            Env::Gridworld(g) => StateEncoder::GridNorm {
                width: g.width,
                height: g.height,
            },
            Env::Pointreach(_) => StateEncoder::Identity,
        }
    }

    pub fn encoded_dim(&self, raw_dim: usize) -> usize {
        match self {
            StateEncoder::Identity => raw_dim,
            StateEncoder::GridNorm { .. } => 6,
        }
    }

    pub fn encode(&self, state: &StateVec) -> Result<Vec<f64>> {
        match self {
            StateEncoder::Identity => Ok(state.coords().to_vec()),
            StateEncoder::GridNorm { width, height } => {
                let c = state.coords();
                if c.len() != 3 {
                    return Err(Error::invalid("grid state must have 3 coordinates"));
                }
                let o = c[2] as usize;
                if c[2].fract() != 0.0 || o > 3 {
                    return Err(Error::invalid("grid orientation must be an index in 0..4"));
                }
                let mut v = vec![
                    c[0] / (*width as f64 - 1.0).max(1.0),
                    c[1] / (*height as f64 - 1.0).max(1.0),
                    0.0,
                    0.0,
                    0.0,
                    0.0,
                ];
                v[2 + o] = 1.0;
                Ok(v)
            }
        }
    }
}

/// Actor-critic networks plus the encoder that feeds them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorCritic {
    pub encoder: StateEncoder,
    pub actor: Mlp,
    /// State-independent log standard deviations; present exactly for
    /// continuous action spaces.
    pub log_std: Option<Vec<f64>>,
    pub critic: Mlp,
}

impl ActorCritic {
    pub fn action_dist(&self, state: &StateVec) -> Result<PolicyDistribution> {
        let x = self.encoder.encode(state)?;
        let out = self.actor.forward(&x)?;
        match &self.log_std {
            None => PolicyDistribution::categorical(softmax(&out)),
            Some(ls) => {
                let std = ls
                    .iter()
                    .map(|l| l.exp().clamp(SIGMA_FLOOR, LOG_STD_MAX.exp()))
                    .collect();
                PolicyDistribution::diag_gaussian(out, std)
            }
        }
    }

    pub fn value(&self, state: &StateVec) -> Result<f64> {
        let x = self.encoder.encode(state)?;
        Ok(self.critic.forward(&x)?[0])
    }
}

/// Tabular backend: sparse Q table over discretized states, with the softmax
/// temperature used to expose it as a distribution, and (for continuous
/// environments) the fixed displacement vector each action index stands for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTablePolicy {
    pub table: QTable,
    pub discretizer: Discretizer,
    pub temperature: f64,
    pub action_steps: Option<Vec<Vec<f64>>>,
}

impl QTablePolicy {
    pub fn action_dist(&self, state: &StateVec) -> Result<PolicyDistribution> {
        let key = self.discretizer.key(state)?;
        let q = self.table.q_or_zero(&key);
        let logits: Vec<f64> = q.iter().map(|v| v / self.temperature).collect();
        PolicyDistribution::categorical(softmax(&logits))
    }

    /// State utility: best action value, 0 for never-visited states.
    pub fn value(&self, state: &StateVec) -> Result<f64> {
        let key = self.discretizer.key(state)?;
        Ok(self
            .table
            .q(&key)
            .map(|q| q.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
            .unwrap_or(0.0))
    }

    /// Indices attaining the maximum Q value at this state. Unvisited states
    /// tie across every action.
    pub fn greedy_set(&self, state: &StateVec) -> Result<Vec<usize>> {
        let key = self.discretizer.key(state)?;
        let q = self.table.q_or_zero(&key);
        let max = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Ok(q.iter()
            .enumerate()
            .filter(|(_, v)| **v == max)
            .map(|(i, _)| i)
            .collect())
    }
}

/// Which algorithm produced a policy and with what budget; persisted for
/// provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub learner: String,
    /// Env steps for gradient learners, episodes for tabular ones.
    pub budget: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend")]
pub enum PolicyBackend {
    #[serde(rename = "mlp_ac")]
    MlpActorCritic(ActorCritic),
    #[serde(rename = "qtable")]
    QTable(QTablePolicy),
}

/// A trained policy for one goal, self-contained enough to be saved, loaded,
/// and queried without the training environment. The backend is flattened on
/// the wire, so a serialized policy carries a top-level "backend" tag next to
/// its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalPolicy {
    pub env_id: String,
    pub goal: GoalSpec,
    pub action_space: ActionSpace,
    #[serde(flatten)]
    pub backend: PolicyBackend,
    pub meta: TrainingMeta,
}

impl GoalPolicy {
    /// The policy's action distribution at a state. Valid for any state the
    /// environment accepts, trained or not.
    pub fn action_dist(&self, state: &StateVec) -> Result<PolicyDistribution> {
        match &self.backend {
            PolicyBackend::MlpActorCritic(ac) => ac.action_dist(state),
            PolicyBackend::QTable(qt) => qt.action_dist(state),
        }
    }

    /// State utility estimate: critic value or best tabular action value.
    pub fn value(&self, state: &StateVec) -> Result<f64> {
        match &self.backend {
            PolicyBackend::MlpActorCritic(ac) => ac.value(state),
            PolicyBackend::QTable(qt) => qt.value(state),
        }
    }

    /// Greedy action in environment units, with tabular ties averaged over
    /// the argmax set (deterministic stand-in for uniform tie-breaking).
    pub fn greedy_embedded(&self, state: &StateVec) -> Result<Vec<f64>> {
        match &self.backend {
            PolicyBackend::MlpActorCritic(ac) => match ac.action_dist(state)? {
                PolicyDistribution::Categorical { probs } => {
                    let best = argmax(&probs);
                    Ok(vec![best as f64])
                }
                PolicyDistribution::DiagGaussian { mean, .. } => {
                    let mut a = ActionValue::Continuous(mean);
                    self.action_space.clamp(&mut a)?;
                    match a {
                        ActionValue::Continuous(v) => Ok(v),
                        _ => unreachable!(),
                    }
                }
            },
            PolicyBackend::QTable(qt) => {
                let set = qt.greedy_set(state)?;
                if set.len() > 1 {
                    log::debug!("greedy tie over {} actions at state {:?}", set.len(), state);
                }
                match &qt.action_steps {
                    None => {
                        let mean =
                            set.iter().map(|i| *i as f64).sum::<f64>() / set.len() as f64;
                        Ok(vec![mean])
                    }
                    Some(steps) => {
                        let dim = steps[0].len();
                        let mut mean = vec![0.0; dim];
                        for i in &set {
                            for (m, s) in mean.iter_mut().zip(&steps[*i]) {
                                *m += s;
                            }
                        }
                        for m in &mut mean {
                            *m /= set.len() as f64;
                        }
                        Ok(mean)
                    }
                }
            }
        }
    }

    /// An observed action in environment units: discrete indices embed as
    /// their index (or the displacement they stand for, when the policy acts
    /// through a fixed step set), continuous actions embed as themselves.
    pub fn embed_action(&self, action: &ActionValue) -> Result<Vec<f64>> {
        match action {
            ActionValue::Discrete(i) => match &self.backend {
                PolicyBackend::QTable(qt) => match &qt.action_steps {
                    Some(steps) if *i < steps.len() => Ok(steps[*i].clone()),
                    Some(steps) => Err(Error::invalid(format!(
                        "action index {i} out of step set {}",
                        steps.len()
                    ))),
                    None => Ok(vec![*i as f64]),
                },
                PolicyBackend::MlpActorCritic(_) => Ok(vec![*i as f64]),
            },
            ActionValue::Continuous(v) => Ok(v.clone()),
        }
    }

    /// Sample an action ready to feed the environment: tabular indices map to
    /// their displacement on continuous environments, Gaussian samples are
    /// clamped into the action space.
    pub fn sample_env_action(&self, state: &StateVec, rng: &mut impl Rng) -> Result<ActionValue> {
        let dist = self.action_dist(state)?;
        let raw = dist_sample(&dist, rng);
        self.to_env_action(raw)
    }

    /// Deterministic counterpart of [`sample_env_action`]: argmax index or
    /// clamped mean.
    pub fn greedy_env_action(&self, state: &StateVec) -> Result<ActionValue> {
        match self.action_dist(state)? {
            PolicyDistribution::Categorical { probs } => {
                self.to_env_action(ActionValue::Discrete(argmax(&probs)))
            }
            PolicyDistribution::DiagGaussian { mean, .. } => {
                self.to_env_action(ActionValue::Continuous(mean))
            }
        }
    }

    fn to_env_action(&self, action: ActionValue) -> Result<ActionValue> {
        let mut env_action = match (&self.backend, action) {
            (PolicyBackend::QTable(qt), ActionValue::Discrete(i)) => match &qt.action_steps {
                Some(steps) => ActionValue::Continuous(steps[i].clone()),
                None => ActionValue::Discrete(i),
            },
            (_, a) => a,
        };
        self.action_space.clamp(&mut env_action)?;
        Ok(env_action)
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Fraction of `episodes` sampled rollouts that terminate by reaching the
/// goal; a quick quality check for trained policies.
pub fn rollout_success_rate(
    env: &Env,
    goal: &GoalSpec,
    policy: &GoalPolicy,
    episodes: usize,
    seed: u64,
) -> Result<f64> {
    use crate::envs::{Episode, TerminalReason};
    let mut rng = crate::seeds::derive_rng(seed, "success-rate", &[]);
    let mut ok = 0usize;
    for _ in 0..episodes {
        let mut ep = Episode::new(env, goal, None)?;
        loop {
            let a = policy.sample_env_action(ep.state(), &mut rng)?;
            let (out, _) = ep.step(&a)?;
            match out.reason {
                Some(TerminalReason::GoalReached) => {
                    ok += 1;
                    break;
                }
                Some(_) => break,
                None => {}
            }
        }
    }
    Ok(ok as f64 / episodes.max(1) as f64)
}
