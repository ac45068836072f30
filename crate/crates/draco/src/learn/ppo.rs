//! Clipped-surrogate policy-gradient trainer (PPO) over the actor-critic
//! backend. One trainer run produces one goal's policy; reward is the
//! environment's negative-L1 goal distance, so the learned critic values are
//! non-positive once fitted.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::core::{ActionValue, GoalSpec, StateVec};
use crate::envs::{ActionSpace, Env, Episode};
use crate::error::{Error, Result};
use crate::learn::{ActorCritic, GoalPolicy, PolicyBackend, StateEncoder, TrainingMeta, LOG_STD_MAX};
use crate::nn::{adam_step, dist_logprob, dist_sample, AdamState, Mlp};
use crate::seeds::derive_rng;

const LOG_STD_MIN: f64 = -9.210_340_371_976_184; // ln(1e-4), the sigma floor

/// PPO hyperparameters. `total_env_steps` is the training budget in
/// environment transitions, not episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub total_env_steps: usize,
    pub rollout_steps: usize,
    pub minibatch_size: usize,
    pub epochs_per_batch: usize,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_epsilon: f64,
    pub entropy_coef: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub hidden_sizes: Vec<usize>,
    pub seed: u64,
    /// Episode cap override; defaults to the environment's own horizon.
    pub horizon: Option<usize>,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            total_env_steps: 20_000,
            rollout_steps: 2048,
            minibatch_size: 64,
            epochs_per_batch: 10,
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_epsilon: 0.2,
            entropy_coef: 0.01,
            lr_actor: 1e-3,
            lr_critic: 1e-3,
            hidden_sizes: vec![64, 64],
            seed: 0,
            horizon: None,
        }
    }
}

impl PpoConfig {
    /// Grid preset: default budget 20k steps, actor lr 1e-3.
    pub fn grid_default() -> Self {
        PpoConfig::default()
    }

    /// Continuous preset: 50k steps, actor lr 6e-4.
    pub fn pointreach_default() -> Self {
        PpoConfig {
            total_env_steps: 50_000,
            lr_actor: 6e-4,
            ..PpoConfig::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.total_env_steps == 0 || self.rollout_steps == 0 || self.minibatch_size == 0 {
            return Err(Error::invalid("step budgets and minibatch size must be positive"));
        }
        if self.epochs_per_batch == 0 {
            return Err(Error::invalid("epochs_per_batch must be positive"));
        }
        for (name, v) in [
            ("gamma", self.gamma),
            ("gae_lambda", self.gae_lambda),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("{name} must lie in [0, 1]")));
            }
        }
        if !(self.clip_epsilon > 0.0) {
            return Err(Error::invalid("clip_epsilon must be > 0"));
        }
        if !(self.lr_actor > 0.0) || !(self.lr_critic > 0.0) {
            return Err(Error::invalid("learning rates must be > 0"));
        }
        if self.hidden_sizes.is_empty() || self.hidden_sizes.contains(&0) {
            return Err(Error::invalid("hidden sizes must be nonempty and positive"));
        }
        Ok(())
    }
}

/// On-policy experience: parallel per-step records plus the value bootstrap
/// for the state following the final transition (0 when it was terminal).
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBatch {
    pub states: Vec<StateVec>,
    pub actions: Vec<ActionValue>,
    pub rewards: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub dones: Vec<bool>,
    pub bootstrap_value: f64,
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    fn check_consistent(&self) -> Result<()> {
        let n = self.states.len();
        if [
            self.actions.len(),
            self.rewards.len(),
            self.log_probs.len(),
            self.values.len(),
            self.dones.len(),
        ]
        .iter()
        .any(|&l| l != n)
        {
            return Err(Error::invalid("rollout batch columns disagree in length"));
        }
        Ok(())
    }
}

/// Collect exactly `steps` transitions with the current policy, resetting
/// episodes internally. Continuous samples are clamped into the action space
/// before stepping and before their log-probability is recorded.
pub fn collect_rollout(
    env: &Env,
    goal: &GoalSpec,
    ac: &ActorCritic,
    steps: usize,
    horizon: Option<usize>,
    rng: &mut ChaCha8Rng,
) -> Result<RolloutBatch> {
    let space = env.action_space();
    let mut ep = Episode::new(env, goal, horizon)?;
    let mut batch = RolloutBatch {
        states: Vec::with_capacity(steps),
        actions: Vec::with_capacity(steps),
        rewards: Vec::with_capacity(steps),
        log_probs: Vec::with_capacity(steps),
        values: Vec::with_capacity(steps),
        dones: Vec::with_capacity(steps),
        bootstrap_value: 0.0,
    };
    for _ in 0..steps {
        let state = ep.state().clone();
        let dist = ac.action_dist(&state)?;
        let mut action = dist_sample(&dist, rng);
        space.clamp(&mut action)?;
        let log_prob = dist_logprob(&dist, &action)?;
        let value = ac.value(&state)?;
        let (out, reward) = ep.step(&action)?;
        let done = out.terminal();
        batch.states.push(state);
        batch.actions.push(action);
        batch.rewards.push(reward);
        batch.log_probs.push(log_prob);
        batch.values.push(value);
        batch.dones.push(done);
        if done {
            ep.reset();
        }
    }
    if steps > 0 && !batch.dones[steps - 1] {
        batch.bootstrap_value = ac.value(ep.state())?;
    }
    Ok(batch)
}

/// Generalized advantage estimation. Returns (advantages, value targets)
/// where targets are advantages + recorded values. Terminal transitions cut
/// both the bootstrap and the recursion.
pub fn gae_advantages(batch: &RolloutBatch, gamma: f64, lambda: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    batch.check_consistent()?;
    let n = batch.len();
    let mut advantages = vec![0.0; n];
    let mut acc = 0.0;
    for t in (0..n).rev() {
        let not_done = if batch.dones[t] { 0.0 } else { 1.0 };
        let next_value = if t + 1 < n {
            batch.values[t + 1]
        } else {
            batch.bootstrap_value
        };
        let delta = batch.rewards[t] + gamma * next_value * not_done - batch.values[t];
        acc = delta + gamma * lambda * not_done * acc;
        advantages[t] = acc;
    }
    let returns = advantages
        .iter()
        .zip(&batch.values)
        .map(|(a, v)| a + v)
        .collect();
    Ok((advantages, returns))
}

/// Normalize advantages to zero mean and unit std in place; left untouched
/// when the batch std is below 1e-8.
pub fn normalize_advantages(advantages: &mut [f64]) {
    if advantages.is_empty() {
        return;
    }
    let n = advantages.len() as f64;
    let mean = advantages.iter().sum::<f64>() / n;
    let var = advantages.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < 1e-8 {
        return;
    }
    for a in advantages {
        *a = (*a - mean) / std;
    }
}

/// Optimizer state for one actor-critic: Adam moments per parameter vector.
#[derive(Debug, Clone)]
pub struct PpoOptState {
    actor: AdamState,
    log_std: Option<AdamState>,
    critic: AdamState,
}

impl PpoOptState {
    pub fn new(ac: &ActorCritic) -> Self {
        PpoOptState {
            actor: AdamState::new(ac.actor.n_params()),
            log_std: ac.log_std.as_ref().map(|ls| AdamState::new(ls.len())),
            critic: AdamState::new(ac.critic.n_params()),
        }
    }
}

/// Aggregate loss diagnostics from one update call, averaged over epochs and
/// minibatches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpoDiagnostics {
    pub surrogate_objective: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
}

/// Mean clipped-surrogate objective of a policy on a batch; exposed for
/// diagnostics and tests.
pub fn surrogate_objective(
    ac: &ActorCritic,
    batch: &RolloutBatch,
    advantages: &[f64],
    clip_epsilon: f64,
) -> Result<f64> {
    batch.check_consistent()?;
    if advantages.len() != batch.len() {
        return Err(Error::invalid("advantages length does not match batch"));
    }
    let mut total = 0.0;
    for i in 0..batch.len() {
        let dist = ac.action_dist(&batch.states[i])?;
        let logp = dist_logprob(&dist, &batch.actions[i])?;
        let ratio = (logp - batch.log_probs[i]).exp();
        let a = advantages[i];
        let clipped = ratio.clamp(1.0 - clip_epsilon, 1.0 + clip_epsilon);
        total += (ratio * a).min(clipped * a);
    }
    Ok(total / batch.len().max(1) as f64)
}

/// One PPO update over the batch: `epochs_per_batch` passes of shuffled
/// minibatches, maximizing the clipped surrogate plus entropy bonus on the
/// actor and minimizing squared error against `returns` on the critic.
/// Advantages are expected already normalized.
pub fn ppo_update(
    ac: &mut ActorCritic,
    opt: &mut PpoOptState,
    batch: &RolloutBatch,
    advantages: &[f64],
    returns: &[f64],
    cfg: &PpoConfig,
    rng: &mut ChaCha8Rng,
) -> Result<PpoDiagnostics> {
    batch.check_consistent()?;
    if advantages.len() != batch.len() || returns.len() != batch.len() {
        return Err(Error::invalid("advantages/returns length does not match batch"));
    }
    if batch.is_empty() {
        return Err(Error::invalid("cannot update on an empty batch"));
    }
    let n = batch.len();
    let mut indices: Vec<usize> = (0..n).collect();
    let mut sums = PpoDiagnostics {
        surrogate_objective: 0.0,
        value_loss: 0.0,
        entropy: 0.0,
        clip_fraction: 0.0,
    };
    let mut minibatches = 0usize;
    for _ in 0..cfg.epochs_per_batch {
        indices.shuffle(rng);
        for chunk in indices.chunks(cfg.minibatch_size) {
            let stats = update_minibatch(ac, opt, batch, advantages, returns, cfg, chunk)?;
            sums.surrogate_objective += stats.surrogate_objective;
            sums.value_loss += stats.value_loss;
            sums.entropy += stats.entropy;
            sums.clip_fraction += stats.clip_fraction;
            minibatches += 1;
        }
    }
    let k = minibatches.max(1) as f64;
    Ok(PpoDiagnostics {
        surrogate_objective: sums.surrogate_objective / k,
        value_loss: sums.value_loss / k,
        entropy: sums.entropy / k,
        clip_fraction: sums.clip_fraction / k,
    })
}

fn update_minibatch(
    ac: &mut ActorCritic,
    opt: &mut PpoOptState,
    batch: &RolloutBatch,
    advantages: &[f64],
    returns: &[f64],
    cfg: &PpoConfig,
    chunk: &[usize],
) -> Result<PpoDiagnostics> {
    let m = chunk.len() as f64;
    let mut actor_grads = vec![0.0; ac.actor.n_params()];
    let mut log_std_grads = ac.log_std.as_ref().map(|ls| vec![0.0; ls.len()]);
    let mut critic_grads = vec![0.0; ac.critic.n_params()];
    let mut stats = PpoDiagnostics {
        surrogate_objective: 0.0,
        value_loss: 0.0,
        entropy: 0.0,
        clip_fraction: 0.0,
    };
    for &i in chunk {
        let x = ac.encoder.encode(&batch.states[i])?;
        let adv = advantages[i];

        // Actor: gradient of min(ratio*A, clip(ratio)*A) + entropy bonus,
        // negated for the minimizing optimizer.
        let trace = ac.actor.forward_trace(&x)?;
        let out = trace.output().to_vec();
        let out_grad = match &ac.log_std {
            None => {
                let probs = crate::nn::softmax(&out);
                let idx = match batch.actions[i] {
                    ActionValue::Discrete(idx) => idx,
                    _ => return Err(Error::incompatible("discrete policy given continuous action")),
                };
                let logp = probs[idx].ln();
                let ratio = (logp - batch.log_probs[i]).exp();
                let (coef, clipped) = clip_coefficient(ratio, adv, cfg.clip_epsilon);
                let entropy = -probs.iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum::<f64>();
                stats.surrogate_objective += surrogate_value(ratio, adv, cfg.clip_epsilon);
                stats.entropy += entropy;
                if clipped {
                    stats.clip_fraction += 1.0;
                }
                let mut g = vec![0.0; probs.len()];
                for k in 0..probs.len() {
                    let one_hot = if k == idx { 1.0 } else { 0.0 };
                    let d_logp = one_hot - probs[k];
                    let d_entropy = if probs[k] > 0.0 {
                        -probs[k] * (probs[k].ln() + entropy)
                    } else {
                        0.0
                    };
                    g[k] = -(coef * d_logp + cfg.entropy_coef * d_entropy);
                }
                g
            }
            Some(ls) => {
                let a = match &batch.actions[i] {
                    ActionValue::Continuous(v) => v,
                    _ => return Err(Error::incompatible("continuous policy given discrete action")),
                };
                let sigma: Vec<f64> = ls.iter().map(|l| l.exp()).collect();
                let mut logp = 0.0;
                for k in 0..a.len() {
                    let z = (a[k] - out[k]) / sigma[k];
                    logp += -0.918_938_533_204_672_7 - ls[k] - 0.5 * z * z;
                }
                let ratio = (logp - batch.log_probs[i]).exp();
                let (coef, clipped) = clip_coefficient(ratio, adv, cfg.clip_epsilon);
                let entropy: f64 = ls.iter().map(|l| 1.418_938_533_204_672_7 + l).sum();
                stats.surrogate_objective += surrogate_value(ratio, adv, cfg.clip_epsilon);
                stats.entropy += entropy;
                if clipped {
                    stats.clip_fraction += 1.0;
                }
                let ls_grads = log_std_grads.as_mut().expect("continuous head has log_std");
                let mut g = vec![0.0; a.len()];
                for k in 0..a.len() {
                    let z = (a[k] - out[k]) / sigma[k];
                    // d logp / d mean_k = z / sigma_k
                    g[k] = -(coef * z / sigma[k]);
                    // d logp / d log_std_k = z^2 - 1; entropy adds 1 per dim.
                    ls_grads[k] += -(coef * (z * z - 1.0) + cfg.entropy_coef) / m;
                }
                g
            }
        };
        if out_grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::diverged("non-finite actor gradient"));
        }
        let grads = ac.actor.backward(&trace, &out_grad)?;
        for (acc, g) in actor_grads.iter_mut().zip(&grads.params) {
            *acc += g / m;
        }

        // Critic: 0.5 * (V - target)^2.
        let ctrace = ac.critic.forward_trace(&x)?;
        let v = ctrace.output()[0];
        let err = v - returns[i];
        stats.value_loss += 0.5 * err * err;
        let cgrads = ac.critic.backward(&ctrace, &[err])?;
        for (acc, g) in critic_grads.iter_mut().zip(&cgrads.params) {
            *acc += g / m;
        }
    }
    if !stats.surrogate_objective.is_finite() || !stats.value_loss.is_finite() {
        return Err(Error::diverged("non-finite loss in ppo update"));
    }
    adam_step(&mut opt.actor, ac.actor.params_mut(), &actor_grads, cfg.lr_actor)?;
    if let (Some(ls), Some(gr), Some(st)) = (
        ac.log_std.as_mut(),
        log_std_grads.as_ref(),
        opt.log_std.as_mut(),
    ) {
        adam_step(st, ls, gr, cfg.lr_actor)?;
        for l in ls.iter_mut() {
            *l = l.clamp(LOG_STD_MIN, LOG_STD_MAX);
        }
    }
    adam_step(&mut opt.critic, ac.critic.params_mut(), &critic_grads, cfg.lr_critic)?;
    let m_count = chunk.len() as f64;
    Ok(PpoDiagnostics {
        surrogate_objective: stats.surrogate_objective / m_count,
        value_loss: stats.value_loss / m_count,
        entropy: stats.entropy / m_count,
        clip_fraction: stats.clip_fraction / m_count,
    })
}

/// Gradient coefficient of the clipped surrogate w.r.t. log-prob, and whether
/// the sample sits outside the trust region.
fn clip_coefficient(ratio: f64, adv: f64, eps: f64) -> (f64, bool) {
    let clipped = !(1.0 - eps..=1.0 + eps).contains(&ratio);
    let surr_unclipped = ratio * adv;
    let surr_clipped = ratio.clamp(1.0 - eps, 1.0 + eps) * adv;
    if surr_unclipped <= surr_clipped {
        (ratio * adv, clipped)
    } else {
        (0.0, clipped)
    }
}

fn surrogate_value(ratio: f64, adv: f64, eps: f64) -> f64 {
    (ratio * adv).min(ratio.clamp(1.0 - eps, 1.0 + eps) * adv)
}

/// Train one goal's policy with PPO. Deterministic per config seed: the same
/// seed reproduces the returned policy parameter-for-parameter.
pub fn train_goal_policy(
    env: &Env,
    env_id: &str,
    goal: &GoalSpec,
    cfg: &PpoConfig,
) -> Result<GoalPolicy> {
    cfg.validate()?;
    env.validate()?;
    if goal.target.dim() != env.position_dim() {
        return Err(Error::invalid("goal dimension does not match environment"));
    }
    if env.goal_reached(&env.start_state(), goal)? {
        return Err(Error::invalid("goal is already reached at the start state"));
    }
    let encoder = StateEncoder::for_env(env);
    let in_dim = encoder.encoded_dim(env.state_dim());
    let space = env.action_space();
    let (out_dim, log_std) = match &space {
        ActionSpace::Discrete { arity } => (*arity, None),
        ActionSpace::Continuous { high, .. } => {
            let init = high.iter().map(|h| (0.5 * h).ln()).collect::<Vec<f64>>();
            (high.len(), Some(init))
        }
    };
    let mut arch = vec![in_dim];
    arch.extend(&cfg.hidden_sizes);
    arch.push(out_dim);
    let mut critic_arch = vec![in_dim];
    critic_arch.extend(&cfg.hidden_sizes);
    critic_arch.push(1);

    let mut init_rng = derive_rng(cfg.seed, "ppo-init", &[]);
    let mut actor = Mlp::new(&arch, &mut init_rng)?;
    // Start the policy head near uniform so early rollouts explore.
    actor.scale_output_layer(0.01);
    let critic = Mlp::new(&critic_arch, &mut init_rng)?;
    let mut ac = ActorCritic {
        encoder,
        actor,
        log_std,
        critic,
    };
    let mut opt = PpoOptState::new(&ac);
    let mut rollout_rng = derive_rng(cfg.seed, "ppo-rollout", &[]);
    let mut shuffle_rng = derive_rng(cfg.seed, "ppo-shuffle", &[]);

    let mut steps_done = 0usize;
    let mut iter = 0u64;
    while steps_done < cfg.total_env_steps {
        let steps = cfg.rollout_steps.min(cfg.total_env_steps - steps_done);
        let batch = collect_rollout(env, goal, &ac, steps, cfg.horizon, &mut rollout_rng)?;
        let (mut advantages, returns) = gae_advantages(&batch, cfg.gamma, cfg.gae_lambda)?;
        normalize_advantages(&mut advantages);
        ppo_update(&mut ac, &mut opt, &batch, &advantages, &returns, cfg, &mut shuffle_rng)
            .map_err(|e| match e {
                Error::Diverged(msg) => Error::diverged(format!("iteration {iter}: {msg}")),
                other => other,
            })?;
        steps_done += steps;
        iter += 1;
    }

    Ok(GoalPolicy {
        env_id: env_id.to_string(),
        goal: goal.clone(),
        action_space: space,
        backend: PolicyBackend::MlpActorCritic(ac),
        meta: TrainingMeta {
            learner: "ppo".to_string(),
            budget: cfg.total_env_steps as u64,
            seed: cfg.seed,
        },
    })
}
