//! Tabular Q-learning over discretized states. The baseline recognizer
//! trains one table per goal; continuous actions are handled by a fixed
//! direction set so the table stays finite.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::core::{ActionValue, GoalSpec, StateVec};
use crate::envs::{ActionSpace, Env, Episode, TerminalReason};
use crate::error::{Error, Result};
use crate::learn::{GoalPolicy, PolicyBackend, QTablePolicy, TrainingMeta};
use crate::seeds::derive_rng;

/// Uniform-width binning: coordinate c maps to floor((c - origin) / factor).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discretizer {
    factor: f64,
    origin: Vec<f64>,
}

impl Discretizer {
    pub fn new(factor: f64, origin: Vec<f64>) -> Result<Self> {
        if !(factor > 0.0) || !factor.is_finite() {
            return Err(Error::invalid("discretization factor must be positive and finite"));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::invalid("discretizer origin must be finite"));
        }
        Ok(Discretizer { factor, origin })
    }

    /// Zero-origin binning for states of the given dimension.
    pub fn zero_origin(factor: f64, dim: usize) -> Result<Self> {
        Discretizer::new(factor, vec![0.0; dim])
    }

    pub fn factor(&self) -> f64 {
        self.factor
    }

    pub fn key(&self, state: &StateVec) -> Result<Vec<i64>> {
        if state.dim() != self.origin.len() {
            return Err(Error::incompatible(format!(
                "discretizer expects {} dims, state has {}",
                self.origin.len(),
                state.dim()
            )));
        }
        state
            .coords()
            .iter()
            .zip(&self.origin)
            .map(|(c, o)| {
                let bin = ((c - o) / self.factor).floor();
                if !bin.is_finite() || bin.abs() >= 9.0e15 {
                    return Err(Error::invalid("state coordinate out of discretizable range"));
                }
                Ok(bin as i64)
            })
            .collect()
    }
}

/// Action-value row for one discretized state. Visit counts support
/// diagnostics and tests; they are not persisted.
#[derive(Debug, Clone, PartialEq)]
pub struct QEntry {
    pub q: Vec<f64>,
    pub visits: Vec<u64>,
}

/// Sparse action-value table keyed by discretized state. Unvisited states
/// read as all-zero rows. Serializes entries in sorted key order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "QTableWire", into = "QTableWire")]
pub struct QTable {
    arity: usize,
    entries: BTreeMap<Vec<i64>, QEntry>,
}

#[derive(Serialize, Deserialize)]
struct QTableWire {
    arity: usize,
    entries: Vec<(Vec<i64>, Vec<f64>)>,
}

impl From<QTable> for QTableWire {
    fn from(t: QTable) -> Self {
        QTableWire {
            arity: t.arity,
            entries: t.entries.into_iter().map(|(k, e)| (k, e.q)).collect(),
        }
    }
}

impl TryFrom<QTableWire> for QTable {
    type Error = Error;

    fn try_from(w: QTableWire) -> Result<Self> {
        let mut table = QTable::new(w.arity)?;
        for (key, q) in w.entries {
            if q.len() != w.arity {
                return Err(Error::format("q row length does not match table arity"));
            }
            if q.iter().any(|v| !v.is_finite()) {
                return Err(Error::format("non-finite q value"));
            }
            let visits = vec![0; w.arity];
            table.entries.insert(key, QEntry { q, visits });
        }
        Ok(table)
    }
}

impl QTable {
    pub fn new(arity: usize) -> Result<Self> {
        if arity == 0 {
            return Err(Error::invalid("q-table arity must be positive"));
        }
        Ok(QTable {
            arity,
            entries: BTreeMap::new(),
        })
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn q(&self, key: &[i64]) -> Option<&[f64]> {
        self.entries.get(key).map(|e| e.q.as_slice())
    }

    pub fn q_or_zero(&self, key: &[i64]) -> Vec<f64> {
        self.q(key).map(|q| q.to_vec()).unwrap_or_else(|| vec![0.0; self.arity])
    }

    pub fn max_q(&self, key: &[i64]) -> f64 {
        self.q(key)
            .map(|q| q.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
            .unwrap_or(0.0)
    }

    pub fn entry_mut(&mut self, key: &[i64]) -> &mut QEntry {
        let arity = self.arity;
        self.entries.entry(key.to_vec()).or_insert_with(|| QEntry {
            q: vec![0.0; arity],
            visits: vec![0; arity],
        })
    }

    pub fn entries(&self) -> impl Iterator<Item = (&Vec<i64>, &QEntry)> {
        self.entries.iter()
    }
}

/// One temporal-difference backup. `next_key` of None means the transition
/// was terminal and contributes no bootstrap.
pub fn q_update(
    table: &mut QTable,
    key: &[i64],
    action: usize,
    reward: f64,
    next_key: Option<&[i64]>,
    alpha: f64,
    gamma: f64,
) -> Result<()> {
    if action >= table.arity() {
        return Err(Error::invalid("action index out of range for q-table"));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::invalid("alpha must lie in (0, 1]"));
    }
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::invalid("gamma must lie in [0, 1]"));
    }
    if !reward.is_finite() {
        return Err(Error::invalid("reward must be finite"));
    }
    let bootstrap = match next_key {
        Some(k) => {
            let m = table.max_q(k);
            if m == f64::NEG_INFINITY {
                0.0
            } else {
                m
            }
        }
        None => 0.0,
    };
    let entry = table.entry_mut(key);
    entry.visits[action] += 1;
    let target = reward + gamma * bootstrap;
    entry.q[action] += alpha * (target - entry.q[action]);
    Ok(())
}

/// Q-learning hyperparameters. Exploration anneals linearly from
/// `epsilon_start` to `epsilon_end` over the episode budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QLearnConfig {
    pub episodes: usize,
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Softmax temperature applied when the table is read as a distribution.
    pub temperature: f64,
    pub discretize_factor: f64,
    pub seed: u64,
    pub horizon: Option<usize>,
}

impl Default for QLearnConfig {
    fn default() -> Self {
        QLearnConfig {
            episodes: 20_000,
            alpha: 1e-3,
            gamma: 0.99,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            temperature: 1.0,
            discretize_factor: 1.0,
            seed: 0,
            horizon: None,
        }
    }
}

impl QLearnConfig {
    /// Grid preset: integer bins, small learning rate.
    pub fn grid_default() -> Self {
        QLearnConfig::default()
    }

    /// Continuous preset: 0.03-wide bins, faster learning rate.
    pub fn pointreach_default() -> Self {
        QLearnConfig {
            episodes: 5_000,
            alpha: 0.01,
            discretize_factor: 0.03,
            ..QLearnConfig::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::invalid("alpha must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::invalid("gamma must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.epsilon_start)
            || !(0.0..=1.0).contains(&self.epsilon_end)
            || self.epsilon_end > self.epsilon_start
        {
            return Err(Error::invalid("epsilon must anneal downward within [0, 1]"));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::invalid("temperature must be > 0"));
        }
        if !(self.discretize_factor > 0.0) {
            return Err(Error::invalid("discretize_factor must be > 0"));
        }
        Ok(())
    }

    fn epsilon_at(&self, episode: usize) -> f64 {
        if self.episodes <= 1 {
            return self.epsilon_start;
        }
        let frac = episode as f64 / (self.episodes - 1) as f64;
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }
}

/// Direction set used to drive continuous environments from a finite table:
/// every nonzero sign vector in {-1, 0, 1}^dim, lexicographic order, scaled
/// to Euclidean length `a_max`.
pub fn continuous_action_set(dim: usize, a_max: f64) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(3usize.pow(dim as u32) - 1);
    for code in 0..3usize.pow(dim as u32) {
        let mut v = Vec::with_capacity(dim);
        let mut rest = code;
        for k in 0..dim {
            let place = 3usize.pow((dim - 1 - k) as u32);
            v.push((rest / place) as f64 - 1.0);
            rest %= place;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        out.push(v.iter().map(|x| x * a_max / norm).collect());
    }
    out
}

/// Train one goal's tabular policy. Deterministic per config seed.
pub fn train_q_policy(
    env: &Env,
    env_id: &str,
    goal: &GoalSpec,
    cfg: &QLearnConfig,
) -> Result<GoalPolicy> {
    cfg.validate()?;
    env.validate()?;
    if goal.target.dim() != env.position_dim() {
        return Err(Error::invalid("goal dimension does not match environment"));
    }
    if env.goal_reached(&env.start_state(), goal)? {
        return Err(Error::invalid("goal is already reached at the start state"));
    }
    let space = env.action_space();
    let (arity, action_steps) = match &space {
        ActionSpace::Discrete { arity } => (*arity, None),
        ActionSpace::Continuous { high, .. } => {
            let steps = continuous_action_set(high.len(), high[0]);
            (steps.len(), Some(steps))
        }
    };
    let discretizer = Discretizer::zero_origin(cfg.discretize_factor, env.state_dim())?;
    let mut table = QTable::new(arity)?;
    let mut rng: ChaCha8Rng = derive_rng(cfg.seed, "qlearn", &[]);

    for episode in 0..cfg.episodes {
        let epsilon = cfg.epsilon_at(episode);
        let mut ep = Episode::new(env, goal, cfg.horizon)?;
        loop {
            let key = discretizer.key(ep.state())?;
            let idx = if rng.random::<f64>() < epsilon {
                rng.random_range(0..arity)
            } else {
                greedy_index(&table, &key, arity, &mut rng)
            };
            let action = match &action_steps {
                None => ActionValue::Discrete(idx),
                Some(steps) => ActionValue::Continuous(steps[idx].clone()),
            };
            let (out, reward) = ep.step(&action)?;
            let next_key = match out.reason {
                Some(TerminalReason::GoalReached) | Some(TerminalReason::Lava) => None,
                // Horizon cutoff is bookkeeping, not environment structure,
                // so the successor still bootstraps.
                Some(TerminalReason::Horizon) | None => Some(discretizer.key(&out.next_state)?),
            };
            q_update(
                &mut table,
                &key,
                idx,
                reward,
                next_key.as_deref(),
                cfg.alpha,
                cfg.gamma,
            )?;
            if out.terminal() {
                break;
            }
        }
    }

    Ok(GoalPolicy {
        env_id: env_id.to_string(),
        goal: goal.clone(),
        action_space: space,
        backend: PolicyBackend::QTable(QTablePolicy {
            table,
            discretizer,
            temperature: cfg.temperature,
            action_steps,
        }),
        meta: TrainingMeta {
            learner: "tabular".to_string(),
            budget: cfg.episodes as u64,
            seed: cfg.seed,
        },
    })
}

/// Exploitation choice during training: uniform over the exact argmax set.
fn greedy_index(table: &QTable, key: &[i64], arity: usize, rng: &mut ChaCha8Rng) -> usize {
    let q = table.q_or_zero(key);
    let best = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let ties: Vec<usize> = (0..arity).filter(|&i| q[i] == best).collect();
    ties[rng.random_range(0..ties.len())]
}
