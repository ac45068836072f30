//! Experiment configuration: one environment, its candidate goals, a learner
//! choice, and the observability/noise/seed grid to sweep. Serializable as
//! JSON; every omitted field falls back to a documented default.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::core::GoalSpec;
use crate::envs::Env;
use crate::error::{Error, Result};
use crate::learn::{PpoConfig, QLearnConfig};
use crate::recognize::{MetricConfig, MetricKind};

/// Which training algorithm produces the per-goal policies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearnerConfig {
    Ppo(PpoConfig),
    Tabular(QLearnConfig),
}

impl LearnerConfig {
    /// Environment-appropriate default when the config names no learner.
    pub fn default_for(env: &Env) -> Self {
        match env {
            Env::Gridworld(_) => LearnerConfig::Ppo(PpoConfig::grid_default()),
            Env::Pointreach(_) => LearnerConfig::Ppo(PpoConfig::pointreach_default()),
        }
    }
}

/// Who generates the observed trajectories for evaluation runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    /// Built-in near-optimal agent (shortest path / proportional controller).
    #[default]
    Scripted,
    /// The trained policy of the trajectory's true goal, acting by sampling.
    Policy,
}

fn default_name() -> String {
    "experiment".to_string()
}

fn default_metrics() -> Vec<MetricKind> {
    vec![MetricKind::Wasserstein]
}

fn default_observability() -> Vec<f64> {
    vec![10.0, 30.0, 50.0, 70.0, 100.0]
}

fn default_noise() -> Vec<f64> {
    vec![0.0]
}

fn default_seeds() -> u64 {
    10
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs")
}

/// Everything needed to train policies and sweep a recognition experiment.
/// `name` doubles as the instance id in result rows and as the environment
/// id policies are stamped with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub env: Env,
    pub goals: Vec<GoalSpec>,
    /// Defaults to PPO with environment-appropriate hyperparameters.
    #[serde(default)]
    pub learner: Option<LearnerConfig>,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<MetricKind>,
    /// Percentages of steps kept, each in [0, 100].
    #[serde(default = "default_observability")]
    pub observability: Vec<f64>,
    /// Percentages of surviving actions corrupted, each in [0, 100].
    #[serde(default = "default_noise")]
    pub noise: Vec<f64>,
    /// Number of evaluation seeds; seed index i pursues goal i mod |goals|.
    #[serde(default = "default_seeds")]
    pub seeds: u64,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub agent: AgentKind,
    /// Distance-metric knobs; the per-cell seed is derived, not taken from
    /// this field.
    #[serde(default)]
    pub metric_config: MetricConfig,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn resolved_learner(&self) -> LearnerConfig {
        self.learner
            .clone()
            .unwrap_or_else(|| LearnerConfig::default_for(&self.env))
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::invalid("experiment name must not be empty"));
        }
        self.env.validate()?;
        if self.goals.len() < 2 {
            return Err(Error::invalid("an experiment needs at least 2 goals"));
        }
        let mut ids: Vec<&str> = self.goals.iter().map(|g| g.id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != self.goals.len() {
            return Err(Error::invalid("goal ids must be unique"));
        }
        for goal in &self.goals {
            if goal.target.dim() != self.env.position_dim() {
                return Err(Error::invalid(format!(
                    "goal '{}' has dimension {}, environment positions have {}",
                    goal.id,
                    goal.target.dim(),
                    self.env.position_dim()
                )));
            }
            if self.env.goal_reached(&self.env.start_state(), goal)? {
                return Err(Error::invalid(format!(
                    "goal '{}' is already satisfied at the start state",
                    goal.id
                )));
            }
        }
        if self.metrics.is_empty() {
            return Err(Error::invalid("metric list must not be empty"));
        }
        let mut metrics = self.metrics.clone();
        metrics.sort_unstable();
        metrics.dedup();
        if metrics.len() != self.metrics.len() {
            return Err(Error::invalid("metric list must not repeat entries"));
        }
        if matches!(self.env, Env::Pointreach(_)) && self.metrics.contains(&MetricKind::Kl) {
            return Err(Error::invalid(
                "the kl metric needs discrete actions; this environment is continuous",
            ));
        }
        if self.observability.is_empty() || self.noise.is_empty() {
            return Err(Error::invalid("observability and noise grids must not be empty"));
        }
        for (what, grid) in [("observability", &self.observability), ("noise", &self.noise)] {
            if grid.iter().any(|p| !(0.0..=100.0).contains(p)) {
                return Err(Error::invalid(format!("{what} percentages must lie in [0, 100]")));
            }
        }
        if self.seeds == 0 {
            return Err(Error::invalid("at least one evaluation seed is required"));
        }
        self.metric_config.validate()?;
        match self.resolved_learner() {
            // Learner configs validate on use; surface problems early.
            LearnerConfig::Ppo(cfg) => {
                if cfg.total_env_steps == 0 {
                    return Err(Error::invalid("training budget must be positive"));
                }
            }
            LearnerConfig::Tabular(cfg) => {
                if !(cfg.alpha > 0.0 && cfg.alpha <= 1.0) {
                    return Err(Error::invalid("alpha must lie in (0, 1]"));
                }
            }
        }
        Ok(())
    }
}
