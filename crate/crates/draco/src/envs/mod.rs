//! Deterministic desk-scale environments: a grid world with orientation and
//! turn/move actions, and a continuous point-reaching box. Both reward the
//! negative L1 distance between the successor state's position and the goal,
//! so returns are never positive and reaching the goal fastest is optimal.

mod gridworld;
mod pointreach;

pub use gridworld::{
    gridworld_step, GridWorldSpec, Orientation, ACTION_COUNT, ACTION_FORWARD, ACTION_STAY,
    ACTION_TURN_LEFT, ACTION_TURN_RIGHT,
};
pub use pointreach::{pointreach_step, PointReachSpec};

use serde::{Deserialize, Serialize};

use crate::core::{ActionValue, GoalSpec, StateVec};
use crate::error::{Error, Result};

/// What a policy may emit: an index below `arity`, or a per-dimension bounded
/// displacement vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ActionSpace {
    Discrete { arity: usize },
    Continuous { low: Vec<f64>, high: Vec<f64> },
}

impl ActionSpace {
    /// Clamp an action into this space; returns whether clamping changed it.
    pub fn clamp(&self, action: &mut ActionValue) -> Result<bool> {
        match (self, action) {
            (ActionSpace::Discrete { arity }, ActionValue::Discrete(i)) => {
                if *i >= *arity {
                    return Err(Error::invalid(format!("action index {i} out of arity {arity}")));
                }
                Ok(false)
            }
            (ActionSpace::Continuous { low, high }, ActionValue::Continuous(v)) => {
                if v.len() != low.len() {
                    return Err(Error::invalid(format!(
                        "action dimension {} does not match space dimension {}",
                        v.len(),
                        low.len()
                    )));
                }
                let mut clamped = false;
                for (i, x) in v.iter_mut().enumerate() {
                    let c = x.clamp(low[i], high[i]);
                    if c != *x {
                        clamped = true;
                        *x = c;
                    }
                }
                Ok(clamped)
            }
            _ => Err(Error::incompatible("action variant does not match action space")),
        }
    }
}

/// Why an episode ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalReason {
    GoalReached,
    Lava,
    Horizon,
}

/// Result of one transition. `reason` is `Some` exactly when the transition
/// is terminal; `action_clamped` flags continuous actions that exceeded the
/// per-dimension bound and were clamped (a warning, not an error).
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next_state: StateVec,
    pub reason: Option<TerminalReason>,
    pub action_clamped: bool,
}

impl StepOutcome {
    pub fn terminal(&self) -> bool {
        self.reason.is_some()
    }
}

/// A concrete environment. Serializes tagged, so config files name the kind
/// explicitly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Env {
    Gridworld(GridWorldSpec),
    Pointreach(PointReachSpec),
}

impl Env {
    pub fn validate(&self) -> Result<()> {
        match self {
            Env::Gridworld(g) => g.validate(),
            Env::Pointreach(p) => p.validate(),
        }
    }

    pub fn state_dim(&self) -> usize {
        match self {
            Env::Gridworld(_) => 3,
            Env::Pointreach(p) => p.dim,
        }
    }

    /// Dimension of the position slice of a state (what goals refer to).
    pub fn position_dim(&self) -> usize {
        match self {
            Env::Gridworld(_) => 2,
            Env::Pointreach(p) => p.dim,
        }
    }

    pub fn action_space(&self) -> ActionSpace {
        match self {
            Env::Gridworld(_) => ActionSpace::Discrete {
                arity: gridworld::ACTION_COUNT,
            },
            Env::Pointreach(p) => ActionSpace::Continuous {
                low: vec![-p.a_max; p.dim],
                high: vec![p.a_max; p.dim],
            },
        }
    }

    pub fn start_state(&self) -> StateVec {
        match self {
            Env::Gridworld(g) => g.start_state(),
            Env::Pointreach(p) => p.start_state(),
        }
    }

    /// Whether `state`'s position reaches `goal`: max-norm distance within
    /// the goal tolerance (grid) or the environment's goal radius (continuous).
    pub fn goal_reached(&self, state: &StateVec, goal: &GoalSpec) -> Result<bool> {
        let tol = match self {
            Env::Gridworld(_) => goal.tolerance,
            Env::Pointreach(p) => p.goal_radius,
        };
        let d = goal.target.dim();
        if d > state.dim() {
            return Err(Error::invalid("goal dimension exceeds state dimension"));
        }
        let linf = state.coords()[..d]
            .iter()
            .zip(goal.target.coords())
            .map(|(s, g)| (s - g).abs())
            .fold(0.0f64, f64::max);
        Ok(linf <= tol)
    }

    /// One transition. `t_after` is the number of steps taken once this one
    /// completes; continuous episodes truncate at the environment's step cap.
    pub fn step(
        &self,
        state: &StateVec,
        action: &ActionValue,
        goal: &GoalSpec,
        t_after: usize,
    ) -> Result<StepOutcome> {
        match self {
            Env::Gridworld(g) => {
                let mut out = gridworld_step(g, state, action)?;
                if out.reason.is_none() && self.goal_reached(&out.next_state, goal)? {
                    out.reason = Some(TerminalReason::GoalReached);
                }
                Ok(out)
            }
            Env::Pointreach(p) => pointreach_step(p, state, action, goal, t_after),
        }
    }

    /// All valid states of a finite environment, in a fixed order
    /// (x-major, then y, then orientation). Continuous spaces are not
    /// enumerable.
    pub fn enumerate_states(&self) -> Result<Vec<StateVec>> {
        match self {
            Env::Gridworld(g) => Ok(g.enumerate_states()),
            Env::Pointreach(_) => Err(Error::incompatible(
                "continuous state space is not enumerable",
            )),
        }
    }

    /// Default episode cap used by rollouts; continuous environments own one,
    /// grids get a generous multiple of their size.
    pub fn default_horizon(&self) -> usize {
        match self {
            Env::Gridworld(g) => 4 * (g.width + g.height),
            Env::Pointreach(p) => p.max_steps,
        }
    }

    /// Extra one-time penalty applied when a transition ends in lava.
    pub fn terminal_penalty(&self, reason: TerminalReason) -> f64 {
        match (self, reason) {
            (Env::Gridworld(g), TerminalReason::Lava) => g.lava_penalty(),
            _ => 0.0,
        }
    }
}

/// Aggregated reward: negative L1 distance between the successor state's
/// position coordinates and the goal target. Always <= 0; exactly 0 only at
/// the target itself.
pub fn reward_l1(next_state: &StateVec, goal: &GoalSpec) -> Result<f64> {
    let d = goal.target.dim();
    if d > next_state.dim() {
        return Err(Error::invalid(format!(
            "goal dimension {d} exceeds state dimension {}",
            next_state.dim()
        )));
    }
    Ok(-next_state.coords()[..d]
        .iter()
        .zip(goal.target.coords())
        .map(|(s, g)| (s - g).abs())
        .sum::<f64>())
}

/// Mutable episode cursor over an environment and one active goal. Tracks the
/// step count, applies the horizon, and folds terminal penalties into the
/// reward stream.
#[derive(Debug, Clone)]
pub struct Episode<'a> {
    env: &'a Env,
    goal: &'a GoalSpec,
    horizon: usize,
    state: StateVec,
    t: usize,
    clamp_count: u64,
}

impl<'a> Episode<'a> {
    pub fn new(env: &'a Env, goal: &'a GoalSpec, horizon: Option<usize>) -> Result<Self> {
        let horizon = horizon.unwrap_or_else(|| env.default_horizon());
        if horizon == 0 {
            return Err(Error::invalid("episode horizon must be positive"));
        }
        Ok(Episode {
            env,
            goal,
            horizon,
            state: env.start_state(),
            t: 0,
            clamp_count: 0,
        })
    }

    pub fn state(&self) -> &StateVec {
        &self.state
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn goal(&self) -> &GoalSpec {
        self.goal
    }

    pub fn clamp_count(&self) -> u64 {
        self.clamp_count
    }

    pub fn reset(&mut self) {
        self.state = self.env.start_state();
        self.t = 0;
    }

    /// Advance one step; returns the outcome and the reward for the
    /// transition. The episode must be reset after a terminal outcome.
    pub fn step(&mut self, action: &ActionValue) -> Result<(StepOutcome, f64)> {
        let t_after = self.t + 1;
        let mut out = self.env.step(&self.state, action, self.goal, t_after)?;
        if out.reason.is_none() && t_after >= self.horizon {
            out.reason = Some(TerminalReason::Horizon);
        }
        if out.action_clamped {
            self.clamp_count += 1;
        }
        let mut reward = reward_l1(&out.next_state, self.goal)?;
        if let Some(r) = out.reason {
            reward -= self.env.terminal_penalty(r);
        }
        self.state = out.next_state.clone();
        self.t = t_after;
        Ok((out, reward))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reward_is_negative_l1_on_position() {
        let goal = GoalSpec::new("g", vec![3.0, 4.0], 0.0).unwrap();
        let r = reward_l1(&StateVec(vec![1.0, 1.0, 2.0]), &goal).unwrap();
        assert_eq!(r, -5.0);
        let at_goal = reward_l1(&StateVec(vec![3.0, 4.0, 0.0]), &goal).unwrap();
        assert_eq!(at_goal, 0.0);
    }

    #[test]
    fn reward_rejects_dimension_overflow() {
        let goal = GoalSpec::new("g", vec![0.0, 0.0, 0.0], 0.0).unwrap();
        assert!(reward_l1(&StateVec(vec![0.0, 0.0]), &goal).is_err());
    }

    #[test]
    fn enumerate_states_rejects_continuous() {
        let env = Env::Pointreach(PointReachSpec::preset(2));
        assert!(env.enumerate_states().is_err());
    }

    #[test]
    fn episode_applies_horizon_and_penalty() {
        let env = Env::Gridworld(GridWorldSpec::empty(3, 3));
        let goal = GoalSpec::new("g", vec![2.0, 2.0], 0.0).unwrap();
        let mut ep = Episode::new(&env, &goal, Some(2)).unwrap();
        let noop = ActionValue::Discrete(3);
        let (out, _) = ep.step(&noop).unwrap();
        assert!(out.reason.is_none());
        let (out, _) = ep.step(&noop).unwrap();
        assert_eq!(out.reason, Some(TerminalReason::Horizon));
    }
}
