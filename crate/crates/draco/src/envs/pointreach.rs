//! Continuous point-reaching task in the unit box. States are positions in
//! [0, 1]^dim, actions are per-dimension displacements clamped to ±a_max,
//! and dynamics clip the successor back into the box. Episodes start at the
//! box center.

use serde::{Deserialize, Serialize};

use crate::core::{ActionValue, GoalSpec, StateVec};
use crate::envs::{StepOutcome, TerminalReason};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointReachSpec {
    pub dim: usize,
    /// Per-dimension displacement bound per step.
    pub a_max: f64,
    /// Max-norm radius around a goal target that counts as reaching it.
    pub goal_radius: f64,
    /// Episode step cap; reaching it truncates with a horizon termination.
    pub max_steps: usize,
}

impl PointReachSpec {
    /// Standard desk-scale instance for a given dimension.
    pub fn preset(dim: usize) -> Self {
        PointReachSpec {
            dim,
            a_max: 0.05,
            goal_radius: 0.05,
            max_steps: 100,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::invalid("pointreach dimension must be positive"));
        }
        if !(self.a_max > 0.0) || !self.a_max.is_finite() {
            return Err(Error::invalid("a_max must be finite and > 0"));
        }
        if !(self.goal_radius > 0.0) || !self.goal_radius.is_finite() {
            return Err(Error::invalid("goal_radius must be finite and > 0"));
        }
        if self.max_steps == 0 {
            return Err(Error::invalid("max_steps must be positive"));
        }
        Ok(())
    }

    pub fn start_state(&self) -> StateVec {
        StateVec(vec![0.5; self.dim])
    }

    fn decode_state(&self, state: &StateVec) -> Result<Vec<f64>> {
        let c = state.coords();
        if c.len() != self.dim {
            return Err(Error::invalid(format!(
                "pointreach state must have {} coordinates, got {}",
                self.dim,
                c.len()
            )));
        }
        if c.iter().any(|v| !v.is_finite() || !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("pointreach state must lie in the unit box"));
        }
        Ok(c.to_vec())
    }
}

/// Apply one displacement. Out-of-bound action components are clamped and
/// flagged; the successor is clipped into the box. Terminal when the
/// successor is within `goal_radius` of the goal in max-norm, or when
/// `t_after` reaches the step cap.
pub fn pointreach_step(
    spec: &PointReachSpec,
    state: &StateVec,
    action: &ActionValue,
    goal: &GoalSpec,
    t_after: usize,
) -> Result<StepOutcome> {
    let pos = spec.decode_state(state)?;
    if goal.target.dim() != spec.dim {
        return Err(Error::invalid("goal dimension does not match environment"));
    }
    let a = match action {
        ActionValue::Continuous(v) if v.len() == spec.dim => v,
        ActionValue::Continuous(v) => {
            return Err(Error::invalid(format!(
                "action dimension {} does not match environment dimension {}",
                v.len(),
                spec.dim
            )))
        }
        ActionValue::Discrete(_) => {
            return Err(Error::incompatible("pointreach expects a continuous action"))
        }
    };
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("action components must be finite"));
    }
    let mut clamped = false;
    let next: Vec<f64> = pos
        .iter()
        .zip(a)
        .map(|(p, dv)| {
            let c = dv.clamp(-spec.a_max, spec.a_max);
            if c != *dv {
                clamped = true;
            }
            (p + c).clamp(0.0, 1.0)
        })
        .collect();
    let linf = next
        .iter()
        .zip(goal.target.coords())
        .map(|(n, g)| (n - g).abs())
        .fold(0.0f64, f64::max);
    let reason = if linf <= spec.goal_radius {
        Some(TerminalReason::GoalReached)
    } else if t_after >= spec.max_steps {
        Some(TerminalReason::Horizon)
    } else {
        None
    };
    Ok(StepOutcome {
        next_state: StateVec(next),
        reason,
        action_clamped: clamped,
    })
}
