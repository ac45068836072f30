//! Grid world with position-plus-orientation states and turn/move actions.
//!
//! Coordinates: x grows east, y grows north, both zero-based. A state is
//! `[x, y, orientation]` with orientation encoded 0=N, 1=E, 2=S, 3=W.
//! Actions: 0 turn left, 1 turn right, 2 move forward, 3 stay. Forward moves
//! into walls or off the grid leave the position unchanged; moving onto a
//! lava cell is terminal.

use serde::{Deserialize, Serialize};

use crate::core::{ActionValue, StateVec};
use crate::envs::{StepOutcome, TerminalReason};
use crate::error::{Error, Result};

pub const ACTION_COUNT: usize = 4;
pub const ACTION_TURN_LEFT: usize = 0;
pub const ACTION_TURN_RIGHT: usize = 1;
pub const ACTION_FORWARD: usize = 2;
pub const ACTION_STAY: usize = 3;

/// Facing direction; the numeric encoding is part of the state format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orientation {
    N,
    E,
    S,
    W,
}

impl Orientation {
    pub fn index(self) -> usize {
        match self {
            Orientation::N => 0,
            Orientation::E => 1,
            Orientation::S => 2,
            Orientation::W => 3,
        }
    }

    pub fn from_index(i: usize) -> Result<Self> {
        match i {
            0 => Ok(Orientation::N),
            1 => Ok(Orientation::E),
            2 => Ok(Orientation::S),
            3 => Ok(Orientation::W),
            _ => Err(Error::invalid(format!("orientation index {i} out of range"))),
        }
    }

    /// Unit step for moving forward while facing this way.
    pub fn delta(self) -> (i64, i64) {
        match self {
            Orientation::N => (0, 1),
            Orientation::E => (1, 0),
            Orientation::S => (0, -1),
            Orientation::W => (-1, 0),
        }
    }

    pub fn turned_left(self) -> Self {
        Self::from_index((self.index() + 3) % 4).unwrap()
    }

    pub fn turned_right(self) -> Self {
        Self::from_index((self.index() + 1) % 4).unwrap()
    }
}

/// Static grid description. `lava_penalty` is the extra one-time cost of a
/// lava termination; it defaults to width + height so dying is always worse
/// than any detour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridWorldSpec {
    pub width: usize,
    pub height: usize,
    #[serde(default)]
    pub walls: Vec<[usize; 2]>,
    #[serde(default)]
    pub lava: Vec<[usize; 2]>,
    #[serde(default = "default_start")]
    pub start: (usize, usize, Orientation),
    #[serde(default)]
    pub lava_penalty: Option<f64>,
}

fn default_start() -> (usize, usize, Orientation) {
    (0, 0, Orientation::E)
}

impl GridWorldSpec {
    pub fn empty(width: usize, height: usize) -> Self {
        GridWorldSpec {
            width,
            height,
            walls: Vec::new(),
            lava: Vec::new(),
            start: (0, 0, Orientation::E),
            lava_penalty: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("grid dimensions must be positive"));
        }
        for &[x, y] in self.walls.iter().chain(self.lava.iter()) {
            if x >= self.width || y >= self.height {
                return Err(Error::invalid(format!("cell ({x},{y}) out of bounds")));
            }
        }
        if self.walls.iter().any(|c| self.lava.contains(c)) {
            return Err(Error::invalid("a cell cannot be both wall and lava"));
        }
        let (sx, sy, _) = self.start;
        if sx >= self.width || sy >= self.height {
            return Err(Error::invalid("start out of bounds"));
        }
        if self.is_wall(sx as i64, sy as i64) || self.is_lava(sx as i64, sy as i64) {
            return Err(Error::invalid("start must be a free cell"));
        }
        Ok(())
    }

    pub fn lava_penalty(&self) -> f64 {
        self.lava_penalty
            .unwrap_or_else(|| (self.width + self.height) as f64)
    }

    pub fn in_bounds(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height
    }

    pub fn is_wall(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && self.walls.contains(&[x as usize, y as usize])
    }

    pub fn is_lava(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && self.lava.contains(&[x as usize, y as usize])
    }

    pub fn start_state(&self) -> StateVec {
        let (x, y, o) = self.start;
        StateVec(vec![x as f64, y as f64, o.index() as f64])
    }

    /// Decode and validate a state vector against this grid.
    pub fn decode_state(&self, state: &StateVec) -> Result<(i64, i64, Orientation)> {
        let c = state.coords();
        if c.len() != 3 {
            return Err(Error::invalid(format!(
                "grid state must have 3 coordinates, got {}",
                c.len()
            )));
        }
        if c.iter().any(|v| !v.is_finite() || v.fract() != 0.0) {
            return Err(Error::invalid("grid state coordinates must be integers"));
        }
        let (x, y) = (c[0] as i64, c[1] as i64);
        let o = Orientation::from_index(c[2] as usize)?;
        if !self.in_bounds(x, y) {
            return Err(Error::invalid(format!("state ({x},{y}) out of bounds")));
        }
        if self.is_wall(x, y) {
            return Err(Error::invalid(format!("state ({x},{y}) is inside a wall")));
        }
        Ok((x, y, o))
    }

    /// Every non-wall (x, y, orientation) triple, x-major then y, then
    /// orientation in N, E, S, W order.
    pub fn enumerate_states(&self) -> Vec<StateVec> {
        let mut out = Vec::new();
        for x in 0..self.width {
            for y in 0..self.height {
                if self.is_wall(x as i64, y as i64) {
                    continue;
                }
                for o in 0..4 {
                    out.push(StateVec(vec![x as f64, y as f64, o as f64]));
                }
            }
        }
        out
    }
}

/// Apply one grid action. Goal termination is the caller's concern; this
/// handles dynamics, blocked moves, and lava.
pub fn gridworld_step(
    spec: &GridWorldSpec,
    state: &StateVec,
    action: &ActionValue,
) -> Result<StepOutcome> {
    let (x, y, o) = spec.decode_state(state)?;
    if spec.is_lava(x, y) {
        return Err(Error::invalid(format!(
            "state ({x},{y}) is on lava (terminal, cannot act)"
        )));
    }
    let idx = match action {
        ActionValue::Discrete(i) if *i < ACTION_COUNT => *i,
        ActionValue::Discrete(i) => {
            return Err(Error::invalid(format!("grid action index {i} out of range")))
        }
        ActionValue::Continuous(_) => {
            return Err(Error::incompatible("grid expects a discrete action"))
        }
    };
    let (nx, ny, no, reason) = match idx {
        ACTION_TURN_LEFT => (x, y, o.turned_left(), None),
        ACTION_TURN_RIGHT => (x, y, o.turned_right(), None),
        ACTION_FORWARD => {
            let (dx, dy) = o.delta();
            let (tx, ty) = (x + dx, y + dy);
            if !spec.in_bounds(tx, ty) || spec.is_wall(tx, ty) {
                (x, y, o, None)
            } else if spec.is_lava(tx, ty) {
                (tx, ty, o, Some(TerminalReason::Lava))
            } else {
                (tx, ty, o, None)
            }
        }
        _ => (x, y, o, None),
    };
    Ok(StepOutcome {
        next_state: StateVec(vec![nx as f64, ny as f64, no.index() as f64]),
        reason,
        action_clamped: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(x: i64, y: i64, o: Orientation) -> StateVec {
        StateVec(vec![x as f64, y as f64, o.index() as f64])
    }

    #[test]
    fn turn_left_from_north_faces_west() {
        let spec = GridWorldSpec::empty(3, 3);
        let out = gridworld_step(&spec, &state(0, 0, Orientation::N), &ActionValue::Discrete(ACTION_TURN_LEFT))
            .unwrap();
        assert_eq!(out.next_state, state(0, 0, Orientation::W));
        assert!(!out.terminal());
    }

    #[test]
    fn forward_into_wall_keeps_position() {
        let mut spec = GridWorldSpec::empty(3, 3);
        spec.walls.push([1, 0]);
        let out = gridworld_step(&spec, &state(0, 0, Orientation::E), &ActionValue::Discrete(ACTION_FORWARD))
            .unwrap();
        assert_eq!(out.next_state, state(0, 0, Orientation::E));
    }

    #[test]
    fn forward_off_grid_keeps_position() {
        let spec = GridWorldSpec::empty(3, 3);
        let out = gridworld_step(&spec, &state(0, 0, Orientation::W), &ActionValue::Discrete(ACTION_FORWARD))
            .unwrap();
        assert_eq!(out.next_state, state(0, 0, Orientation::W));
    }

    #[test]
    fn forward_onto_lava_is_terminal() {
        let mut spec = GridWorldSpec::empty(3, 3);
        spec.lava.push([1, 0]);
        let out = gridworld_step(&spec, &state(0, 0, Orientation::E), &ActionValue::Discrete(ACTION_FORWARD))
            .unwrap();
        assert_eq!(out.reason, Some(TerminalReason::Lava));
        assert_eq!(out.next_state, state(1, 0, Orientation::E));
    }

    #[test]
    fn malformed_states_are_rejected() {
        let spec = GridWorldSpec::empty(3, 3);
        let fwd = ActionValue::Discrete(ACTION_FORWARD);
        assert!(gridworld_step(&spec, &StateVec(vec![0.5, 0.0, 0.0]), &fwd).is_err());
        assert!(gridworld_step(&spec, &StateVec(vec![9.0, 0.0, 0.0]), &fwd).is_err());
        assert!(gridworld_step(&spec, &StateVec(vec![0.0, 0.0]), &fwd).is_err());
        assert!(gridworld_step(&spec, &state(0, 0, Orientation::N), &ActionValue::Discrete(9)).is_err());
    }

    #[test]
    fn enumerate_counts_non_wall_cells() {
        let mut spec = GridWorldSpec::empty(2, 2);
        spec.walls.push([1, 1]);
        assert_eq!(spec.enumerate_states().len(), 12);
        let full = GridWorldSpec::empty(2, 2);
        assert_eq!(full.enumerate_states().len(), 16);
    }

    #[test]
    fn step_is_deterministic() {
        let spec = GridWorldSpec::empty(5, 5);
        let s = state(2, 2, Orientation::E);
        let a = ActionValue::Discrete(ACTION_FORWARD);
        assert_eq!(
            gridworld_step(&spec, &s, &a).unwrap(),
            gridworld_step(&spec, &s, &a).unwrap()
        );
    }
}
