//! Observation data: roll out an agent pursuing a known goal, then thin the
//! sequence (partial observability) or corrupt recorded actions (noise).
//! Steps keep their original time indices through every transform, so
//! downstream consumers can tell "missing" from "renumbered".

use std::collections::{BTreeMap, VecDeque};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::core::{ActionValue, GoalSpec, ObservationSequence, ObservationStep, StateVec};
use crate::envs::{
    gridworld_step, ActionSpace, Env, Episode, GridWorldSpec, TerminalReason, ACTION_FORWARD,
    ACTION_TURN_LEFT, ACTION_TURN_RIGHT,
};
use crate::error::{Error, Result};
use crate::learn::GoalPolicy;
use crate::seeds::derive_rng;

/// Who produces the observed behavior.
#[derive(Debug, Clone, Copy)]
pub enum ObservedAgent<'a> {
    /// Built-in near-optimal agent: shortest paths on grids (random among
    /// optimal actions), a jittered proportional controller in the box.
    Scripted,
    /// A trained policy acting by sampling.
    Policy(&'a GoalPolicy),
}

/// Steps-to-goal for every grid state that can still reach the goal, by
/// breadth-first search over reversed transitions. Lava states are absorbing
/// failures and take part in no path.
pub(crate) fn grid_goal_distances(
    spec: &GridWorldSpec,
    env: &Env,
    goal: &GoalSpec,
) -> Result<BTreeMap<[i64; 3], usize>> {
    let states = spec.enumerate_states();
    let mut preds: BTreeMap<[i64; 3], Vec<[i64; 3]>> = BTreeMap::new();
    let mut targets = Vec::new();
    let mut dist = BTreeMap::new();
    for state in &states {
        let (x, y, o) = spec.decode_state(state)?;
        let key = [x, y, o.index() as i64];
        if spec.is_lava(x, y) {
            continue;
        }
        if env.goal_reached(state, goal)? {
            targets.push(key);
            continue; // absorbing: no outgoing edges
        }
        for action in [ACTION_TURN_LEFT, ACTION_TURN_RIGHT, ACTION_FORWARD] {
            let out = gridworld_step(spec, state, &ActionValue::Discrete(action))?;
            if out.reason == Some(TerminalReason::Lava) {
                continue;
            }
            let (nx, ny, no) = spec.decode_state(&out.next_state)?;
            let nkey = [nx, ny, no.index() as i64];
            if nkey != key {
                preds.entry(nkey).or_default().push(key);
            }
        }
    }
    let mut queue = VecDeque::new();
    for t in targets {
        dist.insert(t, 0usize);
        queue.push_back(t);
    }
    while let Some(key) = queue.pop_front() {
        let d = dist[&key];
        if let Some(ps) = preds.get(&key) {
            for p in ps.clone() {
                if let std::collections::btree_map::Entry::Vacant(e) = dist.entry(p) {
                    e.insert(d + 1);
                    queue.push_back(p);
                }
            }
        }
    }
    Ok(dist)
}

fn scripted_grid_action(
    spec: &GridWorldSpec,
    dist: &BTreeMap<[i64; 3], usize>,
    state: &StateVec,
    rng: &mut ChaCha8Rng,
) -> Result<ActionValue> {
    let (x, y, o) = spec.decode_state(state)?;
    let here = dist
        .get(&[x, y, o.index() as i64])
        .copied()
        .ok_or_else(|| Error::invalid("goal is unreachable from the current state"))?;
    let mut best = Vec::new();
    for action in [ACTION_TURN_LEFT, ACTION_TURN_RIGHT, ACTION_FORWARD] {
        let out = gridworld_step(spec, state, &ActionValue::Discrete(action))?;
        if out.reason == Some(TerminalReason::Lava) {
            continue;
        }
        let (nx, ny, no) = spec.decode_state(&out.next_state)?;
        if dist.get(&[nx, ny, no.index() as i64]) == Some(&(here - 1)) {
            best.push(action);
        }
    }
    if best.is_empty() {
        return Err(Error::invalid("no distance-decreasing action available"));
    }
    Ok(ActionValue::Discrete(best[rng.random_range(0..best.len())]))
}

fn scripted_box_action(
    space: &ActionSpace,
    state: &StateVec,
    goal: &GoalSpec,
    rng: &mut ChaCha8Rng,
) -> Result<ActionValue> {
    let ActionSpace::Continuous { low, high } = space else {
        return Err(Error::incompatible("box controller needs a continuous space"));
    };
    let d = goal.target.dim();
    let mut v = Vec::with_capacity(d);
    for k in 0..d {
        let diff = goal.target.coords()[k] - state.coords()[k];
        let jitter = rng.random_range(-0.2 * high[k]..=0.2 * high[k]);
        v.push((diff + jitter).clamp(low[k], high[k]));
    }
    Ok(ActionValue::Continuous(v))
}

/// Roll one episode toward `goal` and record every (t, state, action) before
/// the transition is applied. The sequence ends with the step that reached
/// the goal; hitting the horizon first is allowed but logged.
pub fn generate_trajectory(
    env: &Env,
    goal: &GoalSpec,
    agent: ObservedAgent<'_>,
    seed: u64,
    horizon: Option<usize>,
) -> Result<ObservationSequence> {
    env.validate()?;
    let mut rng = derive_rng(seed, "trajectory", &[]);
    let space = env.action_space();
    let grid_dist = match (&agent, env) {
        (ObservedAgent::Scripted, Env::Gridworld(spec)) => {
            Some(grid_goal_distances(spec, env, goal)?)
        }
        _ => None,
    };
    let mut ep = Episode::new(env, goal, horizon)?;
    let mut steps = Vec::new();
    let mut t = 0usize;
    loop {
        let state = ep.state().clone();
        let action = match (&agent, env) {
            (ObservedAgent::Scripted, Env::Gridworld(spec)) => scripted_grid_action(
                spec,
                grid_dist.as_ref().expect("distances precomputed"),
                &state,
                &mut rng,
            )?,
            (ObservedAgent::Scripted, Env::Pointreach(_)) => {
                scripted_box_action(&space, &state, goal, &mut rng)?
            }
            (ObservedAgent::Policy(policy), _) => policy.sample_env_action(&state, &mut rng)?,
        };
        let (out, _) = ep.step(&action)?;
        steps.push(ObservationStep {
            t,
            state,
            action: Some(action),
        });
        t += 1;
        match out.reason {
            None => continue,
            Some(TerminalReason::GoalReached) => break,
            Some(reason) => {
                log::debug!("trajectory ended without reaching the goal: {reason:?}");
                break;
            }
        }
    }
    ObservationSequence::new(steps, t.max(1))
}

/// Keep each step independently with probability `percent / 100`. Surviving
/// steps keep their time indices; 100 is the exact identity.
pub fn degrade_observability(
    observations: &ObservationSequence,
    percent: f64,
    seed: u64,
) -> Result<ObservationSequence> {
    if !(0.0..=100.0).contains(&percent) {
        return Err(Error::invalid("observability percent must lie in [0, 100]"));
    }
    if percent == 100.0 {
        return Ok(observations.clone());
    }
    let mut rng = derive_rng(seed, "degrade", &[]);
    let keep = percent / 100.0;
    let steps = observations
        .steps()
        .iter()
        .filter(|_| rng.random::<f64>() < keep)
        .cloned()
        .collect();
    ObservationSequence::new(steps, observations.horizon())
}

/// Replace the actions of round(percent/100 * actioned_steps) distinct steps:
/// a different uniform action index on discrete spaces, an additive uniform
/// perturbation re-clamped into the space on continuous ones. States are
/// never touched. Returns the corrupted sequence and the indices (into
/// `steps()`) that were modified, sorted.
pub fn inject_noise(
    observations: &ObservationSequence,
    percent: f64,
    env: &Env,
    seed: u64,
) -> Result<(ObservationSequence, Vec<usize>)> {
    if !(0.0..=100.0).contains(&percent) {
        return Err(Error::invalid("noise percent must lie in [0, 100]"));
    }
    let space = env.action_space();
    let actioned: Vec<usize> = observations
        .steps()
        .iter()
        .enumerate()
        .filter_map(|(i, s)| s.action.is_some().then_some(i))
        .collect();
    let count = (percent / 100.0 * actioned.len() as f64).round() as usize;
    let mut rng = derive_rng(seed, "noise", &[]);
    let mut chosen: Vec<usize> = rand::seq::index::sample(&mut rng, actioned.len(), count)
        .iter()
        .map(|j| actioned[j])
        .collect();
    chosen.sort_unstable();
    let mut steps = observations.steps().to_vec();
    for &i in &chosen {
        let action = steps[i].action.as_mut().expect("chosen among actioned");
        match (&space, action) {
            (ActionSpace::Discrete { arity }, ActionValue::Discrete(a)) => {
                if *arity < 2 {
                    return Err(Error::incompatible("cannot draw a different action from arity 1"));
                }
                let mut pick = rng.random_range(0..arity - 1);
                if pick >= *a {
                    pick += 1;
                }
                *a = pick;
            }
            (ActionSpace::Continuous { low, high }, ActionValue::Continuous(v)) => {
                if v.len() != low.len() {
                    return Err(Error::incompatible("recorded action dimension mismatch"));
                }
                for (k, x) in v.iter_mut().enumerate() {
                    let bound = high[k].abs().max(low[k].abs());
                    *x = (*x + rng.random_range(-bound..=bound)).clamp(low[k], high[k]);
                }
            }
            _ => return Err(Error::incompatible("recorded action does not match action space")),
        }
    }
    Ok((ObservationSequence::new(steps, observations.horizon())?, chosen))
}

/// Drop all actions, keeping states and time indices.
pub fn state_only_projection(observations: &ObservationSequence) -> ObservationSequence {
    let steps = observations
        .steps()
        .iter()
        .map(|s| ObservationStep {
            t: s.t,
            state: s.state.clone(),
            action: None,
        })
        .collect();
    ObservationSequence::new(steps, observations.horizon())
        .expect("projection preserves sequence invariants")
}
