//! Scoring recognition output (confusion counts, precision/recall/F,
//! confidence), measuring how ambiguous an environment's goals are (WCD),
//! and sweeping full experiments over observability/noise/seed grids.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{AgentKind, ExperimentConfig, LearnerConfig};
use crate::core::{GRProblem, GoalSpec, ObservationSequence, RecognitionResult, StateVec};
use crate::envs::{Env, GridWorldSpec, TerminalReason, ACTION_FORWARD, ACTION_TURN_LEFT, ACTION_TURN_RIGHT};
use crate::error::{Error, Result};
use crate::learn::{train_goal_policy, train_q_policy, GoalPolicy};
use crate::obsgen::{
    degrade_observability, generate_trajectory, grid_goal_distances, inject_noise, ObservedAgent,
};
use crate::recognize::{recognize, MetricConfig, MetricKind};
use crate::seeds::derive_seed;

/// Binary-classification tallies over (problem, goal) pairs. Every goal tied
/// at the maximum posterior counts as predicted positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionCounts {
    pub true_pos: u64,
    pub false_pos: u64,
    pub true_neg: u64,
    pub false_neg: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.true_pos + self.false_pos + self.true_neg + self.false_neg
    }

    pub fn add(&mut self, other: &ConfusionCounts) {
        self.true_pos += other.true_pos;
        self.false_pos += other.false_pos;
        self.true_neg += other.true_neg;
        self.false_neg += other.false_neg;
    }
}

/// Tally one recognition result against its ground truth and accumulate over
/// problems. Each problem contributes exactly one row per candidate goal.
pub fn confusion_counts(results: &[(&RecognitionResult, &str)]) -> Result<ConfusionCounts> {
    let mut counts = ConfusionCounts::default();
    for (result, true_goal) in results {
        if !result.posterior.contains_key(*true_goal) {
            return Err(Error::invalid(format!(
                "true goal '{true_goal}' is not among the candidates"
            )));
        }
        let top = result
            .posterior
            .values()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        for (goal, p) in &result.posterior {
            let predicted = *p == top;
            let actual = goal == true_goal;
            match (predicted, actual) {
                (true, true) => counts.true_pos += 1,
                (true, false) => counts.false_pos += 1,
                (false, true) => counts.false_neg += 1,
                (false, false) => counts.true_neg += 1,
            }
        }
    }
    Ok(counts)
}

/// Accuracy, precision, recall, and F-score with the 0/0 → 0 convention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrfMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
}

pub fn prf_metrics(counts: &ConfusionCounts) -> PrfMetrics {
    let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = ratio(counts.true_pos, counts.true_pos + counts.false_pos);
    let recall = ratio(counts.true_pos, counts.true_pos + counts.false_neg);
    let f_score = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    PrfMetrics {
        accuracy: ratio(counts.true_pos + counts.true_neg, counts.total()),
        precision,
        recall,
        f_score,
    }
}

/// How long an optimal agent can act before its goal becomes identifiable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WcdReport {
    /// Longest action prefix shared by optimal plans toward two distinct
    /// goals (steps).
    pub wcd: usize,
    pub optimal_plan_length_per_goal: BTreeMap<String, usize>,
    /// wcd divided by the longest per-goal plan length.
    pub ratio: f64,
    /// State-equality radius used by the continuous approximation; 0 for
    /// exact discrete reports.
    pub delta: f64,
}

fn finish_report(
    wcd: usize,
    lengths: BTreeMap<String, usize>,
    delta: f64,
) -> WcdReport {
    let max_len = lengths.values().max().copied().unwrap_or(0);
    WcdReport {
        wcd,
        ratio: if max_len == 0 { 0.0 } else { wcd as f64 / max_len as f64 },
        optimal_plan_length_per_goal: lengths,
        delta,
    }
}

/// Exact worst-case distinctiveness on a grid: the longest action sequence
/// from `start` that begins an optimal plan for two distinct goals at once.
///
/// On a unit-cost grid, a prefix extends to an optimal plan for a goal
/// exactly when every action moves one step down that goal's distance map,
/// so a breadth-first search over states whose distances both decreased by
/// one per step finds the longest shared prefix without enumerating plans.
pub fn wcd_discrete(
    spec: &GridWorldSpec,
    start: &StateVec,
    goals: &[GoalSpec],
) -> Result<WcdReport> {
    spec.validate()?;
    if goals.is_empty() {
        return Err(Error::invalid("wcd needs at least one goal"));
    }
    let env = Env::Gridworld(spec.clone());
    let (sx, sy, so) = spec.decode_state(start)?;
    let start_key = [sx, sy, so.index() as i64];
    let mut maps = Vec::with_capacity(goals.len());
    let mut lengths = BTreeMap::new();
    for goal in goals {
        let map = grid_goal_distances(spec, &env, goal)?;
        let d = map.get(&start_key).copied().ok_or_else(|| {
            Error::invalid(format!("goal '{}' is unreachable from the start", goal.id))
        })?;
        if lengths.insert(goal.id.clone(), d).is_some() {
            return Err(Error::invalid(format!("duplicate goal id '{}'", goal.id)));
        }
        maps.push(map);
    }
    let mut wcd = 0;
    for i in 0..goals.len() {
        for j in i + 1..goals.len() {
            wcd = wcd.max(pair_wcd(spec, &maps[i], &maps[j], start_key)?);
        }
    }
    Ok(finish_report(wcd, lengths, 0.0))
}

/// Longest prefix jointly optimal for two distance maps, by synchronized BFS.
fn pair_wcd(
    spec: &GridWorldSpec,
    da: &BTreeMap<[i64; 3], usize>,
    db: &BTreeMap<[i64; 3], usize>,
    start: [i64; 3],
) -> Result<usize> {
    use std::collections::BTreeSet;
    let mut frontier = vec![start];
    let mut seen: BTreeSet<[i64; 3]> = frontier.iter().copied().collect();
    let mut depth = 0usize;
    loop {
        let mut next = Vec::new();
        for key in &frontier {
            let (Some(&a), Some(&b)) = (da.get(key), db.get(key)) else { continue };
            if a == 0 || b == 0 {
                continue; // a plan already ended here
            }
            let state = StateVec(vec![key[0] as f64, key[1] as f64, key[2] as f64]);
            for action in [ACTION_TURN_LEFT, ACTION_TURN_RIGHT, ACTION_FORWARD] {
                let out = crate::envs::gridworld_step(
                    spec,
                    &state,
                    &crate::core::ActionValue::Discrete(action),
                )?;
                if out.reason == Some(TerminalReason::Lava) {
                    continue;
                }
                let (nx, ny, no) = spec.decode_state(&out.next_state)?;
                let nkey = [nx, ny, no.index() as i64];
                if da.get(&nkey) == Some(&(a - 1))
                    && db.get(&nkey) == Some(&(b - 1))
                    && seen.insert(nkey)
                {
                    next.push(nkey);
                }
            }
        }
        if next.is_empty() {
            return Ok(depth);
        }
        depth += 1;
        frontier = next;
    }
}

/// Approximate worst-case distinctiveness from sampled trajectories: the
/// longest leading run of steps in which two trajectories toward distinct
/// goals stay within L∞ distance `delta` of each other, maximized over all
/// cross-goal trajectory pairs. Plan lengths are the shortest sampled
/// trajectory per goal. Approximate by construction: it sees only the given
/// trajectories, not all optimal behavior.
pub fn wcd_continuous_approx(
    trajectories: &BTreeMap<String, Vec<ObservationSequence>>,
    delta: f64,
) -> Result<WcdReport> {
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(Error::invalid("delta must be finite and nonnegative"));
    }
    if trajectories.is_empty() {
        return Err(Error::invalid("wcd needs at least one goal"));
    }
    let mut lengths = BTreeMap::new();
    for (goal, trajs) in trajectories {
        if trajs.is_empty() {
            return Err(Error::invalid(format!("goal '{goal}' has no trajectories")));
        }
        let min_len = trajs.iter().map(|t| t.len()).min().unwrap_or(0);
        lengths.insert(goal.clone(), min_len);
    }
    let ids: Vec<&String> = trajectories.keys().collect();
    let mut wcd = 0usize;
    for i in 0..ids.len() {
        for j in i + 1..ids.len() {
            for ta in &trajectories[ids[i]] {
                for tb in &trajectories[ids[j]] {
                    wcd = wcd.max(shared_prefix_len(ta, tb, delta)?);
                }
            }
        }
    }
    Ok(finish_report(wcd, lengths, delta))
}

fn shared_prefix_len(a: &ObservationSequence, b: &ObservationSequence, delta: f64) -> Result<usize> {
    let mut len = 0;
    for (sa, sb) in a.steps().iter().zip(b.steps()) {
        if sa.state.dim() != sb.state.dim() {
            return Err(Error::incompatible("trajectories differ in state dimension"));
        }
        let linf = sa
            .state
            .coords()
            .iter()
            .zip(sb.state.coords())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0f64, f64::max);
        if linf > delta {
            break;
        }
        len += 1;
    }
    Ok(len)
}

/// One evaluation cell outcome: a single problem scored under one metric at
/// one observability/noise level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub instance: String,
    pub metric: MetricKind,
    pub observability: f64,
    pub noise: f64,
    pub seed: u64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    pub confidence: f64,
}

/// Per-cell aggregate over seeds: mean and sample standard deviation of each
/// per-problem measure, plus metrics recomputed from the pooled confusion
/// counts of the whole cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub instance: String,
    pub metric: MetricKind,
    pub observability: f64,
    pub noise: f64,
    pub rows: usize,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub mean_precision: f64,
    pub std_precision: f64,
    pub mean_recall: f64,
    pub std_recall: f64,
    pub mean_f_score: f64,
    pub std_f_score: f64,
    pub mean_confidence: f64,
    pub std_confidence: f64,
    pub pooled_accuracy: f64,
    pub pooled_precision: f64,
    pub pooled_recall: f64,
    pub pooled_f_score: f64,
}

/// Full sweep output: one row per (metric, observability, noise, seed) plus
/// one aggregate per (metric, observability, noise).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsTable {
    pub rows: Vec<ResultRow>,
    pub aggregates: Vec<AggregateRow>,
}

/// Train one policy per configured goal with the configured learner. Seeds
/// are derived from the master seed and the goal's position in the config,
/// so retraining is reproducible goal by goal.
pub fn train_policies(cfg: &ExperimentConfig) -> Result<BTreeMap<String, GoalPolicy>> {
    cfg.validate()?;
    let trained: Vec<(String, GoalPolicy)> = cfg
        .goals
        .par_iter()
        .enumerate()
        .map(|(gi, goal)| Ok((goal.id.clone(), train_indexed(cfg, gi)?)))
        .collect::<Result<_>>()?;
    Ok(trained.into_iter().collect())
}

/// Train only the named goal, with the same derived seed it would get in a
/// full [`train_policies`] run.
pub fn train_goal(cfg: &ExperimentConfig, goal_id: &str) -> Result<GoalPolicy> {
    cfg.validate()?;
    let gi = cfg
        .goals
        .iter()
        .position(|g| g.id == goal_id)
        .ok_or_else(|| Error::invalid(format!("goal '{goal_id}' is not in the config")))?;
    train_indexed(cfg, gi)
}

fn train_indexed(cfg: &ExperimentConfig, gi: usize) -> Result<GoalPolicy> {
    let goal = &cfg.goals[gi];
    let seed = derive_seed(cfg.master_seed, "train", &[gi as u64]);
    match cfg.resolved_learner() {
        LearnerConfig::Ppo(p) => {
            let p = crate::learn::PpoConfig { seed, ..p };
            train_goal_policy(&cfg.env, &cfg.name, goal, &p)
        }
        LearnerConfig::Tabular(q) => {
            let q = crate::learn::QLearnConfig { seed, ..q };
            train_q_policy(&cfg.env, &cfg.name, goal, &q)
        }
    }
    .map_err(|e| prefix_error(e, &format!("training goal '{}'", goal.id)))
}

/// Train (if needed) and sweep the full grid. Deterministic: the same config
/// yields an identical table, row for row.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultsTable> {
    let policies = train_policies(cfg)?;
    run_experiment_with_policies(cfg, &policies)
}

/// Sweep the grid with already-trained policies (one per configured goal).
pub fn run_experiment_with_policies(
    cfg: &ExperimentConfig,
    policies: &BTreeMap<String, GoalPolicy>,
) -> Result<ResultsTable> {
    cfg.validate()?;
    let trajectories: Vec<ObservationSequence> = (0..cfg.seeds)
        .map(|i| {
            let true_goal = &cfg.goals[(i % cfg.goals.len() as u64) as usize];
            let agent = match cfg.agent {
                AgentKind::Scripted => ObservedAgent::Scripted,
                AgentKind::Policy => {
                    let policy = policies.get(&true_goal.id).ok_or_else(|| {
                        Error::incompatible(format!("no policy for goal '{}'", true_goal.id))
                    })?;
                    ObservedAgent::Policy(policy)
                }
            };
            generate_trajectory(
                &cfg.env,
                true_goal,
                agent,
                derive_seed(cfg.master_seed, "trajectory", &[i]),
                None,
            )
            .map_err(|e| prefix_error(e, &format!("seed {i}")))
        })
        .collect::<Result<_>>()?;

    let mut jobs = Vec::new();
    for metric in &cfg.metrics {
        for (oi, &observability) in cfg.observability.iter().enumerate() {
            for (ni, &noise) in cfg.noise.iter().enumerate() {
                for i in 0..cfg.seeds {
                    jobs.push((*metric, oi, observability, ni, noise, i));
                }
            }
        }
    }
    let outcomes: Vec<(ResultRow, ConfusionCounts)> = jobs
        .par_iter()
        .map(|&(metric, oi, observability, ni, noise, i)| {
            evaluate_cell(cfg, policies, &trajectories, metric, oi, observability, ni, noise, i)
                .map_err(|e| {
                    prefix_error(
                        e,
                        &format!(
                            "cell metric={metric} observability={observability} noise={noise} seed={i}"
                        ),
                    )
                })
        })
        .collect::<Result<_>>()?;

    let seeds = cfg.seeds as usize;
    let mut aggregates = Vec::with_capacity(outcomes.len() / seeds);
    for chunk in outcomes.chunks(seeds) {
        aggregates.push(aggregate_cell(chunk));
    }
    let rows = outcomes.into_iter().map(|(row, _)| row).collect();
    Ok(ResultsTable { rows, aggregates })
}

#[allow(clippy::too_many_arguments)]
fn evaluate_cell(
    cfg: &ExperimentConfig,
    policies: &BTreeMap<String, GoalPolicy>,
    trajectories: &[ObservationSequence],
    metric: MetricKind,
    oi: usize,
    observability: f64,
    ni: usize,
    noise: f64,
    i: u64,
) -> Result<(ResultRow, ConfusionCounts)> {
    let true_goal = &cfg.goals[(i % cfg.goals.len() as u64) as usize];
    let kept = degrade_observability(
        &trajectories[i as usize],
        observability,
        derive_seed(cfg.master_seed, "degrade", &[i, oi as u64]),
    )?;
    let (corrupted, _) = inject_noise(
        &kept,
        noise,
        &cfg.env,
        derive_seed(cfg.master_seed, "noise", &[i, oi as u64, ni as u64]),
    )?;
    let problem = GRProblem::new(cfg.name.clone(), cfg.goals.clone(), corrupted)?;
    let mcfg = MetricConfig {
        seed: derive_seed(cfg.master_seed, "metric", &[i, oi as u64, ni as u64]),
        ..cfg.metric_config.clone()
    };
    let result = recognize(&problem, policies, metric, &mcfg)?;
    let counts = confusion_counts(&[(&result, true_goal.id.as_str())])?;
    let prf = prf_metrics(&counts);
    let row = ResultRow {
        instance: cfg.name.clone(),
        metric,
        observability,
        noise,
        seed: i,
        accuracy: prf.accuracy,
        precision: prf.precision,
        recall: prf.recall,
        f_score: prf.f_score,
        confidence: result.confidence,
    };
    Ok((row, counts))
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

fn aggregate_cell(chunk: &[(ResultRow, ConfusionCounts)]) -> AggregateRow {
    let first = &chunk[0].0;
    let stat = |f: fn(&ResultRow) -> f64| mean_std(chunk.iter().map(move |(r, _)| f(r)));
    let (mean_accuracy, std_accuracy) = stat(|r| r.accuracy);
    let (mean_precision, std_precision) = stat(|r| r.precision);
    let (mean_recall, std_recall) = stat(|r| r.recall);
    let (mean_f_score, std_f_score) = stat(|r| r.f_score);
    let (mean_confidence, std_confidence) = stat(|r| r.confidence);
    let mut pooled = ConfusionCounts::default();
    for (_, counts) in chunk {
        pooled.add(counts);
    }
    let p = prf_metrics(&pooled);
    AggregateRow {
        instance: first.instance.clone(),
        metric: first.metric,
        observability: first.observability,
        noise: first.noise,
        rows: chunk.len(),
        mean_accuracy,
        std_accuracy,
        mean_precision,
        std_precision,
        mean_recall,
        std_recall,
        mean_f_score,
        std_f_score,
        mean_confidence,
        std_confidence,
        pooled_accuracy: p.accuracy,
        pooled_precision: p.precision,
        pooled_recall: p.recall,
        pooled_f_score: p.f_score,
    }
}

/// Keep the error's kind but prepend where in the sweep it happened.
fn prefix_error(e: Error, context: &str) -> Error {
    match e {
        Error::Invalid(m) => Error::Invalid(format!("{context}: {m}")),
        Error::Incompatible(m) => Error::Incompatible(format!("{context}: {m}")),
        Error::Diverged(m) => Error::Diverged(format!("{context}: {m}")),
        Error::Format(m) => Error::Format(format!("{context}: {m}")),
        other => Error::Format(format!("{context}: {other}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::AgentKind;
    use crate::core::ObservationStep;
    use crate::envs::Orientation;
    use crate::recognize::MetricKind;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::path::PathBuf;

    fn result_with(posterior: &[(&str, f64)]) -> RecognitionResult {
        let posterior: BTreeMap<String, f64> = posterior
            .iter()
            .map(|(k, v)| (k.to_string(), *v))
            .collect();
        let mut ranking: Vec<String> = posterior.keys().cloned().collect();
        ranking.sort_by(|a, b| posterior[b].partial_cmp(&posterior[a]).unwrap());
        RecognitionResult {
            distances: posterior.iter().map(|(k, _)| (k.clone(), 0.0)).collect(),
            confidence: 0.0,
            ranking,
            posterior,
        }
    }

    #[test]
    fn ten_three_goal_problems_six_correct() {
        let correct = result_with(&[("a", 0.8), ("b", 0.1), ("c", 0.1)]);
        let wrong = result_with(&[("a", 0.1), ("b", 0.8), ("c", 0.1)]);
        let mut batch = Vec::new();
        for _ in 0..6 {
            batch.push((&correct, "a"));
        }
        for _ in 0..4 {
            batch.push((&wrong, "a"));
        }
        let counts = confusion_counts(&batch).unwrap();
        assert_eq!(
            counts,
            ConfusionCounts { true_pos: 6, false_pos: 4, true_neg: 16, false_neg: 4 }
        );
        assert_eq!(counts.total(), 30);
        let prf = prf_metrics(&counts);
        assert_relative_eq!(prf.accuracy, 22.0 / 30.0, epsilon = 1e-12);
        assert_relative_eq!(prf.precision, 0.6, epsilon = 1e-12);
        assert_relative_eq!(prf.recall, 0.6, epsilon = 1e-12);
        assert_relative_eq!(prf.f_score, 0.6, epsilon = 1e-12);
    }

    #[test]
    fn all_correct_is_all_ones() {
        let r = result_with(&[("a", 0.9), ("b", 0.1)]);
        let counts = confusion_counts(&[(&r, "a"), (&r, "a"), (&r, "a")]).unwrap();
        assert_eq!(counts.false_pos, 0);
        assert_eq!(counts.false_neg, 0);
        let prf = prf_metrics(&counts);
        assert_eq!(
            (prf.accuracy, prf.precision, prf.recall, prf.f_score),
            (1.0, 1.0, 1.0, 1.0)
        );
    }

    #[test]
    fn a_tie_counts_every_argmax_goal_as_positive() {
        let tie = result_with(&[("a", 0.5), ("b", 0.5)]);
        let counts = confusion_counts(&[(&tie, "a")]).unwrap();
        assert_eq!(
            counts,
            ConfusionCounts { true_pos: 1, false_pos: 1, true_neg: 0, false_neg: 0 }
        );
        let prf = prf_metrics(&counts);
        assert_relative_eq!(prf.precision, 0.5, epsilon = 1e-12);
        assert_relative_eq!(prf.recall, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_counts_fall_back_to_zero() {
        let prf = prf_metrics(&ConfusionCounts::default());
        assert_eq!(
            (prf.accuracy, prf.precision, prf.recall, prf.f_score),
            (0.0, 0.0, 0.0, 0.0)
        );
    }

    #[test]
    fn unknown_true_goal_is_rejected() {
        let r = result_with(&[("a", 0.9), ("b", 0.1)]);
        assert!(confusion_counts(&[(&r, "zzz")]).is_err());
    }

    fn start_state(x: usize, y: usize, o: Orientation) -> StateVec {
        StateVec(vec![x as f64, y as f64, o.index() as f64])
    }

    #[test]
    fn opposite_goals_share_no_prefix() {
        let spec = GridWorldSpec::empty(3, 3);
        let start = start_state(1, 1, Orientation::N);
        let goals = vec![
            GoalSpec::new("north", vec![1.0, 2.0], 0.0).unwrap(),
            GoalSpec::new("south", vec![1.0, 0.0], 0.0).unwrap(),
        ];
        let report = wcd_discrete(&spec, &start, &goals).unwrap();
        assert_eq!(report.wcd, 0);
        assert_eq!(report.optimal_plan_length_per_goal["north"], 1);
        assert_eq!(report.optimal_plan_length_per_goal["south"], 3);
        assert_eq!(report.delta, 0.0);
        assert_eq!(report.ratio, 0.0);
    }

    #[test]
    fn corridor_then_symmetric_branch_shares_the_corridor() {
        // Straight run of 2, then one goal left and one right: both optimal
        // plans start F F, so the shared prefix is exactly the corridor.
        let spec = GridWorldSpec::empty(3, 3);
        let start = start_state(1, 0, Orientation::N);
        let goals = vec![
            GoalSpec::new("west", vec![0.0, 2.0], 0.0).unwrap(),
            GoalSpec::new("east", vec![2.0, 2.0], 0.0).unwrap(),
        ];
        let report = wcd_discrete(&spec, &start, &goals).unwrap();
        assert_eq!(report.wcd, 2);
        assert_eq!(report.optimal_plan_length_per_goal["west"], 4);
        assert_eq!(report.optimal_plan_length_per_goal["east"], 4);
        assert_relative_eq!(report.ratio, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn a_single_goal_has_no_ambiguity() {
        let spec = GridWorldSpec::empty(3, 3);
        let start = start_state(0, 0, Orientation::N);
        let goals = vec![GoalSpec::new("g", vec![2.0, 2.0], 0.0).unwrap()];
        let report = wcd_discrete(&spec, &start, &goals).unwrap();
        assert_eq!(report.wcd, 0);
        assert!(report.wcd <= *report.optimal_plan_length_per_goal.values().max().unwrap());
    }

    #[test]
    fn unreachable_goal_fails_wcd() {
        let spec = GridWorldSpec {
            walls: vec![[1, 0], [1, 1], [1, 2]],
            ..GridWorldSpec::empty(3, 3)
        };
        let start = start_state(0, 0, Orientation::N);
        let goals = vec![
            GoalSpec::new("near", vec![0.0, 2.0], 0.0).unwrap(),
            GoalSpec::new("cutoff", vec![2.0, 0.0], 0.0).unwrap(),
        ];
        assert!(wcd_discrete(&spec, &start, &goals).is_err());
    }

    fn traj_from_states(states: &[f64]) -> ObservationSequence {
        let steps = states
            .iter()
            .enumerate()
            .map(|(t, x)| ObservationStep { t, state: StateVec(vec![*x]), action: None })
            .collect();
        ObservationSequence::new(steps, states.len()).unwrap()
    }

    #[test]
    fn continuous_wcd_counts_delta_close_prefixes() {
        let mut trajs = BTreeMap::new();
        trajs.insert("a".to_string(), vec![traj_from_states(&[0.0, 0.01, 0.02, 0.03, 0.05])]);
        trajs.insert("b".to_string(), vec![traj_from_states(&[0.0, 0.011, 0.021, 0.2])]);
        let report = wcd_continuous_approx(&trajs, 0.005).unwrap();
        assert_eq!(report.wcd, 3);
        assert_eq!(report.delta, 0.005);
        assert_eq!(report.optimal_plan_length_per_goal["a"], 5);
        assert_eq!(report.optimal_plan_length_per_goal["b"], 4);
        assert_relative_eq!(report.ratio, 3.0 / 5.0, epsilon = 1e-12);

        // delta 0 with distinct coordinates: nothing matches.
        let zero = wcd_continuous_approx(&trajs, 0.0).unwrap();
        assert_eq!(zero.wcd, 1); // both start exactly at 0.0
        let mut distinct = trajs.clone();
        distinct.insert("b".to_string(), vec![traj_from_states(&[0.5, 0.6])]);
        assert_eq!(wcd_continuous_approx(&distinct, 0.0).unwrap().wcd, 0);

        // delta large enough to merge everything saturates at the shorter
        // trajectory of the pair.
        let all = wcd_continuous_approx(&trajs, 10.0).unwrap();
        assert_eq!(all.wcd, 4);
    }

    #[test]
    fn continuous_wcd_rejects_empty_sets() {
        let mut trajs: BTreeMap<String, Vec<ObservationSequence>> = BTreeMap::new();
        trajs.insert("a".to_string(), vec![]);
        assert!(wcd_continuous_approx(&trajs, 0.1).is_err());
        assert!(wcd_continuous_approx(&BTreeMap::new(), 0.1).is_err());
        let mut one = BTreeMap::new();
        one.insert("a".to_string(), vec![traj_from_states(&[0.0])]);
        assert!(wcd_continuous_approx(&one, f64::NAN).is_err());
        assert!(wcd_continuous_approx(&one, -0.5).is_err());
    }

    fn tiny_experiment() -> ExperimentConfig {
        ExperimentConfig {
            name: "tiny".into(),
            env: Env::Gridworld(GridWorldSpec::empty(4, 4)),
            goals: vec![
                GoalSpec::new("east", vec![3.0, 0.0], 0.0).unwrap(),
                GoalSpec::new("north", vec![0.0, 3.0], 0.0).unwrap(),
            ],
            learner: Some(LearnerConfig::Tabular(crate::learn::QLearnConfig {
                episodes: 60,
                alpha: 0.3,
                ..crate::learn::QLearnConfig::grid_default()
            })),
            metrics: vec![MetricKind::Wasserstein, MetricKind::Kl],
            observability: vec![50.0, 100.0],
            noise: vec![0.0],
            seeds: 2,
            master_seed: 5,
            agent: AgentKind::Scripted,
            metric_config: MetricConfig { mc_samples: 8, ..MetricConfig::default() },
            out_dir: PathBuf::from("runs"),
        }
    }

    #[test]
    fn experiment_rows_follow_the_grid_arithmetic() {
        let cfg = tiny_experiment();
        let table = run_experiment(&cfg).unwrap();
        // 2 metrics x 2 observability x 1 noise x 2 seeds.
        assert_eq!(table.rows.len(), 8);
        assert_eq!(table.aggregates.len(), 4);
        for agg in &table.aggregates {
            assert_eq!(agg.rows, 2);
        }
        // Rows are ordered by (metric, observability, noise, seed).
        for pair in table.rows.chunks(2) {
            assert_eq!(pair[0].metric, pair[1].metric);
            assert_eq!(pair[0].observability, pair[1].observability);
            assert_eq!(pair[0].seed, 0);
            assert_eq!(pair[1].seed, 1);
        }
        for row in &table.rows {
            assert_eq!(row.instance, "tiny");
            for v in [row.accuracy, row.precision, row.recall, row.f_score] {
                assert!((0.0..=1.0).contains(&v));
            }
        }
    }

    #[test]
    fn experiments_are_reproducible() {
        let cfg = tiny_experiment();
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn aggregates_recompute_from_rows() {
        let cfg = tiny_experiment();
        let table = run_experiment(&cfg).unwrap();
        for agg in &table.aggregates {
            let cell: Vec<&ResultRow> = table
                .rows
                .iter()
                .filter(|r| {
                    r.metric == agg.metric
                        && r.observability == agg.observability
                        && r.noise == agg.noise
                })
                .collect();
            assert_eq!(cell.len(), agg.rows);
            let n = cell.len() as f64;
            let mean: f64 = cell.iter().map(|r| r.f_score).sum::<f64>() / n;
            let var: f64 =
                cell.iter().map(|r| (r.f_score - mean) * (r.f_score - mean)).sum::<f64>()
                    / (n - 1.0);
            assert!((mean - agg.mean_f_score).abs() < 1e-12);
            assert!((var.sqrt() - agg.std_f_score).abs() < 1e-12);
        }
    }

    proptest! {
        /// Scores stay inside [0, 1] for arbitrary counts.
        #[test]
        fn prf_outputs_are_probabilities(tp in 0u64..50, fp in 0u64..50, tn in 0u64..50, fneg in 0u64..50) {
            let prf = prf_metrics(&ConfusionCounts {
                true_pos: tp, false_pos: fp, true_neg: tn, false_neg: fneg,
            });
            for v in [prf.accuracy, prf.precision, prf.recall, prf.f_score] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }

        /// Without ties, per-problem accuracy follows the closed form
        /// ((|G| - 2) + 2 * correct) / |G|.
        #[test]
        fn tie_free_accuracy_closed_form(
            n_goals in 2usize..6,
            winner in 0usize..6,
            true_goal in 0usize..6,
        ) {
            let winner = winner % n_goals;
            let true_goal = true_goal % n_goals;
            let pairs: Vec<(&str, f64)> = (0..n_goals)
                .map(|g| (["a","b","c","d","e"][g], if g == winner { 0.9 } else { 0.1 / (g + 2) as f64 }))
                .collect();
            let r = result_with(&pairs);
            let true_id = ["a","b","c","d","e"][true_goal];
            let counts = confusion_counts(&[(&r, true_id)]).unwrap();
            let correct = if winner == true_goal { 1.0 } else { 0.0 };
            let expected = ((n_goals as f64 - 2.0) + 2.0 * correct) / n_goals as f64;
            prop_assert!((prf_metrics(&counts).accuracy - expected).abs() < 1e-12);
        }
    }
}
