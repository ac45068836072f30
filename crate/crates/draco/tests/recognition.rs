//! End-to-end recognition: trajectories generated toward one goal must score
//! closer to that goal's policy than to the other's, for every metric.

use std::collections::BTreeMap;

use draco::config::{ExperimentConfig, LearnerConfig};
use draco::core::{GRProblem, GoalSpec};
use draco::envs::{Env, GridWorldSpec, PointReachSpec};
use draco::evalkit::train_policies;
use draco::learn::{PpoConfig, QLearnConfig};
use draco::obsgen::{degrade_observability, generate_trajectory, ObservedAgent};
use draco::recognize::{recognize, sequence_distance, MetricConfig, MetricKind};

fn grid_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        env: Env::Gridworld(GridWorldSpec::empty(5, 5)),
        goals: vec![
            GoalSpec::new("east", vec![4.0, 0.0], 0.0).unwrap(),
            GoalSpec::new("north", vec![0.0, 4.0], 0.0).unwrap(),
        ],
        learner: Some(LearnerConfig::Tabular(QLearnConfig {
            episodes: 4000,
            alpha: 0.2,
            ..QLearnConfig::grid_default()
        })),
        master_seed: 2,
        ..minimal()
    };
    cfg.name = "grid5".into();
    cfg
}

fn minimal() -> ExperimentConfig {
    serde_json::from_str(
        r#"{
            "env": {"type": "gridworld", "width": 3, "height": 3},
            "goals": [
                {"id": "a", "target": [2.0, 0.0], "tolerance": 0.0},
                {"id": "b", "target": [0.0, 2.0], "tolerance": 0.0}
            ]
        }"#,
    )
    .unwrap()
}

/// Count, over 10 trajectory seeds toward `true_goal`, how often the true
/// goal's policy is strictly closer than the other goal's.
fn preference_hits(
    cfg: &ExperimentConfig,
    policies: &BTreeMap<String, draco::learn::GoalPolicy>,
    true_goal: &str,
    metric: MetricKind,
) -> usize {
    let goal = cfg.goals.iter().find(|g| g.id == true_goal).unwrap();
    let mcfg = MetricConfig { mc_samples: 64, ..MetricConfig::default() };
    let mut hits = 0;
    for seed in 0..10u64 {
        let obs = generate_trajectory(&cfg.env, goal, ObservedAgent::Scripted, seed, None).unwrap();
        let mut dist = BTreeMap::new();
        for (id, policy) in policies {
            dist.insert(id.clone(), sequence_distance(policy, &obs, metric, &mcfg).unwrap());
        }
        let others = dist.iter().filter(|(id, _)| id.as_str() != true_goal);
        if others.clone().count() > 0
            && others.clone().all(|(_, d)| dist[true_goal] < *d)
        {
            hits += 1;
        }
    }
    hits
}

#[test]
fn every_metric_prefers_the_pursued_goal_on_the_grid() {
    let cfg = grid_config();
    let policies = train_policies(&cfg).unwrap();
    for metric in [
        MetricKind::Wasserstein,
        MetricKind::Zscore,
        MetricKind::StateOnly,
        MetricKind::Kl,
        MetricKind::MeanAction,
    ] {
        for goal in ["east", "north"] {
            let hits = preference_hits(&cfg, &policies, goal, metric);
            assert!(
                hits >= 9,
                "{metric} preferred true goal '{goal}' in only {hits}/10 runs"
            );
        }
    }
}

#[test]
fn continuous_metrics_prefer_the_pursued_goal() {
    let mut cfg = grid_config();
    cfg.name = "reach2".into();
    cfg.env = Env::Pointreach(PointReachSpec::preset(2));
    cfg.goals = vec![
        GoalSpec::new("a", vec![0.9, 0.2], 0.05).unwrap(),
        GoalSpec::new("b", vec![0.2, 0.9], 0.05).unwrap(),
    ];
    // Gaussian policies carry the moments Wasserstein and Z-score need.
    cfg.learner = Some(LearnerConfig::Ppo(PpoConfig {
        total_env_steps: 20_000,
        ..PpoConfig::pointreach_default()
    }));
    let gaussian = train_policies(&cfg).unwrap();
    for metric in [MetricKind::Wasserstein, MetricKind::Zscore, MetricKind::StateOnly] {
        for goal in ["a", "b"] {
            let hits = preference_hits(&cfg, &gaussian, goal, metric);
            assert!(
                hits >= 9,
                "{metric} preferred true goal '{goal}' in only {hits}/10 runs"
            );
        }
    }
    // The action-mean metric is the tabular baseline's; KL does not apply to
    // continuous observed actions at all.
    cfg.learner = Some(LearnerConfig::Tabular(QLearnConfig {
        episodes: 4000,
        alpha: 0.01,
        discretize_factor: 0.03,
        ..QLearnConfig::grid_default()
    }));
    let tabular = train_policies(&cfg).unwrap();
    for goal in ["a", "b"] {
        let hits = preference_hits(&cfg, &tabular, goal, MetricKind::MeanAction);
        assert!(
            hits >= 9,
            "mean_action preferred true goal '{goal}' in only {hits}/10 runs"
        );
    }
}

#[test]
fn recognition_survives_partial_observability() {
    let cfg = grid_config();
    let policies = train_policies(&cfg).unwrap();
    let goal = &cfg.goals[0];
    let mcfg = MetricConfig::default();
    let mut correct = 0;
    for seed in 0..10u64 {
        let full = generate_trajectory(&cfg.env, goal, ObservedAgent::Scripted, seed, None).unwrap();
        let half = degrade_observability(&full, 50.0, seed).unwrap();
        let problem =
            GRProblem::new(cfg.name.clone(), cfg.goals.clone(), half).unwrap();
        let result = recognize(&problem, &policies, MetricKind::Wasserstein, &mcfg).unwrap();
        if result.ranking[0] == goal.id {
            correct += 1;
        }
    }
    assert!(correct >= 8, "true goal top-ranked in only {correct}/10 half-visible runs");
}
