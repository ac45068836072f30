//! Command-line front end for the goal-recognition pipeline.
//!
//! Subcommands mirror the workflow: `train` policies per goal, `observe` an
//! agent to record a trajectory, `degrade` it with partial observability and
//! action noise, `recognize` the pursued goal, `evaluate` a full sweep, and
//! `wcd` to measure how long optimal behavior stays ambiguous. Exit codes:
//! 0 success, 1 usage error, 2 runtime failure. Set `DRACO_LOG` (e.g. `info`,
//! `debug`) to see progress logging on standard error.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use draco::config::{AgentKind, ExperimentConfig};
use draco::core::{GRProblem, ObservationSequence};
use draco::envs::Env;
use draco::evalkit::{
    run_experiment_with_policies, train_goal, train_policies, wcd_continuous_approx,
    wcd_discrete, WcdReport,
};
use draco::files::{
    load_policy, load_trajectory, policy_file_name, save_policy, save_results, save_trajectory,
    TrajectoryFile,
};
use draco::learn::GoalPolicy;
use draco::obsgen::{degrade_observability, generate_trajectory, inject_noise, ObservedAgent};
use draco::recognize::{recognize, MetricConfig, MetricKind};
use draco::seeds::derive_seed;
use draco::{Error, Result};

#[derive(Parser)]
#[command(
    name = "draco",
    version,
    about = "Goal recognition with per-goal policies: train, observe, degrade, recognize, evaluate, wcd"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one policy per goal and write them as policy files
    Train(TrainArgs),
    /// Record an observed-agent trajectory toward one goal
    Observe(ObserveArgs),
    /// Thin out a stored trajectory and optionally corrupt some actions
    Degrade(DegradeArgs),
    /// Infer which goal a trajectory pursues, printing JSON to stdout
    Recognize(RecognizeArgs),
    /// Sweep the observability/noise grid and write results.csv + results.json
    Evaluate(EvaluateArgs),
    /// Report worst-case distinctiveness of the configured goals
    Wcd(WcdArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Experiment config (JSON)
    #[arg(long)]
    config: PathBuf,
    /// Train only this goal id instead of all goals
    #[arg(long)]
    goal: Option<String>,
    /// Output directory for policy files (default: <config out_dir>/policies)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ObserveArgs {
    /// Experiment config (JSON)
    #[arg(long)]
    config: PathBuf,
    /// Goal id the observed agent pursues
    #[arg(long)]
    goal: String,
    /// Trajectory seed (default: the config's master seed)
    #[arg(long)]
    seed: Option<u64>,
    /// Policy directory, required when the config's agent kind is "policy"
    #[arg(long)]
    policies: Option<PathBuf>,
    /// Output trajectory file (default: <config out_dir>/<goal>.trajectory.jsonl)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DegradeArgs {
    /// Input trajectory file
    #[arg(long = "in")]
    input: PathBuf,
    /// Percentage of steps to keep, in [0, 100]
    #[arg(long)]
    observability: f64,
    /// Percentage of kept actions to replace with suboptimal ones
    #[arg(long)]
    noise: Option<f64>,
    /// Experiment config; required with --noise to know the action space
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output trajectory file
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RecognizeArgs {
    /// Directory holding one <goal>.policy.json per candidate goal
    #[arg(long)]
    policies: PathBuf,
    /// Trajectory file to explain
    #[arg(long)]
    trajectory: PathBuf,
    /// Distance metric: wasserstein, zscore, state_only, kl, or mean_action
    #[arg(long, value_parser = parse_metric)]
    metric: MetricKind,
    /// Posterior temperature (higher sharpens toward the nearest goal)
    #[arg(long)]
    beta: Option<f64>,
    /// Monte Carlo draws per observation for the wasserstein metric
    #[arg(long)]
    mc_samples: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Experiment config (JSON)
    #[arg(long)]
    config: PathBuf,
    /// Reuse trained policies from this directory instead of training
    #[arg(long)]
    policies: Option<PathBuf>,
    /// Output directory for results files (default: the config's out_dir)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct WcdArgs {
    /// Experiment config (JSON)
    #[arg(long)]
    config: PathBuf,
    /// State-equality radius for continuous environments (default 0.01)
    #[arg(long)]
    delta: Option<f64>,
    /// Trajectories sampled per goal for the continuous approximation
    #[arg(long, default_value_t = 5)]
    samples: u64,
}

fn parse_metric(s: &str) -> Result<MetricKind> {
    MetricKind::from_str(s)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Usage problems exit 1; --help and --version are not errors.
            let code = u8::from(e.use_stderr());
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::new().filter("DRACO_LOG")).init();
    let result = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Observe(args) => cmd_observe(args),
        Command::Degrade(args) => cmd_degrade(args),
        Command::Recognize(args) => cmd_recognize(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Wcd(args) => cmd_wcd(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let cfg: ExperimentConfig = serde_json::from_str(&text)
        .map_err(|e| Error::format(format!("{}: {e}", path.display())))?;
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let out_dir = args.out.unwrap_or_else(|| cfg.out_dir.join("policies"));
    // Train everything before touching the filesystem so a failure leaves no
    // partial artifact set behind.
    let policies: Vec<(String, GoalPolicy)> = match &args.goal {
        Some(goal_id) => vec![(goal_id.clone(), train_goal(&cfg, goal_id)?)],
        None => train_policies(&cfg)?.into_iter().collect(),
    };
    for (goal_id, policy) in &policies {
        let path = out_dir.join(policy_file_name(goal_id));
        save_policy(&path, policy)?;
        println!("{}", path.display());
    }
    Ok(())
}

/// Look up the goal's policy file in `dir`, failing with the goal's name.
fn load_goal_policy(dir: &Path, goal_id: &str) -> Result<GoalPolicy> {
    let path = dir.join(policy_file_name(goal_id));
    if !path.exists() {
        return Err(Error::incompatible(format!(
            "no policy for goal '{goal_id}' (expected {})",
            path.display()
        )));
    }
    load_policy(&path)
}

fn cmd_observe(args: ObserveArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let goal = cfg
        .goals
        .iter()
        .find(|g| g.id == args.goal)
        .ok_or_else(|| Error::invalid(format!("goal '{}' is not in the config", args.goal)))?;
    let policy;
    let agent = match cfg.agent {
        AgentKind::Scripted => ObservedAgent::Scripted,
        AgentKind::Policy => {
            let dir = args.policies.as_deref().ok_or_else(|| {
                Error::invalid("the config's agent kind is 'policy'; pass --policies")
            })?;
            policy = load_goal_policy(dir, &args.goal)?;
            ObservedAgent::Policy(&policy)
        }
    };
    let seed = args.seed.unwrap_or(cfg.master_seed);
    let observations = generate_trajectory(&cfg.env, goal, agent, seed, None)?;
    let out = args
        .out
        .unwrap_or_else(|| cfg.out_dir.join(format!("{}.trajectory.jsonl", args.goal)));
    save_trajectory(
        &out,
        &TrajectoryFile {
            env_id: cfg.name.clone(),
            goals: cfg.goals.clone(),
            true_goal: Some(args.goal),
            observations,
        },
    )?;
    println!("{}", out.display());
    Ok(())
}

fn cmd_degrade(args: DegradeArgs) -> Result<()> {
    let traj = load_trajectory(&args.input)?;
    let kept = degrade_observability(
        &traj.observations,
        args.observability,
        derive_seed(args.seed, "degrade", &[]),
    )?;
    let observations = match args.noise {
        None => kept,
        Some(noise) => {
            let config_path = args.config.as_deref().ok_or_else(|| {
                Error::invalid("--noise needs --config to know the action space")
            })?;
            let cfg = load_config(config_path)?;
            if cfg.name != traj.env_id {
                return Err(Error::incompatible(format!(
                    "trajectory was recorded in '{}' but the config describes '{}'",
                    traj.env_id, cfg.name
                )));
            }
            let (noisy, _) =
                inject_noise(&kept, noise, &cfg.env, derive_seed(args.seed, "noise", &[]))?;
            noisy
        }
    };
    save_trajectory(&args.out, &TrajectoryFile { observations, ..traj })?;
    println!("{}", args.out.display());
    Ok(())
}

fn cmd_recognize(args: RecognizeArgs) -> Result<()> {
    let traj = load_trajectory(&args.trajectory)?;
    let mut policies = BTreeMap::new();
    for goal in &traj.goals {
        policies.insert(goal.id.clone(), load_goal_policy(&args.policies, &goal.id)?);
    }
    let mut cfg = MetricConfig { seed: args.seed, ..MetricConfig::default() };
    if let Some(beta) = args.beta {
        cfg.beta = beta;
    }
    if let Some(mc) = args.mc_samples {
        cfg.mc_samples = mc;
    }
    let problem = GRProblem::new(traj.env_id, traj.goals, traj.observations)?;
    let result = recognize(&problem, &policies, args.metric, &cfg)?;
    println!("{}", serde_json::to_string_pretty(&result)?);
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let policies = match &args.policies {
        Some(dir) => {
            let mut map = BTreeMap::new();
            for goal in &cfg.goals {
                map.insert(goal.id.clone(), load_goal_policy(dir, &goal.id)?);
            }
            map
        }
        None => train_policies(&cfg)?,
    };
    let table = run_experiment_with_policies(&cfg, &policies)?;
    let out_dir = args.out.unwrap_or_else(|| cfg.out_dir.clone());
    let (csv_path, json_path) = save_results(&out_dir, &table)?;
    println!("{}", csv_path.display());
    println!("{}", json_path.display());
    Ok(())
}

fn cmd_wcd(args: WcdArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let report: WcdReport = match &cfg.env {
        Env::Gridworld(spec) => wcd_discrete(spec, &spec.start_state(), &cfg.goals)?,
        Env::Pointreach(_) => {
            // No exact plan enumeration in continuous space: sample scripted
            // near-optimal trajectories per goal and compare their prefixes.
            let mut sets: BTreeMap<String, Vec<ObservationSequence>> = BTreeMap::new();
            for (gi, goal) in cfg.goals.iter().enumerate() {
                let mut trajs = Vec::with_capacity(args.samples as usize);
                for k in 0..args.samples {
                    let seed = derive_seed(cfg.master_seed, "wcd-traj", &[gi as u64, k]);
                    trajs.push(generate_trajectory(
                        &cfg.env,
                        goal,
                        ObservedAgent::Scripted,
                        seed,
                        None,
                    )?);
                }
                sets.insert(goal.id.clone(), trajs);
            }
            wcd_continuous_approx(&sets, args.delta.unwrap_or(0.01))?
        }
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}
