//! On-disk artifact formats and atomic persistence.
//!
//! Three artifact kinds: policy files (JSON, one per goal), trajectory files
//! (JSONL, header line plus one line per step), and results tables (CSV plus
//! a JSON mirror that also carries the aggregates). Every writer goes through
//! a temp-file-and-rename so a crash never leaves a half-written artifact,
//! and every error names the file it came from.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::core::{GoalSpec, ObservationSequence, ObservationStep};
use crate::error::{Error, Result};
use crate::evalkit::{AggregateRow, ResultRow, ResultsTable};
use crate::learn::GoalPolicy;

/// Bumped when a persisted layout changes incompatibly.
pub const FORMAT_VERSION: u32 = 1;

/// Conventional file name for a goal's policy inside a policy directory.
pub fn policy_file_name(goal_id: &str) -> String {
    format!("{goal_id}.policy.json")
}

/// Write `bytes` to `path` via a sibling temp file and an atomic rename,
/// creating parent directories as needed.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&parent).map_err(|e| Error::io(path, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(&parent).map_err(|e| Error::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct PolicyFile {
    format_version: u32,
    #[serde(flatten)]
    policy: GoalPolicy,
}

pub fn save_policy(path: &Path, policy: &GoalPolicy) -> Result<()> {
    let file = PolicyFile { format_version: FORMAT_VERSION, policy: policy.clone() };
    let mut bytes = serde_json::to_vec_pretty(&file)?;
    bytes.push(b'\n');
    atomic_write(path, &bytes)
}

pub fn load_policy(path: &Path) -> Result<GoalPolicy> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let file: PolicyFile = serde_json::from_slice(&bytes)
        .map_err(|e| Error::format(format!("{}: {e}", path.display())))?;
    check_version(path, file.format_version)?;
    Ok(file.policy)
}

fn check_version(path: &Path, version: u32) -> Result<()> {
    if version != FORMAT_VERSION {
        return Err(Error::format(format!(
            "{}: format version {version} not supported (this build reads {FORMAT_VERSION})",
            path.display()
        )));
    }
    Ok(())
}

/// A stored observation sequence together with the problem context it was
/// recorded in. The horizon lives inside `observations`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryFile {
    pub env_id: String,
    pub goals: Vec<GoalSpec>,
    /// Which goal the observed agent was actually pursuing, when known.
    pub true_goal: Option<String>,
    pub observations: ObservationSequence,
}

#[derive(Serialize, Deserialize)]
struct TrajectoryHeader {
    env_id: String,
    goals: Vec<GoalSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    true_goal: Option<String>,
    horizon: usize,
}

pub fn save_trajectory(path: &Path, traj: &TrajectoryFile) -> Result<()> {
    if let Some(tg) = &traj.true_goal {
        if !traj.goals.iter().any(|g| &g.id == tg) {
            return Err(Error::invalid(format!(
                "true goal '{tg}' is not among the trajectory's goals"
            )));
        }
    }
    let header = TrajectoryHeader {
        env_id: traj.env_id.clone(),
        goals: traj.goals.clone(),
        true_goal: traj.true_goal.clone(),
        horizon: traj.observations.horizon(),
    };
    let mut bytes = serde_json::to_vec(&header)?;
    bytes.push(b'\n');
    for step in traj.observations.steps() {
        serde_json::to_writer(&mut bytes, step)?;
        bytes.push(b'\n');
    }
    atomic_write(path, &bytes)
}

pub fn load_trajectory(path: &Path) -> Result<TrajectoryFile> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    let (_, header_line) = lines
        .next()
        .ok_or_else(|| Error::format(format!("{}: empty trajectory file", path.display())))?;
    let header: TrajectoryHeader = serde_json::from_str(header_line)
        .map_err(|e| Error::format(format!("{}:1: bad header: {e}", path.display())))?;
    let mut steps = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let step: ObservationStep = serde_json::from_str(line).map_err(|e| {
            Error::format(format!("{}:{}: bad step: {e}", path.display(), idx + 1))
        })?;
        steps.push(step);
    }
    let observations = ObservationSequence::new(steps, header.horizon)
        .map_err(|e| Error::format(format!("{}: {e}", path.display())))?;
    Ok(TrajectoryFile {
        env_id: header.env_id,
        goals: header.goals,
        true_goal: header.true_goal,
        observations,
    })
}

#[derive(Serialize, Deserialize)]
struct ResultsFile {
    format_version: u32,
    rows: Vec<ResultRow>,
    aggregates: Vec<AggregateRow>,
}

/// Write `results.csv` (rows only, spreadsheet-friendly) and `results.json`
/// (rows plus aggregates) into `dir`. Returns the two paths.
pub fn save_results(dir: &Path, table: &ResultsTable) -> Result<(PathBuf, PathBuf)> {
    let csv_path = dir.join("results.csv");
    let json_path = dir.join("results.json");

    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in &table.rows {
        writer.serialize(row)?;
    }
    let csv_bytes = writer
        .into_inner()
        .map_err(|e| Error::format(format!("{}: {e}", csv_path.display())))?;
    atomic_write(&csv_path, &csv_bytes)?;

    let file = ResultsFile {
        format_version: FORMAT_VERSION,
        rows: table.rows.clone(),
        aggregates: table.aggregates.clone(),
    };
    let mut json_bytes = serde_json::to_vec_pretty(&file)?;
    json_bytes.push(b'\n');
    atomic_write(&json_path, &json_bytes)?;
    Ok((csv_path, json_path))
}

pub fn load_results(path: &Path) -> Result<ResultsTable> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let file: ResultsFile = serde_json::from_slice(&bytes)
        .map_err(|e| Error::format(format!("{}: {e}", path.display())))?;
    check_version(path, file.format_version)?;
    Ok(ResultsTable { rows: file.rows, aggregates: file.aggregates })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::{ActionValue, StateVec};
    use crate::envs::Env;
    use crate::learn::{train_q_policy, QLearnConfig};
    use crate::recognize::MetricKind;

    fn tmpdir() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    fn trained_policy() -> GoalPolicy {
        let env = Env::Gridworld(crate::envs::GridWorldSpec::empty(3, 3));
        let goal = GoalSpec::new("g", vec![2.0, 2.0], 0.0).unwrap();
        let cfg = QLearnConfig { episodes: 25, ..QLearnConfig::grid_default() };
        train_q_policy(&env, "grid3", &goal, &cfg).unwrap()
    }

    #[test]
    fn policy_round_trip_is_exact() {
        let dir = tmpdir();
        let path = dir.path().join(policy_file_name("g"));
        let policy = trained_policy();
        save_policy(&path, &policy).unwrap();
        let loaded = load_policy(&path).unwrap();
        // Training visit counters are not persisted; everything else, floats
        // included, survives bit for bit (serialization drops the counters,
        // so comparing serialized forms checks exactly the persisted part).
        assert_eq!(
            serde_json::to_string(&policy).unwrap(),
            serde_json::to_string(&loaded).unwrap()
        );
        // Save-load-save produces identical bytes: float formatting is
        // shortest-round-trip, so nothing drifts.
        let first = fs::read(&path).unwrap();
        save_policy(&path, &loaded).unwrap();
        assert_eq!(first, fs::read(&path).unwrap());
    }

    #[test]
    fn policy_file_carries_version_and_backend_tag() {
        let dir = tmpdir();
        let path = dir.path().join("p.json");
        save_policy(&path, &trained_policy()).unwrap();
        let raw: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(raw["format_version"], 1);
        assert_eq!(raw["backend"], "qtable");
        assert_eq!(raw["env_id"], "grid3");
        assert!(raw["meta"]["seed"].is_number());
    }

    #[test]
    fn future_versions_are_refused() {
        let dir = tmpdir();
        let path = dir.path().join("p.json");
        save_policy(&path, &trained_policy()).unwrap();
        let mut raw: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        raw["format_version"] = serde_json::json!(99);
        fs::write(&path, serde_json::to_vec(&raw).unwrap()).unwrap();
        let err = load_policy(&path).unwrap_err();
        assert!(matches!(err, Error::Format(_)), "got {err:?}");
        assert!(err.to_string().contains("version 99"));
    }

    #[test]
    fn missing_and_garbage_files_name_the_path() {
        let dir = tmpdir();
        let missing = dir.path().join("nope.json");
        let err = load_policy(&missing).unwrap_err();
        assert!(err.to_string().contains("nope.json"));

        let garbage = dir.path().join("garbage.json");
        fs::write(&garbage, b"{not json").unwrap();
        let err = load_policy(&garbage).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
        assert!(err.to_string().contains("garbage.json"));
    }

    fn sample_trajectory() -> TrajectoryFile {
        let steps = vec![
            ObservationStep {
                t: 0,
                state: StateVec(vec![0.0, 0.0, 1.0]),
                action: Some(ActionValue::Discrete(2)),
            },
            ObservationStep {
                t: 2,
                state: StateVec(vec![1.0, 0.0, 1.0]),
                action: None,
            },
            ObservationStep {
                t: 5,
                state: StateVec(vec![2.0, 0.0, 1.0]),
                action: Some(ActionValue::Continuous(vec![0.01, -0.5])),
            },
        ];
        TrajectoryFile {
            env_id: "grid3".into(),
            goals: vec![
                GoalSpec::new("a", vec![2.0, 0.0], 0.0).unwrap(),
                GoalSpec::new("b", vec![0.0, 2.0], 0.0).unwrap(),
            ],
            true_goal: Some("a".into()),
            observations: ObservationSequence::new(steps, 12).unwrap(),
        }
    }

    #[test]
    fn trajectory_round_trip_is_exact() {
        let dir = tmpdir();
        let path = dir.path().join("t.jsonl");
        let traj = sample_trajectory();
        save_trajectory(&path, &traj).unwrap();
        let loaded = load_trajectory(&path).unwrap();
        assert_eq!(traj, loaded);
        let first = fs::read(&path).unwrap();
        save_trajectory(&path, &loaded).unwrap();
        assert_eq!(first, fs::read(&path).unwrap());
    }

    #[test]
    fn trajectory_file_is_one_json_value_per_line() {
        let dir = tmpdir();
        let path = dir.path().join("t.jsonl");
        save_trajectory(&path, &sample_trajectory()).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4); // header + 3 steps
        let header: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
        assert_eq!(header["horizon"], 12);
        assert_eq!(header["true_goal"], "a");
        let step: serde_json::Value = serde_json::from_str(lines[1]).unwrap();
        assert_eq!(step["t"], 0);
        assert_eq!(step["action"], 2); // discrete actions are bare integers
        let gap: serde_json::Value = serde_json::from_str(lines[2]).unwrap();
        assert!(gap["action"].is_null());
    }

    #[test]
    fn trajectory_errors_carry_line_numbers() {
        let dir = tmpdir();
        let path = dir.path().join("t.jsonl");
        save_trajectory(&path, &sample_trajectory()).unwrap();
        let mut text = fs::read_to_string(&path).unwrap();
        text.push_str("{\"t\": \"oops\"}\n");
        fs::write(&path, text).unwrap();
        let err = load_trajectory(&path).unwrap_err();
        assert!(err.to_string().contains(":5:"), "got {err}");
    }

    #[test]
    fn unknown_true_goal_is_rejected_on_save() {
        let dir = tmpdir();
        let mut traj = sample_trajectory();
        traj.true_goal = Some("zzz".into());
        assert!(save_trajectory(&dir.path().join("t.jsonl"), &traj).is_err());
    }

    fn sample_table() -> ResultsTable {
        let row = |seed: u64, f: f64| ResultRow {
            instance: "demo".into(),
            metric: MetricKind::Wasserstein,
            observability: 70.0,
            noise: 0.0,
            seed,
            accuracy: f,
            precision: f,
            recall: f,
            f_score: f,
            confidence: 0.25,
        };
        ResultsTable {
            rows: vec![row(0, 1.0), row(1, 0.0)],
            aggregates: vec![AggregateRow {
                instance: "demo".into(),
                metric: MetricKind::Wasserstein,
                observability: 70.0,
                noise: 0.0,
                rows: 2,
                mean_accuracy: 0.5,
                std_accuracy: std::f64::consts::FRAC_1_SQRT_2,
                mean_precision: 0.5,
                std_precision: std::f64::consts::FRAC_1_SQRT_2,
                mean_recall: 0.5,
                std_recall: std::f64::consts::FRAC_1_SQRT_2,
                mean_f_score: 0.5,
                std_f_score: std::f64::consts::FRAC_1_SQRT_2,
                mean_confidence: 0.25,
                std_confidence: 0.0,
                pooled_accuracy: 0.5,
                pooled_precision: 0.5,
                pooled_recall: 0.5,
                pooled_f_score: 0.5,
            }],
        }
    }

    #[test]
    fn results_round_trip_and_csv_layout() {
        let dir = tmpdir();
        let (csv_path, json_path) = save_results(dir.path(), &sample_table()).unwrap();
        let loaded = load_results(&json_path).unwrap();
        assert_eq!(loaded, sample_table());

        let text = fs::read_to_string(&csv_path).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "instance,metric,observability,noise,seed,accuracy,precision,recall,f_score,confidence"
        );
        assert_eq!(lines.next().unwrap(), "demo,wasserstein,70.0,0.0,0,1.0,1.0,1.0,1.0,0.25");
        assert_eq!(lines.count(), 1);
    }

    #[test]
    fn rewrites_are_byte_identical() {
        let dir = tmpdir();
        let table = sample_table();
        let (csv_path, json_path) = save_results(dir.path(), &table).unwrap();
        let (csv1, json1) = (fs::read(&csv_path).unwrap(), fs::read(&json_path).unwrap());
        let reloaded = load_results(&json_path).unwrap();
        save_results(dir.path(), &reloaded).unwrap();
        assert_eq!(csv1, fs::read(&csv_path).unwrap());
        assert_eq!(json1, fs::read(&json_path).unwrap());
    }
}
