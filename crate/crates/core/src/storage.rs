//! On-disk records of runs: manifests, line-delimited trajectories, one-shot
//! results and metric exports. Every format carries a schema version.
//!
//! A run directory holds `manifest.json` plus the artifacts it lists
//! (`trajectory.jsonl`, `transcript.jsonl`, `oneshot.json`).

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::oneshot::OneShotResult;
use crate::analysis::policy::{TransitionDataset, TransitionRecord};
use crate::analysis::{MetricRow, RunSummary};
use crate::env::{EpisodeResult, Outcome, RejectReason, TrajectoryEvent};
use crate::puzzle::{apply_move, initial_state, DiskCount, MoveAction, PuzzleState};

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TRAJECTORY_FILE: &str = "trajectory.jsonl";
pub const TRANSCRIPT_FILE: &str = "transcript.jsonl";
pub const ONESHOT_FILE: &str = "oneshot.json";

#[derive(Debug, Error)]
pub enum StorageError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{path} line {line}: replay mismatch: {message}")]
    Replay { path: PathBuf, line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StorageError + '_ {
    move |source| StorageError::Io { path: path.to_owned(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    Agentic,
    Oneshot,
    Scripted,
    Qlearn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManifestStatus {
    Started,
    Finalized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RunOutcome {
    Episode {
        outcome: Outcome,
        moves_taken: u32,
        end_game_called: bool,
        solved_at_step: Option<u32>,
        rejected_moves: usize,
        final_state: PuzzleState,
        error: Option<String>,
    },
    Oneshot {
        valid: bool,
        reached_goal: bool,
        optimal: bool,
        move_count: usize,
        diagnostic: Option<String>,
    },
}

impl RunOutcome {
    pub fn from_episode(r: &EpisodeResult) -> Self {
        RunOutcome::Episode {
            outcome: r.outcome,
            moves_taken: r.moves_taken,
            end_game_called: r.end_game_called,
            solved_at_step: r.solved_at_step,
            rejected_moves: r.trajectory.rejections().count(),
            final_state: r.final_state,
            error: r.error.clone(),
        }
    }

    pub fn from_oneshot(r: &OneShotResult) -> Self {
        RunOutcome::Oneshot {
            valid: r.valid,
            reached_goal: r.reached_goal,
            optimal: r.optimal,
            move_count: r.move_count,
            diagnostic: r.diagnostic.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub run_id: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    pub mode: RunMode,
    pub model_id: String,
    pub n: DiskCount,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub artifacts: Vec<String>,
    pub status: ManifestStatus,
    pub result: Option<RunOutcome>,
}

impl RunManifest {
    pub fn new(run_id: impl Into<String>, mode: RunMode, model_id: impl Into<String>, n: DiskCount) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            run_id: run_id.into(),
            timestamp: 0,
            mode,
            model_id: model_id.into(),
            n,
            seed: None,
            config: serde_json::Value::Null,
            artifacts: Vec::new(),
            status: ManifestStatus::Started,
            result: None,
        }
    }

    pub fn summary(&self) -> Option<RunSummary> {
        match self.result.as_ref()? {
            RunOutcome::Episode { outcome, moves_taken, .. } => Some(RunSummary {
                n: self.n,
                solved: *outcome == Outcome::Solved,
                moves: u64::from(*moves_taken),
            }),
            RunOutcome::Oneshot { reached_goal, move_count, .. } => Some(RunSummary {
                n: self.n,
                solved: *reached_goal,
                moves: *move_count as u64,
            }),
        }
    }
}

fn write_synced(path: &Path, bytes: &[u8]) -> Result<(), StorageError> {
    let mut file = File::create(path).map_err(io_err(path))?;
    file.write_all(bytes).map_err(io_err(path))?;
    file.sync_all().map_err(io_err(path))
}

/// Writes the manifest of a run into `dir`, creating the directory.
pub fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<PathBuf, StorageError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    text.push('\n');
    write_synced(&path, text.as_bytes())?;
    Ok(path)
}

pub fn read_manifest(dir: &Path) -> Result<RunManifest, StorageError> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text).map_err(|e| StorageError::Parse { path, line: e.line(), message: e.to_string() })
}

/// Peg pair as issued, which may be out of range for rejected calls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawAction {
    pub from_peg: i64,
    pub to_peg: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryLine {
    pub schema_version: u32,
    pub episode_id: String,
    pub step: u32,
    pub state_before: PuzzleState,
    pub action: RawAction,
    pub state_after: PuzzleState,
    pub accepted: bool,
    pub rationale_text: Option<String>,
    pub is_goal: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reject_reason: Option<RejectReason>,
}

pub fn trajectory_lines(result: &EpisodeResult) -> Vec<TrajectoryLine> {
    let t = &result.trajectory;
    let goal = crate::puzzle::goal_state(t.n);
    t.events
        .iter()
        .map(|e| match e {
            TrajectoryEvent::Accepted(tr) => TrajectoryLine {
                schema_version: SCHEMA_VERSION,
                episode_id: t.episode_id.clone(),
                step: tr.step,
                state_before: tr.state,
                action: RawAction {
                    from_peg: i64::from(tr.action.from_peg()),
                    to_peg: i64::from(tr.action.to_peg()),
                },
                state_after: tr.next_state,
                accepted: true,
                rationale_text: tr.rationale.clone(),
                is_goal: tr.next_state == goal,
                reject_reason: None,
            },
            TrajectoryEvent::Rejected(r) => TrajectoryLine {
                schema_version: SCHEMA_VERSION,
                episode_id: t.episode_id.clone(),
                step: r.step,
                state_before: r.state,
                action: RawAction { from_peg: r.from_peg, to_peg: r.to_peg },
                state_after: r.state,
                accepted: false,
                rationale_text: r.rationale.clone(),
                is_goal: r.state == goal,
                reject_reason: Some(r.reason),
            },
        })
        .collect()
}

/// Writes `trajectory.jsonl` into the manifest's run directory `dir`.
pub fn write_trajectory(result: &EpisodeResult, manifest: &RunManifest, dir: &Path) -> Result<PathBuf, StorageError> {
    if manifest.n != result.trajectory.n {
        return Err(StorageError::Invalid(format!(
            "manifest is for {} disks, episode for {}",
            manifest.n, result.trajectory.n
        )));
    }
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join(TRAJECTORY_FILE);
    let file = File::create(&path).map_err(io_err(&path))?;
    let mut out = BufWriter::new(file);
    for line in trajectory_lines(result) {
        serde_json::to_writer(&mut out, &line).expect("line serializes");
        out.write_all(b"\n").map_err(io_err(&path))?;
    }
    let file = out.into_inner().map_err(|e| StorageError::Io { path: path.clone(), source: e.into_error() })?;
    file.sync_all().map_err(io_err(&path))?;
    Ok(path)
}

pub fn write_oneshot(result: &OneShotResult, dir: &Path) -> Result<PathBuf, StorageError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join(ONESHOT_FILE);
    let mut text = serde_json::to_string_pretty(result).expect("result serializes");
    text.push('\n');
    write_synced(&path, text.as_bytes())?;
    Ok(path)
}

pub fn read_trajectory_lines(path: &Path) -> Result<Vec<(usize, TrajectoryLine)>, StorageError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut lines = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: TrajectoryLine = serde_json::from_str(&line).map_err(|e| StorageError::Parse {
            path: path.to_owned(),
            line: i + 1,
            message: e.to_string(),
        })?;
        lines.push((i + 1, parsed));
    }
    Ok(lines)
}

/// Loads accepted transitions from trajectory files, replay-validating each
/// one. Files are not deduplicated: loading one file twice doubles N.
pub fn load_dataset<P: AsRef<Path>>(paths: &[P]) -> Result<TransitionDataset, StorageError> {
    let mut records = Vec::new();
    for (source, path) in paths.iter().enumerate() {
        let path = path.as_ref();
        let mut current: HashMap<String, PuzzleState> = HashMap::new();
        for (line_no, line) in read_trajectory_lines(path)? {
            if !line.accepted {
                continue;
            }
            let replay = |message: String| StorageError::Replay { path: path.to_owned(), line: line_no, message };
            let n = line.state_before.disk_count();
            let expected = *current.entry(line.episode_id.clone()).or_insert_with(|| initial_state(n));
            if line.state_before != expected {
                return Err(replay(format!("state_before {} does not follow {expected}", line.state_before)));
            }
            let action = MoveAction::new(line.action.from_peg, line.action.to_peg)
                .map_err(|e| replay(format!("accepted action is invalid ({e})")))?;
            let next = apply_move(line.state_before, action)
                .map_err(|e| replay(format!("{action} is illegal from {} ({e})", line.state_before)))?;
            if next != line.state_after {
                return Err(replay(format!("{action} yields {next}, recorded {}", line.state_after)));
            }
            current.insert(line.episode_id.clone(), next);
            records.push(TransitionRecord {
                state: line.state_before,
                action,
                next_state: next,
                episode_id: line.episode_id,
                step_index: line.step,
                n,
                source: source as u32,
            });
        }
    }
    Ok(TransitionDataset { records })
}

/// Run directories (those containing a manifest) directly under `root`,
/// sorted by name.
pub fn discover_runs(root: &Path) -> Result<Vec<PathBuf>, StorageError> {
    let mut dirs = Vec::new();
    for entry in fs::read_dir(root).map_err(io_err(root))? {
        let entry = entry.map_err(io_err(root))?;
        let path = entry.path();
        if path.join(MANIFEST_FILE).is_file() {
            dirs.push(path);
        }
    }
    dirs.sort();
    Ok(dirs)
}

/// How each exported metric is computed; carried in JSON exports.
pub const METRIC_DEFINITIONS: [(&str, &str); 5] = [
    ("success_rate", "fraction of runs at this n that reached the goal"),
    ("mean_moves", "mean accepted moves per run (one-shot: parsed moves per answer)"),
    (
        "loop_rate",
        "per episode, fraction of accepted transitions landing on a state already visited in that episode; \
         averaged over episodes",
    ),
    (
        "jsd_vs_optimal / jsd_vs_random",
        "base-2 Jensen-Shannon divergence between the empirical joint policy restricted to three-action \
         states and the reference m(s) * rho(a|s) over the same state marginal",
    ),
    (
        "unique_subseq_k2 / unique_subseq_k3",
        "within each episode, for states visited at least twice with k actions to follow: distinct \
         length-k continuations divided by visits, pooled over (episode, state) pairs; null if none qualify",
    ),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricFormat {
    Csv,
    Json,
}

pub fn sort_rows(rows: &mut [MetricRow]) {
    rows.sort_by(|a, b| {
        (&a.model_id, a.n, a.metric_name.as_str()).cmp(&(&b.model_id, b.n, b.metric_name.as_str()))
    });
}

/// Renders metric rows, sorted by (model_id, n, metric_name).
pub fn render_metrics(rows: &[MetricRow], format: MetricFormat) -> Result<Vec<u8>, StorageError> {
    if rows.is_empty() {
        return Err(StorageError::Invalid("no metric rows to export".into()));
    }
    let mut rows = rows.to_vec();
    sort_rows(&mut rows);
    match format {
        MetricFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["model_id", "n", "metric_name", "value"])
                .map_err(|e| StorageError::Invalid(e.to_string()))?;
            for r in &rows {
                let value = r.value.map(|v| v.to_string()).unwrap_or_default();
                w.write_record([r.model_id.as_str(), &r.n.to_string(), r.metric_name.as_str(), &value])
                    .map_err(|e| StorageError::Invalid(e.to_string()))?;
            }
            w.into_inner().map_err(|e| StorageError::Invalid(e.to_string()))
        }
        MetricFormat::Json => {
            let doc = serde_json::json!({
                "schema_version": SCHEMA_VERSION,
                "definitions": METRIC_DEFINITIONS.iter().copied().collect::<std::collections::BTreeMap<_, _>>(),
                "rows": rows,
            });
            let mut bytes = serde_json::to_vec_pretty(&doc).expect("rows serialize");
            bytes.push(b'\n');
            Ok(bytes)
        }
    }
}

pub fn export_metrics(rows: &[MetricRow], format: MetricFormat, path: &Path) -> Result<PathBuf, StorageError> {
    let bytes = render_metrics(rows, format)?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    write_synced(path, &bytes)?;
    Ok(path.to_owned())
}
