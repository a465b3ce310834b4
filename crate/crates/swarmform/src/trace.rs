//! Episode traces and their on-disk form.
//!
//! One evaluation produces a fixed file set in the output directory:
//! `trajectory.csv` (step,time,id,x,y,heading,speed — id 0 is the reference
//! target), `error.csv` (step,time,id,ex,ey,etheta,resultant),
//! `speed_heading.csv` (step,time,id,speed,heading), `events.json` and
//! `summary.json`. Floats are serialized with 17 significant digits so the
//! CSV round-trips bit-exactly; the only non-reproducible field of a run
//! lives in `summary.json` (wall time).

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::dynamics::{ActuationCommand, MissileState};
use crate::error::{Error, Result};
use crate::error_model::ErrorVector;
use crate::formation::NodeId;
use crate::nces::{ConstraintAggregation, StopReason};
use crate::scenario::ScenarioSpec;

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const ERROR_FILE: &str = "error.csv";
pub const SPEED_HEADING_FILE: &str = "speed_heading.csv";
pub const EVENTS_FILE: &str = "events.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CONVERGENCE_FILE: &str = "convergence.jsonl";
pub const PARAMS_FILE: &str = "params.json";

const TRAJECTORY_HEADER: &str = "step,time,id,x,y,heading,speed";
const ERROR_HEADER: &str = "step,time,id,ex,ey,etheta,resultant";
const SPEED_HEADING_HEADER: &str = "step,time,id,speed,heading";

/// Everything recorded for one missile at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    pub id: NodeId,
    pub state: MissileState,
    pub error: ErrorVector,
    pub resultant: f64,
    pub command: ActuationCommand,
    pub fitness: f64,
}

/// Reference-target sample at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetRecord {
    pub step: usize,
    pub time: f64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum EventKind {
    NodesFailed { nodes: Vec<NodeId> },
    HeadChanged { from: NodeId, to: NodeId },
    TopologyRebuilt { head: NodeId, alive: Vec<NodeId> },
    FormationSwitched { stage: usize },
    FormationRestored,
    EarlyTermination { step: usize },
    IsolatedNode { id: NodeId },
}

/// Full per-step record of one episode.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpisodeTrace {
    pub records: Vec<StepRecord>,
    pub target: Vec<TargetRecord>,
    pub events: Vec<Event>,
    /// Steps actually executed (shorter than scheduled on early termination).
    pub steps: usize,
}

/// Tail-window error statistics of an evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailStats {
    pub window_s: f64,
    pub mean_resultant: f64,
    pub max_resultant: f64,
}

/// Mean/max resultant error over the final `window_s` seconds of the trace.
pub fn tail_stats(trace: &EpisodeTrace, window_s: f64) -> Result<TailStats> {
    let end = trace
        .records
        .iter()
        .map(|r| r.time)
        .fold(f64::NEG_INFINITY, f64::max);
    if !end.is_finite() {
        return Err(Error::EmptyTrace);
    }
    let from = end - window_s;
    let mut mean = 0.0;
    let mut max: f64 = 0.0;
    let mut count = 0usize;
    for r in &trace.records {
        if r.time >= from - 1e-9 {
            mean += r.resultant;
            max = max.max(r.resultant);
            count += 1;
        }
    }
    Ok(TailStats {
        window_s,
        mean_resultant: mean / count as f64,
        max_resultant: max,
    })
}

/// Constraint-ablation figures recorded with every training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationSummary {
    pub constraint_enabled: bool,
    pub aggregation: ConstraintAggregation,
    pub mean_early_termination_rate: f64,
}

/// `summary.json` contents; embeds the fully-resolved configuration so a run
/// can be reproduced exactly. Wall time is the only field that varies between
/// identical runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub kind: String,
    pub scenario: ScenarioSpec,
    pub config: RunConfig,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_mean_fitness: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pop_trajectory: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stop: Option<StopReason>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ablation: Option<AblationSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tail: Option<TailStats>,
}

/// 17-significant-digit decimal form: round-trips every finite f64.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Write bytes to `path` atomically (write to a sibling temp file, rename).
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let io_err = |e| Error::io(path.display().to_string(), e);
    {
        let mut f = std::fs::File::create(&tmp).map_err(io_err)?;
        f.write_all(bytes).map_err(io_err)?;
        f.sync_all().map_err(io_err)?;
    }
    std::fs::rename(&tmp, path).map_err(io_err)
}

fn trajectory_csv(trace: &EpisodeTrace) -> String {
    let mut out = String::from(TRAJECTORY_HEADER);
    out.push('\n');
    for t in &trace.target {
        out.push_str(&format!(
            "{},{},0,{},{},{},{}\n",
            t.step,
            fmt_f64(t.time),
            fmt_f64(t.x),
            fmt_f64(t.y),
            fmt_f64(t.heading),
            fmt_f64(t.speed),
        ));
    }
    for r in &trace.records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.step,
            fmt_f64(r.time),
            r.id,
            fmt_f64(r.state.x),
            fmt_f64(r.state.y),
            fmt_f64(r.state.heading),
            fmt_f64(r.state.speed),
        ));
    }
    out
}

fn error_csv(trace: &EpisodeTrace) -> String {
    let mut out = String::from(ERROR_HEADER);
    out.push('\n');
    for r in &trace.records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.step,
            fmt_f64(r.time),
            r.id,
            fmt_f64(r.error.e_x),
            fmt_f64(r.error.e_y),
            fmt_f64(r.error.e_theta),
            fmt_f64(r.resultant),
        ));
    }
    out
}

fn speed_heading_csv(trace: &EpisodeTrace) -> String {
    let mut out = String::from(SPEED_HEADING_HEADER);
    out.push('\n');
    for r in &trace.records {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.step,
            fmt_f64(r.time),
            r.id,
            fmt_f64(r.state.speed),
            fmt_f64(r.state.heading),
        ));
    }
    out
}

/// Write the complete trace file set into `dir`.
pub fn write_trace_files(dir: &Path, trace: &EpisodeTrace, summary: &RunSummary) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    write_atomic(&dir.join(TRAJECTORY_FILE), trajectory_csv(trace).as_bytes())?;
    write_atomic(&dir.join(ERROR_FILE), error_csv(trace).as_bytes())?;
    write_atomic(
        &dir.join(SPEED_HEADING_FILE),
        speed_heading_csv(trace).as_bytes(),
    )?;
    let events = serde_json::to_string_pretty(&trace.events)?;
    write_atomic(&dir.join(EVENTS_FILE), events.as_bytes())?;
    write_summary(dir, summary)
}

pub fn write_summary(dir: &Path, summary: &RunSummary) -> Result<()> {
    let text = serde_json::to_string_pretty(summary)?;
    write_atomic(&dir.join(SUMMARY_FILE), text.as_bytes())
}

pub fn read_summary(dir: &Path) -> Result<RunSummary> {
    let path = dir.join(SUMMARY_FILE);
    let text =
        std::fs::read_to_string(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn read_events(dir: &Path) -> Result<Vec<Event>> {
    let path = dir.join(EVENTS_FILE);
    let text =
        std::fs::read_to_string(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(serde_json::from_str(&text)?)
}

/// One parsed `trajectory.csv` row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRow {
    pub step: usize,
    pub time: f64,
    pub id: usize,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
}

/// One parsed `error.csv` row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorRow {
    pub step: usize,
    pub time: f64,
    pub id: usize,
    pub ex: f64,
    pub ey: f64,
    pub etheta: f64,
    pub resultant: f64,
}

fn check_header(line: Option<&str>, expected: &str) -> Result<()> {
    let got = line.unwrap_or("");
    if got.trim() == expected {
        return Ok(());
    }
    let present: Vec<&str> = got.trim().split(',').collect();
    for col in expected.split(',') {
        if !present.contains(&col) {
            return Err(Error::MissingColumn(col.to_string()));
        }
    }
    Err(Error::MissingColumn(format!("unexpected header: {got}")))
}

fn parse_fields(line: &str, line_no: usize, expected: usize) -> Result<Vec<f64>> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != expected {
        return Err(Error::MalformedRow {
            line: line_no,
            message: format!("expected {expected} fields, got {}", fields.len()),
        });
    }
    fields
        .iter()
        .map(|f| {
            f.parse::<f64>().map_err(|e| Error::MalformedRow {
                line: line_no,
                message: format!("{f:?}: {e}"),
            })
        })
        .collect()
}

pub fn read_trajectory(path: &Path) -> Result<Vec<TrajectoryRow>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut lines = text.lines();
    check_header(lines.next(), TRAJECTORY_HEADER)?;
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let f = parse_fields(l, i + 2, 7)?;
            Ok(TrajectoryRow {
                step: f[0] as usize,
                time: f[1],
                id: f[2] as usize,
                x: f[3],
                y: f[4],
                heading: f[5],
                speed: f[6],
            })
        })
        .collect()
}

pub fn read_errors(path: &Path) -> Result<Vec<ErrorRow>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut lines = text.lines();
    check_header(lines.next(), ERROR_HEADER)?;
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let f = parse_fields(l, i + 2, 7)?;
            Ok(ErrorRow {
                step: f[0] as usize,
                time: f[1],
                id: f[2] as usize,
                ex: f[3],
                ey: f[4],
                etheta: f[5],
                resultant: f[6],
            })
        })
        .collect()
}
