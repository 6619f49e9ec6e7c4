//! Trajectory events and the line-delimited episode log.
//!
//! Every record carries the episode identity plus one event. Events within
//! an episode are strictly ordered by `step`. `wall_time` is the only
//! non-deterministic field; comparisons strip it via [`normalize_log_line`].

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::crawlenv::Provenance;
use crate::ecosystem::Condition;
use crate::error::{Error, Result};
use crate::searchenv::{ClassificationSource, SearchRound};

/// One trajectory event body, tagged by event type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event_type", content = "payload", rename_all = "snake_case")]
pub enum EventBody {
    SearchIssued {
        query: String,
        #[serde(default)]
        forced: bool,
    },
    ResultsReturned {
        round: SearchRound,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        classification_source: Option<ClassificationSource>,
    },
    CrawlIssued {
        url: String,
        #[serde(default)]
        forced: bool,
    },
    PageReturned {
        url: String,
        is_target_related: bool,
        provenance: Provenance,
        content_chars: usize,
        #[serde(default)]
        unavailable: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        error_note: Option<String>,
    },
    BudgetViolation {
        kind: String,
        detail: String,
    },
    Answer {
        text: String,
    },
}

impl EventBody {
    pub fn type_name(&self) -> &'static str {
        match self {
            EventBody::SearchIssued { .. } => "search_issued",
            EventBody::ResultsReturned { .. } => "results_returned",
            EventBody::CrawlIssued { .. } => "crawl_issued",
            EventBody::PageReturned { .. } => "page_returned",
            EventBody::BudgetViolation { .. } => "budget_violation",
            EventBody::Answer { .. } => "answer",
        }
    }
}

/// One event with its strictly increasing per-episode sequence number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEvent {
    pub step: usize,
    #[serde(flatten)]
    pub body: EventBody,
    pub wall_time: f64,
}

/// Why an episode ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Answered,
    StepLimit,
    PolicyError,
}

/// The full episode log in memory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub episode_id: String,
    pub instance_id: String,
    pub condition: Condition,
    pub seed: u64,
    pub events: Vec<TrajectoryEvent>,
    pub final_answer: Option<String>,
    pub termination: Termination,
}

impl Trajectory {
    /// Search rounds in order, from results_returned events.
    pub fn rounds(&self) -> Vec<&SearchRound> {
        self.events
            .iter()
            .filter_map(|e| match &e.body {
                EventBody::ResultsReturned { round, .. } => Some(round),
                _ => None,
            })
            .collect()
    }

    pub fn executed_searches(&self) -> usize {
        self.events
            .iter()
            .filter(|e| matches!(e.body, EventBody::SearchIssued { .. }))
            .count()
    }

    pub fn executed_crawls(&self) -> usize {
        self.events
            .iter()
            .filter(|e| matches!(e.body, EventBody::CrawlIssued { .. }))
            .count()
    }
}

/// One line of the episode log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub episode_id: String,
    pub instance_id: String,
    pub condition: String,
    pub seed: u64,
    pub step: usize,
    #[serde(flatten)]
    pub body: EventBody,
    pub wall_time: f64,
}

/// Serialize a trajectory to its log lines.
pub fn trajectory_to_lines(traj: &Trajectory) -> Result<Vec<String>> {
    let mut lines = Vec::with_capacity(traj.events.len());
    for event in &traj.events {
        let record = LogRecord {
            episode_id: traj.episode_id.clone(),
            instance_id: traj.instance_id.clone(),
            condition: traj.condition.label(),
            seed: traj.seed,
            step: event.step,
            body: event.body.clone(),
            wall_time: event.wall_time,
        };
        lines.push(serde_json::to_string(&record)?);
    }
    Ok(lines)
}

/// Append a complete trajectory to an open log writer as one contiguous
/// block of lines.
pub fn append_trajectory(writer: &mut impl Write, traj: &Trajectory) -> Result<()> {
    for line in trajectory_to_lines(traj)? {
        writeln!(writer, "{line}")?;
    }
    Ok(())
}

/// Rebuild trajectories from a log file, grouped by episode id in first-seen
/// order. Lines with an `event_type` of `run_header` are skipped. Corrupt
/// lines are reported with their line number.
pub fn read_trajectories(path: &Path) -> Result<Vec<Trajectory>> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut order: Vec<String> = Vec::new();
    let mut by_episode: std::collections::HashMap<String, Trajectory> =
        std::collections::HashMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        // Header lines carry run provenance, not events.
        if let Ok(value) = serde_json::from_str::<serde_json::Value>(&line) {
            if value.get("event_type").and_then(|v| v.as_str()) == Some("run_header") {
                continue;
            }
        }
        let record: LogRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: format!("bad log record: {e}"),
        })?;
        let condition: Condition = record.condition.parse().map_err(|e| Error::Parse {
            line: line_no,
            message: format!("bad condition label: {e}"),
        })?;
        let traj = by_episode.entry(record.episode_id.clone()).or_insert_with(|| {
            order.push(record.episode_id.clone());
            Trajectory {
                episode_id: record.episode_id.clone(),
                instance_id: record.instance_id.clone(),
                condition,
                seed: record.seed,
                events: Vec::new(),
                final_answer: None,
                termination: Termination::StepLimit,
            }
        });
        if let EventBody::Answer { text } = &record.body {
            traj.final_answer = Some(text.clone());
            traj.termination = Termination::Answered;
        }
        if let EventBody::BudgetViolation { kind, .. } = &record.body {
            if kind == "policy_error" {
                traj.termination = Termination::PolicyError;
            }
        }
        traj.events.push(TrajectoryEvent {
            step: record.step,
            body: record.body,
            wall_time: record.wall_time,
        });
    }
    Ok(order.into_iter().map(|id| by_episode.remove(&id).unwrap()).collect())
}

/// Episode ids present in a log file (used for resumability).
pub fn logged_episode_ids(path: &Path) -> Result<std::collections::HashSet<String>> {
    let mut ids = std::collections::HashSet::new();
    if !path.exists() {
        return Ok(ids);
    }
    let file = std::fs::File::open(path)?;
    for line in std::io::BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if let Ok(value) = serde_json::from_str::<serde_json::Value>(&line) {
            if value.get("event_type").and_then(|v| v.as_str()) == Some("run_header") {
                continue;
            }
            if let Some(id) = value.get("episode_id").and_then(|v| v.as_str()) {
                ids.insert(id.to_string());
            }
        }
    }
    Ok(ids)
}

/// Strip the wall_time field from a log line for golden comparisons.
pub fn normalize_log_line(line: &str) -> Result<String> {
    let mut value: serde_json::Value = serde_json::from_str(line)?;
    if let Some(obj) = value.as_object_mut() {
        obj.remove("wall_time");
    }
    Ok(serde_json::to_string(&value)?)
}
