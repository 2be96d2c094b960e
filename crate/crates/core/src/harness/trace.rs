//! Episode trace records and their JSONL form: an `episode` header, then a
//! `step` and a `context` line per timestep, then a `summary` line.

use serde::{Deserialize, Serialize};

use crate::agents::{AgentEvent, Decision};
use crate::mcts::{ScoredCandidate, TreeSnapshot};
use crate::memory::MultimodalContext;
use crate::perception::{LoopEvent, QueryExchange, SemanticValueMap, Sufficiency};

use super::config::RunConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeHeader {
    pub episode_id: String,
    pub start: String,
    pub goal: String,
    pub instruction: String,
    pub success_radius: f64,
    pub reference_length: f64,
    pub config: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum TraceEvent {
    Loop(LoopEvent),
    Agent(AgentEvent),
    Harness { kind: String, detail: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub timestep: usize,
    pub waypoint_id: String,
    pub semantic_map: String,
    pub queries: Vec<QueryExchange>,
    pub verdicts: Vec<Sufficiency>,
    pub semantic_values: SemanticValueMap,
    pub added: Vec<String>,
    pub reward: f64,
    pub tree: TreeSnapshot,
    /// What the decision agent chose from: the top-k set, or every reachable
    /// leaf without the tree filter.
    pub candidates: Vec<ScoredCandidate>,
    pub decision: Decision,
    /// Waypoints walked this step, starting at `waypoint_id`.
    pub segment: Vec<String>,
    pub segment_length: f64,
    /// Cumulative metres after this step.
    pub path_length: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub events: Vec<TraceEvent>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Stop,
    MaxSteps,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub episode_id: String,
    pub steps: usize,
    /// Every waypoint occupied, intermediates included, in order.
    pub visited: Vec<String>,
    pub final_waypoint: String,
    pub path_length: f64,
    pub stop_reason: StopReason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TraceLine {
    Episode(EpisodeHeader),
    Step(StepRecord),
    Context(MultimodalContext),
    Summary(EpisodeSummary),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub header: EpisodeHeader,
    pub steps: Vec<StepRecord>,
    pub contexts: Vec<MultimodalContext>,
    pub summary: EpisodeSummary,
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        source: serde_json::Error,
    },
    #[error("malformed trace: {0}")]
    Structure(String),
}

impl EpisodeTrace {
    pub fn lines(&self) -> Vec<TraceLine> {
        let mut out = vec![TraceLine::Episode(self.header.clone())];
        for (i, step) in self.steps.iter().enumerate() {
            out.push(TraceLine::Step(step.clone()));
            if let Some(c) = self.contexts.get(i) {
                out.push(TraceLine::Context(c.clone()));
            }
        }
        out.push(TraceLine::Summary(self.summary.clone()));
        out
    }

    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for line in self.lines() {
            s.push_str(&serde_json::to_string(&line).expect("trace serializes"));
            s.push('\n');
        }
        s
    }

    pub fn from_jsonl(text: &str) -> Result<Self, TraceError> {
        let mut header = None;
        let mut steps = Vec::new();
        let mut contexts = Vec::new();
        let mut summary = None;
        for (i, raw) in text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
        {
            let line: TraceLine = serde_json::from_str(raw).map_err(|source| TraceError::Json {
                line: i + 1,
                source,
            })?;
            match line {
                TraceLine::Episode(h) => header = Some(h),
                TraceLine::Step(s) => steps.push(s),
                TraceLine::Context(c) => contexts.push(c),
                TraceLine::Summary(s) => summary = Some(s),
            }
        }
        Ok(Self {
            header: header.ok_or_else(|| TraceError::Structure("missing episode header".into()))?,
            steps,
            contexts,
            summary: summary.ok_or_else(|| TraceError::Structure("missing summary".into()))?,
        })
    }
}
