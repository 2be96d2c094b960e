//! Agent interfaces: panorama scanning, orchestration, focused perception and
//! decision making. Oracle implementations live in `sim::oracle`, model-backed
//! ones in `llm::backend`.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mcts::ScoredCandidate;
use crate::memory::{MultimodalContext, RetrievedContext};
use crate::perception::{QueryHistory, Sufficiency, VisualQuery};
use crate::semantic_map::{BBox, DetectionRecord, PanoramaLayout};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentRole {
    Scan,
    Orchestration,
    Perception,
    Decision,
}

impl fmt::Display for AgentRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AgentRole::Scan => "scan",
            AgentRole::Orchestration => "orchestration",
            AgentRole::Perception => "perception",
            AgentRole::Decision => "decision",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("{role} backend failed: {message}")]
    Backend { role: AgentRole, message: String },
    #[error("{role} backend returned unusable output: {message}")]
    Malformed { role: AgentRole, message: String },
}

impl AgentError {
    pub fn backend(role: AgentRole, message: impl Into<String>) -> Self {
        Self::Backend {
            role,
            message: message.into(),
        }
    }

    pub fn malformed(role: AgentRole, message: impl Into<String>) -> Self {
        Self::Malformed {
            role,
            message: message.into(),
        }
    }
}

/// Ground truth about an object in the current panorama, available to
/// simulator-backed perception.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedObject {
    pub object_id: String,
    pub category: String,
    pub bbox: BBox,
    pub depth: f64,
    pub attributes: BTreeMap<String, String>,
}

/// Everything the agent observes at one waypoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub waypoint: String,
    pub layout: PanoramaLayout,
    pub detections: Vec<DetectionRecord>,
    pub objects: Vec<ObservedObject>,
    /// Panorama image location, when a real image exists.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Decision {
    Move { target: String },
    Stop,
}

/// Input to the decision agent.
#[derive(Debug, Clone)]
pub struct DecisionRequest<'a> {
    pub current: &'a str,
    pub candidates: &'a [ScoredCandidate],
    /// `true` when `candidates` is a ranked top-k set; `false` when it is
    /// the unfiltered leaf set or a navigable-neighbour fallback.
    pub ranked: bool,
    pub context: &'a MultimodalContext,
    /// Per candidate, the memory retrieved along its root path.
    pub retrieved: &'a [Vec<RetrievedContext>],
}

pub trait Scanner: Send + Sync {
    fn scan(&self, at: &str, layout: &PanoramaLayout) -> Result<Observation, AgentError>;
}

pub trait Orchestrator: Send + Sync {
    fn generate_query(
        &self,
        map_text: &str,
        trajectory: &str,
        instruction: &str,
        history: &QueryHistory,
    ) -> Result<VisualQuery, AgentError>;

    fn check_sufficiency(
        &self,
        map_text: &str,
        history: &QueryHistory,
        instruction: &str,
    ) -> Result<Sufficiency, AgentError>;

    /// Raw values; clamping and defaults are applied by the caller.
    fn evaluate_values(
        &self,
        instruction: &str,
        trajectory: &str,
        answers: &[String],
        candidates: &[String],
    ) -> Result<BTreeMap<String, f64>, AgentError>;
}

pub trait Perceiver: Send + Sync {
    fn perceive(
        &self,
        observation: &Observation,
        query: &VisualQuery,
    ) -> Result<String, AgentError>;
}

pub trait Decider: Send + Sync {
    fn decide(&self, request: &DecisionRequest<'_>) -> Result<Decision, AgentError>;
}

/// Side-channel record from a backend (call digests, parse fallbacks).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentEvent {
    pub role: AgentRole,
    pub kind: String,
    pub detail: String,
}

#[derive(Debug, Default)]
pub struct EventLog {
    events: Mutex<Vec<AgentEvent>>,
}

impl EventLog {
    pub fn push(&self, event: AgentEvent) {
        self.events.lock().expect("event log poisoned").push(event);
    }

    pub fn drain(&self) -> Vec<AgentEvent> {
        std::mem::take(&mut *self.events.lock().expect("event log poisoned"))
    }
}

/// The four agents used by an episode. Shareable across episodes.
#[derive(Clone)]
pub struct AgentBackends {
    pub scanner: Arc<dyn Scanner>,
    pub orchestrator: Arc<dyn Orchestrator>,
    pub perceiver: Arc<dyn Perceiver>,
    pub decider: Arc<dyn Decider>,
    pub events: Option<Arc<EventLog>>,
}

impl AgentBackends {
    pub fn drain_events(&self) -> Vec<AgentEvent> {
        self.events.as_ref().map(|l| l.drain()).unwrap_or_default()
    }
}

impl fmt::Debug for AgentBackends {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AgentBackends").finish_non_exhaustive()
    }
}
