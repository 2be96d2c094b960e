//! Closed perception-reasoning loop: query generation, focused perception and
//! sufficiency checks, followed by one semantic valuation of the newly
//! discovered waypoints.
//!
//! Agent failures never abort the loop. A failed or repeated query ends the
//! loop as if sufficient, a failed sufficiency check counts as sufficient, and
//! missing or failed values fall back to a neutral 0.5. Every degradation is
//! recorded as a [`LoopEvent`].

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{AgentBackends, AgentError, Observation, Orchestrator, Perceiver};
use crate::memory::MultimodalContext;
use crate::semantic_map::{BBox, PanoramaLayout};

pub const DEFAULT_QUERY_BUDGET: usize = 3;
pub const DEFAULT_QUERY_RETRIES: usize = 2;
pub const NEUTRAL_VALUE: f64 = 0.5;
pub const NO_RELEVANT_OBJECTS: &str = "no relevant objects in region";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerceptionError {
    #[error("query budget n_max must be at least 1")]
    ZeroBudget,
    #[error("focus region {0} is outside the panorama or has no area")]
    InvalidRegion(BBox),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisualQuery {
    pub question: String,
    pub focus_region: BBox,
}

impl VisualQuery {
    pub fn validate(&self, layout: &PanoramaLayout) -> Result<(), PerceptionError> {
        let r = &self.focus_region;
        let inside = r.is_finite()
            && r.x1 >= 0.0
            && r.y1 >= 0.0
            && r.x2 <= layout.width
            && r.y2 <= layout.height;
        if inside && r.width() > 0.0 && r.height() > 0.0 {
            Ok(())
        } else {
            Err(PerceptionError::InvalidRegion(*r))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryExchange {
    pub query: VisualQuery,
    pub answer: String,
}

/// Query/answer pairs of the current timestep.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QueryHistory {
    entries: Vec<QueryExchange>,
}

impl QueryHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, query: VisualQuery, answer: String) {
        self.entries.push(QueryExchange { query, answer });
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[QueryExchange] {
        &self.entries
    }

    pub fn asked(&self, question: &str) -> bool {
        self.entries.iter().any(|e| e.query.question == question)
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sufficiency {
    Sufficient,
    Insufficient,
}

/// Per-waypoint semantic values, always finite and within `[0, 1]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SemanticValueMap(BTreeMap<String, f64>);

impl SemanticValueMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts `value` clamped to `[0, 1]`; non-finite values become neutral.
    pub fn insert(&mut self, id: impl Into<String>, value: f64) {
        let v = if value.is_finite() {
            value.clamp(0.0, 1.0)
        } else {
            NEUTRAL_VALUE
        };
        self.0.insert(id.into(), v);
    }

    pub fn get(&self, id: &str) -> Option<f64> {
        self.0.get(id).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(k, &v)| (k.as_str(), v))
    }
}

impl FromIterator<(String, f64)> for SemanticValueMap {
    fn from_iter<I: IntoIterator<Item = (String, f64)>>(iter: I) -> Self {
        let mut m = Self::new();
        for (k, v) in iter {
            m.insert(k, v);
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoopEventKind {
    QueryFailed,
    DegenerateQuery,
    InvalidRegion,
    PerceptionFailed,
    SufficiencyFailed,
    BudgetExhausted,
    ValueMissing,
    ValueClamped,
    ValuesFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopEvent {
    pub kind: LoopEventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iteration: Option<usize>,
    pub detail: String,
}

impl LoopEvent {
    fn new(kind: LoopEventKind, iteration: Option<usize>, detail: impl Into<String>) -> Self {
        log::warn!("perception loop: {kind:?}");
        Self {
            kind,
            iteration,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopConfig {
    /// Maximum queries per timestep.
    pub n_max: usize,
    /// Extra attempts when the orchestrator repeats an earlier question.
    pub query_retries: usize,
    /// `false` skips the query loop entirely (values only).
    pub proactive_perception: bool,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            n_max: DEFAULT_QUERY_BUDGET,
            query_retries: DEFAULT_QUERY_RETRIES,
            proactive_perception: true,
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<(), PerceptionError> {
        if self.n_max == 0 {
            return Err(PerceptionError::ZeroBudget);
        }
        Ok(())
    }
}

/// Asks for a query whose text is new for this timestep, re-asking up to
/// `retries` times on repeats. `Ok(None)` signals a degenerate query.
pub fn generate_query(
    orch: &dyn Orchestrator,
    map_text: &str,
    trajectory: &str,
    instruction: &str,
    history: &QueryHistory,
    retries: usize,
) -> Result<Option<VisualQuery>, AgentError> {
    for _ in 0..=retries {
        let q = orch.generate_query(map_text, trajectory, instruction, history)?;
        if !history.asked(&q.question) {
            return Ok(Some(q));
        }
    }
    Ok(None)
}

/// Runs the perception agent; an empty answer becomes
/// [`NO_RELEVANT_OBJECTS`].
pub fn perceive(
    perc: &dyn Perceiver,
    observation: &Observation,
    query: &VisualQuery,
) -> Result<String, AgentError> {
    let answer = perc.perceive(observation, query)?;
    if answer.trim().is_empty() {
        Ok(NO_RELEVANT_OBJECTS.to_string())
    } else {
        Ok(answer)
    }
}

/// Sufficiency with the budget guard: once `history` holds `n_max` entries
/// the verdict is sufficient without consulting the backend. Backend failures
/// also read as sufficient; the error is returned alongside for logging.
pub fn check_sufficiency(
    orch: &dyn Orchestrator,
    map_text: &str,
    history: &QueryHistory,
    instruction: &str,
    n_max: usize,
) -> (Sufficiency, Option<AgentError>) {
    if history.len() >= n_max {
        return (Sufficiency::Sufficient, None);
    }
    match orch.check_sufficiency(map_text, history, instruction) {
        Ok(v) => (v, None),
        Err(e) => (Sufficiency::Sufficient, Some(e)),
    }
}

/// One value per candidate, clamped to `[0, 1]`. Candidates the backend left
/// out get [`NEUTRAL_VALUE`]; a failed call yields an all-neutral map.
pub fn evaluate_semantic_values(
    orch: &dyn Orchestrator,
    instruction: &str,
    trajectory: &str,
    answers: &[String],
    candidates: &[String],
) -> (SemanticValueMap, Vec<LoopEvent>) {
    let mut events = Vec::new();
    let mut out = SemanticValueMap::new();
    if candidates.is_empty() {
        return (out, events);
    }
    match orch.evaluate_values(instruction, trajectory, answers, candidates) {
        Ok(raw) => {
            for c in candidates {
                match raw.get(c) {
                    Some(&v) => {
                        if !(0.0..=1.0).contains(&v) {
                            events.push(LoopEvent::new(
                                LoopEventKind::ValueClamped,
                                None,
                                format!("{c}: {v}"),
                            ));
                        }
                        out.insert(c.clone(), v);
                    }
                    None => {
                        events.push(LoopEvent::new(LoopEventKind::ValueMissing, None, c.clone()));
                        out.insert(c.clone(), NEUTRAL_VALUE);
                    }
                }
            }
        }
        Err(e) => {
            events.push(LoopEvent::new(
                LoopEventKind::ValuesFailed,
                None,
                e.to_string(),
            ));
            for c in candidates {
                out.insert(c.clone(), NEUTRAL_VALUE);
            }
        }
    }
    (out, events)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerceptionOutcome {
    pub answers: Vec<String>,
    pub values: SemanticValueMap,
    pub history: QueryHistory,
    /// Verdict after each perceived query, in order.
    pub verdicts: Vec<Sufficiency>,
    pub events: Vec<LoopEvent>,
}

impl PerceptionOutcome {
    pub fn iterations(&self) -> usize {
        self.history.len()
    }
}

/// generate → perceive → check, until sufficient or `n_max` queries; then a
/// single valuation of `new_candidates` over the accumulated answers.
#[allow(clippy::too_many_arguments)]
pub fn run_perception_loop(
    backends: &AgentBackends,
    observation: &Observation,
    map_text: &str,
    trajectory: &str,
    instruction: &str,
    new_candidates: &[String],
    config: &LoopConfig,
) -> Result<PerceptionOutcome, PerceptionError> {
    config.validate()?;
    let orch = backends.orchestrator.as_ref();
    let mut history = QueryHistory::new();
    let mut verdicts = Vec::new();
    let mut events = Vec::new();

    if config.proactive_perception {
        for it in 0..config.n_max {
            let query = match generate_query(
                orch,
                map_text,
                trajectory,
                instruction,
                &history,
                config.query_retries,
            ) {
                Ok(Some(q)) => q,
                Ok(None) => {
                    events.push(LoopEvent::new(
                        LoopEventKind::DegenerateQuery,
                        Some(it),
                        "orchestrator repeated an earlier question",
                    ));
                    break;
                }
                Err(e) => {
                    events.push(LoopEvent::new(
                        LoopEventKind::QueryFailed,
                        Some(it),
                        e.to_string(),
                    ));
                    break;
                }
            };
            if let Err(e) = query.validate(&observation.layout) {
                events.push(LoopEvent::new(
                    LoopEventKind::InvalidRegion,
                    Some(it),
                    e.to_string(),
                ));
                break;
            }
            let answer = match perceive(backends.perceiver.as_ref(), observation, &query) {
                Ok(a) => a,
                Err(e) => {
                    events.push(LoopEvent::new(
                        LoopEventKind::PerceptionFailed,
                        Some(it),
                        e.to_string(),
                    ));
                    break;
                }
            };
            history.push(query, answer);
            let (verdict, err) =
                check_sufficiency(orch, map_text, &history, instruction, config.n_max);
            if let Some(e) = err {
                events.push(LoopEvent::new(
                    LoopEventKind::SufficiencyFailed,
                    Some(it),
                    e.to_string(),
                ));
            } else if history.len() >= config.n_max {
                events.push(LoopEvent::new(
                    LoopEventKind::BudgetExhausted,
                    Some(it),
                    format!("{} queries", history.len()),
                ));
            }
            verdicts.push(verdict);
            if verdict == Sufficiency::Sufficient {
                break;
            }
        }
    }

    let answers: Vec<String> = history.entries().iter().map(|e| e.answer.clone()).collect();
    let (values, value_events) =
        evaluate_semantic_values(orch, instruction, trajectory, &answers, new_candidates);
    events.extend(value_events);
    Ok(PerceptionOutcome {
        answers,
        values,
        history,
        verdicts,
        events,
    })
}

/// Bundles one step's instruction, caption, map text and answers (answer
/// order preserved) together with the values assigned at that step.
pub fn build_context(
    timestep: usize,
    waypoint_id: &str,
    instruction: &str,
    trajectory: &str,
    map_text: &str,
    answers: Vec<String>,
    values: SemanticValueMap,
) -> MultimodalContext {
    MultimodalContext {
        timestep,
        waypoint_id: waypoint_id.to_string(),
        instruction: instruction.to_string(),
        trajectory_caption: trajectory.to_string(),
        semantic_map_text: map_text.to_string(),
        answers,
        semantic_values: values,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn context_keeps_answer_order() {
        let answers: Vec<String> = ["c", "a", "b"].iter().map(|s| s.to_string()).collect();
        let ctx = build_context(
            3,
            "w",
            "go",
            "tau",
            "map",
            answers.clone(),
            SemanticValueMap::new(),
        );
        assert_eq!(ctx.answers, answers);
        let empty = build_context(0, "w", "go", "", "map", Vec::new(), SemanticValueMap::new());
        assert!(empty.answers.is_empty());
        let line = serde_json::to_string(&ctx).unwrap();
        let back: MultimodalContext = serde_json::from_str(&line).unwrap();
        assert_eq!(back, ctx);
    }

    #[test]
    fn value_map_clamps() {
        let mut m = SemanticValueMap::new();
        m.insert("a", 1.7);
        m.insert("b", -0.2);
        m.insert("c", f64::NAN);
        m.insert("d", 0.25);
        assert_eq!(m.get("a"), Some(1.0));
        assert_eq!(m.get("b"), Some(0.0));
        assert_eq!(m.get("c"), Some(0.5));
        assert_eq!(m.get("d"), Some(0.25));
    }

    #[test]
    fn region_validation() {
        let layout = PanoramaLayout::default();
        let q = |b: BBox| VisualQuery {
            question: "q".into(),
            focus_region: b,
        };
        assert!(q(layout.full()).validate(&layout).is_ok());
        assert!(q(BBox::new(10.0, 10.0, 10.0, 50.0))
            .validate(&layout)
            .is_err());
        assert!(q(BBox::new(-1.0, 0.0, 10.0, 50.0))
            .validate(&layout)
            .is_err());
        assert!(q(BBox::new(0.0, 0.0, 3000.0, 50.0))
            .validate(&layout)
            .is_err());
    }

    #[test]
    fn zero_budget_rejected() {
        let cfg = LoopConfig {
            n_max: 0,
            ..Default::default()
        };
        assert_eq!(cfg.validate(), Err(PerceptionError::ZeroBudget));
    }
}
