//! Agents backed by a chat-completion endpoint.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::agents::{
    AgentBackends, AgentError, AgentEvent, AgentRole, Decider, Decision, DecisionRequest, EventLog,
    Observation, Orchestrator, Perceiver, Scanner,
};
use crate::memory::RetrievedContext;
use crate::perception::{QueryHistory, Sufficiency, VisualQuery, NEUTRAL_VALUE};

use super::client::{ChatClient, ChatMessage, EndpointConfig, ImageRef, LlmError};
use super::parse::{parse_structured, Schema, Structured};

pub const QUERY_PROMPT: &str = include_str!("../../prompts/query.txt");
pub const SUFFICIENCY_PROMPT: &str = include_str!("../../prompts/sufficiency.txt");
pub const VALUES_PROMPT: &str = include_str!("../../prompts/values.txt");
pub const PERCEPTION_PROMPT: &str = include_str!("../../prompts/perception.txt");
pub const DECISION_PROMPT: &str = include_str!("../../prompts/decision.txt");
pub const REPAIR_PROMPT: &str = include_str!("../../prompts/repair.txt");

/// Substitutes `{name}` placeholders; other braces are left alone.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (name, value) in vars {
        out = out.replace(&format!("{{{name}}}"), value);
    }
    out
}

fn history_text(history: &QueryHistory) -> String {
    if history.is_empty() {
        return "none".into();
    }
    history
        .entries()
        .iter()
        .enumerate()
        .map(|(i, e)| {
            format!(
                "{}. Q: {} (region {}) A: {}",
                i + 1,
                e.query.question,
                e.query.focus_region,
                e.answer
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn or_none(text: &str) -> &str {
    if text.trim().is_empty() {
        "none"
    } else {
        text
    }
}

fn agent_error(role: AgentRole, e: LlmError) -> AgentError {
    AgentError::backend(role, e.to_string())
}

/// Shared plumbing: one call, one repair re-prompt on unusable output.
struct Caller {
    client: Arc<ChatClient>,
    events: Arc<EventLog>,
}

impl Caller {
    fn warn(&self, role: AgentRole, detail: String) {
        log::warn!("{role}: {detail}");
        self.events.push(AgentEvent {
            role,
            kind: "parse_fallback".into(),
            detail,
        });
    }

    /// `Ok(None)` when both the reply and its repair were unusable.
    fn structured(
        &self,
        role: AgentRole,
        prompt: String,
        schema: Schema,
    ) -> Result<Option<Structured>, AgentError> {
        let mut messages = vec![ChatMessage::user(prompt)];
        let first = self
            .client
            .chat(role, &messages)
            .map_err(|e| agent_error(role, e))?;
        let err = match parse_structured(&first, schema) {
            Ok(s) => return Ok(Some(s)),
            Err(e) => e,
        };
        messages.push(ChatMessage::assistant(first));
        messages.push(ChatMessage::user(render(
            REPAIR_PROMPT,
            &[("error", &err.to_string()), ("shape", schema.shape())],
        )));
        let second = self
            .client
            .chat(role, &messages)
            .map_err(|e| agent_error(role, e))?;
        match parse_structured(&second, schema) {
            Ok(s) => Ok(Some(s)),
            Err(e) => {
                self.warn(role, format!("unparseable after repair: {e}"));
                Ok(None)
            }
        }
    }
}

pub struct LlmOrchestrator {
    caller: Caller,
}

impl Orchestrator for LlmOrchestrator {
    fn generate_query(
        &self,
        map_text: &str,
        trajectory: &str,
        instruction: &str,
        history: &QueryHistory,
    ) -> Result<VisualQuery, AgentError> {
        let prompt = render(
            QUERY_PROMPT,
            &[
                ("instruction", instruction),
                ("trajectory", or_none(trajectory)),
                ("semantic_map", map_text),
                ("query_history", &history_text(history)),
            ],
        );
        match self
            .caller
            .structured(AgentRole::Orchestration, prompt, Schema::QueryRegion)?
        {
            Some(Structured::Query(q)) => Ok(q),
            _ => Err(AgentError::malformed(
                AgentRole::Orchestration,
                "no usable query after repair",
            )),
        }
    }

    fn check_sufficiency(
        &self,
        map_text: &str,
        history: &QueryHistory,
        instruction: &str,
    ) -> Result<Sufficiency, AgentError> {
        let prompt = render(
            SUFFICIENCY_PROMPT,
            &[
                ("instruction", instruction),
                ("semantic_map", map_text),
                ("query_history", &history_text(history)),
            ],
        );
        match self
            .caller
            .structured(AgentRole::Orchestration, prompt, Schema::Verdict)?
        {
            Some(Structured::Verdict(v)) => Ok(v),
            _ => {
                self.caller.warn(
                    AgentRole::Orchestration,
                    "verdict defaulted to sufficient".into(),
                );
                Ok(Sufficiency::Sufficient)
            }
        }
    }

    fn evaluate_values(
        &self,
        instruction: &str,
        trajectory: &str,
        answers: &[String],
        candidates: &[String],
    ) -> Result<BTreeMap<String, f64>, AgentError> {
        let answers_text = if answers.is_empty() {
            "nothing".to_string()
        } else {
            answers
                .iter()
                .map(|a| format!("- {a}"))
                .collect::<Vec<_>>()
                .join("\n")
        };
        let prompt = render(
            VALUES_PROMPT,
            &[
                ("instruction", instruction),
                ("trajectory", or_none(trajectory)),
                ("answers", &answers_text),
                ("candidates", &candidates.join(", ")),
            ],
        );
        match self
            .caller
            .structured(AgentRole::Orchestration, prompt, Schema::ValueMap)?
        {
            Some(Structured::Values(v)) => Ok(v),
            _ => {
                self.caller.warn(
                    AgentRole::Orchestration,
                    "values defaulted to neutral".into(),
                );
                Ok(candidates
                    .iter()
                    .map(|c| (c.clone(), NEUTRAL_VALUE))
                    .collect())
            }
        }
    }
}

pub struct LlmPerceiver {
    caller: Caller,
}

impl Perceiver for LlmPerceiver {
    fn perceive(
        &self,
        observation: &Observation,
        query: &VisualQuery,
    ) -> Result<String, AgentError> {
        let r = query.focus_region;
        let region = format!("{:.0}, {:.0}, {:.0}, {:.0}", r.x1, r.y1, r.x2, r.y2);
        let mut msg = ChatMessage::user(render(
            PERCEPTION_PROMPT,
            &[("region", &region), ("question", &query.question)],
        ));
        msg.image = observation.image_ref.as_ref().map(|url| ImageRef {
            url: url.clone(),
            region: Some(r),
        });
        self.caller
            .client
            .chat(AgentRole::Perception, &[msg])
            .map_err(|e| agent_error(AgentRole::Perception, e))
    }
}

pub struct LlmDecider {
    caller: Caller,
}

fn candidates_text(request: &DecisionRequest<'_>) -> String {
    request
        .candidates
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let seen: Vec<String> = request
                .retrieved
                .get(i)
                .map(|path| {
                    path.iter()
                        .map(|r| match r {
                            RetrievedContext::Visited(ctx) => format!(
                                "{} (visited; {})",
                                ctx.waypoint_id,
                                ctx.answers.first().map_or("no answers", String::as_str)
                            ),
                            RetrievedContext::Frontier {
                                waypoint_id,
                                semantic_value,
                            } => match semantic_value {
                                Some(v) => format!("{waypoint_id} (unvisited, value {v:.2})"),
                                None => format!("{waypoint_id} (unvisited)"),
                            },
                        })
                        .collect()
                })
                .unwrap_or_default();
            format!(
                "- {} (path value {:.2}, {:.1} m, score {:.2}) via {}",
                c.waypoint_id,
                c.path_value,
                c.distance,
                c.score,
                if seen.is_empty() {
                    "-".into()
                } else {
                    seen.join(" -> ")
                }
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

impl Decider for LlmDecider {
    fn decide(&self, request: &DecisionRequest<'_>) -> Result<Decision, AgentError> {
        let ctx = request.context;
        let answers = if ctx.answers.is_empty() {
            "nothing".to_string()
        } else {
            ctx.answers.join("\n")
        };
        let prompt = render(
            DECISION_PROMPT,
            &[
                ("instruction", &ctx.instruction),
                ("trajectory", or_none(&ctx.trajectory_caption)),
                ("semantic_map", &ctx.semantic_map_text),
                ("answers", &answers),
                ("candidates", &candidates_text(request)),
            ],
        );
        match self
            .caller
            .structured(AgentRole::Decision, prompt, Schema::Decision)?
        {
            Some(Structured::Decision(d)) => Ok(d),
            _ => {
                self.caller.warn(
                    AgentRole::Decision,
                    "decision defaulted to first candidate".into(),
                );
                Ok(match request.candidates.first() {
                    Some(c) => Decision::Move {
                        target: c.waypoint_id.clone(),
                    },
                    None => Decision::Stop,
                })
            }
        }
    }
}

/// Model-backed orchestration, perception and decision over one shared
/// client. Scanning stays with `scanner`.
pub fn http_backends(
    config: EndpointConfig,
    scanner: Arc<dyn Scanner>,
) -> Result<AgentBackends, LlmError> {
    let events = Arc::new(EventLog::default());
    let client = Arc::new(ChatClient::new(config, Some(events.clone()))?);
    let caller = || Caller {
        client: client.clone(),
        events: events.clone(),
    };
    Ok(AgentBackends {
        scanner,
        orchestrator: Arc::new(LlmOrchestrator { caller: caller() }),
        perceiver: Arc::new(LlmPerceiver { caller: caller() }),
        decider: Arc::new(LlmDecider { caller: caller() }),
        events: Some(events),
    })
}
