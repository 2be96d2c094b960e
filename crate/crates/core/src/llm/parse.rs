//! Structured model outputs: a JSON object, fenced or bare, per role schema.

use std::collections::BTreeMap;

use serde_json::Value;
use thiserror::Error;

use crate::agents::Decision;
use crate::perception::{Sufficiency, VisualQuery};
use crate::semantic_map::BBox;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schema {
    QueryRegion,
    Verdict,
    ValueMap,
    Decision,
}

impl Schema {
    /// Shape reminder used in repair prompts.
    pub fn shape(self) -> &'static str {
        match self {
            Schema::QueryRegion => r#"{"question": "<text>", "region": [x1, y1, x2, y2]}"#,
            Schema::Verdict => r#"{"sufficient": true | false}"#,
            Schema::ValueMap => r#"{"values": {"<waypoint id>": <number in [0,1]>}}"#,
            Schema::Decision => {
                r#"{"action": "move", "target": "<waypoint id>"} or {"action": "stop"}"#
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Structured {
    Query(VisualQuery),
    Verdict(Sufficiency),
    Values(BTreeMap<String, f64>),
    Decision(Decision),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("no JSON object found")]
    NoJson,
    #[error("JSON does not match the {schema:?} schema: {reason}")]
    Shape { schema: Schema, reason: String },
}

/// First JSON object in `text`: a ```json fence, any fence, then the
/// outermost braces.
pub fn extract_json(text: &str) -> Option<Value> {
    let mut candidates = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find("```") {
        let after = &rest[open + 3..];
        let body_start = after.find('\n').map_or(0, |i| i + 1);
        let Some(close) = after[body_start..].find("```") else {
            break;
        };
        candidates.push(&after[body_start..body_start + close]);
        rest = &after[body_start + close + 3..];
    }
    if let (Some(a), Some(b)) = (text.find('{'), text.rfind('}')) {
        if a < b {
            candidates.push(&text[a..=b]);
        }
    }
    candidates
        .into_iter()
        .filter_map(|c| serde_json::from_str::<Value>(c.trim()).ok())
        .find(Value::is_object)
}

fn shape(schema: Schema, reason: impl Into<String>) -> ParseError {
    ParseError::Shape {
        schema,
        reason: reason.into(),
    }
}

pub fn parse_structured(text: &str, schema: Schema) -> Result<Structured, ParseError> {
    let v = extract_json(text).ok_or(ParseError::NoJson)?;
    match schema {
        Schema::QueryRegion => {
            let question = v
                .get("question")
                .and_then(Value::as_str)
                .filter(|q| !q.trim().is_empty())
                .ok_or_else(|| shape(schema, "missing question"))?;
            let region: Vec<f64> = v
                .get("region")
                .and_then(Value::as_array)
                .map(|a| a.iter().filter_map(Value::as_f64).collect())
                .unwrap_or_default();
            if region.len() != 4 {
                return Err(shape(schema, "region must be four numbers"));
            }
            Ok(Structured::Query(VisualQuery {
                question: question.trim().to_string(),
                focus_region: BBox::new(region[0], region[1], region[2], region[3]),
            }))
        }
        Schema::Verdict => {
            let s = match (v.get("sufficient"), v.get("verdict")) {
                (Some(Value::Bool(b)), _) => *b,
                (_, Some(Value::String(s))) => match s.trim().to_lowercase().as_str() {
                    "sufficient" => true,
                    "insufficient" => false,
                    other => return Err(shape(schema, format!("unknown verdict `{other}`"))),
                },
                _ => return Err(shape(schema, "missing sufficient flag")),
            };
            Ok(Structured::Verdict(if s {
                Sufficiency::Sufficient
            } else {
                Sufficiency::Insufficient
            }))
        }
        Schema::ValueMap => {
            let obj = v
                .get("values")
                .and_then(Value::as_object)
                .or_else(|| v.as_object())
                .expect("extract_json returns objects");
            let mut out = BTreeMap::new();
            for (k, val) in obj {
                let x = val
                    .as_f64()
                    .ok_or_else(|| shape(schema, format!("value for `{k}` is not a number")))?;
                out.insert(k.clone(), x.clamp(0.0, 1.0));
            }
            Ok(Structured::Values(out))
        }
        Schema::Decision => {
            let action = v
                .get("action")
                .and_then(Value::as_str)
                .map(|s| s.trim().to_lowercase())
                .ok_or_else(|| shape(schema, "missing action"))?;
            match action.as_str() {
                "stop" => Ok(Structured::Decision(Decision::Stop)),
                "move" => {
                    let target = v
                        .get("target")
                        .and_then(Value::as_str)
                        .filter(|t| !t.trim().is_empty())
                        .ok_or_else(|| shape(schema, "move without target"))?;
                    Ok(Structured::Decision(Decision::Move {
                        target: target.trim().to_string(),
                    }))
                }
                other => Err(shape(schema, format!("unknown action `{other}`"))),
            }
        }
    }
}
