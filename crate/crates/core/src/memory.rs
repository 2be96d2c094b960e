//! Memory bank of per-step multimodal contexts and the trajectory caption
//! rebuilt from it.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::perception::SemanticValueMap;
use crate::semantic_map::parse_map_text;

/// Longest answer excerpt carried into a caption clause, in characters.
pub const EXCERPT_CHARS: usize = 120;
/// Objects listed per caption clause.
pub const CAPTION_OBJECTS: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MemoryError {
    #[error("timestep {got} is not after the last stored timestep {last}")]
    OutOfOrder { last: usize, got: usize },
    #[error("no stored context for waypoint `{0}`")]
    Missing(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultimodalContext {
    pub timestep: usize,
    pub waypoint_id: String,
    pub instruction: String,
    pub trajectory_caption: String,
    pub semantic_map_text: String,
    pub answers: Vec<String>,
    pub semantic_values: SemanticValueMap,
}

/// What the decision agent gets for one waypoint on a candidate's root path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RetrievedContext {
    Visited(MultimodalContext),
    Frontier {
        waypoint_id: String,
        semantic_value: Option<f64>,
    },
}

impl RetrievedContext {
    pub fn waypoint_id(&self) -> &str {
        match self {
            RetrievedContext::Visited(c) => &c.waypoint_id,
            RetrievedContext::Frontier { waypoint_id, .. } => waypoint_id,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MemoryBank {
    contexts: Vec<MultimodalContext>,
    by_waypoint: BTreeMap<String, Vec<usize>>,
}

impl MemoryBank {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_contexts(contexts: Vec<MultimodalContext>) -> Result<Self, MemoryError> {
        let mut bank = Self::new();
        for c in contexts {
            bank.store(c)?;
        }
        Ok(bank)
    }

    pub fn len(&self) -> usize {
        self.contexts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contexts.is_empty()
    }

    pub fn contexts(&self) -> &[MultimodalContext] {
        &self.contexts
    }

    /// Timesteps at which `waypoint` was recorded, ascending.
    pub fn visits(&self, waypoint: &str) -> &[usize] {
        self.by_waypoint.get(waypoint).map_or(&[], Vec::as_slice)
    }

    pub fn store(&mut self, context: MultimodalContext) -> Result<(), MemoryError> {
        if let Some(last) = self.contexts.last() {
            if context.timestep <= last.timestep {
                return Err(MemoryError::OutOfOrder {
                    last: last.timestep,
                    got: context.timestep,
                });
            }
        }
        self.by_waypoint
            .entry(context.waypoint_id.clone())
            .or_default()
            .push(context.timestep);
        self.contexts.push(context);
        Ok(())
    }

    fn at_timestep(&self, t: usize) -> Option<&MultimodalContext> {
        self.contexts
            .binary_search_by_key(&t, |c| c.timestep)
            .ok()
            .map(|i| &self.contexts[i])
    }

    /// Most recent context recorded at `waypoint`.
    pub fn latest(&self, waypoint: &str) -> Option<&MultimodalContext> {
        self.visits(waypoint)
            .last()
            .and_then(|&t| self.at_timestep(t))
    }

    /// Latest semantic value any stored step assigned to `waypoint`.
    pub fn latest_value(&self, waypoint: &str) -> Option<f64> {
        self.contexts
            .iter()
            .rev()
            .find_map(|c| c.semantic_values.get(waypoint))
    }

    /// One entry per path waypoint, in path order: the latest context for
    /// visited waypoints, a value-only placeholder otherwise.
    pub fn contexts_for_path(&self, path: &[String]) -> Vec<RetrievedContext> {
        path.iter()
            .map(|id| match self.latest(id) {
                Some(c) => RetrievedContext::Visited(c.clone()),
                None => RetrievedContext::Frontier {
                    waypoint_id: id.clone(),
                    semantic_value: self.latest_value(id),
                },
            })
            .collect()
    }

    /// Templated caption with one clause per visited position. Position `i`
    /// uses the context stored at timestep `i` when it belongs to that
    /// waypoint, otherwise the waypoint's latest context.
    pub fn reconstruct_trajectory(&self, visited: &[String]) -> Result<String, MemoryError> {
        let mut clauses = Vec::with_capacity(visited.len());
        for (i, id) in visited.iter().enumerate() {
            let ctx = self
                .at_timestep(i)
                .filter(|c| &c.waypoint_id == id)
                .or_else(|| self.latest(id))
                .ok_or_else(|| MemoryError::Missing(id.clone()))?;
            let verb = if i == 0 { "started at" } else { "moved to" };
            clauses.push(format!(
                "Step {i}: {verb} {id}; saw {}; learned {}",
                nearest_objects(&ctx.semantic_map_text),
                excerpt(ctx.answers.first().map(String::as_str))
            ));
        }
        Ok(clauses.join("; "))
    }
}

impl Serialize for MemoryBank {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.contexts.serialize(s)
    }
}

impl<'de> Deserialize<'de> for MemoryBank {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let contexts = Vec::<MultimodalContext>::deserialize(d)?;
        MemoryBank::from_contexts(contexts).map_err(serde::de::Error::custom)
    }
}

fn nearest_objects(map_text: &str) -> String {
    let mut entries = parse_map_text(map_text).unwrap_or_default();
    entries.sort_by(|a, b| {
        a.depth
            .total_cmp(&b.depth)
            .then_with(|| a.category.cmp(&b.category))
    });
    if entries.is_empty() {
        return "nothing".to_string();
    }
    entries
        .iter()
        .take(CAPTION_OBJECTS)
        .map(|e| format!("{} at {:.1} m", e.category, e.depth))
        .collect::<Vec<_>>()
        .join(", ")
}

fn excerpt(answer: Option<&str>) -> String {
    match answer {
        None => "nothing".to_string(),
        Some(a) => a.chars().take(EXCERPT_CHARS).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(t: usize, wp: &str, answers: &[&str]) -> MultimodalContext {
        MultimodalContext {
            timestep: t,
            waypoint_id: wp.into(),
            instruction: "go".into(),
            trajectory_caption: String::new(),
            semantic_map_text:
                "straight ahead, door (bounding box [1,2,3,4]) at 3.0 meters\n\
                                turn left 10.0 degrees, lamp (bounding box [1,2,3,4]) at 1.0 meters"
                    .into(),
            answers: answers.iter().map(|s| s.to_string()).collect(),
            semantic_values: SemanticValueMap::new(),
        }
    }

    #[test]
    fn store_order_and_index() {
        let mut bank = MemoryBank::new();
        bank.store(ctx(0, "a", &[])).unwrap();
        assert_eq!(bank.len(), 1);
        bank.store(ctx(2, "w", &[])).unwrap();
        assert_eq!(
            bank.store(ctx(1, "b", &[])),
            Err(MemoryError::OutOfOrder { last: 2, got: 1 })
        );
        bank.store(ctx(7, "w", &[])).unwrap();
        assert_eq!(bank.visits("w"), &[2, 7]);
        assert_eq!(bank.latest("w").unwrap().timestep, 7);
    }

    #[test]
    fn path_contexts_with_frontier() {
        let mut bank = MemoryBank::new();
        let mut c0 = ctx(0, "r", &[]);
        c0.semantic_values.insert("v", 0.8);
        bank.store(c0).unwrap();
        bank.store(ctx(1, "a", &[])).unwrap();
        let path: Vec<String> = ["r", "a", "v"].iter().map(|s| s.to_string()).collect();
        let got = bank.contexts_for_path(&path);
        assert_eq!(got.len(), 3);
        assert!(matches!(&got[1], RetrievedContext::Visited(c) if c.timestep == 1));
        assert_eq!(
            got[2],
            RetrievedContext::Frontier {
                waypoint_id: "v".into(),
                semantic_value: Some(0.8)
            }
        );
    }

    #[test]
    fn caption_template() {
        let mut bank = MemoryBank::new();
        bank.store(ctx(0, "a", &["a brown wooden door"])).unwrap();
        let cap = bank.reconstruct_trajectory(&["a".to_string()]).unwrap();
        assert_eq!(
            cap,
            "Step 0: started at a; saw lamp at 1.0 m, door at 3.0 m; learned a brown wooden door"
        );
        bank.store(ctx(1, "b", &[])).unwrap();
        let cap = bank
            .reconstruct_trajectory(&["a".to_string(), "b".to_string()])
            .unwrap();
        assert!(cap
            .ends_with("; Step 1: moved to b; saw lamp at 1.0 m, door at 3.0 m; learned nothing"));
        assert_eq!(
            bank.reconstruct_trajectory(&["zz".to_string()]),
            Err(MemoryError::Missing("zz".into()))
        );
    }

    #[test]
    fn long_answers_truncated() {
        let mut bank = MemoryBank::new();
        let long = "x".repeat(500);
        bank.store(ctx(0, "a", &[&long])).unwrap();
        let cap = bank.reconstruct_trajectory(&["a".to_string()]).unwrap();
        assert!(cap.ends_with(&"x".repeat(EXCERPT_CHARS)));
        assert!(!cap.contains(&"x".repeat(EXCERPT_CHARS + 1)));
    }

    #[test]
    fn serde_roundtrip() {
        let mut bank = MemoryBank::new();
        bank.store(ctx(0, "a", &["one"])).unwrap();
        bank.store(ctx(3, "b", &["two", "three"])).unwrap();
        let text = serde_json::to_string(&bank).unwrap();
        let back: MemoryBank = serde_json::from_str(&text).unwrap();
        assert_eq!(back, bank);
    }
}
