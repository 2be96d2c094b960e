//! Deterministic agents backed by simulator ground truth.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::agents::{
    AgentBackends, AgentError, AgentRole, Decider, Decision, DecisionRequest, Observation,
    Orchestrator, Perceiver, Scanner,
};
use crate::perception::{QueryHistory, Sufficiency, VisualQuery, NO_RELEVANT_OBJECTS};
use crate::semantic_map::{parse_map_text, BBox, PanoramaLayout};

use super::scan::oracle_scan;
use super::world::{material_adjective, World, CATEGORIES, TRAP_DECAY, TRAP_LURE_DEPTH};

/// Focus regions are the matching boxes grown by this factor.
const REGION_INFLATE: f64 = 1.2;
/// Minimum focus-region side, pixels.
const MIN_REGION: f64 = 16.0;
const GENERIC_QUESTIONS: &[&str] = &[
    "What objects are in view, and how are they arranged?",
    "Which directions look like open passages?",
    "Is there anything that looks like a destination?",
];

/// Categories mentioned in `instruction` as whole words, by first mention.
pub fn landmark_nouns(instruction: &str) -> Vec<String> {
    let words: Vec<String> = instruction
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect();
    let mut out: Vec<String> = Vec::new();
    for w in &words {
        if CATEGORIES.contains(&w.as_str()) && !out.contains(w) {
            out.push(w.clone());
        }
    }
    out
}

fn mentions(question: &str, noun: &str) -> bool {
    question
        .split(|c: char| !c.is_alphanumeric())
        .any(|w| w.eq_ignore_ascii_case(noun))
}

pub struct OracleScanner {
    world: Arc<World>,
}

impl OracleScanner {
    pub fn new(world: Arc<World>) -> Self {
        Self { world }
    }
}

impl Scanner for OracleScanner {
    fn scan(&self, at: &str, layout: &PanoramaLayout) -> Result<Observation, AgentError> {
        oracle_scan(&self.world, at, layout)
            .map_err(|e| AgentError::backend(AgentRole::Scan, e.to_string()))
    }
}

pub struct OracleOrchestrator {
    world: Arc<World>,
    layout: PanoramaLayout,
    goal_distance: BTreeMap<String, f64>,
    diameter: f64,
}

impl OracleOrchestrator {
    pub fn new(world: Arc<World>, layout: PanoramaLayout) -> Self {
        let g = world.graph();
        let goal_distance = g
            .distances_from(&world.episode.goal_id)
            .expect("goal is in graph");
        let diameter = g.diameter();
        Self {
            world,
            layout,
            goal_distance,
            diameter,
        }
    }

    /// Ground-truth progress value: `1 − d_geo(u, goal) / diameter`.
    pub fn true_value(&self, waypoint: &str) -> Option<f64> {
        let d = *self.goal_distance.get(waypoint)?;
        if self.diameter <= 0.0 {
            return Some(1.0);
        }
        Some((1.0 - d / self.diameter).clamp(0.0, 1.0))
    }

    fn value(&self, waypoint: &str, answers: &[String]) -> Option<f64> {
        for decoy in &self.world.decoys {
            if let Some(&depth) = decoy.depths.get(waypoint) {
                return Some(if depth <= TRAP_LURE_DEPTH {
                    decoy.lure
                } else {
                    decoy.lure * TRAP_DECAY
                });
            }
        }
        for gate in &self.world.gates {
            if waypoint == gate.correct_entry || waypoint == gate.decoy_entry {
                let seen = answers
                    .iter()
                    .any(|a| a.to_lowercase().contains(&gate.phrase.to_lowercase()));
                if !seen {
                    return self.true_value(&gate.correct_entry);
                }
            }
        }
        self.true_value(waypoint)
    }

    fn region_for(&self, noun: &str, map_text: &str) -> BBox {
        let full = self.layout.full();
        let entries = parse_map_text(map_text).unwrap_or_default();
        let Some(region) = entries
            .iter()
            .filter(|e| e.category == noun)
            .map(|e| e.bbox)
            .reduce(|a, b| a.union(&b))
        else {
            return full;
        };
        let mut r = region
            .inflate(REGION_INFLATE)
            .clamp_to(self.layout.width, self.layout.height);
        if r.width() < MIN_REGION {
            let cx = r
                .center_x()
                .clamp(MIN_REGION / 2.0, self.layout.width - MIN_REGION / 2.0);
            r.x1 = cx - MIN_REGION / 2.0;
            r.x2 = cx + MIN_REGION / 2.0;
        }
        if r.height() < MIN_REGION {
            let cy = ((r.y1 + r.y2) / 2.0)
                .clamp(MIN_REGION / 2.0, self.layout.height - MIN_REGION / 2.0);
            r.y1 = cy - MIN_REGION / 2.0;
            r.y2 = cy + MIN_REGION / 2.0;
        }
        r
    }
}

impl Orchestrator for OracleOrchestrator {
    fn generate_query(
        &self,
        map_text: &str,
        _trajectory: &str,
        instruction: &str,
        history: &QueryHistory,
    ) -> Result<VisualQuery, AgentError> {
        let uncovered = landmark_nouns(instruction).into_iter().find(|n| {
            !history
                .entries()
                .iter()
                .any(|e| mentions(&e.query.question, n))
        });
        if let Some(noun) = uncovered {
            return Ok(VisualQuery {
                question: format!("What does the {noun} look like, and what is next to it?"),
                focus_region: self.region_for(&noun, map_text),
            });
        }
        let q = GENERIC_QUESTIONS
            .iter()
            .find(|q| !history.asked(q))
            .unwrap_or(&GENERIC_QUESTIONS[0]);
        Ok(VisualQuery {
            question: q.to_string(),
            focus_region: self.layout.full(),
        })
    }

    fn check_sufficiency(
        &self,
        _map_text: &str,
        history: &QueryHistory,
        instruction: &str,
    ) -> Result<Sufficiency, AgentError> {
        let nouns = landmark_nouns(instruction);
        let covered = nouns.iter().all(|n| {
            history
                .entries()
                .iter()
                .any(|e| mentions(&e.query.question, n))
        });
        if covered && !(nouns.is_empty() && history.is_empty()) {
            Ok(Sufficiency::Sufficient)
        } else {
            Ok(Sufficiency::Insufficient)
        }
    }

    fn evaluate_values(
        &self,
        _instruction: &str,
        _trajectory: &str,
        answers: &[String],
        candidates: &[String],
    ) -> Result<BTreeMap<String, f64>, AgentError> {
        Ok(candidates
            .iter()
            .filter_map(|c| self.value(c, answers).map(|v| (c.clone(), v)))
            .collect())
    }
}

pub struct OraclePerceiver;

fn article(next: &str) -> &'static str {
    match next.chars().next() {
        Some(c) if "aeiou".contains(c.to_ascii_lowercase()) => "an",
        _ => "a",
    }
}

impl Perceiver for OraclePerceiver {
    fn perceive(
        &self,
        observation: &Observation,
        query: &VisualQuery,
    ) -> Result<String, AgentError> {
        let mut hits: Vec<_> = observation
            .objects
            .iter()
            .filter(|o| o.bbox.intersects(&query.focus_region))
            .collect();
        if hits.is_empty() {
            return Ok(NO_RELEVANT_OBJECTS.to_string());
        }
        hits.sort_by(|a, b| {
            a.bbox
                .x1
                .total_cmp(&b.bbox.x1)
                .then_with(|| a.object_id.cmp(&b.object_id))
        });
        let parts: Vec<String> = hits
            .iter()
            .map(|o| {
                let mut words = Vec::new();
                if let Some(c) = o.attributes.get("color") {
                    words.push(c.clone());
                }
                if let Some(m) = o.attributes.get("material") {
                    words.push(material_adjective(m).to_string());
                }
                words.push(o.category.clone());
                let noun = words.join(" ");
                let mut s = format!("{} {noun}", article(&noun));
                if let Some(state) = o.attributes.get("state") {
                    s.push_str(", ");
                    s.push_str(state);
                }
                let neighbour = observation
                    .objects
                    .iter()
                    .filter(|n| n.object_id != o.object_id)
                    .min_by(|a, b| {
                        let da = (a.bbox.center_x() - o.bbox.center_x()).abs();
                        let db = (b.bbox.center_x() - o.bbox.center_x()).abs();
                        da.total_cmp(&db)
                            .then_with(|| a.object_id.cmp(&b.object_id))
                    });
                if let Some(n) = neighbour {
                    let side = if n.bbox.center_x() >= o.bbox.center_x() {
                        "left"
                    } else {
                        "right"
                    };
                    s.push_str(&format!(
                        ", to the {side} of {} {}",
                        article(&n.category),
                        n.category
                    ));
                }
                s
            })
            .collect();
        Ok(parts.join("; "))
    }
}

/// Stops within the success radius. Given a ranked set it follows the top
/// candidate; given unranked leaves it moves greedily to the best adjacent
/// one and stops when none is adjacent.
pub struct OracleDecider {
    world: Arc<World>,
    goal_distance: BTreeMap<String, f64>,
}

impl OracleDecider {
    pub fn new(world: Arc<World>) -> Self {
        let goal_distance = world
            .graph()
            .distances_from(&world.episode.goal_id)
            .expect("goal is in graph");
        Self {
            world,
            goal_distance,
        }
    }
}

impl Decider for OracleDecider {
    fn decide(&self, request: &DecisionRequest<'_>) -> Result<Decision, AgentError> {
        let here = self
            .goal_distance
            .get(request.current)
            .copied()
            .unwrap_or(f64::INFINITY);
        if here <= self.world.episode.success_radius {
            return Ok(Decision::Stop);
        }
        let choice = if request.ranked {
            request.candidates.first()
        } else {
            let graph = self.world.graph();
            request
                .candidates
                .iter()
                .filter(|c| graph.has_edge(request.current, &c.waypoint_id))
                .min_by(|a, b| {
                    b.path_value
                        .total_cmp(&a.path_value)
                        .then_with(|| a.waypoint_id.cmp(&b.waypoint_id))
                })
        };
        Ok(match choice {
            Some(c) => Decision::Move {
                target: c.waypoint_id.clone(),
            },
            None => Decision::Stop,
        })
    }
}

/// Oracle agents for `world`.
pub fn oracle_backends(world: Arc<World>, layout: PanoramaLayout) -> AgentBackends {
    AgentBackends {
        scanner: Arc::new(OracleScanner {
            world: world.clone(),
        }),
        orchestrator: Arc::new(OracleOrchestrator::new(world.clone(), layout)),
        perceiver: Arc::new(OraclePerceiver),
        decider: Arc::new(OracleDecider::new(world)),
        events: None,
    }
}
