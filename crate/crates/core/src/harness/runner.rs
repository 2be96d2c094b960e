//! One episode: scan, map, perceive, expand the tree, select, decide, move.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::agents::{AgentBackends, Decision, DecisionRequest};
use crate::episode::Episode;
use crate::graph::NavGraph;
use crate::mcts::{ScoredCandidate, SearchTree};
use crate::memory::MemoryBank;
use crate::perception::{build_context, run_perception_loop, NEUTRAL_VALUE};
use crate::semantic_map::{build_semantic_map, DetectionRecord};

use super::config::{ConfigError, MovePolicy, RunConfig};
use super::trace::{
    EpisodeHeader, EpisodeSummary, EpisodeTrace, StepRecord, StopReason, TraceEvent,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// What the agent has learned about the graph: scanned waypoints, their
/// neighbours, and the edges seen from scanned waypoints.
#[derive(Debug, Default)]
struct Discovered {
    waypoints: BTreeSet<String>,
    edges: BTreeSet<(String, String)>,
}

impl Discovered {
    fn observe(&mut self, at: &str, neighbours: &[String]) {
        self.waypoints.insert(at.to_string());
        for n in neighbours {
            self.waypoints.insert(n.clone());
            let key = if at < n.as_str() {
                (at.to_string(), n.clone())
            } else {
                (n.clone(), at.to_string())
            };
            self.edges.insert(key);
        }
    }

    fn graph(&self, full: &NavGraph) -> NavGraph {
        full.subgraph(self.waypoints.iter().map(String::as_str), &self.edges)
            .expect("discovered edges come from the full graph")
    }
}

fn harness_event(kind: &str, detail: impl Into<String>) -> TraceEvent {
    log::warn!("episode: {kind}");
    TraceEvent::Harness {
        kind: kind.to_string(),
        detail: detail.into(),
    }
}

pub fn run_episode(
    episode: &Episode,
    backends: &AgentBackends,
    config: &RunConfig,
) -> Result<EpisodeTrace, HarnessError> {
    config.validate()?;
    let graph = &episode.graph;
    let layout = config.panorama;
    let max_steps = config.max_steps.unwrap_or(episode.max_steps);
    let loop_config = config.loop_config();
    let selection = config.selection();

    let header = EpisodeHeader {
        episode_id: episode.id.clone(),
        start: episode.start_id.clone(),
        goal: episode.goal_id.clone(),
        instruction: episode.instruction.clone(),
        success_radius: episode.success_radius,
        reference_length: episode.reference_length(),
        config: config.clone(),
    };

    let mut current = episode.start_id.clone();
    let mut visited = vec![current.clone()];
    let mut decision_points: Vec<String> = Vec::new();
    let mut path_length = 0.0;
    let mut tree =
        SearchTree::new(current.clone(), NEUTRAL_VALUE).with_prior_visit(config.prior_visit);
    let mut memory = MemoryBank::new();
    let mut discovered = Discovered::default();
    let mut trajectory = String::new();
    let mut steps = Vec::new();
    let mut stop_reason = StopReason::MaxSteps;
    let mut failure = None;

    for t in 0..max_steps {
        let mut events = Vec::new();
        let observation = match backends.scanner.scan(&current, &layout) {
            Ok(o) => o,
            Err(e) => {
                stop_reason = StopReason::Failed;
                failure = Some(format!("scan at step {t}: {e}"));
                break;
            }
        };
        let (detections, depths) = DetectionRecord::split(&observation.detections);
        let map = match build_semantic_map(t, &detections, &depths, &layout) {
            Ok(m) => m,
            Err(e) => {
                stop_reason = StopReason::Failed;
                failure = Some(format!("semantic map at step {t}: {e}"));
                break;
            }
        };
        let map_text = map.render_text();

        let neighbours = graph
            .navigable_candidates(&current)
            .expect("current waypoint is in the graph");
        discovered.observe(&current, &neighbours);
        let new_candidates: Vec<String> = neighbours
            .iter()
            .filter(|n| !tree.contains(n))
            .cloned()
            .collect();

        let outcome = run_perception_loop(
            backends,
            &observation,
            &map_text,
            &trajectory,
            &episode.instruction,
            &new_candidates,
            &loop_config,
        )
        .expect("loop config validated above");
        events.extend(outcome.events.iter().cloned().map(TraceEvent::Loop));

        let added = tree
            .expand(&current, &new_candidates, &outcome.values)
            .expect("every new candidate has a value");
        let reward = tree
            .compute_reward(&current, &added, &outcome.values)
            .expect("added nodes have values");
        tree.backpropagate(&current, reward)
            .expect("current waypoint is in the tree");

        let known = discovered.graph(graph);
        let (mut candidates, mut ranked) = if config.no_bd_mcts {
            (
                tree.ranked_leaves(&known, &current, config.lambda)
                    .expect("leaves are tree nodes"),
                false,
            )
        } else {
            (
                tree.select_top_k(&known, &current, &selection)
                    .expect("selection params validated"),
                true,
            )
        };
        if candidates.is_empty() {
            candidates = neighbour_fallback(&tree, &known, &current, config.lambda);
            ranked = false;
            if !candidates.is_empty() {
                events.push(harness_event(
                    "neighbour_fallback",
                    format!("{} neighbours", candidates.len()),
                ));
            }
        }

        let context = build_context(
            t,
            &current,
            &episode.instruction,
            &trajectory,
            &map_text,
            outcome.answers.clone(),
            outcome.values.clone(),
        );
        let retrieved: Vec<_> = candidates
            .iter()
            .map(|c| {
                let path: Vec<String> = tree
                    .path_to(&c.waypoint_id)
                    .expect("candidates are tree nodes")
                    .iter()
                    .map(|n| n.waypoint_id.clone())
                    .collect();
                memory.contexts_for_path(&path)
            })
            .collect();
        let request = DecisionRequest {
            current: &current,
            candidates: &candidates,
            ranked,
            context: &context,
            retrieved: &retrieved,
        };
        let decision = match backends.decider.decide(&request) {
            Ok(Decision::Move { target })
                if !candidates.iter().any(|c| c.waypoint_id == target) =>
            {
                events.push(harness_event("invalid_target", target));
                match candidates.first() {
                    Some(c) => Decision::Move {
                        target: c.waypoint_id.clone(),
                    },
                    None => Decision::Stop,
                }
            }
            Ok(d) => d,
            Err(e) => {
                events.extend(backends.drain_events().into_iter().map(TraceEvent::Agent));
                stop_reason = StopReason::Failed;
                failure = Some(format!("decision at step {t}: {e}"));
                break;
            }
        };

        let (segment, segment_length) = match &decision {
            Decision::Stop => (vec![current.clone()], 0.0),
            Decision::Move { target } => {
                let mut seg = known
                    .shortest_path(&current, target)
                    .expect("candidates are reachable in the discovered graph");
                if config.move_policy == MovePolicy::SingleEdge {
                    seg.truncate(2);
                }
                let len = graph
                    .path_length(&seg)
                    .expect("segment follows graph edges");
                (seg, len)
            }
        };
        path_length += segment_length;
        visited.extend(segment.iter().skip(1).cloned());
        events.extend(backends.drain_events().into_iter().map(TraceEvent::Agent));

        memory.store(context.clone()).expect("timesteps increase");
        decision_points.push(current.clone());

        steps.push(StepRecord {
            timestep: t,
            waypoint_id: current.clone(),
            semantic_map: map_text,
            queries: outcome.history.entries().to_vec(),
            verdicts: outcome.verdicts,
            semantic_values: outcome.values,
            added,
            reward,
            tree: tree.snapshot(if config.no_bd_mcts {
                None
            } else {
                Some(&candidates)
            }),
            candidates,
            decision: decision.clone(),
            segment: segment.clone(),
            segment_length,
            path_length,
            events,
        });

        if decision == Decision::Stop {
            stop_reason = StopReason::Stop;
            break;
        }
        current = segment.last().expect("segment starts at current").clone();
        trajectory = memory
            .reconstruct_trajectory(&decision_points)
            .expect("every decision point has a stored context");
    }

    let summary = EpisodeSummary {
        episode_id: episode.id.clone(),
        steps: steps.len(),
        final_waypoint: current,
        visited,
        path_length,
        stop_reason,
        failure,
    };
    Ok(EpisodeTrace {
        header,
        steps,
        contexts: memory.contexts().to_vec(),
        summary,
    })
}

/// Navigable neighbours of `current` scored as if they were leaves.
fn neighbour_fallback(
    tree: &SearchTree,
    known: &NavGraph,
    current: &str,
    lambda: f64,
) -> Vec<ScoredCandidate> {
    let neighbours = known.navigable_candidates(current).unwrap_or_default();
    let max_dist = neighbours
        .iter()
        .filter_map(|n| known.edge_weight(current, n))
        .fold(0.0, f64::max);
    let mut out: Vec<ScoredCandidate> = neighbours
        .iter()
        .filter(|n| tree.contains(n))
        .filter_map(|n| {
            tree.score_leaf(known, current, n, lambda, max_dist)
                .ok()
                .flatten()
        })
        .collect();
    out.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| b.path_value.total_cmp(&a.path_value))
            .then_with(|| a.waypoint_id.cmp(&b.waypoint_id))
    });
    out
}
