//! Seeded synthetic worlds: a navigation graph, attributed objects with
//! waypoint-set visibility, an instruction over landmark objects, and optional
//! decoy annotations that the oracle orchestrator uses to shape values.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::episode::{
    Episode, EpisodeError, EpisodeFile, DEFAULT_MAX_STEPS, DEFAULT_SUCCESS_RADIUS,
};
use crate::graph::{euclidean, NavGraph, Waypoint};

/// Objects are visible from waypoints within this horizontal range.
pub const VISIBILITY_RANGE: f64 = 8.0;
/// `V_sem` the oracle assigns to the first two waypoints of a decoy branch.
pub const TRAP_LURE_VALUE: f64 = 0.95;
/// Multiplier applied to the lure beyond depth [`TRAP_LURE_DEPTH`].
pub const TRAP_DECAY: f64 = 0.3;
pub const TRAP_LURE_DEPTH: usize = 2;

/// Single-word object categories. Instructions never contain any of these
/// words except as landmark nouns.
pub const CATEGORIES: &[&str] = &[
    "door",
    "bench",
    "sofa",
    "table",
    "chair",
    "plant",
    "lamp",
    "painting",
    "bed",
    "sink",
    "mirror",
    "cabinet",
    "rug",
    "shelf",
    "piano",
    "fireplace",
    "vase",
    "clock",
    "bathtub",
    "stool",
];
const COLORS: &[&str] = &[
    "brown", "white", "black", "gray", "red", "blue", "green", "beige", "yellow",
];
const MATERIALS: &[&str] = &[
    "wood", "metal", "glass", "fabric", "stone", "leather", "ceramic",
];

#[derive(Debug, Error)]
pub enum WorldError {
    #[error(transparent)]
    Episode(#[from] EpisodeError),
    #[error("unknown world profile `{0}`")]
    UnknownProfile(String),
    #[error("invalid world: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    /// Linear chain, goal at the far end.
    Corridor,
    /// Y-junction with a lure-valued dead-end arm.
    Trap,
    /// Grid maze with loops.
    Maze,
    /// Random geometric graph.
    R2rLike,
    /// Fork whose correct arm is only identifiable from perceived attributes.
    Landmark,
}

impl Profile {
    pub const ALL: [Profile; 5] = [
        Profile::Corridor,
        Profile::Trap,
        Profile::Maze,
        Profile::R2rLike,
        Profile::Landmark,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Profile::Corridor => "corridor",
            Profile::Trap => "trap",
            Profile::Maze => "maze",
            Profile::R2rLike => "r2r-like",
            Profile::Landmark => "landmark",
        }
    }

    fn salt(self) -> u64 {
        match self {
            Profile::Corridor => 0x11,
            Profile::Trap => 0x22,
            Profile::Maze => 0x33,
            Profile::R2rLike => 0x44,
            Profile::Landmark => 0x55,
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Profile {
    type Err = WorldError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "corridor" => Ok(Profile::Corridor),
            "trap" => Ok(Profile::Trap),
            "maze" => Ok(Profile::Maze),
            "r2r-like" | "r2r_like" | "r2r" => Ok(Profile::R2rLike),
            "landmark" | "landmark-gated" => Ok(Profile::Landmark),
            other => Err(WorldError::UnknownProfile(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub id: String,
    pub category: String,
    pub attributes: BTreeMap<String, String>,
    pub position: [f64; 3],
    pub visible_from: BTreeSet<String>,
}

impl SceneObject {
    /// "brown wooden door": colour, material adjective and category.
    pub fn description(&self) -> String {
        let mut words = Vec::new();
        if let Some(c) = self.attributes.get("color") {
            words.push(c.clone());
        }
        if let Some(m) = self.attributes.get("material") {
            words.push(material_adjective(m).to_string());
        }
        words.push(self.category.clone());
        words.join(" ")
    }
}

pub fn material_adjective(material: &str) -> &str {
    match material {
        "wood" => "wooden",
        other => other,
    }
}

/// A branch whose oracle values lure the agent in and then decay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoyBranch {
    pub fork: String,
    /// Branch waypoints with their depth below the fork (entry = 1).
    pub depths: BTreeMap<String, usize>,
    pub lure: f64,
}

/// A fork whose two entries look alike until `phrase` has been perceived.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkGate {
    pub fork: String,
    pub correct_entry: String,
    pub decoy_entry: String,
    pub phrase: String,
}

#[derive(Debug, Clone)]
pub struct World {
    pub episode: Episode,
    pub objects: Vec<SceneObject>,
    pub landmarks: Vec<String>,
    pub decoys: Vec<DecoyBranch>,
    pub gates: Vec<LandmarkGate>,
    pub profile: Option<Profile>,
    pub seed: Option<u64>,
}

/// World JSON: the episode schema plus `objects` and oracle annotations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldFile {
    #[serde(flatten)]
    pub episode: EpisodeFile,
    #[serde(default)]
    pub objects: Vec<SceneObject>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub landmarks: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub decoys: Vec<DecoyBranch>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gates: Vec<LandmarkGate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<Profile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl World {
    pub fn from_episode(episode: Episode) -> Self {
        Self {
            episode,
            objects: Vec::new(),
            landmarks: Vec::new(),
            decoys: Vec::new(),
            gates: Vec::new(),
            profile: None,
            seed: None,
        }
    }

    pub fn graph(&self) -> &NavGraph {
        &self.episode.graph
    }

    pub fn object(&self, id: &str) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn to_file(&self) -> WorldFile {
        WorldFile {
            episode: self.episode.to_file(),
            objects: self.objects.clone(),
            landmarks: self.landmarks.clone(),
            decoys: self.decoys.clone(),
            gates: self.gates.clone(),
            profile: self.profile,
            seed: self.seed,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("world serializes")
    }

    pub fn from_file(file: WorldFile, fallback_id: Option<&str>) -> Result<Self, WorldError> {
        let episode = file.episode.into_episode(fallback_id)?;
        let world = Self {
            episode,
            objects: file.objects,
            landmarks: file.landmarks,
            decoys: file.decoys,
            gates: file.gates,
            profile: file.profile,
            seed: file.seed,
        };
        world.validate()?;
        Ok(world)
    }

    pub fn from_json(text: &str, fallback_id: Option<&str>) -> Result<Self, WorldError> {
        let file: WorldFile = serde_json::from_str(text).map_err(EpisodeError::from)?;
        Self::from_file(file, fallback_id)
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        let g = self.graph();
        let invalid = |m: String| Err(WorldError::Invalid(m));
        for o in &self.objects {
            if o.visible_from.is_empty() {
                return invalid(format!("object `{}` is visible from nowhere", o.id));
            }
            if !o.attributes.contains_key("color") {
                return invalid(format!("object `{}` has no color", o.id));
            }
            if let Some(w) = o.visible_from.iter().find(|w| !g.contains(w)) {
                return invalid(format!("object `{}` visible from unknown `{w}`", o.id));
            }
        }
        for l in &self.landmarks {
            if self.object(l).is_none() {
                return invalid(format!("landmark `{l}` is not an object"));
            }
        }
        for d in &self.decoys {
            if let Some(w) = d.depths.keys().chain([&d.fork]).find(|w| !g.contains(w)) {
                return invalid(format!("decoy waypoint `{w}` not in graph"));
            }
        }
        for gt in &self.gates {
            for w in [&gt.fork, &gt.correct_entry, &gt.decoy_entry] {
                if !g.contains(w) {
                    return invalid(format!("gate waypoint `{w}` not in graph"));
                }
            }
        }
        Ok(())
    }
}

/// Resolves a world argument: `seed:profile`, a bare profile name (seeded
/// with `seed`, default 0), or a path to world/episode JSON.
pub fn resolve_world(spec: &str, seed: Option<u64>) -> Result<World, WorldError> {
    if let Some((s, p)) = spec.split_once(':') {
        if let (Ok(s), Ok(p)) = (s.trim().parse::<u64>(), p.parse::<Profile>()) {
            return Ok(generate_world(s, p));
        }
    }
    if let Ok(p) = spec.parse::<Profile>() {
        return Ok(generate_world(seed.unwrap_or(0), p));
    }
    let text = std::fs::read_to_string(spec)
        .map_err(|e| WorldError::Invalid(format!("cannot read world `{spec}`: {e}")))?;
    let stem = std::path::Path::new(spec)
        .file_stem()
        .and_then(|s| s.to_str());
    World::from_json(&text, stem)
}

/// Deterministic world for `(seed, profile)`.
pub fn generate_world(seed: u64, profile: Profile) -> World {
    let mut rng =
        ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ profile.salt());
    let layout = match profile {
        Profile::Corridor => corridor(&mut rng),
        Profile::Trap => trap(&mut rng),
        Profile::Maze => maze(&mut rng),
        Profile::R2rLike => r2r_like(&mut rng),
        Profile::Landmark => landmark(&mut rng),
    };
    layout.into_world(&mut rng, seed, profile)
}

/// Structural description produced by each profile builder; nodes are indexed
/// by construction order and renamed to shuffled ids at the end.
struct Layout {
    positions: Vec<[f64; 3]>,
    edges: Vec<(usize, usize)>,
    start: usize,
    goal: usize,
    /// Landmark node anchors, in instruction order (goal landmark last).
    landmark_nodes: Vec<usize>,
    /// Fixed landmark objects (category, color, material, state) per anchor,
    /// overriding random choice.
    landmark_specs: Vec<Option<ObjectSpec>>,
    instruction: fn(&[String]) -> String,
    decoy: Option<(usize, Vec<usize>)>,
    gate: Option<GateSpec>,
}

struct GateSpec {
    fork: usize,
    correct: usize,
    decoy: usize,
    decoy_object: ObjectSpec,
}

#[derive(Clone)]
struct ObjectSpec {
    category: &'static str,
    color: &'static str,
    material: &'static str,
    state: Option<&'static str>,
}

fn unit(angle: f64) -> [f64; 2] {
    // world heading: 0 = +y, clockwise positive
    [angle.sin(), angle.cos()]
}

fn step(from: [f64; 3], angle: f64, len: f64) -> [f64; 3] {
    let u = unit(angle);
    [from[0] + u[0] * len, from[1] + u[1] * len, 0.0]
}

fn chain(
    rng: &mut ChaCha8Rng,
    positions: &mut Vec<[f64; 3]>,
    edges: &mut Vec<(usize, usize)>,
    from: usize,
    heading: f64,
    count: usize,
    first_len: Option<f64>,
) -> Vec<usize> {
    let mut out = Vec::with_capacity(count);
    let mut prev = from;
    for i in 0..count {
        let len = match (i, first_len) {
            (0, Some(l)) => l,
            _ => rng.gen_range(3.5..5.0),
        };
        let h = heading + rng.gen_range(-0.12..0.12);
        let p = step(positions[prev], h, len);
        positions.push(p);
        let idx = positions.len() - 1;
        edges.push((prev, idx));
        out.push(idx);
        prev = idx;
    }
    out
}

fn corridor(rng: &mut ChaCha8Rng) -> Layout {
    let heading = rng.gen_range(-PI..PI);
    let mut positions = vec![[0.0, 0.0, 0.0]];
    let mut edges = Vec::new();
    let nodes = chain(rng, &mut positions, &mut edges, 0, heading, 7, None);
    let mid = nodes[rng.gen_range(2..4)];
    Layout {
        positions,
        edges,
        start: 0,
        goal: nodes[6],
        landmark_nodes: vec![mid, nodes[6]],
        landmark_specs: vec![None, None],
        instruction: |d| {
            format!(
                "Walk down the hallway past the {} and stop next to the {}.",
                d[0], d[1]
            )
        },
        decoy: None,
        gate: None,
    }
}

fn trap(rng: &mut ChaCha8Rng) -> Layout {
    let heading = rng.gen_range(-PI..PI);
    let mut positions = vec![[0.0, 0.0, 0.0]];
    let mut edges = Vec::new();
    let stem_len = rng.gen_range(2..=3);
    let stem = chain(rng, &mut positions, &mut edges, 0, heading, stem_len, None);
    let fork = *stem.last().unwrap();
    let spread = rng.gen_range(0.9..1.2);
    let (good_h, bad_h) = if rng.gen_bool(0.5) {
        (heading + spread, heading - spread)
    } else {
        (heading - spread, heading + spread)
    };
    let entry_len = rng.gen_range(3.5..5.0);
    let (arm_len, decoy_len) = (rng.gen_range(3..=4), rng.gen_range(4..=5));
    let arm = chain(
        rng,
        &mut positions,
        &mut edges,
        fork,
        good_h,
        arm_len,
        Some(entry_len),
    );
    let decoy = chain(
        rng,
        &mut positions,
        &mut edges,
        fork,
        bad_h,
        decoy_len,
        Some(entry_len),
    );
    let goal = *arm.last().unwrap();
    Layout {
        positions,
        edges,
        start: 0,
        goal,
        landmark_nodes: vec![fork, goal],
        landmark_specs: vec![None, None],
        instruction: |d| {
            format!(
                "Walk to the {} and continue until you reach the {}.",
                d[0], d[1]
            )
        },
        decoy: Some((fork, decoy)),
        gate: None,
    }
}

fn landmark(rng: &mut ChaCha8Rng) -> Layout {
    let heading = rng.gen_range(-PI..PI);
    let mut positions = vec![[0.0, 0.0, 0.0]];
    let mut edges = Vec::new();
    let stem = chain(rng, &mut positions, &mut edges, 0, heading, 2, None);
    let fork = *stem.last().unwrap();
    let spread = rng.gen_range(0.9..1.2);
    let (good_h, bad_h) = if rng.gen_bool(0.5) {
        (heading + spread, heading - spread)
    } else {
        (heading - spread, heading + spread)
    };
    let entry_len = rng.gen_range(3.5..5.0);
    let arm = chain(
        rng,
        &mut positions,
        &mut edges,
        fork,
        good_h,
        3,
        Some(entry_len),
    );
    let wrong = chain(
        rng,
        &mut positions,
        &mut edges,
        fork,
        bad_h,
        2,
        Some(entry_len),
    );
    let goal = *arm.last().unwrap();
    let door_color = *COLORS.choose(rng).unwrap();
    let other_color = *COLORS
        .iter()
        .filter(|c| **c != door_color)
        .collect::<Vec<_>>()
        .choose(rng)
        .unwrap();
    Layout {
        positions,
        edges,
        start: 0,
        goal,
        landmark_nodes: vec![arm[0], goal],
        landmark_specs: vec![
            Some(ObjectSpec {
                category: "door",
                color: door_color,
                material: "wood",
                state: Some("open"),
            }),
            None,
        ],
        instruction: |d| format!("Go through the {} and stop next to the {}.", d[0], d[1]),
        decoy: None,
        gate: Some(GateSpec {
            fork,
            correct: arm[0],
            decoy: wrong[0],
            decoy_object: ObjectSpec {
                category: "door",
                color: other_color,
                material: "metal",
                state: Some("open"),
            },
        }),
    }
}

fn maze(rng: &mut ChaCha8Rng) -> Layout {
    let rows = rng.gen_range(3..=4);
    let cols = rng.gen_range(4..=5);
    let spacing = 4.0;
    let mut positions = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            positions.push([
                c as f64 * spacing + rng.gen_range(-0.4..0.4),
                r as f64 * spacing + rng.gen_range(-0.4..0.4),
                0.0,
            ]);
        }
    }
    let id = |r: usize, c: usize| r * cols + c;
    let mut grid_edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                grid_edges.push((id(r, c), id(r, c + 1)));
            }
            if r + 1 < rows {
                grid_edges.push((id(r, c), id(r + 1, c)));
            }
        }
    }
    // randomized DFS spanning tree, then a few loop-closing edges
    let n = rows * cols;
    let mut visited = vec![false; n];
    let mut stack = vec![0usize];
    visited[0] = true;
    let mut edges = Vec::new();
    while let Some(&cur) = stack.last() {
        let mut options: Vec<usize> = grid_edges
            .iter()
            .filter_map(|&(a, b)| match (a == cur, b == cur) {
                (true, _) if !visited[b] => Some(b),
                (_, true) if !visited[a] => Some(a),
                _ => None,
            })
            .collect();
        if options.is_empty() {
            stack.pop();
            continue;
        }
        options.shuffle(rng);
        let next = options[0];
        visited[next] = true;
        edges.push((cur, next));
        stack.push(next);
    }
    let mut spare: Vec<_> = grid_edges
        .into_iter()
        .filter(|&(a, b)| {
            !edges
                .iter()
                .any(|&(x, y)| (x, y) == (a, b) || (y, x) == (a, b))
        })
        .collect();
    spare.shuffle(rng);
    edges.extend(spare.into_iter().take(rng.gen_range(2..=3)));

    let start = 0;
    let goal = farthest(&positions, &edges, start);
    let path = index_path(&positions, &edges, start, goal);
    let mid = path[path.len() / 2];
    Layout {
        positions,
        edges,
        start,
        goal,
        landmark_nodes: vec![mid, goal],
        landmark_specs: vec![None, None],
        instruction: |d| {
            format!(
                "Find your way past the {} and wait beside the {}.",
                d[0], d[1]
            )
        },
        decoy: None,
        gate: None,
    }
}

fn r2r_like(rng: &mut ChaCha8Rng) -> Layout {
    let n = rng.gen_range(14..=22);
    let mut positions: Vec<[f64; 3]> = Vec::new();
    while positions.len() < n {
        let p = [rng.gen_range(0.0..28.0), rng.gen_range(0.0..28.0), 0.0];
        if positions.iter().all(|q| euclidean(q, &p) >= 3.5) {
            positions.push(p);
        }
    }
    let mut edges = Vec::new();
    // minimum spanning tree keeps the graph connected
    let mut in_tree = vec![false; n];
    in_tree[0] = true;
    for _ in 1..n {
        let mut best = (f64::INFINITY, 0, 0);
        for a in (0..n).filter(|&a| in_tree[a]) {
            for b in (0..n).filter(|&b| !in_tree[b]) {
                let d = euclidean(&positions[a], &positions[b]);
                if d < best.0 {
                    best = (d, a, b);
                }
            }
        }
        in_tree[best.2] = true;
        edges.push((best.1, best.2));
    }
    for a in 0..n {
        for b in a + 1..n {
            let known = edges
                .iter()
                .any(|&(x, y)| (x, y) == (a, b) || (x, y) == (b, a));
            if !known && euclidean(&positions[a], &positions[b]) < 6.0 && rng.gen_bool(0.5) {
                edges.push((a, b));
            }
        }
    }
    let start = rng.gen_range(0..n);
    let goal = farthest(&positions, &edges, start);
    let path = index_path(&positions, &edges, start, goal);
    let mid = path[path.len() / 2];
    Layout {
        positions,
        edges,
        start,
        goal,
        landmark_nodes: vec![mid, goal],
        landmark_specs: vec![None, None],
        instruction: |d| {
            format!(
                "Head past the {}, continue toward the {} and wait there.",
                d[0], d[1]
            )
        },
        decoy: None,
        gate: None,
    }
}

fn index_graph(positions: &[[f64; 3]], edges: &[(usize, usize)]) -> NavGraph {
    let wps = positions
        .iter()
        .enumerate()
        .map(|(i, p)| Waypoint::new(format!("{i:03}"), *p));
    NavGraph::new(
        wps,
        edges
            .iter()
            .map(|(a, b)| (format!("{a:03}"), format!("{b:03}"))),
    )
    .expect("generated graph is valid")
}

fn farthest(positions: &[[f64; 3]], edges: &[(usize, usize)], from: usize) -> usize {
    let g = index_graph(positions, edges);
    let d = g
        .distances_from(&format!("{from:03}"))
        .expect("node exists");
    let (id, _) = d
        .iter()
        .max_by(|a, b| a.1.total_cmp(b.1).then_with(|| b.0.cmp(a.0)))
        .expect("non-empty");
    id.parse().expect("numeric id")
}

fn index_path(
    positions: &[[f64; 3]],
    edges: &[(usize, usize)],
    from: usize,
    to: usize,
) -> Vec<usize> {
    index_graph(positions, edges)
        .shortest_path(&format!("{from:03}"), &format!("{to:03}"))
        .expect("connected")
        .iter()
        .map(|s| s.parse().expect("numeric id"))
        .collect()
}

impl Layout {
    fn into_world(self, rng: &mut ChaCha8Rng, seed: u64, profile: Profile) -> World {
        let n = self.positions.len();
        let mut labels: Vec<usize> = (0..n).collect();
        labels.shuffle(rng);
        let name = |i: usize| format!("wp{:02}", labels[i]);
        let waypoints: Vec<Waypoint> = self
            .positions
            .iter()
            .enumerate()
            .map(|(i, p)| Waypoint::new(name(i), *p))
            .collect();
        let graph = NavGraph::new(
            waypoints,
            self.edges.iter().map(|&(a, b)| (name(a), name(b))),
        )
        .expect("generated graph is valid");

        let mut used: BTreeSet<&'static str> = BTreeSet::new();
        let mut objects = Vec::new();
        let mut landmarks = Vec::new();
        let mut descriptions = Vec::new();
        for (k, (&node, spec)) in self
            .landmark_nodes
            .iter()
            .zip(&self.landmark_specs)
            .enumerate()
        {
            let spec = spec.clone().unwrap_or_else(|| random_spec(rng, &used));
            used.insert(spec.category);
            let id = format!("obj{:02}", objects.len());
            let near = if k + 1 == self.landmark_nodes.len() {
                1.5
            } else {
                2.5
            };
            let obj = place_object(
                rng,
                &graph,
                &id,
                &spec,
                self.positions[node],
                near,
                &name(node),
            );
            descriptions.push(obj.description());
            landmarks.push(id);
            objects.push(obj);
        }

        let mut gates = Vec::new();
        if let Some(gate) = &self.gate {
            let id = format!("obj{:02}", objects.len());
            let mut decoy_door = place_object(
                rng,
                &graph,
                &id,
                &gate.decoy_object,
                self.positions[gate.decoy],
                2.5,
                &name(gate.decoy),
            );
            decoy_door.visible_from.insert(name(gate.fork));
            objects.push(decoy_door);
            // the correct door must be in view at the fork as well
            objects[0].visible_from.insert(name(gate.fork));
            gates.push(LandmarkGate {
                fork: name(gate.fork),
                correct_entry: name(gate.correct),
                decoy_entry: name(gate.decoy),
                phrase: descriptions[0].clone(),
            });
        }

        // one distractor per waypoint without a landmark
        let anchored: BTreeSet<usize> = self.landmark_nodes.iter().copied().collect();
        for node in 0..n {
            if anchored.contains(&node) || self.gate.as_ref().is_some_and(|g| g.decoy == node) {
                continue;
            }
            let spec = random_spec(rng, &used);
            let id = format!("obj{:02}", objects.len());
            objects.push(place_object(
                rng,
                &graph,
                &id,
                &spec,
                self.positions[node],
                2.5,
                &name(node),
            ));
        }

        let decoys = self
            .decoy
            .iter()
            .map(|(fork, branch)| DecoyBranch {
                fork: name(*fork),
                depths: branch
                    .iter()
                    .enumerate()
                    .map(|(d, &i)| (name(i), d + 1))
                    .collect(),
                lure: TRAP_LURE_VALUE,
            })
            .collect();

        let mut episode = Episode::new(
            format!("{}_{seed}", profile.name()),
            graph,
            name(self.start),
            name(self.goal),
            (self.instruction)(&descriptions),
        )
        .expect("generated episode is valid");
        episode.success_radius = DEFAULT_SUCCESS_RADIUS;
        episode.max_steps = DEFAULT_MAX_STEPS;
        World {
            episode,
            objects,
            landmarks,
            decoys,
            gates,
            profile: Some(profile),
            seed: Some(seed),
        }
    }
}

fn random_spec(rng: &mut ChaCha8Rng, used: &BTreeSet<&'static str>) -> ObjectSpec {
    let pool: Vec<&'static str> = CATEGORIES
        .iter()
        .copied()
        .filter(|c| !used.contains(c) && *c != "door")
        .collect();
    let category = *pool.choose(rng).expect("category pool is never exhausted");
    let state = match category {
        "lamp" => Some(if rng.gen_bool(0.5) { "lit" } else { "unlit" }),
        "cabinet" => Some(if rng.gen_bool(0.5) { "open" } else { "closed" }),
        _ => None,
    };
    ObjectSpec {
        category,
        color: COLORS.choose(rng).unwrap(),
        material: MATERIALS.choose(rng).unwrap(),
        state,
    }
}

fn place_object(
    rng: &mut ChaCha8Rng,
    graph: &NavGraph,
    id: &str,
    spec: &ObjectSpec,
    anchor: [f64; 3],
    max_offset: f64,
    anchor_id: &str,
) -> SceneObject {
    let ang = rng.gen_range(-PI..PI);
    let off = rng.gen_range(1.0..max_offset.max(1.01));
    let u = unit(ang);
    let position = [
        anchor[0] + u[0] * off,
        anchor[1] + u[1] * off,
        rng.gen_range(0.3..1.6),
    ];
    let mut visible_from: BTreeSet<String> = graph
        .waypoints()
        .iter()
        .filter(|w| {
            let dx = position[0] - w.position[0];
            let dy = position[1] - w.position[1];
            let h = (dx * dx + dy * dy).sqrt();
            h > 1e-6 && h <= VISIBILITY_RANGE
        })
        .map(|w| w.id.clone())
        .collect();
    visible_from.insert(anchor_id.to_string());
    let mut attributes = BTreeMap::from([
        ("color".to_string(), spec.color.to_string()),
        ("material".to_string(), spec.material.to_string()),
    ]);
    if let Some(s) = spec.state {
        attributes.insert("state".to_string(), s.to_string());
    }
    SceneObject {
        id: id.to_string(),
        category: spec.category.to_string(),
        attributes,
        position,
        visible_from,
    }
}
