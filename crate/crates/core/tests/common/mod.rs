//! Independent reference implementations used by the integration tests.
//! Nothing here calls into the code under test except to read inputs.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use focusnav_core::agents::{
    AgentBackends, AgentError, AgentRole, Decider, DecisionRequest, Observation, Orchestrator,
    Perceiver, Scanner,
};
use focusnav_core::mcts::{SearchTree, TreeSnapshot};
use focusnav_core::perception::{QueryHistory, Sufficiency};
use focusnav_core::semantic_map::{BBox, PanoramaLayout};
use focusnav_core::{Decision, NavGraph, VisualQuery, Waypoint};

/// Rooted unlabeled trees with exactly `n` nodes, as parent arrays where
/// node 0 is the root and `parent[i] < i`. Generated by growing every tree
/// of size `n − 1` by one leaf and deduplicating on the AHU canonical form.
pub fn all_rooted_trees(n: usize) -> Vec<Vec<usize>> {
    assert!(n >= 1);
    let mut level: Vec<Vec<usize>> = vec![vec![usize::MAX]];
    for _ in 1..n {
        let mut seen = BTreeSet::new();
        let mut next = Vec::new();
        for t in &level {
            for attach in 0..t.len() {
                let mut grown = t.clone();
                grown.push(attach);
                if seen.insert(ahu(&grown, 0)) {
                    next.push(grown);
                }
            }
        }
        level = next;
    }
    level
}

/// AHU encoding of the subtree rooted at `v`.
pub fn ahu(parent: &[usize], v: usize) -> String {
    let mut kids: Vec<String> = (0..parent.len())
        .filter(|&c| c != 0 && parent[c] == v)
        .map(|c| ahu(parent, c))
        .collect();
    kids.sort();
    format!("({})", kids.concat())
}

/// All-pairs shortest distances by Floyd–Warshall.
pub fn floyd(ids: &[String], edges: &[(String, String, f64)]) -> BTreeMap<(String, String), f64> {
    let n = ids.len();
    let idx: BTreeMap<&str, usize> = ids
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    for (a, b, w) in edges {
        let (i, j) = (idx[a.as_str()], idx[b.as_str()]);
        d[i][j] = d[i][j].min(*w);
        d[j][i] = d[j][i].min(*w);
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    let mut out = BTreeMap::new();
    for i in 0..n {
        for j in 0..n {
            if d[i][j].is_finite() {
                out.insert((ids[i].clone(), ids[j].clone()), d[i][j]);
            }
        }
    }
    out
}

/// Edge list with euclidean weights, read straight from waypoint positions.
pub fn weighted_edges(graph: &NavGraph) -> Vec<(String, String, f64)> {
    graph
        .edges()
        .into_iter()
        .map(|(a, b)| {
            let pa = graph.waypoint(&a).unwrap().position;
            let pb = graph.waypoint(&b).unwrap().position;
            let w = ((pa[0] - pb[0]).powi(2) + (pa[1] - pb[1]).powi(2) + (pa[2] - pb[2]).powi(2))
                .sqrt();
            (a, b, w)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BruteCandidate {
    pub id: String,
    pub v_path: f64,
    pub dist: f64,
    pub score: f64,
}

/// The greedy top-k rule recomputed from a tree snapshot and a distance
/// table: V_path with (N+1) weights, penalty λ·d/max d, order
/// (score desc, V_path desc, id asc) at 1e-9 resolution, at most `cap`
/// leaves per parent.
pub fn brute_top_k(
    snap: &TreeSnapshot,
    dist: &BTreeMap<(String, String), f64>,
    current: &str,
    k: usize,
    lambda: f64,
    cap: usize,
) -> Vec<BruteCandidate> {
    let by_id: BTreeMap<&str, (Option<&str>, f64, u64)> = snap
        .nodes
        .iter()
        .map(|n| (n.id.as_str(), (n.parent.as_deref(), n.q, n.n)))
        .collect();
    let has_child: BTreeSet<&str> = snap
        .nodes
        .iter()
        .filter_map(|n| n.parent.as_deref())
        .collect();
    let v_path = |leaf: &str| {
        let (mut num, mut den) = (0.0, 0.0);
        let mut cur = Some(leaf);
        while let Some(c) = cur {
            let (p, q, n) = by_id[c];
            num += (n as f64 + 1.0) * q;
            den += n as f64 + 1.0;
            cur = p;
        }
        num / den
    };
    let leaves: Vec<(&str, f64)> = snap
        .nodes
        .iter()
        .map(|n| n.id.as_str())
        .filter(|id| !has_child.contains(id) && *id != current)
        .filter_map(|id| {
            dist.get(&(current.to_string(), id.to_string()))
                .map(|&d| (id, d))
        })
        .collect();
    let max_d = leaves.iter().map(|l| l.1).fold(0.0, f64::max);
    let mut scored: Vec<BruteCandidate> = leaves
        .iter()
        .map(|&(id, d)| {
            let vp = v_path(id);
            let score = if max_d > 0.0 {
                vp - lambda * d / max_d
            } else {
                vp
            };
            BruteCandidate {
                id: id.to_string(),
                v_path: vp,
                dist: d,
                score,
            }
        })
        .collect();
    // 1e-9 grid, so exact ties that differ only by rounding compare equal
    let key = |x: f64| (x * 1e9).round() as i64;
    scored.sort_by(|a, b| {
        key(b.score)
            .cmp(&key(a.score))
            .then(key(b.v_path).cmp(&key(a.v_path)))
            .then(a.id.cmp(&b.id))
    });
    let mut used: BTreeMap<Option<&str>, usize> = BTreeMap::new();
    let mut out = Vec::new();
    for c in scored {
        if out.len() == k {
            break;
        }
        let p = by_id[c.id.as_str()].0;
        let u = used.entry(p).or_default();
        if *u < cap {
            *u += 1;
            out.push(c);
        }
    }
    out
}

/// Checks a snapshot is a tree: one root, each node reached exactly once by
/// walking child lists rebuilt from parent pointers.
pub fn snapshot_is_tree(snap: &TreeSnapshot, root: &str) -> Result<(), String> {
    let ids: BTreeSet<&str> = snap.nodes.iter().map(|n| n.id.as_str()).collect();
    if ids.len() != snap.nodes.len() {
        return Err("duplicate node ids".into());
    }
    let mut children: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    let mut roots = Vec::new();
    for n in &snap.nodes {
        match &n.parent {
            Some(p) => {
                if !ids.contains(p.as_str()) {
                    return Err(format!("dangling parent {p}"));
                }
                children.entry(p.as_str()).or_default().push(&n.id)
            }
            None => roots.push(n.id.as_str()),
        }
    }
    if roots != [root] {
        return Err(format!("roots {roots:?}"));
    }
    let mut seen = BTreeSet::new();
    let mut stack = vec![root];
    while let Some(v) = stack.pop() {
        if !seen.insert(v) {
            return Err(format!("{v} reached twice"));
        }
        stack.extend(children.get(v).into_iter().flatten().copied());
    }
    if seen.len() != ids.len() {
        return Err("unreachable nodes".into());
    }
    Ok(())
}

pub fn wp(id: &str, x: f64, y: f64) -> Waypoint {
    Waypoint::new(id, [x, y, 0.0])
}

pub fn ids(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

/// Builds a tree whose nodes follow `parent` (BFS-ordered ids `n00`…),
/// each with prior `values[i]`.
pub fn tree_from_parents(parent: &[usize], values: &[f64]) -> SearchTree {
    let name = |i: usize| format!("n{i:02}");
    let mut tree = SearchTree::new(name(0), values[0]);
    for v in 0..parent.len() {
        let kids: Vec<String> = (1..parent.len())
            .filter(|&c| parent[c] == v)
            .map(name)
            .collect();
        if kids.is_empty() {
            continue;
        }
        let vals = kids
            .iter()
            .map(|k| (k.clone(), values[k[1..].parse::<usize>().unwrap()]))
            .collect();
        tree.expand(&name(v), &kids, &vals).unwrap();
    }
    tree
}

/// Orchestrator that never declares itself satisfied and asks a fresh
/// question each time. Every call is counted.
#[derive(Default)]
pub struct NeverSatisfied {
    pub queries: AtomicUsize,
    pub checks: AtomicUsize,
    pub valuations: AtomicUsize,
    /// Region returned with every query.
    pub region: Option<BBox>,
}

impl Orchestrator for NeverSatisfied {
    fn generate_query(
        &self,
        _map: &str,
        _traj: &str,
        _instr: &str,
        history: &QueryHistory,
    ) -> Result<VisualQuery, AgentError> {
        self.queries.fetch_add(1, Ordering::SeqCst);
        Ok(VisualQuery {
            question: format!("question {}", history.len()),
            focus_region: self.region.unwrap_or(BBox::new(0.0, 0.0, 64.0, 64.0)),
        })
    }

    fn check_sufficiency(
        &self,
        _: &str,
        _: &QueryHistory,
        _: &str,
    ) -> Result<Sufficiency, AgentError> {
        self.checks.fetch_add(1, Ordering::SeqCst);
        Ok(Sufficiency::Insufficient)
    }

    fn evaluate_values(
        &self,
        _: &str,
        _: &str,
        _: &[String],
        candidates: &[String],
    ) -> Result<BTreeMap<String, f64>, AgentError> {
        self.valuations.fetch_add(1, Ordering::SeqCst);
        Ok(candidates.iter().map(|c| (c.clone(), 0.5)).collect())
    }
}

pub struct EchoPerceiver;

impl Perceiver for EchoPerceiver {
    fn perceive(&self, _: &Observation, query: &VisualQuery) -> Result<String, AgentError> {
        Ok(format!("saw something for {}", query.question))
    }
}

pub struct EmptyScanner;

impl Scanner for EmptyScanner {
    fn scan(&self, at: &str, layout: &PanoramaLayout) -> Result<Observation, AgentError> {
        Ok(Observation {
            waypoint: at.to_string(),
            layout: *layout,
            detections: Vec::new(),
            objects: Vec::new(),
            image_ref: None,
        })
    }
}

pub struct AlwaysStop;

impl Decider for AlwaysStop {
    fn decide(&self, _: &DecisionRequest<'_>) -> Result<Decision, AgentError> {
        Ok(Decision::Stop)
    }
}

pub struct FailingPerceiver;

impl Perceiver for FailingPerceiver {
    fn perceive(&self, _: &Observation, _: &VisualQuery) -> Result<String, AgentError> {
        Err(AgentError::backend(AgentRole::Perception, "down"))
    }
}

pub fn adversarial_backends(orch: Arc<NeverSatisfied>) -> AgentBackends {
    AgentBackends {
        scanner: Arc::new(EmptyScanner),
        orchestrator: orch,
        perceiver: Arc::new(EchoPerceiver),
        decider: Arc::new(AlwaysStop),
        events: None,
    }
}

pub fn empty_observation(layout: PanoramaLayout) -> Observation {
    EmptyScanner.scan("x", &layout).unwrap()
}

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use focusnav_core::mcts::SelectionParams;
use focusnav_core::SemanticValueMap;

fn quantized(rng: &mut ChaCha8Rng) -> f64 {
    f64::from(rng.gen_range(0..=10u32)) / 10.0
}

/// Outcome of comparing `select_top_k` against [`brute_top_k`].
#[derive(Debug, Default)]
pub struct TopKSweep {
    pub shapes: usize,
    pub cases: usize,
    pub mismatches: Vec<String>,
    pub cap_violations: usize,
}

/// Every rooted tree shape with up to `max_n` nodes, each under a few seeded
/// value assignments, visit histories, graphs, currents, k and caps.
pub fn topk_exhaustive(max_n: usize, variants_per_shape: usize) -> TopKSweep {
    let mut sweep = TopKSweep::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0x0007_0b4b);
    let grid: Vec<(f64, f64)> = (0..7)
        .flat_map(|x| (0..7).map(move |y| (f64::from(x), f64::from(y))))
        .collect();
    for n in 1..=max_n {
        for parent in all_rooted_trees(n) {
            sweep.shapes += 1;
            for _ in 0..variants_per_shape {
                let values: Vec<f64> = (0..n).map(|_| quantized(&mut rng)).collect();
                let mut tree = tree_from_parents(&parent, &values);
                let names: Vec<String> = (0..n).map(|i| format!("n{i:02}")).collect();
                for _ in 0..rng.gen_range(0..6) {
                    let at = names.choose(&mut rng).unwrap();
                    tree.backpropagate(at, quantized(&mut rng)).unwrap();
                }
                let mut pts = grid.clone();
                pts.shuffle(&mut rng);
                let wps: Vec<Waypoint> = names
                    .iter()
                    .zip(&pts)
                    .map(|(id, &(x, y))| wp(id, x, y))
                    .collect();
                let mut edges: Vec<(String, String)> = (1..n)
                    .map(|c| (names[parent[c]].clone(), names[c].clone()))
                    .collect();
                // Sometimes cut an edge so some leaves are unreachable.
                if n > 2 && rng.gen_bool(0.2) {
                    let i = rng.gen_range(0..edges.len());
                    edges.remove(i);
                }
                for _ in 0..rng.gen_range(0..3) {
                    let a = rng.gen_range(0..n);
                    let b = rng.gen_range(0..n);
                    if a != b {
                        edges.push((names[a].clone(), names[b].clone()));
                    }
                }
                let graph = NavGraph::new(wps, edges).unwrap();
                let dist = floyd(&names, &weighted_edges(&graph));
                let current = names.choose(&mut rng).unwrap().clone();
                let lambda = [0.0, 0.3, 1.0][rng.gen_range(0..3)];
                let snap = tree.snapshot(None);
                for k in 1..=5 {
                    for cap in 1..=2 {
                        sweep.cases += 1;
                        let params = SelectionParams {
                            k,
                            lambda,
                            max_children_per_parent: cap,
                        };
                        let got = tree.select_top_k(&graph, &current, &params).unwrap();
                        let want = brute_top_k(&snap, &dist, &current, k, lambda, cap);
                        let mut per_parent: BTreeMap<Option<String>, usize> = BTreeMap::new();
                        for c in &got {
                            *per_parent
                                .entry(tree.node(&c.waypoint_id).unwrap().parent.clone())
                                .or_default() += 1;
                        }
                        if per_parent.values().any(|&u| u > cap) {
                            sweep.cap_violations += 1;
                        }
                        let same = got.len() == want.len()
                            && got.iter().zip(&want).all(|(g, w)| {
                                g.waypoint_id == w.id
                                    && (g.path_value - w.v_path).abs() <= 1e-12
                                    && (g.distance - w.dist).abs() <= 1e-9
                                    && (g.score - w.score).abs() <= 1e-9
                            });
                        if !same && sweep.mismatches.len() < 5 {
                            sweep.mismatches.push(format!(
                                "n={n} parent={parent:?} current={current} k={k} cap={cap} got={:?} want={:?}",
                                got.iter().map(|c| (&c.waypoint_id, c.score, c.path_value, c.distance)).collect::<Vec<_>>(),
                                want.iter().map(|c| (&c.id, c.score, c.v_path, c.dist)).collect::<Vec<_>>()
                            ));
                        } else if !same {
                            sweep.mismatches.push(String::new());
                        }
                    }
                }
            }
        }
    }
    sweep
}

/// Random connected graph with cycles: a random spanning tree plus extra
/// chords, ids `g00`….
pub fn random_cyclic_graph(rng: &mut ChaCha8Rng, n: usize) -> NavGraph {
    let names: Vec<String> = (0..n).map(|i| format!("g{i:02}")).collect();
    let wps: Vec<Waypoint> = names
        .iter()
        .map(|id| wp(id, rng.gen_range(0.0..20.0), rng.gen_range(0.0..20.0)))
        .collect();
    let mut edges = Vec::new();
    for i in 1..n {
        edges.push((names[rng.gen_range(0..i)].clone(), names[i].clone()));
    }
    for _ in 0..n {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        if a != b {
            edges.push((names[a].clone(), names[b].clone()));
        }
    }
    NavGraph::new(wps, edges).unwrap()
}

/// One interleaving of expand/backprop driven by a random walk over a
/// cyclic graph. Returns an error describing the first structural defect.
pub fn acyclicity_case(seed: u64) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(3..=30);
    let graph = random_cyclic_graph(&mut rng, n);
    let root = graph.waypoints()[rng.gen_range(0..n)].id.clone();
    let mut tree = SearchTree::new(root.clone(), 0.5);
    let mut first_parent: BTreeMap<String, Option<String>> = BTreeMap::new();
    first_parent.insert(root.clone(), None);
    let mut current = root.clone();
    let ops = rng.gen_range(1..60);
    for _ in 0..ops {
        if rng.gen_bool(0.6) {
            let cands = graph.navigable_candidates(&current).unwrap();
            let vals: SemanticValueMap = cands
                .iter()
                .map(|c| (c.clone(), rng.gen_range(0.0..=1.0)))
                .collect();
            let added = tree
                .expand(&current, &cands, &vals)
                .map_err(|e| e.to_string())?;
            for a in &added {
                if first_parent
                    .insert(a.clone(), Some(current.clone()))
                    .is_some()
                {
                    return Err(format!("{a} added twice"));
                }
            }
        } else {
            tree.backpropagate(&current, rng.gen_range(0.0..=1.0))
                .map_err(|e| e.to_string())?;
        }
        let snap = tree.snapshot(None);
        snapshot_is_tree(&snap, &root)?;
        for node in &snap.nodes {
            if first_parent.get(&node.id) != Some(&node.parent) {
                return Err(format!("{} changed parent", node.id));
            }
        }
        tree.check_invariants().map_err(|e| e.to_string())?;
        // Walk only inside the tree so expansion always has a valid anchor.
        let in_tree: Vec<String> = snap.nodes.iter().map(|n| n.id.clone()).collect();
        current = in_tree.choose(&mut rng).unwrap().clone();
    }
    Ok(tree.len())
}

/// Fresh leaf receiving `rewards` in order; returns its final Q.
pub fn q_after(rewards: &[f64], prior: f64) -> f64 {
    let mut tree = SearchTree::new("r", 0.5);
    let vals: SemanticValueMap = [("leaf".to_string(), prior)].into_iter().collect();
    tree.expand("r", &ids(&["leaf"]), &vals).unwrap();
    for &r in rewards {
        tree.backpropagate("leaf", r).unwrap();
    }
    tree.node("leaf").unwrap().q_value
}

/// Returns the worst relative error over `cases` random reward sequences.
pub fn mean_law_sweep(seed: u64, cases: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let m = rng.gen_range(1..=50);
        let rewards: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..=1.0)).collect();
        let mean = rewards.iter().sum::<f64>() / m as f64;
        let q = q_after(&rewards, rng.gen_range(0.0..=1.0));
        worst = worst.max((q - mean).abs() / mean.abs().max(1e-300));
    }
    worst
}
