//! Branch-diverse tree search over discovered waypoints.
//!
//! The tree replaces rollouts with semantic values: new waypoints enter with
//! `Q = V_sem`, `N = 0`; rewards are running means pushed up the
//! root-to-current path only; leaves are ranked by a visit-weighted path value
//! minus a normalised distance penalty, and each parent may contribute at most
//! a fixed number of children to the selected set.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::NavGraph;
use crate::perception::SemanticValueMap;

/// Visit-count smoothing in [`SearchTree::path_value`].
pub const VISIT_SMOOTHING: f64 = 1.0;
pub const DEFAULT_LAMBDA: f64 = 0.3;
pub const DEFAULT_TOP_K: usize = 5;
pub const MAX_CHILDREN_PER_PARENT: usize = 2;
/// Scores and path values closer than this compare equal when ranking, so
/// ties that only differ by summation rounding fall through to the id.
pub const RANK_RESOLUTION: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TreeError {
    #[error("waypoint `{0}` is not in the search tree")]
    NotInTree(String),
    #[error("no semantic value for candidate `{0}`")]
    MissingValue(String),
    #[error("k must be at least 1")]
    ZeroK,
    #[error("tree invariant violated: {0}")]
    Corrupt(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub waypoint_id: String,
    pub parent: Option<String>,
    pub children: Vec<String>,
    pub q_value: f64,
    pub visit_count: u64,
    /// `V_sem` the node was created with.
    pub prior: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub waypoint_id: String,
    pub path_value: f64,
    pub distance: f64,
    pub score: f64,
}

/// Node line of a tree snapshot: `{id, parent, q, n}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSnapshot {
    pub id: String,
    pub parent: Option<String>,
    pub q: f64,
    pub n: u64,
}

/// Top-k line of a tree snapshot: `{id, v_path, dist, score}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopKEntry {
    pub id: String,
    pub v_path: f64,
    pub dist: f64,
    pub score: f64,
}

impl From<&ScoredCandidate> for TopKEntry {
    fn from(c: &ScoredCandidate) -> Self {
        Self {
            id: c.waypoint_id.clone(),
            v_path: c.path_value,
            dist: c.distance,
            score: c.score,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeSnapshot {
    pub nodes: Vec<NodeSnapshot>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topk: Option<Vec<TopKEntry>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionParams {
    pub k: usize,
    pub lambda: f64,
    pub max_children_per_parent: usize,
}

impl Default for SelectionParams {
    fn default() -> Self {
        Self {
            k: DEFAULT_TOP_K,
            lambda: DEFAULT_LAMBDA,
            max_children_per_parent: MAX_CHILDREN_PER_PARENT,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchTree {
    nodes: BTreeMap<String, TreeNode>,
    root: String,
    /// Start new nodes at `N = 1` so their prior survives the first update.
    prior_visit: bool,
}

impl SearchTree {
    pub fn new(root: impl Into<String>, root_value: f64) -> Self {
        let root = root.into();
        let node = TreeNode {
            waypoint_id: root.clone(),
            parent: None,
            children: Vec::new(),
            q_value: root_value,
            visit_count: 0,
            prior: root_value,
        };
        Self {
            nodes: BTreeMap::from([(root.clone(), node)]),
            root,
            prior_visit: false,
        }
    }

    pub fn with_prior_visit(mut self, on: bool) -> Self {
        self.prior_visit = on;
        self
    }

    pub fn root(&self) -> &str {
        &self.root
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.nodes.contains_key(id)
    }

    pub fn node(&self, id: &str) -> Result<&TreeNode, TreeError> {
        self.nodes
            .get(id)
            .ok_or_else(|| TreeError::NotInTree(id.to_string()))
    }

    pub fn nodes(&self) -> impl Iterator<Item = &TreeNode> {
        self.nodes.values()
    }

    /// Nodes without children, in id order.
    pub fn leaves(&self) -> impl Iterator<Item = &TreeNode> {
        self.nodes.values().filter(|n| n.children.is_empty())
    }

    /// Adds every candidate not already in the tree as a child of `current`
    /// and returns the ids actually added, in input order. Candidates already
    /// present anywhere in the tree are skipped, never re-parented.
    pub fn expand(
        &mut self,
        current: &str,
        candidates: &[String],
        values: &SemanticValueMap,
    ) -> Result<Vec<String>, TreeError> {
        if !self.contains(current) {
            return Err(TreeError::NotInTree(current.to_string()));
        }
        let mut added = Vec::new();
        for cand in candidates {
            if self.contains(cand) {
                continue;
            }
            let v = values
                .get(cand)
                .ok_or_else(|| TreeError::MissingValue(cand.clone()))?;
            self.nodes.insert(
                cand.clone(),
                TreeNode {
                    waypoint_id: cand.clone(),
                    parent: Some(current.to_string()),
                    children: Vec::new(),
                    q_value: v,
                    visit_count: u64::from(self.prior_visit),
                    prior: v,
                },
            );
            added.push(cand.clone());
        }
        self.nodes
            .get_mut(current)
            .expect("checked above")
            .children
            .extend(added.iter().cloned());
        Ok(added)
    }

    /// Mean semantic value of the newly added nodes, or `Q(current)` when
    /// nothing was added.
    pub fn compute_reward(
        &self,
        current: &str,
        added: &[String],
        values: &SemanticValueMap,
    ) -> Result<f64, TreeError> {
        if added.is_empty() {
            return Ok(self.node(current)?.q_value);
        }
        let mut sum = 0.0;
        for id in added {
            sum += values
                .get(id)
                .ok_or_else(|| TreeError::MissingValue(id.clone()))?;
        }
        Ok(sum / added.len() as f64)
    }

    /// Root-to-`id` path, root first.
    pub fn path_to(&self, id: &str) -> Result<Vec<&TreeNode>, TreeError> {
        let mut path = Vec::new();
        let mut cur = Some(id);
        while let Some(c) = cur {
            let node = self.node(c)?;
            path.push(node);
            if path.len() > self.nodes.len() {
                return Err(TreeError::Corrupt(format!("parent cycle through `{c}`")));
            }
            cur = node.parent.as_deref();
        }
        path.reverse();
        Ok(path)
    }

    /// Running-mean update on every node of the root-to-`current` path:
    /// `N += 1; Q += (R − Q)/N`. Nodes off the path are untouched.
    pub fn backpropagate(&mut self, current: &str, reward: f64) -> Result<(), TreeError> {
        let ids: Vec<String> = self
            .path_to(current)?
            .into_iter()
            .map(|n| n.waypoint_id.clone())
            .collect();
        for id in ids {
            let node = self.nodes.get_mut(&id).expect("path nodes exist");
            node.visit_count += 1;
            node.q_value += (reward - node.q_value) / node.visit_count as f64;
        }
        Ok(())
    }

    /// Visit-weighted mean of `Q` along the root-to-leaf path with weights
    /// `(N + 1) / Σ(N + 1)`.
    pub fn path_value(&self, leaf: &str) -> Result<f64, TreeError> {
        let path = self.path_to(leaf)?;
        let mut num = 0.0;
        let mut den = 0.0;
        for node in path {
            let w = node.visit_count as f64 + VISIT_SMOOTHING;
            num += w * node.q_value;
            den += w;
        }
        Ok(num / den)
    }

    /// Scores `leaf` relative to `current`. Returns `Ok(None)` when the leaf is
    /// not reachable from `current` in `graph`.
    pub fn score_leaf(
        &self,
        graph: &NavGraph,
        current: &str,
        leaf: &str,
        lambda: f64,
        max_dist: f64,
    ) -> Result<Option<ScoredCandidate>, TreeError> {
        let v_path = self.path_value(leaf)?;
        let dist = match graph.geodesic_distance(current, leaf) {
            Ok(Some(d)) => d,
            Ok(None) | Err(_) => return Ok(None),
        };
        Ok(Some(ScoredCandidate {
            waypoint_id: leaf.to_string(),
            path_value: v_path,
            distance: dist,
            score: penalized_score(v_path, dist, lambda, max_dist),
        }))
    }

    /// Leaves other than `current` that are reachable from it in `graph`, with
    /// their geodesic distance. Sorted by id.
    pub fn reachable_leaves(&self, graph: &NavGraph, current: &str) -> Vec<(String, f64)> {
        let dists = graph.distances_from(current).unwrap_or_default();
        self.leaves()
            .filter(|n| n.waypoint_id != current)
            .filter_map(|n| {
                dists
                    .get(&n.waypoint_id)
                    .map(|&d| (n.waypoint_id.clone(), d))
            })
            .collect()
    }

    /// Scores every reachable leaf (see [`Self::reachable_leaves`]) and sorts
    /// by score descending, then path value descending, then id.
    pub fn ranked_leaves(
        &self,
        graph: &NavGraph,
        current: &str,
        lambda: f64,
    ) -> Result<Vec<ScoredCandidate>, TreeError> {
        let leaves = self.reachable_leaves(graph, current);
        let max_dist = leaves.iter().map(|(_, d)| *d).fold(0.0, f64::max);
        let mut scored = Vec::with_capacity(leaves.len());
        for (id, dist) in leaves {
            let v_path = self.path_value(&id)?;
            scored.push(ScoredCandidate {
                score: penalized_score(v_path, dist, lambda, max_dist),
                waypoint_id: id,
                path_value: v_path,
                distance: dist,
            });
        }
        scored.sort_by(rank_order);
        Ok(scored)
    }

    /// Top-k leaves under the per-parent diversity cap. An empty result means
    /// no leaf is reachable.
    pub fn select_top_k(
        &self,
        graph: &NavGraph,
        current: &str,
        params: &SelectionParams,
    ) -> Result<Vec<ScoredCandidate>, TreeError> {
        if params.k == 0 {
            return Err(TreeError::ZeroK);
        }
        if !self.contains(current) {
            return Err(TreeError::NotInTree(current.to_string()));
        }
        let mut per_parent: BTreeMap<Option<&str>, usize> = BTreeMap::new();
        let mut out = Vec::new();
        for cand in self.ranked_leaves(graph, current, params.lambda)? {
            if out.len() == params.k {
                break;
            }
            let parent = self.nodes[&cand.waypoint_id].parent.as_deref();
            let used = per_parent.entry(parent).or_insert(0);
            if *used >= params.max_children_per_parent {
                continue;
            }
            *used += 1;
            out.push(cand);
        }
        Ok(out)
    }

    pub fn snapshot(&self, topk: Option<&[ScoredCandidate]>) -> TreeSnapshot {
        TreeSnapshot {
            nodes: self
                .nodes
                .values()
                .map(|n| NodeSnapshot {
                    id: n.waypoint_id.clone(),
                    parent: n.parent.clone(),
                    q: n.q_value,
                    n: n.visit_count,
                })
                .collect(),
            topk: topk.map(|t| t.iter().map(TopKEntry::from).collect()),
        }
    }

    /// Structural check: single root, consistent parent/child links, no
    /// duplicate children, and a DFS from the root reaching every node once.
    pub fn check_invariants(&self) -> Result<(), TreeError> {
        let corrupt = |m: String| Err(TreeError::Corrupt(m));
        let roots: Vec<_> = self.nodes.values().filter(|n| n.parent.is_none()).collect();
        if roots.len() != 1 || roots[0].waypoint_id != self.root {
            return corrupt(format!("expected single root `{}`", self.root));
        }
        let mut edges = 0;
        for node in self.nodes.values() {
            let unique: BTreeSet<_> = node.children.iter().collect();
            if unique.len() != node.children.len() {
                return corrupt(format!("duplicate child under `{}`", node.waypoint_id));
            }
            for c in &node.children {
                match self.nodes.get(c) {
                    Some(child) if child.parent.as_deref() == Some(&node.waypoint_id) => {}
                    _ => return corrupt(format!("bad link `{}` -> `{c}`", node.waypoint_id)),
                }
            }
            if let Some(p) = &node.parent {
                match self.nodes.get(p) {
                    Some(pn) if pn.children.contains(&node.waypoint_id) => {}
                    _ => return corrupt(format!("orphan `{}`", node.waypoint_id)),
                }
            }
            edges += node.children.len();
        }
        if edges + 1 != self.nodes.len() {
            return corrupt(format!("{} nodes but {edges} edges", self.nodes.len()));
        }
        let mut seen = BTreeSet::new();
        let mut stack = vec![self.root.as_str()];
        while let Some(id) = stack.pop() {
            if !seen.insert(id) {
                return corrupt(format!("`{id}` reached twice"));
            }
            stack.extend(self.nodes[id].children.iter().map(String::as_str));
        }
        if seen.len() != self.nodes.len() {
            return corrupt("unreachable nodes".to_string());
        }
        Ok(())
    }
}

/// `v_path − λ·dist/max_dist`, with no penalty when `max_dist` is zero.
pub fn penalized_score(v_path: f64, dist: f64, lambda: f64, max_dist: f64) -> f64 {
    if max_dist > 0.0 {
        v_path - lambda * dist / max_dist
    } else {
        v_path
    }
}

/// Ranking key for a score or path value on the [`RANK_RESOLUTION`] grid.
pub fn rank_key(x: f64) -> i64 {
    (x / RANK_RESOLUTION).round() as i64
}

fn rank_order(a: &ScoredCandidate, b: &ScoredCandidate) -> Ordering {
    rank_key(b.score)
        .cmp(&rank_key(a.score))
        .then_with(|| rank_key(b.path_value).cmp(&rank_key(a.path_value)))
        .then_with(|| a.waypoint_id.cmp(&b.waypoint_id))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Waypoint;

    fn values(pairs: &[(&str, f64)]) -> SemanticValueMap {
        pairs.iter().map(|&(k, v)| (k.to_string(), v)).collect()
    }

    fn ids(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn expand_initialises_children() {
        let mut t = SearchTree::new("r", 0.5);
        let added = t
            .expand("r", &ids(&["a", "b"]), &values(&[("a", 0.7), ("b", 0.3)]))
            .unwrap();
        assert_eq!(added, ids(&["a", "b"]));
        let a = t.node("a").unwrap();
        assert_eq!(
            (a.q_value, a.visit_count, a.parent.as_deref()),
            (0.7, 0, Some("r"))
        );
        assert_eq!(t.node("b").unwrap().q_value, 0.3);
        t.check_invariants().unwrap();
    }

    #[test]
    fn expand_skips_cross_branch() {
        let mut t = SearchTree::new("r", 0.5);
        t.expand("r", &ids(&["a", "b"]), &values(&[("a", 0.7), ("b", 0.3)]))
            .unwrap();
        let added = t
            .expand("a", &ids(&["b", "c"]), &values(&[("b", 0.9), ("c", 0.1)]))
            .unwrap();
        assert_eq!(added, ids(&["c"]));
        assert_eq!(t.node("b").unwrap().parent.as_deref(), Some("r"));
        assert_eq!(t.node("b").unwrap().q_value, 0.3);
        t.check_invariants().unwrap();
    }

    #[test]
    fn expand_errors() {
        let mut t = SearchTree::new("r", 0.5);
        assert_eq!(
            t.expand("x", &ids(&["a"]), &values(&[("a", 0.1)])),
            Err(TreeError::NotInTree("x".into()))
        );
        assert_eq!(
            t.expand("r", &ids(&["a"]), &values(&[])),
            Err(TreeError::MissingValue("a".into()))
        );
    }

    #[test]
    fn reward_examples() {
        let mut t = SearchTree::new("r", 0.62);
        let v = values(&[("a", 0.2), ("b", 0.9), ("c", 0.4)]);
        let added = t.expand("r", &ids(&["a", "b", "c"]), &v).unwrap();
        assert!((t.compute_reward("r", &added, &v).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(t.compute_reward("r", &[], &v).unwrap(), 0.62);
        assert_eq!(
            t.compute_reward("r", &ids(&["b"]), &values(&[("b", 0.8)]))
                .unwrap(),
            0.8
        );
    }

    #[test]
    fn backprop_running_mean_and_asymmetry() {
        let mut t = SearchTree::new("r", 0.5);
        t.expand("r", &ids(&["a", "s"]), &values(&[("a", 0.5), ("s", 0.9)]))
            .unwrap();
        t.backpropagate("a", 0.8).unwrap();
        let a = t.node("a").unwrap();
        assert_eq!((a.q_value, a.visit_count), (0.8, 1));
        t.backpropagate("a", 0.4).unwrap();
        let a = t.node("a").unwrap();
        assert!((a.q_value - 0.6).abs() < 1e-12);
        assert_eq!(a.visit_count, 2);
        let s = t.node("s").unwrap();
        assert_eq!((s.q_value, s.visit_count), (0.9, 0));
        assert_eq!(t.node("r").unwrap().visit_count, 2);
        assert_eq!(
            t.backpropagate("zz", 1.0),
            Err(TreeError::NotInTree("zz".into()))
        );
    }

    #[test]
    fn prior_visit_keeps_prior() {
        let mut t = SearchTree::new("r", 0.5).with_prior_visit(true);
        t.expand("r", &ids(&["a"]), &values(&[("a", 0.4)])).unwrap();
        t.backpropagate("a", 0.8).unwrap();
        assert!((t.node("a").unwrap().q_value - 0.6).abs() < 1e-12);
    }

    fn set(t: &mut SearchTree, id: &str, q: f64, n: u64) {
        let node = t.nodes.get_mut(id).unwrap();
        node.q_value = q;
        node.visit_count = n;
    }

    #[test]
    fn path_value_examples() {
        let mut t = SearchTree::new("r", 0.4);
        assert_eq!(t.path_value("r").unwrap(), 0.4);
        t.expand("r", &ids(&["a"]), &values(&[("a", 0.7)])).unwrap();
        t.expand("a", &ids(&["v"]), &values(&[("v", 0.9)])).unwrap();
        set(&mut t, "r", 0.5, 5);
        set(&mut t, "a", 0.7, 3);
        let expected = (6.0 * 0.5 + 4.0 * 0.7 + 1.0 * 0.9) / 11.0;
        assert!((t.path_value("v").unwrap() - expected).abs() <= 1e-12 * expected);
        assert!((expected - 0.609_090_909_090_909).abs() < 1e-12);
    }

    #[test]
    fn score_examples() {
        assert!((penalized_score(0.7, 4.0, 0.3, 8.0) - 0.55).abs() < 1e-12);
        assert_eq!(penalized_score(0.7, 4.0, 0.0, 8.0), 0.7);
        assert_eq!(penalized_score(0.7, 0.0, 0.3, 8.0), 0.7);
        assert_eq!(penalized_score(0.7, 0.0, 0.3, 0.0), 0.7);
    }

    fn star_graph(leaves: &[(&str, f64)]) -> NavGraph {
        let mut wps = vec![Waypoint::new("r", [0.0, 0.0, 0.0])];
        for (i, (id, d)) in leaves.iter().enumerate() {
            let ang = i as f64;
            wps.push(Waypoint::new(*id, [d * ang.cos(), d * ang.sin(), 0.0]));
        }
        NavGraph::new(wps, leaves.iter().map(|(id, _)| ("r", *id))).unwrap()
    }

    #[test]
    fn diversity_cap_binds() {
        let mut t = SearchTree::new("r", 0.5);
        let v = values(&[("a", 0.9), ("b", 0.8), ("c", 0.7)]);
        t.expand("r", &ids(&["a", "b", "c"]), &v).unwrap();
        let g = star_graph(&[("a", 1.0), ("b", 1.0), ("c", 1.0)]);
        let params = SelectionParams {
            k: 3,
            lambda: 0.0,
            ..Default::default()
        };
        let top = t.select_top_k(&g, "r", &params).unwrap();
        let got: Vec<_> = top.iter().map(|c| c.waypoint_id.as_str()).collect();
        assert_eq!(got, ["a", "b"]);
        let one = t
            .select_top_k(&g, "r", &SelectionParams { k: 1, ..params })
            .unwrap();
        assert_eq!(one[0].waypoint_id, "a");
        assert_eq!(
            t.select_top_k(&g, "r", &SelectionParams { k: 0, ..params }),
            Err(TreeError::ZeroK)
        );
    }

    #[test]
    fn unreachable_leaves_excluded() {
        let mut t = SearchTree::new("r", 0.5);
        t.expand("r", &ids(&["a", "b"]), &values(&[("a", 0.9), ("b", 0.8)]))
            .unwrap();
        // graph only knows r-b
        let g = star_graph(&[("b", 2.0)]);
        let top = t
            .select_top_k(&g, "r", &SelectionParams::default())
            .unwrap();
        assert_eq!(top.len(), 1);
        assert_eq!(top[0].waypoint_id, "b");
        assert_eq!(t.score_leaf(&g, "r", "a", 0.3, 2.0).unwrap(), None);
    }
}
