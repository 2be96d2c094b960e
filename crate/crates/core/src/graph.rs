//! Navigation graph: waypoints, undirected weighted edges and geodesic queries.
//!
//! Edge weights are always the Euclidean distance between endpoint positions.
//! Every query that can produce more than one answer resolves ties by
//! lexicographic waypoint id so that traces are reproducible.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative tolerance used when comparing accumulated path lengths.
const LENGTH_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("unknown waypoint `{0}`")]
    UnknownWaypoint(String),
    #[error("duplicate waypoint id `{0}`")]
    DuplicateWaypoint(String),
    #[error("waypoint `{0}` has a non-finite position")]
    NonFinitePosition(String),
    #[error("self-loop edge on `{0}`")]
    SelfLoop(String),
    #[error("no path between `{from}` and `{to}`")]
    Unreachable { from: String, to: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub id: String,
    #[serde(rename = "pos")]
    pub position: [f64; 3],
}

impl Waypoint {
    pub fn new(id: impl Into<String>, position: [f64; 3]) -> Self {
        Self {
            id: id.into(),
            position,
        }
    }

    pub fn distance_to(&self, other: &Waypoint) -> f64 {
        euclidean(&self.position, &other.position)
    }
}

pub fn euclidean(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Immutable undirected navigation graph.
///
/// Waypoints are stored sorted by id; adjacency lists are sorted by neighbour
/// id, so iteration order never depends on insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct NavGraph {
    waypoints: Vec<Waypoint>,
    index: BTreeMap<String, usize>,
    adjacency: Vec<Vec<(usize, f64)>>,
    edge_count: usize,
}

impl NavGraph {
    /// Builds a graph, validating ids, positions and edge endpoints.
    /// Duplicate edges (in either orientation) collapse into one.
    pub fn new<I, E, A, B>(waypoints: I, edges: E) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = Waypoint>,
        E: IntoIterator<Item = (A, B)>,
        A: AsRef<str>,
        B: AsRef<str>,
    {
        let mut sorted: Vec<Waypoint> = Vec::new();
        let mut seen = BTreeSet::new();
        for wp in waypoints {
            if !wp.position.iter().all(|c| c.is_finite()) {
                return Err(GraphError::NonFinitePosition(wp.id));
            }
            if !seen.insert(wp.id.clone()) {
                return Err(GraphError::DuplicateWaypoint(wp.id));
            }
            sorted.push(wp);
        }
        sorted.sort_by(|a, b| a.id.cmp(&b.id));
        let index: BTreeMap<String, usize> = sorted
            .iter()
            .enumerate()
            .map(|(i, wp)| (wp.id.clone(), i))
            .collect();

        let mut pairs = BTreeSet::new();
        for (a, b) in edges {
            let (a, b) = (a.as_ref(), b.as_ref());
            let ia = *index
                .get(a)
                .ok_or_else(|| GraphError::UnknownWaypoint(a.to_string()))?;
            let ib = *index
                .get(b)
                .ok_or_else(|| GraphError::UnknownWaypoint(b.to_string()))?;
            if ia == ib {
                return Err(GraphError::SelfLoop(a.to_string()));
            }
            pairs.insert((ia.min(ib), ia.max(ib)));
        }

        let mut adjacency = vec![Vec::new(); sorted.len()];
        for &(a, b) in &pairs {
            let w = sorted[a].distance_to(&sorted[b]);
            adjacency[a].push((b, w));
            adjacency[b].push((a, w));
        }
        // index order == id order, so sorting by index sorts by id
        for list in &mut adjacency {
            list.sort_by_key(|&(n, _)| n);
        }
        Ok(Self {
            waypoints: sorted,
            index,
            adjacency,
            edge_count: pairs.len(),
        })
    }

    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn waypoints(&self) -> &[Waypoint] {
        &self.waypoints
    }

    pub fn waypoint(&self, id: &str) -> Result<&Waypoint, GraphError> {
        Ok(&self.waypoints[self.idx(id)?])
    }

    /// Edges as `(a, b)` id pairs with `a < b`, in sorted order.
    pub fn edges(&self) -> Vec<(String, String)> {
        let mut out = Vec::with_capacity(self.edge_count);
        for (a, list) in self.adjacency.iter().enumerate() {
            for &(b, _) in list {
                if a < b {
                    out.push((self.waypoints[a].id.clone(), self.waypoints[b].id.clone()));
                }
            }
        }
        out
    }

    pub fn has_edge(&self, a: &str, b: &str) -> bool {
        match (self.index.get(a), self.index.get(b)) {
            (Some(&ia), Some(&ib)) => self.adjacency[ia].iter().any(|&(n, _)| n == ib),
            _ => false,
        }
    }

    pub fn edge_weight(&self, a: &str, b: &str) -> Option<f64> {
        let ia = *self.index.get(a)?;
        let ib = *self.index.get(b)?;
        self.adjacency[ia]
            .iter()
            .find(|&&(n, _)| n == ib)
            .map(|&(_, w)| w)
    }

    fn idx(&self, id: &str) -> Result<usize, GraphError> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| GraphError::UnknownWaypoint(id.to_string()))
    }

    /// Ids adjacent to `at`, sorted lexicographically.
    pub fn navigable_candidates(&self, at: &str) -> Result<Vec<String>, GraphError> {
        let i = self.idx(at)?;
        Ok(self.adjacency[i]
            .iter()
            .map(|&(n, _)| self.waypoints[n].id.clone())
            .collect())
    }

    /// Shortest weighted path length, `None` when the two are disconnected.
    pub fn geodesic_distance(&self, from: &str, to: &str) -> Result<Option<f64>, GraphError> {
        let s = self.idx(from)?;
        let t = self.idx(to)?;
        if s == t {
            return Ok(Some(0.0));
        }
        Ok(self.dijkstra(s)[t])
    }

    /// Single-source distances to every waypoint, keyed by id. Unreachable
    /// waypoints are omitted.
    pub fn distances_from(&self, from: &str) -> Result<BTreeMap<String, f64>, GraphError> {
        let s = self.idx(from)?;
        Ok(self
            .dijkstra(s)
            .into_iter()
            .enumerate()
            .filter_map(|(i, d)| d.map(|d| (self.waypoints[i].id.clone(), d)))
            .collect())
    }

    /// Largest finite geodesic distance over all pairs.
    pub fn diameter(&self) -> f64 {
        (0..self.len())
            .flat_map(|s| self.dijkstra(s).into_iter().flatten())
            .fold(0.0, f64::max)
    }

    /// A minimum-length path from `from` to `to`. Among equal-length paths the
    /// lexicographically smallest id sequence is returned.
    pub fn shortest_path(&self, from: &str, to: &str) -> Result<Vec<String>, GraphError> {
        let s = self.idx(from)?;
        let t = self.idx(to)?;
        let to_target = self.dijkstra(t);
        let Some(total) = to_target[s] else {
            return Err(GraphError::Unreachable {
                from: from.to_string(),
                to: to.to_string(),
            });
        };
        let tol = LENGTH_EPS * total.max(1.0);
        let mut path = vec![s];
        let mut cur = s;
        while cur != t {
            let here = to_target[cur].expect("on a shortest path");
            // adjacency is id-sorted, so the first tight neighbour is the smallest id
            let next = self.adjacency[cur]
                .iter()
                .find(|&&(n, w)| matches!(to_target[n], Some(d) if (w + d - here).abs() <= tol))
                .map(|&(n, _)| n)
                .expect("a tight edge always exists on a shortest-path tree");
            path.push(next);
            cur = next;
        }
        Ok(path
            .into_iter()
            .map(|i| self.waypoints[i].id.clone())
            .collect())
    }

    /// Sum of edge weights along consecutive entries of `path`.
    pub fn path_length(&self, path: &[String]) -> Result<f64, GraphError> {
        let mut total = 0.0;
        for pair in path.windows(2) {
            let w =
                self.edge_weight(&pair[0], &pair[1])
                    .ok_or_else(|| GraphError::Unreachable {
                        from: pair[0].clone(),
                        to: pair[1].clone(),
                    })?;
            total += w;
        }
        Ok(total)
    }

    /// Subgraph induced by an explicit edge list; waypoints are the endpoints
    /// of those edges plus any `extra` ids.
    pub fn subgraph<'a, I>(
        &self,
        extra: I,
        edges: &BTreeSet<(String, String)>,
    ) -> Result<NavGraph, GraphError>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut ids: BTreeSet<&str> = extra.into_iter().collect();
        for (a, b) in edges {
            ids.insert(a);
            ids.insert(b);
        }
        let mut wps = Vec::with_capacity(ids.len());
        for id in ids {
            wps.push(self.waypoint(id)?.clone());
        }
        for (a, b) in edges {
            if !self.has_edge(a, b) {
                return Err(GraphError::Unreachable {
                    from: a.clone(),
                    to: b.clone(),
                });
            }
        }
        NavGraph::new(wps, edges.iter().map(|(a, b)| (a.as_str(), b.as_str())))
    }

    fn dijkstra(&self, source: usize) -> Vec<Option<f64>> {
        let mut dist: Vec<Option<f64>> = vec![None; self.len()];
        let mut heap = BinaryHeap::new();
        dist[source] = Some(0.0);
        heap.push(HeapItem {
            dist: 0.0,
            node: source,
        });
        while let Some(HeapItem { dist: d, node }) = heap.pop() {
            if matches!(dist[node], Some(best) if d > best) {
                continue;
            }
            for &(n, w) in &self.adjacency[node] {
                let nd = d + w;
                if dist[n].is_none_or(|cur| nd < cur) {
                    dist[n] = Some(nd);
                    heap.push(HeapItem { dist: nd, node: n });
                }
            }
        }
        dist
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct HeapItem {
    dist: f64,
    node: usize,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(ids: &[&str], spacing: &[f64]) -> NavGraph {
        let mut x = 0.0;
        let mut wps = vec![Waypoint::new(ids[0], [0.0, 0.0, 0.0])];
        for (id, s) in ids[1..].iter().zip(spacing) {
            x += s;
            wps.push(Waypoint::new(*id, [x, 0.0, 0.0]));
        }
        let edges: Vec<_> = ids.windows(2).map(|w| (w[0], w[1])).collect();
        NavGraph::new(wps, edges).unwrap()
    }

    #[test]
    fn triangle_candidates() {
        let g = NavGraph::new(
            vec![
                Waypoint::new("A", [0.0, 0.0, 0.0]),
                Waypoint::new("B", [1.0, 0.0, 0.0]),
                Waypoint::new("C", [0.0, 1.0, 0.0]),
                Waypoint::new("D", [5.0, 5.0, 0.0]),
            ],
            [("A", "B"), ("B", "C"), ("A", "C")],
        )
        .unwrap();
        assert_eq!(g.navigable_candidates("B").unwrap(), vec!["A", "C"]);
        assert!(g.navigable_candidates("D").unwrap().is_empty());
        assert_eq!(
            g.navigable_candidates("Z"),
            Err(GraphError::UnknownWaypoint("Z".into()))
        );
    }

    #[test]
    fn path_candidates_middle() {
        let g = line(&["A", "B", "C", "D", "E"], &[1.0; 4]);
        assert_eq!(g.navigable_candidates("C").unwrap(), vec!["B", "D"]);
    }

    #[test]
    fn geodesic_chain() {
        let g = line(&["A", "B", "C"], &[2.0, 3.0]);
        assert_eq!(g.geodesic_distance("A", "A").unwrap(), Some(0.0));
        assert_eq!(g.geodesic_distance("A", "C").unwrap(), Some(5.0));
        assert_eq!(g.shortest_path("A", "C").unwrap(), vec!["A", "B", "C"]);
        assert_eq!(g.shortest_path("B", "B").unwrap(), vec!["B"]);
    }

    #[test]
    fn disconnected_is_unreachable() {
        let g = NavGraph::new(
            vec![
                Waypoint::new("A", [0.0, 0.0, 0.0]),
                Waypoint::new("B", [1.0, 0.0, 0.0]),
            ],
            Vec::<(&str, &str)>::new(),
        )
        .unwrap();
        assert_eq!(g.geodesic_distance("A", "B").unwrap(), None);
        assert!(matches!(
            g.shortest_path("A", "B"),
            Err(GraphError::Unreachable { .. })
        ));
    }

    #[test]
    fn equal_routes_prefer_smallest_ids() {
        // square A-B-C and A-D-C, both length 2
        let g = NavGraph::new(
            vec![
                Waypoint::new("A", [0.0, 0.0, 0.0]),
                Waypoint::new("B", [1.0, 0.0, 0.0]),
                Waypoint::new("C", [1.0, 1.0, 0.0]),
                Waypoint::new("D", [0.0, 1.0, 0.0]),
            ],
            [("A", "D"), ("D", "C"), ("A", "B"), ("B", "C")],
        )
        .unwrap();
        assert_eq!(g.shortest_path("A", "C").unwrap(), vec!["A", "B", "C"]);
        assert_eq!(g.shortest_path("C", "A").unwrap(), vec!["C", "B", "A"]);
    }

    #[test]
    fn rejects_bad_input() {
        let wp = |id: &str| Waypoint::new(id, [0.0, 0.0, 0.0]);
        assert_eq!(
            NavGraph::new(vec![wp("A"), wp("A")], Vec::<(&str, &str)>::new()),
            Err(GraphError::DuplicateWaypoint("A".into()))
        );
        assert_eq!(
            NavGraph::new(vec![wp("A")], [("A", "A")]),
            Err(GraphError::SelfLoop("A".into()))
        );
        assert_eq!(
            NavGraph::new(vec![wp("A")], [("A", "B")]),
            Err(GraphError::UnknownWaypoint("B".into()))
        );
        assert_eq!(
            NavGraph::new(
                vec![Waypoint::new("A", [f64::NAN, 0.0, 0.0])],
                Vec::<(&str, &str)>::new()
            ),
            Err(GraphError::NonFinitePosition("A".into()))
        );
    }

    #[test]
    fn duplicate_edges_collapse() {
        let g = NavGraph::new(
            vec![
                Waypoint::new("A", [0.0, 0.0, 0.0]),
                Waypoint::new("B", [3.0, 4.0, 0.0]),
            ],
            [("A", "B"), ("B", "A")],
        )
        .unwrap();
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.edge_weight("B", "A"), Some(5.0));
    }
}
