//! Episodes and their on-disk JSON form, plus an adapter for R2R-style
//! instruction records.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{GraphError, NavGraph, Waypoint};

pub const DEFAULT_SUCCESS_RADIUS: f64 = 3.0;
pub const DEFAULT_MAX_STEPS: usize = 20;

#[derive(Debug, Error)]
pub enum EpisodeError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("goal `{goal}` is not reachable from start `{start}`")]
    GoalUnreachable { start: String, goal: String },
    #[error("invalid episode: {0}")]
    Invalid(String),
    #[error("malformed episode json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone)]
pub struct Episode {
    pub id: String,
    pub graph: NavGraph,
    pub start_id: String,
    pub goal_id: String,
    pub instruction: String,
    pub success_radius: f64,
    pub max_steps: usize,
}

impl Episode {
    pub fn new(
        id: impl Into<String>,
        graph: NavGraph,
        start_id: impl Into<String>,
        goal_id: impl Into<String>,
        instruction: impl Into<String>,
    ) -> Result<Self, EpisodeError> {
        let ep = Self {
            id: id.into(),
            graph,
            start_id: start_id.into(),
            goal_id: goal_id.into(),
            instruction: instruction.into(),
            success_radius: DEFAULT_SUCCESS_RADIUS,
            max_steps: DEFAULT_MAX_STEPS,
        };
        ep.validate()?;
        Ok(ep)
    }

    pub fn validate(&self) -> Result<(), EpisodeError> {
        if !(self.success_radius.is_finite() && self.success_radius >= 0.0) {
            return Err(EpisodeError::Invalid(format!(
                "success_radius must be finite and non-negative, got {}",
                self.success_radius
            )));
        }
        if self.max_steps == 0 {
            return Err(EpisodeError::Invalid("max_steps must be positive".into()));
        }
        match self
            .graph
            .geodesic_distance(&self.start_id, &self.goal_id)?
        {
            Some(_) => Ok(()),
            None => Err(EpisodeError::GoalUnreachable {
                start: self.start_id.clone(),
                goal: self.goal_id.clone(),
            }),
        }
    }

    /// Geodesic start-to-goal length (the shortest-path reference for SPL).
    pub fn reference_length(&self) -> f64 {
        self.graph
            .geodesic_distance(&self.start_id, &self.goal_id)
            .ok()
            .flatten()
            .expect("validated episode has a reachable goal")
    }

    pub fn to_file(&self) -> EpisodeFile {
        EpisodeFile {
            id: Some(self.id.clone()),
            waypoints: self.graph.waypoints().to_vec(),
            edges: self
                .graph
                .edges()
                .into_iter()
                .map(|(a, b)| [a, b])
                .collect(),
            start: self.start_id.clone(),
            goal: self.goal_id.clone(),
            instruction: self.instruction.clone(),
            success_radius: Some(self.success_radius),
            max_steps: Some(self.max_steps),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, EpisodeError> {
        serde_json::from_str::<EpisodeFile>(text)?.into_episode(None)
    }
}

/// Serialized episode:
/// `{waypoints:[{id,pos:[x,y,z]}], edges:[[id,id]], start, goal, instruction, success_radius?, max_steps?}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub waypoints: Vec<Waypoint>,
    pub edges: Vec<[String; 2]>,
    pub start: String,
    pub goal: String,
    pub instruction: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub success_radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<usize>,
}

impl EpisodeFile {
    /// `fallback_id` is used when the file carries no id (e.g. the file stem).
    pub fn into_episode(self, fallback_id: Option<&str>) -> Result<Episode, EpisodeError> {
        let graph = NavGraph::new(
            self.waypoints,
            self.edges.iter().map(|[a, b]| (a.as_str(), b.as_str())),
        )?;
        let ep = Episode {
            id: self
                .id
                .or_else(|| fallback_id.map(str::to_string))
                .unwrap_or_else(|| "episode".to_string()),
            graph,
            start_id: self.start,
            goal_id: self.goal,
            instruction: self.instruction,
            success_radius: self.success_radius.unwrap_or(DEFAULT_SUCCESS_RADIUS),
            max_steps: self.max_steps.unwrap_or(DEFAULT_MAX_STEPS),
        };
        ep.validate()?;
        Ok(ep)
    }
}

/// One R2R-style instruction record.
#[derive(Debug, Clone, Deserialize)]
pub struct R2rRecord {
    pub scan: String,
    pub path: Vec<String>,
    #[serde(default)]
    pub heading: f64,
    pub instructions: Vec<String>,
    #[serde(default)]
    pub path_id: Option<u64>,
}

/// One node of a Matterport-style connectivity sidecar. The position is the
/// translation column of the row-major 4x4 `pose`.
#[derive(Debug, Clone, Deserialize)]
pub struct ConnectivityNode {
    pub image_id: String,
    pub pose: Vec<f64>,
    #[serde(default = "default_true")]
    pub included: bool,
    pub unobstructed: Vec<bool>,
}

fn default_true() -> bool {
    true
}

/// Builds the navigation graph for one scan from its connectivity nodes.
pub fn graph_from_connectivity(nodes: &[ConnectivityNode]) -> Result<NavGraph, EpisodeError> {
    let mut wps = Vec::new();
    for n in nodes.iter().filter(|n| n.included) {
        if n.pose.len() != 16 {
            return Err(EpisodeError::Invalid(format!(
                "pose of `{}` has {} entries, expected 16",
                n.image_id,
                n.pose.len()
            )));
        }
        wps.push(Waypoint::new(
            n.image_id.clone(),
            [n.pose[3], n.pose[7], n.pose[11]],
        ));
    }
    let mut edges = Vec::new();
    for (i, n) in nodes.iter().enumerate() {
        if !n.included {
            continue;
        }
        for (j, &open) in n.unobstructed.iter().enumerate() {
            if open && j > i && nodes.get(j).is_some_and(|m| m.included) {
                edges.push((n.image_id.clone(), nodes[j].image_id.clone()));
            }
        }
    }
    Ok(NavGraph::new(wps, edges)?)
}

/// Maps R2R records onto episodes: one episode per instruction, start at the
/// first path node, goal at the last. `connectivity` maps scan id to nodes.
pub fn episodes_from_r2r(
    records: &[R2rRecord],
    connectivity: &BTreeMap<String, Vec<ConnectivityNode>>,
) -> Result<Vec<Episode>, EpisodeError> {
    let mut graphs: BTreeMap<&str, NavGraph> = BTreeMap::new();
    let mut out = Vec::new();
    for (ri, rec) in records.iter().enumerate() {
        let (Some(start), Some(goal)) = (rec.path.first(), rec.path.last()) else {
            return Err(EpisodeError::Invalid(format!(
                "record {ri} has an empty path"
            )));
        };
        if !graphs.contains_key(rec.scan.as_str()) {
            let nodes = connectivity.get(&rec.scan).ok_or_else(|| {
                EpisodeError::Invalid(format!("no connectivity for scan `{}`", rec.scan))
            })?;
            graphs.insert(rec.scan.as_str(), graph_from_connectivity(nodes)?);
        }
        let graph = &graphs[rec.scan.as_str()];
        let base = rec
            .path_id
            .map(|p| p.to_string())
            .unwrap_or_else(|| ri.to_string());
        for (ii, instr) in rec.instructions.iter().enumerate() {
            out.push(Episode::new(
                format!("{}_{base}_{ii}", rec.scan),
                graph.clone(),
                start.clone(),
                goal.clone(),
                instr.clone(),
            )?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SIMPLE: &str = r#"{
        "waypoints": [{"id":"a","pos":[0,0,0]},{"id":"b","pos":[4,0,0]},{"id":"c","pos":[4,3,0]}],
        "edges": [["a","b"],["b","c"]],
        "start": "a", "goal": "c", "instruction": "walk to the sofa"
    }"#;

    #[test]
    fn parses_with_defaults() {
        let ep = Episode::from_json(SIMPLE).unwrap();
        assert_eq!(ep.success_radius, 3.0);
        assert_eq!(ep.max_steps, 20);
        assert_eq!(ep.reference_length(), 7.0);
        let back = Episode::from_json(&serde_json::to_string(&ep.to_file()).unwrap()).unwrap();
        assert_eq!(back.graph, ep.graph);
    }

    #[test]
    fn unreachable_goal_rejected() {
        let text = SIMPLE.replace(r#"["b","c"]"#, r#"["a","b"]"#);
        assert!(matches!(
            Episode::from_json(&text),
            Err(EpisodeError::GoalUnreachable { .. })
        ));
    }

    #[test]
    fn r2r_adapter() {
        let pose = |x: f64, y: f64| {
            let mut p = vec![0.0; 16];
            p[3] = x;
            p[7] = y;
            p
        };
        let conn = BTreeMap::from([(
            "scanA".to_string(),
            vec![
                ConnectivityNode {
                    image_id: "n0".into(),
                    pose: pose(0.0, 0.0),
                    included: true,
                    unobstructed: vec![false, true, false],
                },
                ConnectivityNode {
                    image_id: "n1".into(),
                    pose: pose(2.0, 0.0),
                    included: true,
                    unobstructed: vec![true, false, true],
                },
                ConnectivityNode {
                    image_id: "n2".into(),
                    pose: pose(2.0, 2.0),
                    included: true,
                    unobstructed: vec![false, true, false],
                },
            ],
        )]);
        let recs: Vec<R2rRecord> = serde_json::from_str(
            r#"[{"scan":"scanA","path":["n0","n1","n2"],"heading":1.5,"instructions":["go","go again"],"path_id":7}]"#,
        )
        .unwrap();
        let eps = episodes_from_r2r(&recs, &conn).unwrap();
        assert_eq!(eps.len(), 2);
        assert_eq!(eps[1].id, "scanA_7_1");
        assert_eq!(eps[0].reference_length(), 4.0);
    }
}
