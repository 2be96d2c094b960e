//! NE, SR, OSR and SPL. Distances are geodesic on the full episode graph.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::episode::Episode;

use super::trace::EpisodeTrace;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("{traces} traces for {episodes} episodes")]
    CountMismatch { traces: usize, episodes: usize },
    #[error("trace {index} is for `{trace}` but episode is `{episode}`")]
    IdMismatch {
        index: usize,
        trace: String,
        episode: String,
    },
    #[error("trace for `{0}` names a waypoint outside its graph")]
    UnknownWaypoint(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub episode_id: String,
    pub ne_m: f64,
    pub success: bool,
    pub oracle_success: bool,
    pub spl: f64,
    pub path_length: f64,
    pub reference_length: f64,
}

/// Means over an episode set; rates in percent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub episodes: usize,
    pub ne: f64,
    pub sr: f64,
    pub osr: f64,
    pub spl: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_episode: Vec<EpisodeMetrics>,
    pub aggregate: Aggregate,
}

impl MetricsReport {
    /// `0 ≤ SPL ≤ SR ≤ OSR ≤ 100` and `NE ≥ 0`.
    pub fn is_ordered(&self) -> bool {
        let a = &self.aggregate;
        let eps = 1e-9;
        a.ne >= 0.0
            && a.spl >= -eps
            && a.spl <= a.sr + eps
            && a.sr <= a.osr + eps
            && a.osr <= 100.0 + eps
    }
}

/// `success · ℓ* / max(p, ℓ*)`; a zero-length reference with a zero-length
/// path counts as fully efficient.
pub fn spl(success: bool, reference: f64, path: f64) -> f64 {
    if !success {
        return 0.0;
    }
    let denom = path.max(reference);
    if denom <= 0.0 {
        1.0
    } else {
        reference / denom
    }
}

pub fn episode_metrics(
    trace: &EpisodeTrace,
    episode: &Episode,
) -> Result<EpisodeMetrics, MetricsError> {
    let g = &episode.graph;
    let to_goal = g
        .distances_from(&episode.goal_id)
        .map_err(|_| MetricsError::UnknownWaypoint(episode.id.clone()))?;
    let dist = |w: &str| {
        to_goal
            .get(w)
            .copied()
            .ok_or_else(|| MetricsError::UnknownWaypoint(episode.id.clone()))
    };
    let ne = dist(&trace.summary.final_waypoint)?;
    let success = ne <= episode.success_radius;
    let mut oracle_success = success;
    for w in &trace.summary.visited {
        oracle_success |= dist(w)? <= episode.success_radius;
    }
    let reference = episode.reference_length();
    let p = trace.summary.path_length;
    Ok(EpisodeMetrics {
        episode_id: episode.id.clone(),
        ne_m: ne,
        success,
        oracle_success,
        spl: spl(success, reference, p),
        path_length: p,
        reference_length: reference,
    })
}

pub fn aggregate(per_episode: &[EpisodeMetrics]) -> Aggregate {
    let n = per_episode.len();
    if n == 0 {
        return Aggregate::default();
    }
    let mean =
        |f: &dyn Fn(&EpisodeMetrics) -> f64| per_episode.iter().map(f).sum::<f64>() / n as f64;
    let rate = |b: bool| if b { 1.0 } else { 0.0 };
    Aggregate {
        episodes: n,
        ne: mean(&|m| m.ne_m),
        sr: 100.0 * mean(&|m| rate(m.success)),
        osr: 100.0 * mean(&|m| rate(m.oracle_success)),
        spl: 100.0 * mean(&|m| m.spl),
    }
}

pub fn compute_metrics(
    traces: &[EpisodeTrace],
    episodes: &[Episode],
) -> Result<MetricsReport, MetricsError> {
    if traces.len() != episodes.len() {
        return Err(MetricsError::CountMismatch {
            traces: traces.len(),
            episodes: episodes.len(),
        });
    }
    let mut per_episode = Vec::with_capacity(traces.len());
    for (i, (t, e)) in traces.iter().zip(episodes).enumerate() {
        if t.header.episode_id != e.id {
            return Err(MetricsError::IdMismatch {
                index: i,
                trace: t.header.episode_id.clone(),
                episode: e.id.clone(),
            });
        }
        per_episode.push(episode_metrics(t, e)?);
    }
    let aggregate = aggregate(&per_episode);
    Ok(MetricsReport {
        per_episode,
        aggregate,
    })
}
