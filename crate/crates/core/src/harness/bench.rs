//! Profile × seed × ablation sweeps over generated worlds with oracle agents.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::sim::{generate_world, oracle_backends, Profile};

use super::config::RunConfig;
use super::metrics::{aggregate, episode_metrics, Aggregate, EpisodeMetrics};
use super::runner::{run_episode, HarnessError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Full,
    NoBdMcts,
    NoPp,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoBdMcts => "no-bd-mcts",
            Variant::NoPp => "no-pp",
        }
    }

    pub fn apply(self, base: &RunConfig) -> RunConfig {
        let mut c = base.clone();
        match self {
            Variant::Full => {}
            Variant::NoBdMcts => c.no_bd_mcts = true,
            Variant::NoPp => c.no_pp = true,
        }
        c
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "full" => Ok(Variant::Full),
            "no-bd-mcts" | "no_bd_mcts" => Ok(Variant::NoBdMcts),
            "no-pp" | "no_pp" => Ok(Variant::NoPp),
            other => Err(format!("unknown variant `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub profile: Profile,
    pub variant: Variant,
    pub aggregate: Aggregate,
    pub episodes: Vec<EpisodeMetrics>,
}

/// Difference of a variant against `full` on the same profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchDelta {
    pub profile: Profile,
    pub variant: Variant,
    pub ne: f64,
    pub sr: f64,
    pub osr: f64,
    pub spl: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub seeds: Vec<u64>,
    pub rows: Vec<BenchRow>,
    pub deltas: Vec<BenchDelta>,
}

impl BenchReport {
    pub fn row(&self, profile: Profile, variant: Variant) -> Option<&BenchRow> {
        self.rows
            .iter()
            .find(|r| r.profile == profile && r.variant == variant)
    }

    pub fn table(&self) -> String {
        let mut s = format!(
            "{:<10} {:<11} {:>4} {:>7} {:>7} {:>7} {:>7}\n",
            "profile", "variant", "n", "NE", "SR", "OSR", "SPL"
        );
        for r in &self.rows {
            let a = &r.aggregate;
            s.push_str(&format!(
                "{:<10} {:<11} {:>4} {:>7.2} {:>7.1} {:>7.1} {:>7.1}\n",
                r.profile.name(),
                r.variant.name(),
                a.episodes,
                a.ne,
                a.sr,
                a.osr,
                a.spl
            ));
        }
        if !self.deltas.is_empty() {
            s.push_str("\ndelta vs full\n");
            for d in &self.deltas {
                s.push_str(&format!(
                    "{:<10} {:<11}      {:>+7.2} {:>+7.1} {:>+7.1} {:>+7.1}\n",
                    d.profile.name(),
                    d.variant.name(),
                    d.ne,
                    d.sr,
                    d.osr,
                    d.spl
                ));
            }
        }
        s
    }
}

/// Runs every (profile, variant, seed) with oracle agents. Episodes run in
/// parallel; results are collected in input order.
pub fn run_benchmark(
    profiles: &[Profile],
    seeds: &[u64],
    variants: &[Variant],
    base: &RunConfig,
) -> Result<BenchReport, HarnessError> {
    base.validate()?;
    let jobs: Vec<(Profile, Variant, u64)> = profiles
        .iter()
        .flat_map(|&p| {
            variants
                .iter()
                .flat_map(move |&v| seeds.iter().map(move |&s| (p, v, s)))
        })
        .collect();
    let run = |&(profile, variant, seed): &(Profile, Variant, u64)| {
        let world = Arc::new(generate_world(seed, profile));
        let backends = oracle_backends(world.clone(), base.panorama);
        let trace = run_episode(&world.episode, &backends, &variant.apply(base))?;
        Ok(episode_metrics(&trace, &world.episode).expect("trace matches its own episode"))
    };
    let results: Vec<Result<EpisodeMetrics, HarnessError>> = if base.workers == 1 {
        jobs.iter().map(run).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(base.workers)
            .build()
            .expect("thread pool");
        pool.install(|| jobs.par_iter().map(run).collect())
    };
    let mut metrics = results.into_iter();
    let mut rows = Vec::new();
    for &profile in profiles {
        for &variant in variants {
            let episodes: Vec<EpisodeMetrics> = metrics
                .by_ref()
                .take(seeds.len())
                .collect::<Result<_, _>>()?;
            rows.push(BenchRow {
                profile,
                variant,
                aggregate: aggregate(&episodes),
                episodes,
            });
        }
    }
    let mut deltas = Vec::new();
    for r in &rows {
        if r.variant == Variant::Full || seeds.is_empty() {
            continue;
        }
        if let Some(full) = rows
            .iter()
            .find(|f| f.profile == r.profile && f.variant == Variant::Full)
        {
            deltas.push(BenchDelta {
                profile: r.profile,
                variant: r.variant,
                ne: r.aggregate.ne - full.aggregate.ne,
                sr: r.aggregate.sr - full.aggregate.sr,
                osr: r.aggregate.osr - full.aggregate.osr,
                spl: r.aggregate.spl - full.aggregate.spl,
            });
        }
    }
    Ok(BenchReport {
        seeds: seeds.to_vec(),
        rows,
        deltas,
    })
}
