//! Episode runner, traces, metrics and ablation benchmarks.

pub mod bench;
pub mod config;
pub mod metrics;
pub mod runner;
pub mod trace;

pub use bench::{run_benchmark, BenchReport, Variant};
pub use config::{ConfigError, FileConfig, MovePolicy, RunConfig};
pub use metrics::{compute_metrics, spl, Aggregate, EpisodeMetrics, MetricsReport};
pub use runner::{run_episode, HarnessError};
pub use trace::{EpisodeTrace, StepRecord, StopReason, TraceLine};
