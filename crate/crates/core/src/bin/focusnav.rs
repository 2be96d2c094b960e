use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use focusnav_core::harness::{
    compute_metrics, run_benchmark, run_episode, EpisodeTrace, FileConfig, Variant,
};
use focusnav_core::llm::http_backends;
use focusnav_core::sim::{oracle_backends, resolve_world, OracleScanner, Profile, World};

#[derive(Parser)]
#[command(
    name = "focusnav",
    version,
    about = "Instruction-following navigation on waypoint graphs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one episode and write its trace.
    Run(RunArgs),
    /// Sweep profiles, seeds and ablations with oracle agents.
    Bench(BenchArgs),
    /// Score trace files against their episodes.
    Metrics(MetricsArgs),
    /// Export a generated world as JSON.
    World(WorldArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Backend {
    Oracle,
    Http,
}

#[derive(Args)]
struct Overrides {
    /// TOML config; `[endpoint]` configures the HTTP backend.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    topk: Option<usize>,
    #[arg(long)]
    max_steps: Option<usize>,
}

impl Overrides {
    fn load(&self) -> Result<FileConfig> {
        let mut cfg = match &self.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        if let Some(l) = self.lambda {
            cfg.run.lambda = l;
        }
        if let Some(k) = self.topk {
            cfg.run.top_k = k;
        }
        if let Some(m) = self.max_steps {
            cfg.run.max_steps = Some(m);
        }
        cfg.run.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct RunArgs {
    /// `seed:profile`, a profile name, or a world/episode JSON file.
    #[arg(long)]
    world: String,
    #[arg(long, value_enum, default_value = "oracle")]
    backend: Backend,
    #[arg(long)]
    no_bd_mcts: bool,
    #[arg(long)]
    no_pp: bool,
    /// Seed for a bare profile name.
    #[arg(long)]
    seed: Option<u64>,
    /// Trace destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "corridor,trap,landmark")]
    profiles: Vec<Profile>,
    /// `a..b` (inclusive) or a comma list.
    #[arg(long, default_value = "0..99")]
    seeds: String,
    #[arg(long, value_delimiter = ',', default_value = "full,no-bd-mcts,no-pp")]
    matrix: Vec<Variant>,
    /// JSON report destination.
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct MetricsArgs {
    /// Directory of `*.jsonl` traces.
    #[arg(long)]
    traces: PathBuf,
    /// Directory of episode or world JSON files, matched to traces by file stem.
    #[arg(long)]
    episodes: PathBuf,
}

#[derive(Args)]
struct WorldArgs {
    #[arg(long)]
    profile: Profile,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(Vec::new());
    }
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().context("seed range start")?;
        let b: u64 = b
            .trim_start_matches('=')
            .trim()
            .parse()
            .context("seed range end")?;
        return Ok(if a > b { Vec::new() } else { (a..=b).collect() });
    }
    s.split(',')
        .map(|x| x.trim().parse::<u64>().context("seed list"))
        .collect()
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let mut cfg = args.overrides.load()?;
    cfg.run.no_bd_mcts |= args.no_bd_mcts;
    cfg.run.no_pp |= args.no_pp;
    let world = Arc::new(resolve_world(&args.world, args.seed)?);
    let backends = match args.backend {
        Backend::Oracle => oracle_backends(world.clone(), cfg.run.panorama),
        Backend::Http => {
            let endpoint = cfg
                .endpoint
                .clone()
                .context("the http backend needs an [endpoint] table in --config")?;
            let scanner = Arc::new(OracleScanner::new(world.clone()));
            http_backends(endpoint, scanner)?
        }
    };
    let trace = run_episode(&world.episode, &backends, &cfg.run)?;
    write_or_print(args.out.as_deref(), &trace.to_jsonl())?;
    let report = compute_metrics(
        std::slice::from_ref(&trace),
        std::slice::from_ref(&world.episode),
    )?;
    let m = &report.per_episode[0];
    eprintln!(
        "{}: {} steps, stop={:?}, NE {:.2} m, success {}, oracle success {}, SPL {:.3}",
        world.episode.id,
        trace.summary.steps,
        trace.summary.stop_reason,
        m.ne_m,
        m.success,
        m.oracle_success,
        m.spl
    );
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    let cfg = args.overrides.load()?;
    let seeds = parse_seeds(&args.seeds)?;
    let report = run_benchmark(&args.profiles, &seeds, &args.matrix, &cfg.run)?;
    print!("{}", report.table());
    if let Some(p) = &args.report {
        fs::write(p, serde_json::to_string_pretty(&report)?)
            .with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn files_by_stem(dir: &Path, ext: &str) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) == Some(ext) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.insert(stem.to_string(), path);
            }
        }
    }
    Ok(out)
}

fn cmd_metrics(args: MetricsArgs) -> Result<()> {
    let traces = files_by_stem(&args.traces, "jsonl")?;
    let episodes = files_by_stem(&args.episodes, "json")?;
    let mut ts = Vec::new();
    let mut es = Vec::new();
    for (stem, tpath) in &traces {
        let Some(epath) = episodes.get(stem) else {
            bail!("no episode file for trace `{stem}`");
        };
        let trace = EpisodeTrace::from_jsonl(&fs::read_to_string(tpath)?)
            .with_context(|| format!("parsing {}", tpath.display()))?;
        let world = World::from_json(&fs::read_to_string(epath)?, Some(stem))
            .with_context(|| format!("parsing {}", epath.display()))?;
        ts.push(trace);
        es.push(world.episode);
    }
    let report = compute_metrics(&ts, &es)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn cmd_world(args: WorldArgs) -> Result<()> {
    let world = focusnav_core::sim::generate_world(args.seed, args.profile);
    write_or_print(args.out.as_deref(), &(world.to_json() + "\n"))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("error")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Metrics(a) => cmd_metrics(a),
        Command::World(a) => cmd_world(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
