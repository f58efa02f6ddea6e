//! `deasy`: generate scenarios, run the simulator, compare policies and
//! summarize results.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use deasy_core::demand::{demand_to_text, load_demand, CorridorDemand};
use deasy_core::harness::{self, reports_to_csv, summarize_csv, summary_to_csv, BottleneckScenario, Variant};
use deasy_core::metrics::{knowledge_log_csv, write_rows, MetricsReport};
use deasy_core::road_network::GridSpec;
use deasy_core::sim::{parse_trace, replay_trace, trace_to_text};
use deasy_core::{DisseminationMode, ReroutingPolicy, RoadGraph, ScenarioConfig, Simulation};

/// Parses `1..10` (inclusive) or `1,4,7`.
fn parse_seeds(s: &str) -> Result<Vec<u64>, String> {
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| format!("invalid seed range `{s}`"))?;
        let b: u64 = b.trim().parse().map_err(|_| format!("invalid seed range `{s}`"))?;
        if a > b {
            return Err(format!("empty seed range `{s}`"));
        }
        return Ok((a..=b).collect());
    }
    s.split(',')
        .map(|x| x.trim().parse().map_err(|_| format!("invalid seed `{x}`")))
        .collect()
}

#[derive(Parser)]
#[command(name = "deasy", version, about = "Infrastructure-less vehicular traffic management simulator")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a Manhattan-grid network, optionally with corridor demand and a
    /// matching scenario config.
    GenNet(GenNetArgs),
    /// Run one scenario and print or append its metrics row.
    Run(RunArgs),
    /// Paired runs: every policy on every seed with shared demand.
    Compare(CompareArgs),
    /// Seeds × penetration rates for one policy.
    Sweep(SweepArgs),
    /// Mean and 95% confidence interval per policy, dissemination and
    /// penetration rate.
    Summary(SummaryArgs),
}

#[derive(Args)]
struct GenNetArgs {
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(2..))]
    rows: u32,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(2..))]
    cols: u32,
    /// Block length in metres.
    #[arg(long, default_value_t = 200.0)]
    block_m: f64,
    #[arg(long, default_value_t = 1)]
    lanes: u32,
    /// Speed limit in m/s.
    #[arg(long, default_value_t = 13.89)]
    vmax: f64,
    /// Row whose edges get `--corridor-lanes` lanes.
    #[arg(long)]
    corridor_row: Option<u32>,
    #[arg(long, default_value_t = 2)]
    corridor_lanes: u32,
    /// Network file to write.
    #[arg(long)]
    out: PathBuf,
    /// Also write corridor-biased demand here.
    #[arg(long)]
    demand_out: Option<PathBuf>,
    #[arg(long, default_value_t = 600)]
    vehicles: usize,
    /// Share of trips that run the corridor end to end.
    #[arg(long, default_value_t = 0.6)]
    corridor_fraction: f64,
    /// Corridor trips start in the first and end in the last this many
    /// columns.
    #[arg(long, default_value_t = 3)]
    end_columns: u32,
    /// Departures are spread uniformly over this many seconds.
    #[arg(long, default_value_t = 600.0)]
    depart_window_s: f64,
    #[arg(long, default_value_t = 1)]
    demand_seed: u64,
    /// Also write a scenario config with a slowed corridor edge here.
    #[arg(long)]
    config_out: Option<PathBuf>,
    /// Column where the slowed corridor edge starts.
    #[arg(long, default_value_t = 4)]
    incident_column: u32,
    #[arg(long, default_value_t = 2.0)]
    incident_speed: f64,
}

#[derive(Args)]
struct Overrides {
    /// Scenario config file (`key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's dissemination mode.
    #[arg(long)]
    dissemination: Option<DisseminationMode>,
    /// Overrides the config's penetration rate.
    #[arg(long)]
    penetration: Option<f64>,
    /// Append rows to this CSV instead of printing them.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Overrides,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    policy: Option<ReroutingPolicy>,
    /// Write per-receiver knowledge deliveries as CSV.
    #[arg(long)]
    knowledge_log: Option<PathBuf>,
    /// Record every dispatched event to this file.
    #[arg(long, conflicts_with = "replay")]
    trace: Option<PathBuf>,
    /// Re-run while checking events against a recorded trace.
    #[arg(long)]
    replay: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    common: Overrides,
    /// Comma-separated policies.
    #[arg(long, value_delimiter = ',', default_value = "none,selfish,deasy")]
    policies: Vec<ReroutingPolicy>,
    /// `1..10` or `1,2,3`.
    #[arg(long, value_parser = parse_seeds, default_value = "1..10")]
    seeds: ::std::vec::Vec<u64>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Overrides,
    #[arg(long)]
    policy: Option<ReroutingPolicy>,
    #[arg(long, value_parser = parse_seeds, default_value = "1..10")]
    seeds: ::std::vec::Vec<u64>,
    /// Comma-separated penetration rates.
    #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,0.75,1")]
    rates: Vec<f64>,
}

#[derive(Args)]
struct SummaryArgs {
    /// Metrics CSV written by run, compare or sweep.
    input: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::GenNet(a) => gen_net(a),
        Command::Run(a) => run(a),
        Command::Compare(a) => compare(a),
        Command::Sweep(a) => sweep(a),
        Command::Summary(a) => summary(a),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn gen_net(a: GenNetArgs) -> Result<()> {
    let grid = GridSpec {
        rows: a.rows,
        cols: a.cols,
        block_m: a.block_m,
        lanes: a.lanes,
        vmax_mps: a.vmax,
        corridor_row: a.corridor_row,
        corridor_lanes: a.corridor_lanes,
    };
    let graph = RoadGraph::manhattan_grid(&grid)?;
    write_text(&a.out, &graph.to_text())?;
    let demand = CorridorDemand {
        vehicles: a.vehicles,
        corridor_fraction: a.corridor_fraction,
        corridor_row: a.corridor_row.unwrap_or(a.rows / 2),
        end_columns: a.end_columns,
        depart_window_s: a.depart_window_s,
    };
    if let Some(path) = &a.demand_out {
        let scenario = BottleneckScenario {
            grid: grid.clone(),
            demand,
            incident_column: a.incident_column,
            incident_speed_mps: a.incident_speed,
        };
        let entries = scenario.demand(a.demand_seed)?;
        if let Some(cfg_path) = &a.config_out {
            let (cfg, _, _) = scenario.build(a.demand_seed, &scenario.base_config())?;
            let cfg = ScenarioConfig {
                network_path: std::path::absolute(&a.out)?,
                demand_path: std::path::absolute(path)?,
                ..cfg
            };
            write_text(cfg_path, &cfg.to_text())?;
        }
        write_text(path, &demand_to_text(&entries))?;
    } else if a.config_out.is_some() {
        bail!("--config-out needs --demand-out");
    }
    Ok(())
}

struct Loaded {
    cfg: ScenarioConfig,
    graph: RoadGraph,
    demand: Vec<deasy_core::demand::DemandEntry>,
}

fn load(o: &Overrides) -> Result<Loaded> {
    let mut cfg = ScenarioConfig::from_file(&o.config)?;
    if let Some(d) = o.dissemination {
        cfg.dissemination = d;
    }
    if let Some(p) = o.penetration {
        cfg.penetration_rate = p;
    }
    cfg.validate()?;
    let graph = RoadGraph::from_file(&cfg.network_path)
        .with_context(|| format!("loading network {}", cfg.network_path.display()))?;
    let demand = load_demand(&cfg.demand_path).with_context(|| format!("loading demand {}", cfg.demand_path.display()))?;
    Ok(Loaded { cfg, graph, demand })
}

fn emit(reports: &[MetricsReport], out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => write_rows(p, reports)?,
        None => print!("{}", reports_to_csv(reports)),
    }
    Ok(())
}

fn run(a: RunArgs) -> Result<()> {
    let Loaded { mut cfg, graph, demand } = load(&a.common)?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(p) = a.policy {
        cfg.rerouting_policy = p;
    }
    let report = if let Some(path) = &a.replay {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let trace = parse_trace(&text, &path.display().to_string())?;
        replay_trace(cfg, graph, &demand, trace)?
    } else {
        let mut sim = Simulation::new(cfg, graph, &demand)?;
        if a.trace.is_some() {
            sim.record_trace();
        }
        sim.run_until(f64::INFINITY)?;
        if let (Some(path), Some(trace)) = (&a.trace, sim.trace()) {
            write_text(path, &trace_to_text(trace))?;
        }
        if let Some(path) = &a.knowledge_log {
            write_text(path, &knowledge_log_csv(sim.episodes()))?;
        }
        sim.report()
    };
    emit(&[report], a.common.out.as_deref())
}

fn compare(a: CompareArgs) -> Result<()> {
    let l = load(&a.common)?;
    let variants: Vec<Variant> = a
        .policies
        .iter()
        .map(|p| Variant::new(*p, l.cfg.dissemination))
        .collect();
    let rows = harness::compare(&l.cfg, &l.graph, &l.demand, &variants, &a.seeds)?;
    emit(&rows, a.common.out.as_deref())
}

fn sweep(a: SweepArgs) -> Result<()> {
    let mut l = load(&a.common)?;
    if let Some(p) = a.policy {
        l.cfg.rerouting_policy = p;
    }
    let rows = harness::sweep(&l.cfg, &l.graph, &l.demand, &a.rates, &a.seeds)?;
    emit(&rows, a.common.out.as_deref())
}

fn summary(a: SummaryArgs) -> Result<()> {
    let text = fs::read_to_string(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let rows = summarize_csv(&text, &a.input.display().to_string())?;
    let csv = summary_to_csv(&rows);
    match &a.out {
        Some(p) => write_text(p, &csv),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}
