use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use heatcascade::config::Settings;
use heatcascade::engine::{run_cascade, BaseCase, Disturbance, RunConfig};
use heatcascade::montecarlo::{
    center_of, knee, run_batch, run_records, summarize, vulnerability_scan, BatchConfig, CenterPolicy, ScanConfig,
    SweepParameter, SweepResult,
};
use heatcascade::weather::Direction;
use heatcascade::{CaseError, ConfigError, GeoError, Network, SimError};

const WORKERS_ENV: &str = "CASCADE_SIM_WORKERS";

static GRACEFUL: AtomicBool = AtomicBool::new(false);
static INTERRUPTED: AtomicBool = AtomicBool::new(false);

#[derive(Parser)]
#[command(name = "heatcascade", version, about = "Cascading failures of AC grids under temperature disturbances")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one cascade and write its trace as JSON.
    Simulate(SimulateArgs),
    /// Monte Carlo batch at a single disturbance setting.
    Batch(BatchArgs),
    /// One batch per value of ΔT or γ.
    Sweep(SweepArgs),
    /// Rank load buses by mean outages and shed fraction.
    Rank(RankArgs),
    /// Load a case, solve its base operating point and report.
    ValidateCase(ValidateArgs),
    /// Print the fully resolved configuration as JSON.
    PrintConfig(PrintArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON settings file. Flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Set any settings key, e.g. `--set eta=1.1`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, value_enum)]
    direction: Option<DirectionArg>,
    #[arg(long)]
    seed: Option<u64>,
    /// Disable operator re-dispatch.
    #[arg(long)]
    no_redispatch: bool,
    /// Floor trip probability of lines and generators.
    #[arg(long)]
    p_floor: Option<f64>,
}

#[derive(Args)]
struct ScenarioArgs {
    #[arg(long)]
    center_bus: Option<u32>,
    /// Draw the center among the load buses from the seed.
    #[arg(long)]
    random_center: bool,
    #[arg(long)]
    gamma: Option<f64>,
    /// Temperature offset inside the area, °C.
    #[arg(long, allow_hyphen_values = true)]
    delta_t: Option<f64>,
}

#[derive(Args)]
struct PoolArgs {
    #[arg(long)]
    runs: Option<usize>,
    /// Worker threads; defaults to $CASCADE_SIM_WORKERS, then all cores.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    case: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, default_value = "trace.json")]
    out: PathBuf,
}

#[derive(Args)]
struct BatchArgs {
    #[arg(long)]
    case: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[command(flatten)]
    pool: PoolArgs,
    /// Directory for runs.csv and summary.json.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ParamArg {
    DeltaT,
    Gamma,
}

#[derive(Clone, Copy, ValueEnum)]
enum DirectionArg {
    Heat,
    Cool,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    case: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[command(flatten)]
    pool: PoolArgs,
    #[arg(long, value_enum)]
    param: ParamArg,
    /// Comma-separated grid.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    values: Vec<f64>,
    /// Directory for sweep.csv and sweep.json.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct RankArgs {
    #[arg(long)]
    case: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "8,10,11,15")]
    dt: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0.05,0.06,0.07,0.08")]
    gamma: Vec<f64>,
    /// Runs per (ΔT, γ) cell and bus.
    #[arg(long, default_value_t = 10)]
    runs: usize,
    #[arg(long)]
    workers: Option<usize>,
    /// Buses listed from each ranking.
    #[arg(long, default_value_t = 10)]
    top: usize,
    /// Directory for ranking.csv and ranking.json.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    case: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct PrintArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[command(flatten)]
    pool: PoolArgs,
}

#[derive(Debug)]
struct Interrupted;

impl fmt::Display for Interrupted {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("interrupted")
    }
}

impl std::error::Error for Interrupted {}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let _ = ctrlc::set_handler(|| {
        if GRACEFUL.load(Ordering::SeqCst) && !INTERRUPTED.swap(true, Ordering::SeqCst) {
            eprintln!("interrupt: finishing the current slice, press again to abort");
        } else {
            std::process::exit(130);
        }
    });
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Batch(a) => batch(a),
        Command::Sweep(a) => sweep(a),
        Command::Rank(a) => rank(a),
        Command::ValidateCase(a) => validate_case(a),
        Command::PrintConfig(a) => print_config(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.is::<Interrupted>() {
        130
    } else if e.is::<ConfigError>() || e.is::<SimError>() || e.is::<CaseError>() || e.is::<GeoError>() {
        2
    } else {
        1
    }
}

fn interrupted() -> anyhow::Result<()> {
    if INTERRUPTED.load(Ordering::SeqCst) {
        return Err(Interrupted.into());
    }
    Ok(())
}

/// Defaults, then the config file, then `--set`, then dedicated flags.
fn resolve(
    config: &ConfigArgs,
    model: Option<&ModelArgs>,
    scenario: Option<&ScenarioArgs>,
    pool: Option<&PoolArgs>,
) -> Result<Settings, ConfigError> {
    let mut s = match &config.config {
        Some(path) => Settings::from_path(path)?,
        None => Settings::default(),
    };
    for kv in &config.overrides {
        let (key, value) =
            kv.split_once('=').ok_or_else(|| ConfigError::new("set", format!("expected KEY=VALUE, got {kv}")))?;
        s.set(key.trim(), value.trim())?;
    }
    if let Some(m) = model {
        if let Some(d) = m.direction {
            s.scenario_direction = match d {
                DirectionArg::Heat => Direction::Heat,
                DirectionArg::Cool => Direction::Cool,
            };
        }
        if let Some(seed) = m.seed {
            s.seed = seed;
        }
        if m.no_redispatch {
            s.redispatch = false;
        }
        if let Some(p) = m.p_floor {
            s.set_floor(p);
        }
    }
    if let Some(sc) = scenario {
        if let Some(b) = sc.center_bus {
            s.center_bus = Some(b);
        }
        if sc.random_center {
            s.random_center = true;
        }
        if let Some(g) = sc.gamma {
            s.gamma = g;
        }
        if let Some(dt) = sc.delta_t {
            s.delta_t = dt;
        }
    }
    let workers_flag = pool.and_then(|p| p.workers);
    if let Some(p) = pool {
        if let Some(n) = p.runs {
            s.runs = n;
        }
    }
    apply_workers(&mut s, workers_flag)?;
    s.validate()?;
    Ok(s)
}

fn apply_workers(s: &mut Settings, flag: Option<usize>) -> Result<(), ConfigError> {
    if flag.is_some() {
        s.workers = flag;
    } else if s.workers.is_none() {
        if let Ok(v) = std::env::var(WORKERS_ENV) {
            let n: usize = v.trim().parse().map_err(|_| ConfigError::new(WORKERS_ENV, format!("not a count: {v}")))?;
            s.workers = Some(n);
        }
    }
    if s.workers == Some(0) {
        return Err(ConfigError::new("workers", "must be >= 1"));
    }
    Ok(())
}

fn load_base(case: &Path, s: &Settings) -> anyhow::Result<BaseCase> {
    let net = Network::from_path(case)?;
    Ok(BaseCase::new(net, &s.model()?.pf)?)
}

fn center_policy(s: &Settings) -> Result<CenterPolicy, ConfigError> {
    match (s.center_bus, s.random_center) {
        (Some(_), true) => Err(ConfigError::new("center_bus", "give either a center bus or random_center, not both")),
        (Some(b), false) => Ok(CenterPolicy::Fixed(b)),
        (None, _) => Ok(CenterPolicy::RandomLoadBus),
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> anyhow::Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn simulate(a: SimulateArgs) -> anyhow::Result<()> {
    let s = resolve(&a.config, Some(&a.model), Some(&a.scenario), None)?;
    let base = load_base(&a.case, &s)?;
    let center_bus = match (s.center_bus, s.random_center) {
        (None, false) => return Err(ConfigError::new("center_bus", "give --center-bus or --random-center").into()),
        _ => center_of(&base.load_bus_ids(), center_policy(&s)?, s.seed)?,
    };
    let cfg = RunConfig {
        params: s.model()?,
        disturbance: Disturbance { center_bus, gamma: s.gamma, delta_t: s.delta_t },
        seed: s.seed,
    };
    let trace = run_cascade(&base, &cfg)?;
    fs::write(&a.out, trace.to_json() + "\n").with_context(|| format!("writing {}", a.out.display()))?;
    let t = &trace.totals;
    println!(
        "center {center_bus}: {} events, {} lines, {} generators, {:.1} MW shed, {}; trace in {}",
        trace.events.len(),
        t.lines,
        t.generators,
        t.shed_mw,
        trace.termination.as_str(),
        a.out.display()
    );
    Ok(())
}

fn batch(a: BatchArgs) -> anyhow::Result<()> {
    let s = resolve(&a.config, Some(&a.model), Some(&a.scenario), Some(&a.pool))?;
    let base = load_base(&a.case, &s)?;
    let mut cfg = BatchConfig::new(s.model()?, s.gamma, s.delta_t, center_policy(&s)?, s.runs, s.seed);
    cfg.workers = s.workers;
    cfg.histogram_bin_mw = s.histogram_bin_mw;
    fs::create_dir_all(&a.out_dir)?;
    let csv_path = a.out_dir.join("runs.csv");
    let mut w = csv::Writer::from_path(&csv_path).with_context(|| format!("creating {}", csv_path.display()))?;
    GRACEFUL.store(true, Ordering::SeqCst);
    let slice = 64.max(8 * s.workers.unwrap_or(8));
    let mut records = Vec::with_capacity(cfg.runs);
    while records.len() < cfg.runs {
        let start = records.len();
        let end = (start + slice).min(cfg.runs);
        let part = run_records(&base, &cfg, start..end)?;
        for r in &part {
            w.serialize(r)?;
        }
        w.flush()?;
        records.extend(part);
        eprintln!("batch: {end}/{} runs", cfg.runs);
        interrupted()?;
    }
    let stats = summarize(&records, cfg.histogram_bin_mw)?;
    let summary_path = a.out_dir.join("summary.json");
    write_json(&summary_path, &serde_json::json!({ "settings": s, "stats": stats }))?;
    println!(
        "{} runs: outages {:.3} ± {:.3} (std {:.3}), shed {:.1} MW (std {:.1}); wrote {} and {}",
        stats.runs,
        stats.outages.mean,
        stats.outages.std_error(stats.runs),
        stats.outages.std,
        stats.shed_mw.mean,
        stats.shed_mw.std,
        csv_path.display(),
        summary_path.display()
    );
    Ok(())
}

fn sweep(a: SweepArgs) -> anyhow::Result<()> {
    let s = resolve(&a.config, Some(&a.model), Some(&a.scenario), Some(&a.pool))?;
    let parameter = match a.param {
        ParamArg::DeltaT => SweepParameter::DeltaT,
        ParamArg::Gamma => SweepParameter::Gamma,
    };
    let mut grid = Vec::with_capacity(a.values.len());
    for &v in &a.values {
        let mut point = s.clone();
        match parameter {
            SweepParameter::DeltaT => point.delta_t = v,
            SweepParameter::Gamma => point.gamma = v,
        }
        point.validate()?;
        grid.push(point);
    }
    let base = load_base(&a.case, &s)?;
    let policy = center_policy(&s)?;
    fs::create_dir_all(&a.out_dir)?;
    let csv_path = a.out_dir.join("sweep.csv");
    let mut w = csv::Writer::from_path(&csv_path).with_context(|| format!("creating {}", csv_path.display()))?;
    w.write_record([
        "value",
        "runs",
        "mean_outages",
        "std_outages",
        "mean_lines",
        "mean_generators",
        "mean_shed_mw",
        "std_shed_mw",
    ])?;
    GRACEFUL.store(true, Ordering::SeqCst);
    let mut stats = Vec::with_capacity(grid.len());
    println!("{:>10} {:>8} {:>10} {:>10} {:>12}", "value", "runs", "outages", "std err", "shed MW");
    for (point, &v) in grid.iter().zip(&a.values) {
        let mut cfg = BatchConfig::new(point.model()?, point.gamma, point.delta_t, policy, point.runs, point.seed);
        cfg.workers = point.workers;
        cfg.histogram_bin_mw = point.histogram_bin_mw;
        let st = run_batch(&base, &cfg)?.stats;
        w.write_record([
            v.to_string(),
            st.runs.to_string(),
            st.outages.mean.to_string(),
            st.outages.std.to_string(),
            st.lines.mean.to_string(),
            st.generators.mean.to_string(),
            st.shed_mw.mean.to_string(),
            st.shed_mw.std.to_string(),
        ])?;
        w.flush()?;
        println!(
            "{v:>10} {:>8} {:>10.3} {:>10.3} {:>12.1}",
            st.runs,
            st.outages.mean,
            st.outages.std_error(st.runs),
            st.shed_mw.mean
        );
        stats.push(st);
        interrupted()?;
    }
    let means: Vec<f64> = stats.iter().map(|s| s.outages.mean).collect();
    let result = SweepResult { parameter, values: a.values.clone(), knee: knee(&a.values, &means), stats };
    let json_path = a.out_dir.join("sweep.json");
    write_json(&json_path, &result)?;
    if let Some(k) = result.knee {
        println!("knee at {k}");
    }
    println!("wrote {} and {}", csv_path.display(), json_path.display());
    Ok(())
}

fn rank(a: RankArgs) -> anyhow::Result<()> {
    let mut s = resolve(&a.config, Some(&a.model), None, None)?;
    apply_workers(&mut s, a.workers)?;
    if a.dt.is_empty() || a.gamma.is_empty() || a.runs == 0 {
        return Err(ConfigError::new("grid", "needs at least one ΔT, one γ and one run").into());
    }
    for &dt in &a.dt {
        for &g in &a.gamma {
            let mut cell = s.clone();
            cell.delta_t = dt;
            cell.gamma = g;
            cell.validate()?;
        }
    }
    let base = load_base(&a.case, &s)?;
    let cfg = ScanConfig {
        params: s.model()?,
        delta_t: a.dt.clone(),
        gamma: a.gamma.clone(),
        runs_per_cell: a.runs,
        seed: s.seed,
        workers: s.workers,
    };
    eprintln!(
        "rank: {} buses × {} cells × {} runs",
        base.load_bus_ids().len(),
        a.dt.len() * a.gamma.len(),
        a.runs
    );
    let ranking = vulnerability_scan(&base, &cfg)?;
    fs::create_dir_all(&a.out_dir)?;
    let csv_path = a.out_dir.join("ranking.csv");
    let mut w = csv::Writer::from_path(&csv_path).with_context(|| format!("creating {}", csv_path.display()))?;
    w.write_record(["bus", "mean_outages", "mean_shed_fraction", "outage_rank", "shed_rank"])?;
    let position = |list: &[u32], bus: u32| list.iter().position(|&b| b == bus).map_or(0, |p| p + 1);
    for sc in &ranking.scores {
        w.write_record([
            sc.bus.to_string(),
            sc.mean_outages.to_string(),
            sc.mean_shed_fraction.to_string(),
            position(&ranking.by_outages, sc.bus).to_string(),
            position(&ranking.by_shed_fraction, sc.bus).to_string(),
        ])?;
    }
    w.flush()?;
    let shared = ranking.top_overlap(a.top);
    let json_path = a.out_dir.join("ranking.json");
    write_json(&json_path, &serde_json::json!({ "ranking": ranking, "top": a.top, "shared": shared }))?;
    let score = |bus: u32| ranking.scores.iter().find(|s| s.bus == bus).expect("ranked bus has a score");
    println!("{:>4} {:>6} {:>10}   {:>6} {:>10}", "rank", "bus", "outages", "bus", "shed frac");
    for i in 0..a.top.min(ranking.by_outages.len()) {
        let (x, y) = (ranking.by_outages[i], ranking.by_shed_fraction[i]);
        println!(
            "{:>4} {x:>6} {:>10.3}   {y:>6} {:>10.4}",
            i + 1,
            score(x).mean_outages,
            score(y).mean_shed_fraction
        );
    }
    println!("in both top {}: {shared:?}", a.top);
    println!("wrote {} and {}", csv_path.display(), json_path.display());
    Ok(())
}

fn validate_case(a: ValidateArgs) -> anyhow::Result<()> {
    let s = resolve(&a.config, None, None, None)?;
    let base = load_base(&a.case, &s)?;
    let net = &base.net;
    let load: f64 = base.state.p_load_mw.iter().sum();
    let (vmin, vmax) = base.solution.vm.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    println!(
        "{}: {} buses, {} branches, {} generators, {} shunts; load {load:.1} MW; voltages {vmin:.4}-{vmax:.4} pu; VSI {:.4}",
        a.case.display(),
        net.buses.len(),
        net.branches.len(),
        net.generators.len(),
        net.shunts.len(),
        base.vsi
    );
    Ok(())
}

fn print_config(a: PrintArgs) -> anyhow::Result<()> {
    let s = resolve(&a.config, Some(&a.model), Some(&a.scenario), Some(&a.pool))?;
    println!("{}", s.to_json());
    Ok(())
}
