//! `vcps`: experiment runner for the vehicular view-construction simulator.
//!
//! Subcommands: `validate` (schema + invariant check of a scenario config),
//! `train` (one training run with artifact directory), and `sweep`
//! (bandwidth or view-size sweeps over seeds, fanned out across a worker
//! pool). Set `VCPS_SIM_LOG=1` for progress on stderr.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::SystemTime;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use vcps_core::domain::{build_scenario_from, Scenario, ScenarioConfig};
use vcps_core::env::{ScoreRow, SCORE_CSV_HEADER};
use vcps_core::learn::{train, AgentKind, TrainConfig, TrainOutput};

#[derive(Parser)]
#[command(name = "vcps", version, about = "Vehicular view-construction experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a scenario config and print a summary.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Train one agent and write curves, scores, and checkpoints.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "d4pg")]
        agent: AgentArg,
        #[arg(long, default_value_t = 200)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Parent directory for the run directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Sweep one scenario axis over values and seeds.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Agents to run at every sweep point.
        #[arg(long, value_enum, default_value = "both")]
        agent: AgentArg,
        #[arg(long, default_value_t = 50)]
        episodes: usize,
        /// Comma-separated seeds.
        #[arg(long, default_value = "0", value_delimiter = ',')]
        seed: Vec<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, value_enum)]
        axis: Axis,
        /// Comma-separated axis values (Hz for bandwidth, a count for
        /// view_size).
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// Worker-pool size.
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AgentArg {
    D4pg,
    Ra,
    /// Both agents (sweep only).
    Both,
}

impl AgentArg {
    fn kinds(self) -> Vec<AgentKind> {
        match self {
            AgentArg::D4pg => vec![AgentKind::D4pg],
            AgentArg::Ra => vec![AgentKind::Ra],
            AgentArg::Both => vec![AgentKind::D4pg, AgentKind::Ra],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Axis {
    /// Per-RSU V2I bandwidth in Hz.
    Bandwidth,
    /// Required information types per view.
    ViewSize,
}

fn main() {
    if let Err(e) = run() {
        // single-line machine-parsable error
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn log_enabled() -> bool {
    std::env::var("VCPS_SIM_LOG").is_ok_and(|v| !v.is_empty() && v != "0")
}

macro_rules! progress {
    ($($arg:tt)*) => {
        if log_enabled() {
            eprintln!($($arg)*);
        }
    };
}

fn run() -> Result<()> {
    match Cli::parse().command {
        Command::Validate { config } => cmd_validate(&config),
        Command::Train {
            config,
            agent,
            episodes,
            seed,
            out,
        } => {
            let kind = match agent {
                AgentArg::D4pg => AgentKind::D4pg,
                AgentArg::Ra => AgentKind::Ra,
                AgentArg::Both => bail!("train runs one agent; pass --agent d4pg or --agent ra"),
            };
            cmd_train(&config, kind, episodes, seed, &out)
        }
        Command::Sweep {
            config,
            agent,
            episodes,
            seed,
            out,
            axis,
            values,
            workers,
        } => cmd_sweep(&config, agent, episodes, &seed, &out, axis, &values, workers),
    }
}

fn load_config(path: &Path) -> Result<(ScenarioConfig, Scenario)> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    let config: ScenarioConfig =
        serde_json::from_str(&text).with_context(|| format!("bad JSON in {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let scenario = build_scenario_from(&config, base)?;
    Ok((config, scenario))
}

fn cmd_validate(path: &Path) -> Result<()> {
    let (_, scenario) = load_config(path)?;
    println!(
        "ok: {} slots, {} RSUs, {} vehicles, {} info types, {} views",
        scenario.time_slots,
        scenario.rsus.len(),
        scenario.vehicles.len(),
        scenario.info_types.len(),
        scenario.views.len()
    );
    Ok(())
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config_path: String,
    agent: &'a str,
    episodes: usize,
    seeds: &'a [u64],
    axis: Option<&'a str>,
    values: Option<&'a [f64]>,
    started_unix_s: u64,
    finished_unix_s: u64,
    version: &'a str,
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(SystemTime::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn prepare_run_dir(out: &Path, run_id: &str, config: &ScenarioConfig) -> Result<PathBuf> {
    let dir = out.join(run_id);
    fs::create_dir_all(dir.join("checkpoints"))
        .with_context(|| format!("cannot create {}", dir.display()))?;
    fs::write(
        dir.join("config.json"),
        serde_json::to_string_pretty(config)?,
    )?;
    Ok(dir)
}

fn write_curves(path: &Path, agent: AgentKind, out: &TrainOutput) -> Result<()> {
    let mut f = fs::File::create(path)?;
    writeln!(f, "episode,agent,cr_train,cr_eval")?;
    for p in &out.curve {
        writeln!(f, "{},{},{},{}", p.episode, agent.name(), p.cr_train, p.cr_eval)?;
    }
    Ok(())
}

fn write_scores(path: &Path, rows: &[ScoreRow]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    writeln!(f, "{SCORE_CSV_HEADER}")?;
    for r in rows {
        writeln!(f, "{}", r.to_csv_line())?;
    }
    Ok(())
}

fn cmd_train(
    config_path: &Path,
    kind: AgentKind,
    episodes: usize,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let started = unix_now();
    let (config, scenario) = load_config(config_path)?;
    let run_id = format!("train-{}-s{}-e{}", kind.name(), seed, episodes);
    let dir = prepare_run_dir(out, &run_id, &config)?;

    let train_config = TrainConfig {
        episodes,
        seed,
        ..TrainConfig::default()
    };
    progress!("training {} for {episodes} episodes (seed {seed})", kind.name());
    let output = train(Arc::new(scenario), kind, &train_config)?;

    write_curves(&dir.join("curves.csv"), kind, &output)?;
    write_scores(&dir.join("scores.csv"), &output.final_eval_scores)?;
    for (e, agent) in output.agents.iter().enumerate() {
        fs::write(
            dir.join("checkpoints").join(format!("rsu{e}.json")),
            serde_json::to_string(&agent.checkpoint())?,
        )?;
    }
    let manifest = Manifest {
        command: "train",
        config_path: config_path.display().to_string(),
        agent: kind.name(),
        episodes,
        seeds: std::slice::from_ref(&seed),
        axis: None,
        values: None,
        started_unix_s: started,
        finished_unix_s: unix_now(),
        version: env!("CARGO_PKG_VERSION"),
    };
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    println!("{}", dir.display());
    println!("final evaluation CR: {}", output.final_eval_cr);
    Ok(())
}

/// Applies one sweep-axis value to a base config.
fn apply_axis(config: &ScenarioConfig, axis: Axis, value: f64) -> Result<ScenarioConfig> {
    let mut cfg = config.clone();
    match axis {
        Axis::Bandwidth => {
            if value <= 0.0 {
                bail!("bandwidth must be > 0 Hz (got {value})");
            }
            for r in &mut cfg.rsus {
                r.bandwidth_hz = value;
            }
        }
        Axis::ViewSize => {
            let m = cfg.info_types.len();
            let size = value as usize;
            if value.fract() != 0.0 || size == 0 || size > m {
                bail!("view_size must be an integer in 1..={m} (got {value})");
            }
            // each view keeps an id-dependent offset so required sets differ
            for (i, v) in cfg.views.iter_mut().enumerate() {
                v.required = (0..size).map(|j| (i + j) % m).collect();
            }
        }
    }
    Ok(cfg)
}

#[derive(Debug, Clone)]
struct SweepRow {
    axis_value: f64,
    agent: AgentKind,
    seed: u64,
    cr: f64,
    aaov: f64,
    acov: f64,
}

fn sweep_point(
    base: &ScenarioConfig,
    axis: Axis,
    value: f64,
    kind: AgentKind,
    episodes: usize,
    seed: u64,
    config_dir: &Path,
) -> Result<SweepRow> {
    let cfg = apply_axis(base, axis, value)?;
    let scenario = build_scenario_from(&cfg, config_dir)?;
    let train_config = TrainConfig {
        episodes,
        seed,
        ..TrainConfig::default()
    };
    let output = train(Arc::new(scenario), kind, &train_config)?;
    let scores = &output.final_eval_scores;
    let n = scores.len().max(1) as f64;
    Ok(SweepRow {
        axis_value: value,
        agent: kind,
        seed,
        cr: output.final_eval_cr,
        aaov: scores.iter().map(|r| r.score.aov).sum::<f64>() / n,
        acov: scores.iter().map(|r| r.score.cov).sum::<f64>() / n,
    })
}

#[allow(clippy::too_many_arguments)]
fn cmd_sweep(
    config_path: &Path,
    agent: AgentArg,
    episodes: usize,
    seeds: &[u64],
    out: &Path,
    axis: Axis,
    values: &[f64],
    workers: usize,
) -> Result<()> {
    if values.is_empty() {
        bail!("sweep needs at least one --values entry");
    }
    if seeds.is_empty() {
        bail!("sweep needs at least one --seed entry");
    }
    let started = unix_now();
    let (config, _) = load_config(config_path)?;
    let config_dir = config_path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let axis_name = match axis {
        Axis::Bandwidth => "bandwidth",
        Axis::ViewSize => "view_size",
    };
    let run_id = format!("sweep-{axis_name}-e{episodes}");
    let dir = prepare_run_dir(out, &run_id, &config)?;

    // every axis value must decode before any work is spent
    for &v in values {
        apply_axis(&config, axis, v)?;
    }

    let mut points: Vec<(f64, AgentKind, u64)> = Vec::new();
    for &v in values {
        for kind in agent.kinds() {
            for &s in seeds {
                points.push((v, kind, s));
            }
        }
    }

    // bounded worker pool over an index queue; results keyed by index so the
    // output order (and bytes) never depend on scheduling
    let n_workers = workers.max(1).min(points.len());
    let next = Arc::new(Mutex::new(0usize));
    let results: Arc<Mutex<Vec<Option<Result<SweepRow>>>>> =
        Arc::new(Mutex::new((0..points.len()).map(|_| None).collect()));
    let points = Arc::new(points);
    let config = Arc::new(config);
    std::thread::scope(|scope| {
        for _ in 0..n_workers {
            let (next, results, points, config, config_dir) = (
                Arc::clone(&next),
                Arc::clone(&results),
                Arc::clone(&points),
                Arc::clone(&config),
                config_dir.clone(),
            );
            scope.spawn(move || loop {
                let i = {
                    let mut guard = next.lock().unwrap();
                    let i = *guard;
                    *guard += 1;
                    i
                };
                if i >= points.len() {
                    break;
                }
                let (v, kind, s) = points[i];
                progress!("sweep point {axis_name}={v} agent={} seed={s}", kind.name());
                let row = sweep_point(&config, axis, v, kind, episodes, s, &config_dir);
                results.lock().unwrap()[i] = Some(row);
            });
        }
    });

    let rows = Arc::try_unwrap(results)
        .map_err(|_| anyhow!("worker left a dangling result handle"))?
        .into_inner()
        .unwrap();
    let mut f = fs::File::create(dir.join("sweep.csv"))?;
    writeln!(f, "axis_value,agent,seed,cr,aaov,acov")?;
    for row in rows {
        let row = row.expect("every point scheduled")?;
        writeln!(
            f,
            "{},{},{},{},{},{}",
            row.axis_value,
            row.agent.name(),
            row.seed,
            row.cr,
            row.aaov,
            row.acov
        )?;
    }
    let manifest = Manifest {
        command: "sweep",
        config_path: config_path.display().to_string(),
        agent: match agent {
            AgentArg::D4pg => "d4pg",
            AgentArg::Ra => "ra",
            AgentArg::Both => "both",
        },
        episodes,
        seeds,
        axis: Some(axis_name),
        values: Some(values),
        started_unix_s: started,
        finished_unix_s: unix_now(),
        version: env!("CARGO_PKG_VERSION"),
    };
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    println!("{}", dir.join("sweep.csv").display());
    Ok(())
}
