//! `pmht-mm`: synthetic map generation, single runs and Monte Carlo campaigns.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::Vector2;
use pmht_mm::geomap::{feature_variability, load_grid, save_grid, GridMap};
use pmht_mm::harness::{
    format_float, gen_synthetic_map, run_campaign_with, write_campaign, Scenario, ScenarioConfig,
};
use pmht_mm::Error;

#[derive(Parser)]
#[command(name = "pmht-mm", version, about = "PMHT map-matching INS aiding simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides `monte_carlo.base_seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the configured synthetic map and write it as an ASCII grid.
    Genmap(Common),
    /// Simulate one seeded run.
    Run(Common),
    /// Run the Monte Carlo campaign and write its CSVs.
    Campaign {
        #[command(flatten)]
        common: Common,
        /// Worker threads (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Print map value, gradient and variability at a point.
    InspectMap {
        map: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        x: f64,
        #[arg(long, allow_negative_numbers = true)]
        y: f64,
        /// Variability template half width in cells.
        #[arg(long, default_value_t = 10)]
        half_width: usize,
    },
}

enum Failure {
    Usage(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Numerical { .. } | Error::Covariance(_) => Failure::Numerical(e.to_string()),
            other => Failure::Usage(other.to_string()),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn load_config(c: &Common) -> Result<ScenarioConfig, Failure> {
    let mut cfg = ScenarioConfig::load(&c.config)?;
    if let Some(seed) = c.seed {
        cfg.monte_carlo.base_seed = seed;
    }
    Ok(cfg)
}

fn create_dir(dir: &Path) -> CmdResult {
    std::fs::create_dir_all(dir).map_err(|e| Failure::Usage(format!("cannot create {}: {e}", dir.display())))
}

fn print_generated_at() {
    println!("generated_at: {}", chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true));
}

/// Raw variability over a strided sample of cells.
fn variability_sample(map: &GridMap, half_width: usize) -> Vec<f64> {
    let stride = ((map.n_rows() * map.n_cols()) as f64 / 20_000.0).sqrt().ceil().max(1.0) as usize;
    let mut out = Vec::new();
    for r in (0..map.n_rows()).step_by(stride) {
        for c in (0..map.n_cols()).step_by(stride) {
            if let Ok(v) = feature_variability(map, (r, c), half_width) {
                out.push(v);
            }
        }
    }
    out
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let idx = ((sorted.len() - 1) as f64 * p).round() as usize;
    sorted[idx]
}

fn genmap(c: &Common) -> CmdResult {
    let cfg = load_config(c)?;
    let Some(params) = &cfg.map.synthetic else {
        return Err(Failure::Usage("genmap needs a [map.synthetic] section".into()));
    };
    let map = gen_synthetic_map(params)?;
    create_dir(&c.out)?;
    let path = c.out.join("map.asc");
    save_grid(&path, &map).map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display())))?;
    let (lo, hi) = map.value_range().unwrap_or((f64::NAN, f64::NAN));
    let mut var = variability_sample(&map, cfg.fusion.template_half_width);
    var.sort_by(f64::total_cmp);
    print_generated_at();
    println!("map: {}", path.display());
    println!("rows: {}", map.n_rows());
    println!("cols: {}", map.n_cols());
    println!("min_value: {}", format_float(lo));
    println!("max_value: {}", format_float(hi));
    for (name, p) in [("p10", 0.1), ("p50", 0.5), ("p90", 0.9)] {
        println!("variability_{name}: {}", format_float(percentile(&var, p)));
    }
    Ok(())
}

fn run(c: &Common) -> CmdResult {
    let cfg = load_config(c)?;
    let scenario = Scenario::prepare(&cfg)?;
    let seed = cfg.monte_carlo.base_seed;
    let report = scenario.run(seed).map_err(Failure::from)?;
    create_dir(&c.out.join("runs"))?;
    let path = c.out.join("runs").join(format!("{seed}.csv"));
    let mut text = String::from("time_s,error_m,aided_flag\n");
    for ((t, e), a) in report.times.iter().zip(&report.errors).zip(&report.aided) {
        text.push_str(&format!("{},{},{}\n", format_float(*t), format_float(*e), u8::from(*a)));
    }
    std::fs::write(&path, text).map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display())))?;
    let accepted: usize = report.epochs.iter().map(|e| e.accepted).sum();
    print_generated_at();
    println!("seed: {seed}");
    println!("terminal_error_m: {}", format_float(report.terminal_error));
    println!("max_error_m: {}", format_float(report.errors.iter().copied().fold(0.0, f64::max)));
    println!("diverged: {}", report.diverged);
    println!("epochs: {}", report.epochs.len());
    println!("accepted_fixes: {accepted}");
    Ok(())
}

fn campaign(c: &Common, jobs: Option<usize>) -> CmdResult {
    let cfg = load_config(c)?;
    let scenario = Scenario::prepare(&cfg)?;
    create_dir(&c.out)?;
    let report = run_campaign_with(&scenario, jobs)?;
    write_campaign(&c.out, &report).map_err(|e| Failure::Usage(format!("cannot write outputs: {e}")))?;
    print_generated_at();
    println!("runs: {}", report.runs.len());
    println!("mean_error_m: {}", format_float(report.mean_error));
    println!("divergence_rate: {}", format_float(report.divergence_rate));
    println!("config_hash: {}", report.config_hash);
    Ok(())
}

fn inspect_map(path: &Path, x: f64, y: f64, half_width: usize) -> CmdResult {
    let map = load_grid(path)?;
    let p = Vector2::new(x, y);
    let value = map.value_at(&p)?;
    let grad = map.gradient_at(&p)?;
    let cell = map.cell_of(&p).ok_or(Error::OutOfBounds { x, y })?;
    let raw = feature_variability(&map, cell, half_width)?;
    let max = variability_sample(&map, half_width).into_iter().fold(raw, f64::max);
    let normalized = if max > 0.0 { (raw / max).clamp(0.0, 1.0) } else { 0.0 };
    println!("value: {}", format_float(value));
    println!("gradient_magnitude: {}", format_float(grad.norm()));
    println!("variability: {}", format_float(raw));
    println!("variability_normalized: {}", format_float(normalized));
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Genmap(c) => genmap(c),
        Command::Run(c) => run(c),
        Command::Campaign { common, jobs } => campaign(common, *jobs),
        Command::InspectMap { map, x, y, half_width } => inspect_map(map, *x, *y, *half_width),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(3)
        }
    }
}
