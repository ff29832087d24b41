use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cksf_core::config::parse_list;
use cksf_core::snapshot;
use cksf_core::{in_proven_regime, parse_config, run, sweep, DtPolicy, RunConfig, SweepSpec};
use clap::{Parser, Subcommand};
use log::error;

/// Chemotaxis-fluid simulator for coral broadcast spawning.
///
/// Logging is controlled by `CKSF_LOG` (quiet, info or debug).
#[derive(Parser, Debug)]
#[command(name = "cksf", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one simulation.
    Simulate {
        /// Configuration file; omitted keys take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, allow_hyphen_values = true)]
        alpha: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        kappa: Option<f64>,
        /// Cells per side; sets both nx and ny unless --ny is given.
        #[arg(long)]
        nx: Option<usize>,
        #[arg(long)]
        ny: Option<usize>,
        /// Fixed time step; switches to the fixed dt policy.
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        t_end: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a grid of (alpha, kappa) simulations and write regime.csv.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated list, e.g. -0.9,-0.4,0
        #[arg(long, allow_hyphen_values = true)]
        alphas: String,
        #[arg(long, allow_hyphen_values = true)]
        kappas: String,
        #[arg(long, default_value = "sweep")]
        out: PathBuf,
        /// Maximum number of cells run in parallel.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Print the default configuration.
    PrintDefaults,
    /// Validate a CKSF1 snapshot header and payload length.
    CheckSnapshot { file: PathBuf },
}

fn init_logging() {
    let level = match std::env::var("CKSF_LOG").as_deref() {
        Ok("quiet") => log::LevelFilter::Error,
        Ok("debug") => log::LevelFilter::Debug,
        Ok("info") | Err(_) => log::LevelFilter::Info,
        Ok(other) => {
            eprintln!("CKSF_LOG must be quiet, info or debug; got `{other}`, using info");
            log::LevelFilter::Info
        }
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .init();
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, String> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_config(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn validate(cfg: &RunConfig) -> Result<(), String> {
    cfg.grid().map_err(|e| e.to_string())?;
    cfg.params.validate().map_err(|e| e.to_string())
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    config: Option<PathBuf>,
    alpha: Option<f64>,
    kappa: Option<f64>,
    nx: Option<usize>,
    ny: Option<usize>,
    dt: Option<f64>,
    t_end: Option<f64>,
    out: Option<PathBuf>,
) -> Result<bool, String> {
    let mut cfg = load_config(config.as_deref())?;
    if let Some(a) = alpha {
        cfg.params.alpha = a;
    }
    if let Some(k) = kappa {
        cfg.params.kappa = k;
    }
    if let Some(n) = nx {
        cfg.nx = n;
        cfg.ny = n;
    }
    if let Some(n) = ny {
        cfg.ny = n;
    }
    if let Some(dt) = dt {
        cfg.params.dt_policy = DtPolicy::Fixed { dt };
    }
    if let Some(t) = t_end {
        cfg.params.t_end = t;
    }
    if let Some(o) = out {
        cfg.out_dir = o;
    }
    validate(&cfg)?;
    let s = run(&cfg).map_err(|e| e.to_string())?;
    print!("{}", s.to_text());
    if let Some(f) = &s.failure {
        error!("run stopped early: {f}");
    }
    Ok(s.success())
}

fn run_sweep(
    config: Option<PathBuf>,
    alphas: &str,
    kappas: &str,
    out: &Path,
    jobs: Option<usize>,
) -> Result<bool, String> {
    let base = load_config(config.as_deref())?;
    let alpha_list = parse_list(alphas).map_err(|e| e.to_string())?;
    let kappa_list = parse_list(kappas).map_err(|e| e.to_string())?;
    let spec = SweepSpec::new(alpha_list, kappa_list, base).map_err(|e| e.to_string())?;
    validate(&spec.base)?;
    let jobs = jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let rows = sweep(&spec, out, jobs).map_err(|e| e.to_string())?;
    println!(
        "{:>7} {:>6} {:>9} {:>8} {:>10} {:>7}  proven",
        "alpha", "kappa", "completed", "ratio", "violations", "bounded"
    );
    let mut ok = true;
    for r in &rows {
        let proven = in_proven_regime(r.alpha, r.kappa);
        println!(
            "{:>7} {:>6} {:>9} {:>8.3} {:>10} {:>7}  {}",
            r.alpha, r.kappa, r.completed, r.max_sup_n_ratio, r.violations, r.bounded, proven
        );
        if let Some(f) = &r.failure {
            error!("alpha={} kappa={}: {f}", r.alpha, r.kappa);
        }
        ok &= r.completed && r.violations == 0;
    }
    println!("wrote {}", out.join("regime.csv").display());
    Ok(ok)
}

fn check_snapshot(file: &Path) -> Result<bool, String> {
    let s = snapshot::load(file).map_err(|e| e.to_string())?;
    let (lo, hi) = s
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    println!(
        "ok: field={} nx={} ny={} time={:?} min={:e} max={:e}",
        s.field, s.nx, s.ny, s.time, lo, hi
    );
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging();
    let result = match cli.command {
        Command::Simulate {
            config,
            alpha,
            kappa,
            nx,
            ny,
            dt,
            t_end,
            out,
        } => simulate(config, alpha, kappa, nx, ny, dt, t_end, out),
        Command::Sweep {
            config,
            alphas,
            kappas,
            out,
            jobs,
        } => run_sweep(config, &alphas, &kappas, &out, jobs),
        Command::PrintDefaults => {
            print!("{}", RunConfig::default().to_text());
            Ok(true)
        }
        Command::CheckSnapshot { file } => check_snapshot(&file),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
