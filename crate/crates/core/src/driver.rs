//! Run orchestration: time loop, CSV and snapshot output, regime sweeps.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use log::{debug, info, warn};
use rayon::prelude::*;

use crate::config::{RunConfig, SweepSpec};
use crate::diagnostics::{
    assert_invariants, compute_record, soft_warnings, CsvWriter, DiagnosticsRecord,
    InvariantTolerances, Violation,
};
use crate::error::{Error, Result};
use crate::fluid::PoissonWorkspace;
use crate::grid::{make_initial_state_perturbed, SimState};
use crate::snapshot::{save_scalar, save_velocity};
use crate::stepper::step;

/// Outcome of one simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub steps: u64,
    pub t_final: f64,
    /// `t_end` was reached.
    pub completed: bool,
    pub initial: DiagnosticsRecord,
    pub last: DiagnosticsRecord,
    pub max_sup_n: f64,
    /// `max_t sup_n / sup_n(0)`.
    pub max_sup_n_ratio: f64,
    pub violations: Vec<Violation>,
    /// Error that stopped the time loop early, if any. An invariant failure
    /// detected inside a step also counts as one violation.
    pub failure: Option<String>,
    pub wall_time: Duration,
}

impl RunSummary {
    pub fn violation_count(&self) -> usize {
        self.violations.len() + usize::from(self.aborted_on_invariant())
    }

    fn aborted_on_invariant(&self) -> bool {
        self.failure
            .as_deref()
            .is_some_and(|f| f.starts_with(INVARIANT_PREFIX))
    }

    /// Success means `t_end` was reached with no violations.
    pub fn success(&self) -> bool {
        self.completed && self.violation_count() == 0
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("completed", self.completed.to_string());
        kv("steps", self.steps.to_string());
        kv("t_final", format!("{:?}", self.t_final));
        kv("final_mass_n", format!("{:?}", self.last.mass_n));
        kv("final_mass_m", format!("{:?}", self.last.mass_m));
        kv("max_sup_n", format!("{:?}", self.max_sup_n));
        kv("max_sup_n_ratio", format!("{:?}", self.max_sup_n_ratio));
        kv("violations", self.violation_count().to_string());
        kv(
            "wall_time_s",
            format!("{:.3}", self.wall_time.as_secs_f64()),
        );
        if let Some(f) = &self.failure {
            kv("failure", f.replace('\n', " "));
        }
        for v in &self.violations {
            kv("violation", v.to_string());
        }
        s
    }
}

const INVARIANT_PREFIX: &str = "invariant violated";

fn snapshot_all(dir: &Path, state: &SimState) -> Result<()> {
    let stem = format!("{:07}", state.step_index);
    for (name, f) in [
        ("n", &state.n),
        ("c", &state.c),
        ("m", &state.m),
        ("p", &state.p),
    ] {
        save_scalar(&dir.join(format!("{stem}_{name}.cksf")), name, f, state.t)?;
    }
    save_velocity(dir, &stem, &state.u, state.t)
}

fn ratio(max: f64, initial: f64) -> f64 {
    if initial > 0.0 {
        max / initial
    } else if max == 0.0 {
        1.0
    } else {
        f64::INFINITY
    }
}

/// Runs one simulation, writing `diagnostics.csv`, `config.txt`,
/// `summary.txt` and `snapshots/` under `config.out_dir`.
///
/// Setup and I/O problems are returned as errors. Failures inside the time
/// loop end the run early; they are reported in [`RunSummary::failure`]
/// after the partial CSV has been flushed.
pub fn run(config: &RunConfig) -> Result<RunSummary> {
    let start = Instant::now();
    let params = config.params;
    params.validate()?;
    let grid = config.grid()?;
    let mut state =
        make_initial_state_perturbed(grid, &config.preset, &params, config.perturbation())?;
    state.check(&params)?;

    let out = &config.out_dir;
    let snaps = out.join("snapshots");
    fs::create_dir_all(&snaps)?;
    fs::write(out.join("config.txt"), config.to_text())?;
    let mut csv = CsvWriter::new(BufWriter::new(fs::File::create(
        out.join("diagnostics.csv"),
    )?))?;

    let initial = compute_record(&state, None, 0.0);
    csv.write(&initial)?;
    snapshot_all(&snaps, &state)?;
    let tol = InvariantTolerances::from_initial(&initial);
    let mut prev = initial;
    let mut max_sup_n = initial.sup_n;
    let mut violations = Vec::new();
    let mut warned = false;
    let mut failure = None;
    let mut ws = PoissonWorkspace::new(grid);
    let t_end = params.t_end;
    let t_eps = 1e-12 * t_end.max(1.0);
    info!(
        "run {}: {}x{} alpha={} kappa={} t_end={}",
        out.display(),
        grid.nx(),
        grid.ny(),
        params.alpha,
        params.kappa,
        t_end
    );

    while t_end - state.t > t_eps {
        let (next, report) = match step(&state, &params, &mut ws) {
            Ok(r) => r,
            Err(e) => {
                let msg = match &e {
                    Error::InvariantViolation { .. }
                    | Error::MonotonicityViolation(_)
                    | Error::NegativeDensity(_) => {
                        format!("{INVARIANT_PREFIX}: {e}")
                    }
                    _ => e.to_string(),
                };
                warn!(
                    "step {} at t={} failed: {msg}",
                    state.step_index + 1,
                    state.t
                );
                failure = Some(msg);
                break;
            }
        };
        state = next;
        let rec = compute_record(&state, Some(&prev), report.dt_used);
        csv.write(&rec)?;
        for v in assert_invariants(&rec, &prev, &tol) {
            warn!("step {}: {v}", rec.step);
            violations.push(v);
        }
        if !warned {
            let soft = soft_warnings(&rec, &initial);
            for w in &soft {
                warn!("{w}");
            }
            warned = !soft.is_empty();
        }
        max_sup_n = max_sup_n.max(rec.sup_n);
        debug!(
            "step {} t={:.6} dt={:e} ({}) sup_n={:.4}",
            rec.step,
            rec.t,
            rec.dt,
            report.limiting_constraint.as_str(),
            rec.sup_n
        );
        if rec.step.is_multiple_of(500) {
            info!(
                "step {} t={:.4} mass_n={:.6e} sup_n={:.4}",
                rec.step, rec.t, rec.mass_n, rec.sup_n
            );
        }
        if config.snapshot_every > 0 && state.step_index % config.snapshot_every == 0 {
            snapshot_all(&snaps, &state)?;
        }
        prev = rec;
    }
    csv.flush()?;
    let already = config.snapshot_every > 0 && state.step_index % config.snapshot_every == 0;
    if !already {
        snapshot_all(&snaps, &state)?;
    }

    let summary = RunSummary {
        steps: state.step_index,
        t_final: state.t,
        completed: failure.is_none(),
        initial,
        last: prev,
        max_sup_n,
        max_sup_n_ratio: ratio(max_sup_n, initial.sup_n),
        violations,
        failure,
        wall_time: start.elapsed(),
    };
    if summary.max_sup_n_ratio > config.bounded_ratio {
        warn!(
            "suspected unbounded: max sup_n ratio {:.3} exceeds {}",
            summary.max_sup_n_ratio, config.bounded_ratio
        );
    }
    fs::write(out.join("summary.txt"), summary.to_text())?;
    info!(
        "run {} finished: {} steps, {} violations, {:.2}s",
        out.display(),
        summary.steps,
        summary.violation_count(),
        summary.wall_time.as_secs_f64()
    );
    Ok(summary)
}

/// One row of `regime.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeRow {
    pub alpha: f64,
    pub kappa: f64,
    pub completed: bool,
    pub max_sup_n_ratio: f64,
    pub violations: usize,
    pub bounded: bool,
    pub failure: Option<String>,
    pub out_dir: PathBuf,
}

pub const REGIME_HEADER: &str = "alpha,kappa,completed,max_sup_n_ratio,violations,bounded";

impl RegimeRow {
    pub fn csv_row(&self) -> String {
        format!(
            "{:?},{:?},{},{:?},{},{}",
            self.alpha,
            self.kappa,
            self.completed,
            self.max_sup_n_ratio,
            self.violations,
            self.bounded
        )
    }
}

/// Whether `(alpha, kappa)` lies in a parameter range where global bounded
/// solutions are known to exist: `kappa = 0` with `alpha > -1`, or any
/// `kappa` with `alpha >= -1/2`.
pub fn in_proven_regime(alpha: f64, kappa: f64) -> bool {
    (kappa == 0.0 && alpha > -1.0) || alpha >= -0.5
}

fn cell_dir(out: &Path, alpha: f64, kappa: f64) -> PathBuf {
    out.join(format!("alpha_{alpha:?}_kappa_{kappa:?}"))
}

/// Runs every `(alpha, kappa)` cell of `spec` on at most `jobs` threads and
/// writes `regime.csv` to `out`. Failed cells are recorded, not propagated.
pub fn sweep(spec: &SweepSpec, out: &Path, jobs: usize) -> Result<Vec<RegimeRow>> {
    spec.validate()?;
    fs::create_dir_all(out)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidSweep(format!("thread pool: {e}")))?;
    let cells = spec.cells();
    let rows: Vec<RegimeRow> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(alpha, kappa)| {
                let mut cfg = spec.base.clone();
                cfg.params.alpha = alpha;
                cfg.params.kappa = kappa;
                cfg.out_dir = cell_dir(out, alpha, kappa);
                match run(&cfg) {
                    Ok(s) => RegimeRow {
                        alpha,
                        kappa,
                        completed: s.completed,
                        max_sup_n_ratio: s.max_sup_n_ratio,
                        violations: s.violation_count(),
                        bounded: s.completed
                            && s.violation_count() == 0
                            && s.max_sup_n_ratio <= cfg.bounded_ratio,
                        failure: s.failure,
                        out_dir: cfg.out_dir,
                    },
                    Err(e) => {
                        warn!("sweep cell alpha={alpha} kappa={kappa} failed: {e}");
                        RegimeRow {
                            alpha,
                            kappa,
                            completed: false,
                            max_sup_n_ratio: f64::NAN,
                            violations: 0,
                            bounded: false,
                            failure: Some(e.to_string()),
                            out_dir: cfg.out_dir,
                        }
                    }
                }
            })
            .collect()
    });
    let mut w = BufWriter::new(fs::File::create(out.join("regime.csv"))?);
    writeln!(w, "{REGIME_HEADER}")?;
    for r in &rows {
        writeln!(w, "{}", r.csv_row())?;
    }
    w.flush()?;
    Ok(rows)
}
