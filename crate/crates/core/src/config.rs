//! `key = value` run configuration.
//!
//! Blank lines and `#` comments are ignored. Every key is optional; missing
//! keys take the values of [`RunConfig::default`]. Unknown or repeated keys,
//! unparsable values and out-of-range values are errors carrying the 1-based
//! line number.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::grid::{DtPolicy, Grid2D, InitialPreset, Perturbation, SimParams, TwoBlobs};

pub const KEYS: &[&str] = &[
    "nx",
    "ny",
    "lx",
    "ly",
    "preset",
    "blob_amplitude",
    "blob_width",
    "uniform_n",
    "uniform_c",
    "uniform_m",
    "custom_n",
    "custom_c",
    "custom_m",
    "alpha",
    "kappa",
    "c_s",
    "phi_x",
    "phi_y",
    "dt_policy",
    "dt",
    "dt_max",
    "cfl_safety",
    "t_end",
    "poisson_tol",
    "implicit_tol",
    "snapshot_every",
    "out_dir",
    "seed",
    "perturb",
    "bounded_ratio",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub params: SimParams,
    pub preset: InitialPreset,
    /// Steps between snapshots; 0 writes only the first and last state.
    pub snapshot_every: u64,
    pub out_dir: PathBuf,
    /// Seeds the optional multiplicative noise on `n0`.
    pub seed: u64,
    /// Noise amplitude in `[0, 1)`; 0 disables it.
    pub perturb: f64,
    /// A run counts as bounded when `max sup_n / sup_n0` stays at or below
    /// this ratio. An engineering threshold, not a proof of boundedness.
    pub bounded_ratio: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            nx: 64,
            ny: 64,
            lx: 1.0,
            ly: 1.0,
            params: SimParams::default(),
            preset: InitialPreset::default(),
            snapshot_every: 500,
            out_dir: PathBuf::from("out"),
            seed: 0,
            perturb: 0.0,
            bounded_ratio: 10.0,
        }
    }
}

impl RunConfig {
    pub fn grid(&self) -> Result<Grid2D> {
        Grid2D::new(self.nx, self.ny, self.lx, self.ly)
    }

    pub fn perturbation(&self) -> Perturbation {
        Perturbation {
            amplitude: self.perturb,
            seed: self.seed,
        }
    }

    /// Serializes every key, so the output documents the full configuration
    /// and parses back to an equal value.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let p = &self.params;
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("nx", self.nx.to_string());
        kv("ny", self.ny.to_string());
        kv("lx", format!("{:?}", self.lx));
        kv("ly", format!("{:?}", self.ly));
        match &self.preset {
            InitialPreset::TwoBlobs(b) => {
                kv("preset", "two_blobs".into());
                kv("blob_amplitude", format!("{:?}", b.amplitude));
                kv("blob_width", format!("{:?}", b.width));
            }
            InitialPreset::Uniform { n, c, m } => {
                kv("preset", "uniform".into());
                kv("uniform_n", format!("{n:?}"));
                kv("uniform_c", format!("{c:?}"));
                kv("uniform_m", format!("{m:?}"));
            }
            InitialPreset::Custom { n, c, m } => {
                kv("preset", "custom".into());
                kv("custom_n", n.display().to_string());
                kv("custom_c", c.display().to_string());
                kv("custom_m", m.display().to_string());
            }
        }
        kv("alpha", format!("{:?}", p.alpha));
        kv("kappa", format!("{:?}", p.kappa));
        kv("c_s", format!("{:?}", p.c_s));
        kv("phi_x", format!("{:?}", p.phi_gradient[0]));
        kv("phi_y", format!("{:?}", p.phi_gradient[1]));
        match p.dt_policy {
            DtPolicy::Fixed { dt } => {
                kv("dt_policy", "fixed".into());
                kv("dt", format!("{dt:?}"));
            }
            DtPolicy::Adaptive { dt_max, safety } => {
                kv("dt_policy", "adaptive".into());
                kv("dt_max", format!("{dt_max:?}"));
                kv("cfl_safety", format!("{safety:?}"));
            }
        }
        kv("t_end", format!("{:?}", p.t_end));
        kv("poisson_tol", format!("{:?}", p.poisson_tol));
        kv("implicit_tol", format!("{:?}", p.implicit_tol));
        kv("snapshot_every", self.snapshot_every.to_string());
        kv("out_dir", self.out_dir.display().to_string());
        kv("seed", self.seed.to_string());
        kv("perturb", format!("{:?}", self.perturb));
        kv("bounded_ratio", format!("{:?}", self.bounded_ratio));
        s
    }
}

struct Entry<'a> {
    line: usize,
    value: &'a str,
}

struct Parser<'a> {
    entries: HashMap<&'static str, Entry<'a>>,
}

impl<'a> Parser<'a> {
    fn line(&self, key: &str) -> Option<usize> {
        self.entries.get(key).map(|e| e.line)
    }

    fn raw(&self, key: &str) -> Option<(usize, &'a str)> {
        self.entries.get(key).map(|e| (e.line, e.value))
    }

    fn float(&self, key: &str) -> Result<Option<(usize, f64)>> {
        let Some((line, v)) = self.raw(key) else {
            return Ok(None);
        };
        let x: f64 = v.parse().map_err(|_| Error::TypeError {
            line,
            message: format!("`{key}` expects a number, got `{v}`"),
        })?;
        if !x.is_finite() {
            return Err(Error::RangeError {
                line,
                message: format!("`{key}` must be finite"),
            });
        }
        Ok(Some((line, x)))
    }

    fn float_in(
        &self,
        key: &str,
        default: f64,
        ok: impl Fn(f64) -> bool,
        rule: &str,
    ) -> Result<f64> {
        match self.float(key)? {
            None => Ok(default),
            Some((_, x)) if ok(x) => Ok(x),
            Some((line, x)) => Err(Error::RangeError {
                line,
                message: format!("`{key}` must be {rule}, got {x}"),
            }),
        }
    }

    fn integer(&self, key: &str, default: u64, min: u64) -> Result<u64> {
        let Some((line, v)) = self.raw(key) else {
            return Ok(default);
        };
        let x: i128 = v.parse().map_err(|_| Error::TypeError {
            line,
            message: format!("`{key}` expects an integer, got `{v}`"),
        })?;
        if x < min as i128 || x > u64::MAX as i128 {
            return Err(Error::RangeError {
                line,
                message: format!("`{key}` must be an integer >= {min}, got {x}"),
            });
        }
        Ok(x as u64)
    }

    fn path(&self, key: &str) -> Result<Option<PathBuf>> {
        match self.raw(key) {
            None => Ok(None),
            Some((line, "")) => Err(Error::RangeError {
                line,
                message: format!("`{key}` must not be empty"),
            }),
            Some((_, v)) => Ok(Some(PathBuf::from(v))),
        }
    }
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut entries: HashMap<&'static str, Entry> = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = strip_comment(raw).trim();
        if body.is_empty() {
            continue;
        }
        let Some((k, v)) = body.split_once('=') else {
            return Err(Error::TypeError {
                line,
                message: format!("expected `key = value`, got `{body}`"),
            });
        };
        let k = k.trim();
        let key = *KEYS
            .iter()
            .find(|known| **known == k)
            .ok_or_else(|| Error::UnknownKey {
                line,
                key: k.to_string(),
            })?;
        if let Some(prev) = entries.get(key) {
            return Err(Error::RangeError {
                line,
                message: format!("`{key}` already set on line {}", prev.line),
            });
        }
        entries.insert(
            key,
            Entry {
                line,
                value: v.trim(),
            },
        );
    }
    let p = Parser { entries };
    let d = RunConfig::default();
    let dp = d.params;
    let positive = |x: f64| x > 0.0;

    let nx = p.integer("nx", d.nx as u64, 4)? as usize;
    let ny = p.integer("ny", d.ny as u64, 4)? as usize;
    let lx = p.float_in("lx", d.lx, positive, "> 0")?;
    let ly = p.float_in("ly", d.ly, positive, "> 0")?;

    let preset_name = p.raw("preset").unwrap_or((0, "two_blobs"));
    let family_of = |key: &str| match key {
        k if k.starts_with("blob_") => "two_blobs",
        k if k.starts_with("uniform_") => "uniform",
        _ => "custom",
    };
    for key in [
        "blob_amplitude",
        "blob_width",
        "uniform_n",
        "uniform_c",
        "uniform_m",
        "custom_n",
        "custom_c",
        "custom_m",
    ] {
        if let Some(line) = p.line(key) {
            if family_of(key) != preset_name.1 {
                return Err(Error::RangeError {
                    line,
                    message: format!("`{key}` requires preset = {}", family_of(key)),
                });
            }
        }
    }
    let nonneg = |x: f64| x >= 0.0;
    let preset = match preset_name.1 {
        "two_blobs" => {
            let db = TwoBlobs::default();
            InitialPreset::TwoBlobs(TwoBlobs {
                amplitude: p.float_in("blob_amplitude", db.amplitude, nonneg, ">= 0")?,
                width: p.float_in("blob_width", db.width, positive, "> 0")?,
                ..db
            })
        }
        "uniform" => InitialPreset::Uniform {
            n: p.float_in("uniform_n", 1.0, nonneg, ">= 0")?,
            c: p.float_in("uniform_c", 0.0, nonneg, ">= 0")?,
            m: p.float_in("uniform_m", 1.0, nonneg, ">= 0")?,
        },
        "custom" => {
            let get = |key: &str| -> Result<PathBuf> {
                p.path(key)?.ok_or_else(|| Error::RangeError {
                    line: preset_name.0,
                    message: format!("preset = custom needs `{key}`"),
                })
            };
            InitialPreset::Custom {
                n: get("custom_n")?,
                c: get("custom_c")?,
                m: get("custom_m")?,
            }
        }
        other => {
            return Err(Error::TypeError {
                line: preset_name.0,
                message: format!("`preset` must be two_blobs, uniform or custom, got `{other}`"),
            })
        }
    };

    let any = |_: f64| true;
    let alpha = p.float_in("alpha", dp.alpha, any, "finite")?;
    let kappa = p.float_in("kappa", dp.kappa, any, "finite")?;
    let c_s = p.float_in("c_s", dp.c_s, positive, "> 0")?;
    let phi_x = p.float_in("phi_x", dp.phi_gradient[0], any, "finite")?;
    let phi_y = p.float_in("phi_y", dp.phi_gradient[1], any, "finite")?;

    let default_max = dp.dt_policy.max_dt();
    let policy = match p.raw("dt_policy") {
        None if p.line("dt").is_some() => "fixed",
        None => "adaptive",
        Some((_, v)) => v,
    };
    let dt_policy = match policy {
        "fixed" => {
            for key in ["dt_max", "cfl_safety"] {
                if let Some(line) = p.line(key) {
                    return Err(Error::RangeError {
                        line,
                        message: format!("`{key}` requires dt_policy = adaptive"),
                    });
                }
            }
            DtPolicy::Fixed {
                dt: p.float_in("dt", default_max, positive, "> 0")?,
            }
        }
        "adaptive" => {
            if let Some(line) = p.line("dt") {
                return Err(Error::RangeError {
                    line,
                    message: "`dt` requires dt_policy = fixed".into(),
                });
            }
            let default_safety = match dp.dt_policy {
                DtPolicy::Adaptive { safety, .. } => safety,
                DtPolicy::Fixed { .. } => 0.4,
            };
            DtPolicy::Adaptive {
                dt_max: p.float_in("dt_max", default_max, positive, "> 0")?,
                safety: p.float_in(
                    "cfl_safety",
                    default_safety,
                    |s| s > 0.0 && s <= 1.0,
                    "in (0, 1]",
                )?,
            }
        }
        other => {
            return Err(Error::TypeError {
                line: p.line("dt_policy").unwrap_or(0),
                message: format!("`dt_policy` must be fixed or adaptive, got `{other}`"),
            })
        }
    };
    let tol_rule = |x: f64| x > 0.0 && x < 1e-4;
    let params = SimParams {
        alpha,
        kappa,
        c_s,
        phi_gradient: [phi_x, phi_y],
        dt_policy,
        t_end: p.float_in("t_end", dp.t_end, nonneg, ">= 0")?,
        poisson_tol: p.float_in("poisson_tol", dp.poisson_tol, tol_rule, "in (0, 1e-4)")?,
        implicit_tol: p.float_in("implicit_tol", dp.implicit_tol, tol_rule, "in (0, 1e-4)")?,
    };
    params.validate()?;

    let cfg = RunConfig {
        nx,
        ny,
        lx,
        ly,
        params,
        preset,
        snapshot_every: p.integer("snapshot_every", d.snapshot_every, 0)?,
        out_dir: p.path("out_dir")?.unwrap_or(d.out_dir),
        seed: p.integer("seed", d.seed, 0)?,
        perturb: p.float_in(
            "perturb",
            d.perturb,
            |a| (0.0..1.0).contains(&a),
            "in [0, 1)",
        )?,
        bounded_ratio: p.float_in("bounded_ratio", d.bounded_ratio, |r| r >= 1.0, ">= 1")?,
    };
    cfg.grid()?;
    Ok(cfg)
}

/// Grid of `(alpha, kappa)` runs sharing every other setting.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub alpha_list: Vec<f64>,
    pub kappa_list: Vec<f64>,
    pub base: RunConfig,
}

impl SweepSpec {
    pub fn new(alpha_list: Vec<f64>, kappa_list: Vec<f64>, base: RunConfig) -> Result<Self> {
        let spec = Self {
            alpha_list,
            kappa_list,
            base,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha_list.is_empty() {
            return Err(Error::InvalidSweep("alpha list is empty".into()));
        }
        if self.kappa_list.is_empty() {
            return Err(Error::InvalidSweep("kappa list is empty".into()));
        }
        if let Some(v) = self
            .alpha_list
            .iter()
            .chain(&self.kappa_list)
            .find(|v| !v.is_finite())
        {
            return Err(Error::InvalidSweep(format!("non-finite sweep value {v}")));
        }
        Ok(())
    }

    /// Cells in row-major order, alpha outermost.
    pub fn cells(&self) -> Vec<(f64, f64)> {
        self.alpha_list
            .iter()
            .flat_map(|&a| self.kappa_list.iter().map(move |&k| (a, k)))
            .collect()
    }
}

/// Parses a comma-separated list of reals such as `-0.9,-0.4,0`.
pub fn parse_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| Error::InvalidSweep(format!("`{s}` is not a number")))
        })
        .collect()
}
