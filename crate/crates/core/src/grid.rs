//! Discrete domain, field storage and the simulation state.
//!
//! Cell-centered scalars are stored row-major with x fastest: cell `(i, j)`
//! lives at `j * nx + i`. Velocities live on a MAC grid: `ux` on the
//! `(nx + 1) x ny` vertical faces and `uy` on the `nx x (ny + 1)` horizontal
//! faces, with the same x-fastest ordering.

use std::path::PathBuf;

use rand::rngs::StdRng;
use rand::{RngExt, SeedableRng};

use crate::error::{Error, Result};
use crate::operators::divergence_mac;
use crate::snapshot;

/// Floor applied to `c` and `m` by the built-in presets.
pub const POSITIVE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2D {
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
    hx: f64,
    hy: f64,
}

impl Grid2D {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx < 4 || ny < 4 {
            return Err(Error::InvalidGrid(format!(
                "need at least 4 cells per axis, got {nx}x{ny}"
            )));
        }
        if !(lx > 0.0 && lx.is_finite() && ly > 0.0 && ly.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "side lengths must be positive, got {lx}x{ly}"
            )));
        }
        Ok(Self {
            nx,
            ny,
            lx,
            ly,
            hx: lx / nx as f64,
            hy: ly / ny as f64,
        })
    }

    pub fn unit_square(n: usize) -> Result<Self> {
        Self::new(n, n, 1.0, 1.0)
    }

    #[inline]
    pub fn nx(&self) -> usize {
        self.nx
    }

    #[inline]
    pub fn ny(&self) -> usize {
        self.ny
    }

    #[inline]
    pub fn lx(&self) -> f64 {
        self.lx
    }

    #[inline]
    pub fn ly(&self) -> f64 {
        self.ly
    }

    #[inline]
    pub fn hx(&self) -> f64 {
        self.hx
    }

    #[inline]
    pub fn hy(&self) -> f64 {
        self.hy
    }

    #[inline]
    pub fn cell_area(&self) -> f64 {
        self.hx * self.hy
    }

    #[inline]
    pub fn cells(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    /// Index into the `(nx + 1) x ny` x-face array.
    #[inline]
    pub fn xface(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    /// Index into the `nx x (ny + 1)` y-face array.
    #[inline]
    pub fn yface(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.hx, (j as f64 + 0.5) * self.hy)
    }

    pub fn min_spacing(&self) -> f64 {
        self.hx.min(self.hy)
    }
}

/// A cell-centered scalar.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid2D,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Grid2D) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: Grid2D, value: f64) -> Self {
        Self {
            grid,
            values: vec![value; grid.cells()],
        }
    }

    pub fn from_values(grid: Grid2D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.cells() {
            return Err(Error::GridMismatch {
                expected: format!("{} values", grid.cells()),
                found: format!("{} values", values.len()),
            });
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid2D, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.cells());
        for j in 0..grid.ny() {
            for i in 0..grid.nx() {
                let (x, y) = grid.cell_center(i, j);
                values.push(f(x, y));
            }
        }
        Self { grid, values }
    }

    #[inline]
    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.idx(i, j)]
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Values living on cell faces: `fx` on x-faces, `fy` on y-faces.
///
/// Used both for the MAC velocity and for face fluxes and gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceField {
    grid: Grid2D,
    pub fx: Vec<f64>,
    pub fy: Vec<f64>,
}

pub type MacVelocity = FaceField;
pub type FaceFluxField = FaceField;

impl FaceField {
    pub fn zeros(grid: Grid2D) -> Self {
        Self {
            grid,
            fx: vec![0.0; (grid.nx() + 1) * grid.ny()],
            fy: vec![0.0; grid.nx() * (grid.ny() + 1)],
        }
    }

    pub fn from_values(grid: Grid2D, fx: Vec<f64>, fy: Vec<f64>) -> Result<Self> {
        let (ex, ey) = ((grid.nx() + 1) * grid.ny(), grid.nx() * (grid.ny() + 1));
        if fx.len() != ex || fy.len() != ey {
            return Err(Error::GridMismatch {
                expected: format!("{ex} x-faces and {ey} y-faces"),
                found: format!("{} x-faces and {} y-faces", fx.len(), fy.len()),
            });
        }
        Ok(Self { grid, fx, fy })
    }

    #[inline]
    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    /// Largest face magnitude over both components.
    pub fn max_abs(&self) -> f64 {
        self.fx
            .iter()
            .chain(self.fy.iter())
            .fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// True when every face on the domain boundary holds exactly zero.
    pub fn boundary_is_zero(&self) -> bool {
        let (nx, ny) = (self.grid.nx(), self.grid.ny());
        let xs = (0..ny).all(|j| {
            self.fx[self.grid.xface(0, j)] == 0.0 && self.fx[self.grid.xface(nx, j)] == 0.0
        });
        let ys = (0..nx).all(|i| {
            self.fy[self.grid.yface(i, 0)] == 0.0 && self.fy[self.grid.yface(i, ny)] == 0.0
        });
        xs && ys
    }

    pub fn zero_boundary(&mut self) {
        let (nx, ny) = (self.grid.nx(), self.grid.ny());
        for j in 0..ny {
            let (a, b) = (self.grid.xface(0, j), self.grid.xface(nx, j));
            self.fx[a] = 0.0;
            self.fx[b] = 0.0;
        }
        for i in 0..nx {
            let (a, b) = (self.grid.yface(i, 0), self.grid.yface(i, ny));
            self.fy[a] = 0.0;
            self.fy[b] = 0.0;
        }
    }

    /// `self += scale * other`
    pub fn axpy(&mut self, scale: f64, other: &FaceField) {
        for (a, b) in self.fx.iter_mut().zip(&other.fx) {
            *a += scale * b;
        }
        for (a, b) in self.fy.iter_mut().zip(&other.fy) {
            *a += scale * b;
        }
    }

    /// Face-weighted squared L2 norm, `hx * hy * sum(u^2)`.
    pub fn l2_sq(&self) -> f64 {
        let s: f64 = self.fx.iter().chain(self.fy.iter()).map(|v| v * v).sum();
        s * self.grid.cell_area()
    }

    pub fn is_finite(&self) -> bool {
        self.fx.iter().chain(self.fy.iter()).all(|v| v.is_finite())
    }
}

/// How the stepper picks its time step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DtPolicy {
    Fixed { dt: f64 },
    Adaptive { dt_max: f64, safety: f64 },
}

impl DtPolicy {
    pub fn max_dt(&self) -> f64 {
        match *self {
            DtPolicy::Fixed { dt } => dt,
            DtPolicy::Adaptive { dt_max, .. } => dt_max,
        }
    }
}

impl Default for DtPolicy {
    fn default() -> Self {
        DtPolicy::Adaptive {
            dt_max: 1e-3,
            safety: 0.4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimParams {
    /// Sensitivity exponent in `S(n) = c_s (1 + n)^(-alpha)`.
    pub alpha: f64,
    /// Strength of the nonlinear fluid convection; 0 selects Stokes flow.
    pub kappa: f64,
    pub c_s: f64,
    /// Constant gradient of the gravitational potential.
    pub phi_gradient: [f64; 2],
    pub dt_policy: DtPolicy,
    pub t_end: f64,
    pub poisson_tol: f64,
    pub implicit_tol: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            alpha: -0.4,
            kappa: 1.0,
            c_s: 1.0,
            phi_gradient: [0.0, -1.0],
            dt_policy: DtPolicy::default(),
            t_end: 2.0,
            poisson_tol: 1e-10,
            implicit_tol: 1e-10,
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if !self.alpha.is_finite() || !self.kappa.is_finite() {
            return bad("alpha and kappa must be finite".into());
        }
        if !(self.c_s > 0.0 && self.c_s.is_finite()) {
            return bad(format!("c_s must be > 0, got {}", self.c_s));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end must be >= 0, got {}", self.t_end));
        }
        if !self.phi_gradient.iter().all(|v| v.is_finite()) {
            return bad("phi_gradient must be finite".into());
        }
        for (name, tol) in [
            ("poisson_tol", self.poisson_tol),
            ("implicit_tol", self.implicit_tol),
        ] {
            if !(tol > 0.0 && tol < 1e-4) {
                return bad(format!("{name} must lie in (0, 1e-4), got {tol}"));
            }
        }
        match self.dt_policy {
            DtPolicy::Fixed { dt } if !(dt > 0.0 && dt.is_finite()) => {
                bad(format!("fixed dt must be > 0, got {dt}"))
            }
            DtPolicy::Adaptive { dt_max, safety } if !(dt_max > 0.0 && dt_max.is_finite()) => bad(
                format!("dt_max must be > 0, got {dt_max} (safety {safety})"),
            ),
            DtPolicy::Adaptive { safety, .. } if !(safety > 0.0 && safety <= 1.0) => {
                bad(format!("CFL safety must lie in (0, 1], got {safety}"))
            }
            _ => Ok(()),
        }
    }
}

/// Full discrete state `(n, c, m, u, p)` at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub t: f64,
    pub n: ScalarField,
    pub c: ScalarField,
    pub m: ScalarField,
    pub u: MacVelocity,
    pub p: ScalarField,
    pub step_index: u64,
    /// Integral of the negative parts removed from `n`, `c`, `m` by clamping.
    pub clamp_total: f64,
}

impl SimState {
    /// All fields zero.
    pub fn rest(grid: Grid2D) -> Self {
        Self {
            t: 0.0,
            n: ScalarField::zeros(grid),
            c: ScalarField::zeros(grid),
            m: ScalarField::zeros(grid),
            u: FaceField::zeros(grid),
            p: ScalarField::zeros(grid),
            step_index: 0,
            clamp_total: 0.0,
        }
    }

    pub fn grid(&self) -> &Grid2D {
        self.n.grid()
    }

    /// Checks the structural invariants of a state: shapes, finiteness,
    /// nonnegativity, no-slip walls, discrete incompressibility and a
    /// mean-zero pressure.
    pub fn check(&self, params: &SimParams) -> Result<()> {
        let grid = *self.grid();
        for (name, f) in [("c", &self.c), ("m", &self.m), ("p", &self.p)] {
            if *f.grid() != grid {
                return Err(Error::GridMismatch {
                    expected: format!("{grid:?}"),
                    found: format!("{name} on {:?}", f.grid()),
                });
            }
        }
        if *self.u.grid() != grid {
            return Err(Error::GridMismatch {
                expected: format!("{grid:?}"),
                found: format!("u on {:?}", self.u.grid()),
            });
        }
        let fail = |check: &str, detail: String| {
            Err(Error::InvariantViolation {
                check: check.into(),
                detail,
            })
        };
        for (name, f) in [
            ("n", &self.n),
            ("c", &self.c),
            ("m", &self.m),
            ("p", &self.p),
        ] {
            if !f.is_finite() {
                return fail("finite", format!("{name} has a non-finite entry"));
            }
        }
        if !self.u.is_finite() {
            return fail("finite", "u has a non-finite entry".into());
        }
        for (name, f) in [("n", &self.n), ("c", &self.c), ("m", &self.m)] {
            let lo = f.min();
            if lo < 0.0 {
                return fail("positivity", format!("min {name} = {lo:e}"));
            }
        }
        if !self.u.boundary_is_zero() {
            return fail("no-slip", "nonzero velocity on a boundary face".into());
        }
        let speed = self.u.max_abs();
        let div = divergence_mac(&self.u).sup_norm();
        let div_bound = 10.0 * params.poisson_tol * (1.0 + speed);
        if div > div_bound {
            return fail(
                "divergence-free",
                format!("max |div u| = {div:e} > {div_bound:e}"),
            );
        }
        let p_mean = self.p.mean();
        let p_sup = self.p.sup_norm();
        if p_mean.abs() > 1e-12 * p_sup.max(f64::MIN_POSITIVE) && p_mean != 0.0 {
            return fail(
                "pressure mean",
                format!("mean(p) = {p_mean:e}, max |p| = {p_sup:e}"),
            );
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoBlobs {
    pub amplitude: f64,
    /// Blob width as a fraction of `lx`.
    pub width: f64,
    /// Blob centers as fractions of `(lx, ly)`.
    pub n_center: [f64; 2],
    pub m_center: [f64; 2],
}

impl Default for TwoBlobs {
    fn default() -> Self {
        Self {
            amplitude: 5.0,
            width: 0.08,
            n_center: [0.35, 0.6],
            m_center: [0.65, 0.6],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialPreset {
    TwoBlobs(TwoBlobs),
    Uniform {
        n: f64,
        c: f64,
        m: f64,
    },
    /// CKSF1 snapshot files for `n`, `c` and `m`.
    Custom {
        n: PathBuf,
        c: PathBuf,
        m: PathBuf,
    },
}

impl Default for InitialPreset {
    fn default() -> Self {
        InitialPreset::TwoBlobs(TwoBlobs::default())
    }
}

/// Optional seeded multiplicative noise on `n0`: `n0 *= 1 + amplitude * U(-1, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Perturbation {
    pub amplitude: f64,
    pub seed: u64,
}

pub fn make_initial_state(
    grid: Grid2D,
    preset: &InitialPreset,
    params: &SimParams,
) -> Result<SimState> {
    make_initial_state_perturbed(grid, preset, params, Perturbation::default())
}

pub fn make_initial_state_perturbed(
    grid: Grid2D,
    preset: &InitialPreset,
    params: &SimParams,
    perturbation: Perturbation,
) -> Result<SimState> {
    params.validate()?;
    let (mut n, c, m) = match preset {
        InitialPreset::TwoBlobs(b) => {
            let sigma = b.width * grid.lx();
            let gauss = |center: [f64; 2]| {
                let (cx, cy) = (center[0] * grid.lx(), center[1] * grid.ly());
                ScalarField::from_fn(grid, |x, y| {
                    let r2 = (x - cx).powi(2) + (y - cy).powi(2);
                    b.amplitude * (-r2 / (2.0 * sigma * sigma)).exp()
                })
            };
            let n = gauss(b.n_center);
            let mut m = gauss(b.m_center);
            m.values.iter_mut().for_each(|v| *v += POSITIVE_FLOOR);
            let c = ScalarField::constant(grid, POSITIVE_FLOOR);
            (n, c, m)
        }
        InitialPreset::Uniform { n, c, m } => {
            if *n < 0.0 || *c < 0.0 || *m < 0.0 {
                return Err(Error::InvalidParams(format!(
                    "uniform preset needs nonnegative values, got n={n} c={c} m={m}"
                )));
            }
            (
                ScalarField::constant(grid, *n),
                ScalarField::constant(grid, c.max(POSITIVE_FLOOR)),
                ScalarField::constant(grid, m.max(POSITIVE_FLOOR)),
            )
        }
        InitialPreset::Custom { n, c, m } => {
            let load = |name: &str, path: &PathBuf| -> Result<ScalarField> {
                let snap = snapshot::load(path)?;
                if snap.nx != grid.nx() || snap.ny != grid.ny() {
                    return Err(Error::GridMismatch {
                        expected: format!("{}x{}", grid.nx(), grid.ny()),
                        found: format!("{}x{} in {}", snap.nx, snap.ny, path.display()),
                    });
                }
                if let Some((index, &value)) =
                    snap.values.iter().enumerate().find(|(_, v)| **v < 0.0)
                {
                    return Err(Error::CustomFieldNegative {
                        field: name.into(),
                        index,
                        value,
                    });
                }
                ScalarField::from_values(grid, snap.values)
            };
            let n = load("n", n)?;
            let mut c = load("c", c)?;
            let mut m = load("m", m)?;
            for v in c.values.iter_mut().chain(m.values.iter_mut()) {
                *v = v.max(POSITIVE_FLOOR);
            }
            (n, c, m)
        }
    };
    if perturbation.amplitude != 0.0 {
        let mut rng = StdRng::seed_from_u64(perturbation.seed);
        for v in n.values.iter_mut() {
            let xi: f64 = rng.random_range(-1.0..1.0);
            *v *= (1.0 + perturbation.amplitude * xi).max(0.0);
        }
    }
    Ok(SimState {
        t: 0.0,
        n,
        c,
        m,
        u: FaceField::zeros(grid),
        p: ScalarField::zeros(grid),
        step_index: 0,
        clamp_total: 0.0,
    })
}

/// Midpoint quadrature `hx * hy * sum(f)`.
pub fn integrate_cellwise(f: &ScalarField) -> f64 {
    f.values.iter().sum::<f64>() * f.grid().cell_area()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn oracle_integral(f: &ScalarField) -> f64 {
        let g = f.grid();
        let mut s = 0.0;
        for j in 0..g.ny() {
            for i in 0..g.nx() {
                s += f.at(i, j) * g.hx() * g.hy();
            }
        }
        s
    }

    #[test]
    fn grid_rejects_small_or_degenerate() {
        assert!(Grid2D::new(3, 8, 1.0, 1.0).is_err());
        assert!(Grid2D::new(8, 8, 0.0, 1.0).is_err());
        assert!(Grid2D::new(8, 8, 1.0, f64::NAN).is_err());
        let g = Grid2D::new(8, 5, 2.0, 1.0).unwrap();
        assert_eq!(g.hx(), 0.25);
        assert_eq!(g.hy(), 0.2);
        assert_eq!(g.cell_center(0, 0), (0.125, 0.1));
        assert_eq!(g.idx(3, 2), 19);
    }

    #[test]
    fn integrate_constants() {
        let g = Grid2D::unit_square(8).unwrap();
        assert_eq!(integrate_cellwise(&ScalarField::zeros(g)), 0.0);
        assert!((integrate_cellwise(&ScalarField::constant(g, 1.0)) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn integrate_matches_double_loop() {
        let g = Grid2D::new(4, 4, 1.3, 0.7).unwrap();
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..20 {
            let vals = (0..16).map(|_| rng.random_range(-2.0..2.0)).collect();
            let f = ScalarField::from_values(g, vals).unwrap();
            let (a, b) = (integrate_cellwise(&f), oracle_integral(&f));
            let scale = f.values.iter().map(|v| v.abs()).sum::<f64>() * g.cell_area();
            assert!((a - b).abs() <= 8.0 * f64::EPSILON * scale, "{a} vs {b}");
        }
    }

    #[test]
    fn uniform_preset_is_constant_and_at_rest() {
        let g = Grid2D::unit_square(8).unwrap();
        let preset = InitialPreset::Uniform {
            n: 1.0,
            c: 1.0,
            m: 1.0,
        };
        let s = make_initial_state(g, &preset, &SimParams::default()).unwrap();
        for f in [&s.n, &s.c, &s.m] {
            assert!(f.values.iter().all(|&v| v == 1.0));
        }
        assert_eq!(s.u.max_abs(), 0.0);
        assert_eq!(divergence_mac(&s.u).sup_norm(), 0.0);
        s.check(&SimParams::default()).unwrap();
    }

    #[test]
    fn two_blobs_preset_properties() {
        for n in [4, 16, 33] {
            let g = Grid2D::new(n, n + 3, 1.0, 1.5).unwrap();
            let s =
                make_initial_state(g, &InitialPreset::default(), &SimParams::default()).unwrap();
            assert!(integrate_cellwise(&s.n) > 0.0);
            assert!(integrate_cellwise(&s.m) > 0.0);
            assert!(s.c.min() >= POSITIVE_FLOOR);
            assert!(s.m.min() >= POSITIVE_FLOOR);
            assert!(s.n.min() >= 0.0);
            s.check(&SimParams::default()).unwrap();
        }
    }

    #[test]
    fn custom_preset_rejects_negative_density() {
        let dir = std::env::temp_dir().join(format!("cksf-grid-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let g = Grid2D::unit_square(16).unwrap();
        let mut n = ScalarField::constant(g, 1.0);
        n.values[37] = -0.25;
        let ok = ScalarField::constant(g, 1.0);
        let (pn, pc) = (dir.join("n.cksf"), dir.join("c.cksf"));
        snapshot::save_scalar(&pn, "n", &n, 0.0).unwrap();
        snapshot::save_scalar(&pc, "c", &ok, 0.0).unwrap();
        let preset = InitialPreset::Custom {
            n: pn,
            c: pc.clone(),
            m: pc.clone(),
        };
        let err = make_initial_state(g, &preset, &SimParams::default()).unwrap_err();
        assert!(
            matches!(err, Error::CustomFieldNegative { index: 37, .. }),
            "{err}"
        );

        let other = Grid2D::unit_square(8).unwrap();
        let preset = InitialPreset::Custom {
            n: pc.clone(),
            c: pc.clone(),
            m: pc,
        };
        let err = make_initial_state(other, &preset, &SimParams::default()).unwrap_err();
        assert!(matches!(err, Error::GridMismatch { .. }), "{err}");
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn perturbation_is_seeded() {
        let g = Grid2D::unit_square(8).unwrap();
        let p = Perturbation {
            amplitude: 0.1,
            seed: 42,
        };
        let preset = InitialPreset::default();
        let a = make_initial_state_perturbed(g, &preset, &SimParams::default(), p).unwrap();
        let b = make_initial_state_perturbed(g, &preset, &SimParams::default(), p).unwrap();
        let c = make_initial_state(g, &preset, &SimParams::default()).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.n, c.n);
        assert!(a.n.min() >= 0.0);
    }

    #[test]
    fn params_validation() {
        let mut p = SimParams::default();
        p.validate().unwrap();
        p.c_s = 0.0;
        assert!(p.validate().is_err());
        p = SimParams {
            poisson_tol: 1e-3,
            ..SimParams::default()
        };
        assert!(p.validate().is_err());
        p = SimParams {
            dt_policy: DtPolicy::Fixed { dt: 0.0 },
            ..SimParams::default()
        };
        assert!(p.validate().is_err());
    }

    proptest! {
        #[test]
        fn integral_is_linear(
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
            f in proptest::collection::vec(-1.0f64..1.0, 30),
            g in proptest::collection::vec(-1.0f64..1.0, 30),
        ) {
            let grid = Grid2D::new(5, 6, 0.9, 1.1).unwrap();
            let ff = ScalarField::from_values(grid, f).unwrap();
            let gg = ScalarField::from_values(grid, g).unwrap();
            let combo = ScalarField::from_values(
                grid,
                ff.values.iter().zip(&gg.values).map(|(x, y)| a * x + b * y).collect(),
            ).unwrap();
            let lhs = integrate_cellwise(&combo);
            let rhs = a * integrate_cellwise(&ff) + b * integrate_cellwise(&gg);
            let scale = (a.abs() + b.abs()) * grid.lx() * grid.ly();
            prop_assert!((lhs - rhs).abs() <= 1e-13 * scale.max(1.0));
        }
    }
}
