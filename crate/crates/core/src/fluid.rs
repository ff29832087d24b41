//! Velocity update: implicit viscosity, explicit convection and buoyancy,
//! then a Chorin projection onto discretely divergence-free fields.

use log::debug;

use crate::error::{Error, Result};
use crate::grid::{FaceField, Grid2D, MacVelocity, ScalarField, SimParams, SimState};
use crate::linsolve::{pcg, AxisBc, CgReport, CgScratch, Preconditioner, SpectralSolver};
use crate::operators::{divergence_mac, gradient_faces};

/// Solver state shared by every implicit solve of one simulation: the
/// pressure Poisson problem, the scalar diffusion systems and the two
/// viscous velocity systems.
#[derive(Debug)]
pub struct PoissonWorkspace {
    grid: Grid2D,
    scalar: SpectralSolver,
    vel_x: SpectralSolver,
    vel_y: SpectralSolver,
    preconditioner: Preconditioner,
    scratch: CgScratch,
    rhs: Vec<f64>,
    sol: Vec<f64>,
    pub max_iters: usize,
    pub last_residual: f64,
    pub last_iterations: usize,
}

impl PoissonWorkspace {
    pub fn new(grid: Grid2D) -> Self {
        let (nx, ny, hx, hy) = (grid.nx(), grid.ny(), grid.hx(), grid.hy());
        Self {
            grid,
            scalar: SpectralSolver::new(AxisBc::Neumann, AxisBc::Neumann, nx, ny, hx, hy),
            vel_x: SpectralSolver::new(AxisBc::Dirichlet, AxisBc::Reflect, nx, ny, hx, hy),
            vel_y: SpectralSolver::new(AxisBc::Reflect, AxisBc::Dirichlet, nx, ny, hx, hy),
            preconditioner: Preconditioner::default(),
            scratch: CgScratch::default(),
            rhs: Vec::new(),
            sol: Vec::new(),
            max_iters: 10 * grid.cells().max(100),
            last_residual: 0.0,
            last_iterations: 0,
        }
    }

    pub fn with_preconditioner(mut self, preconditioner: Preconditioner) -> Self {
        self.preconditioner = preconditioner;
        self
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    fn record(&mut self, report: CgReport) {
        self.last_residual = report.residual;
        self.last_iterations = report.iterations;
    }

    /// Solves `(shift - coeff * Lap_N) x = rhs` on cell centers, with `x0`
    /// as the starting guess.
    fn solve_cells(
        &mut self,
        shift: f64,
        coeff: f64,
        threshold: f64,
        project_mean: bool,
    ) -> Result<()> {
        let op = *self.scalar.operator();
        let apply = move |x: &[f64], y: &mut [f64]| op.apply(shift, coeff, x, y);
        let spectral = &mut self.scalar;
        let report = match self.preconditioner {
            Preconditioner::Spectral => pcg(
                &apply,
                &mut |r, z| spectral.solve(shift, coeff, r, z),
                &self.rhs,
                &mut self.sol,
                threshold,
                self.max_iters,
                project_mean,
                &mut self.scratch,
            ),
            Preconditioner::None => pcg(
                &apply,
                &mut |r, z| z.copy_from_slice(r),
                &self.rhs,
                &mut self.sol,
                threshold,
                self.max_iters,
                project_mean,
                &mut self.scratch,
            ),
        };
        if let Err(Error::NoConvergence { last_residual, .. }) = &report {
            self.last_residual = *last_residual;
        }
        self.record(report?);
        Ok(())
    }

    /// Backward-Euler diffusion with linear relaxation: solves
    /// `((1 + decay) I - dt Lap_N) x = rhs` to a residual of
    /// `tol * max|rhs|`.
    pub fn implicit_scalar(
        &mut self,
        rhs: &ScalarField,
        decay: f64,
        dt: f64,
        tol: f64,
    ) -> Result<ScalarField> {
        let shift = 1.0 + decay;
        self.rhs.clear();
        self.rhs.extend_from_slice(&rhs.values);
        self.sol.clear();
        self.sol.extend(rhs.values.iter().map(|v| v / shift));
        self.solve_cells(shift, dt, tol * rhs.sup_norm(), false)?;
        ScalarField::from_values(self.grid, self.sol.clone())
    }

    /// Backward-Euler viscosity on both velocity components with no-slip
    /// walls: solves `(I - dt Lap_D) v = rhs`. Boundary faces of the result
    /// are zero.
    pub fn implicit_velocity(
        &mut self,
        rhs: &MacVelocity,
        dt: f64,
        tol: f64,
    ) -> Result<MacVelocity> {
        let grid = self.grid;
        let (nx, ny) = (grid.nx(), grid.ny());
        let mut out = FaceField::zeros(grid);
        let threshold = tol * rhs.max_abs();

        // x-faces: interior columns 1..nx
        self.rhs.clear();
        for j in 0..ny {
            self.rhs
                .extend_from_slice(&rhs.fx[grid.xface(1, j)..grid.xface(nx, j)]);
        }
        self.sol.clear();
        self.sol.extend_from_slice(&self.rhs);
        self.solve_faces(true, dt, threshold)?;
        for j in 0..ny {
            let row = &self.sol[j * (nx - 1)..(j + 1) * (nx - 1)];
            out.fx[grid.xface(1, j)..grid.xface(nx, j)].copy_from_slice(row);
        }

        // y-faces: interior rows 1..ny
        self.rhs.clear();
        self.rhs
            .extend_from_slice(&rhs.fy[grid.yface(0, 1)..grid.yface(0, ny)]);
        self.sol.clear();
        self.sol.extend_from_slice(&self.rhs);
        self.solve_faces(false, dt, threshold)?;
        out.fy[grid.yface(0, 1)..grid.yface(0, ny)].copy_from_slice(&self.sol);
        Ok(out)
    }

    fn solve_faces(&mut self, x_component: bool, dt: f64, threshold: f64) -> Result<()> {
        let spectral = if x_component {
            &mut self.vel_x
        } else {
            &mut self.vel_y
        };
        let op = *spectral.operator();
        let apply = move |x: &[f64], y: &mut [f64]| op.apply(1.0, dt, x, y);
        let report = match self.preconditioner {
            Preconditioner::Spectral => pcg(
                &apply,
                &mut |r, z| spectral.solve(1.0, dt, r, z),
                &self.rhs,
                &mut self.sol,
                threshold,
                self.max_iters,
                false,
                &mut self.scratch,
            ),
            Preconditioner::None => pcg(
                &apply,
                &mut |r, z| z.copy_from_slice(r),
                &self.rhs,
                &mut self.sol,
                threshold,
                self.max_iters,
                false,
                &mut self.scratch,
            ),
        }?;
        self.record(report);
        Ok(())
    }
}

/// `(n + m) grad(phi)` interpolated to interior faces.
pub fn buoyancy_force(n: &ScalarField, m: &ScalarField, params: &SimParams) -> MacVelocity {
    let grid = *n.grid();
    let (nx, ny) = (grid.nx(), grid.ny());
    let [gx, gy] = params.phi_gradient;
    let s = |k: usize| n.values[k] + m.values[k];
    let mut f = FaceField::zeros(grid);
    for j in 0..ny {
        for i in 1..nx {
            let k = grid.idx(i, j);
            f.fx[grid.xface(i, j)] = 0.5 * (s(k - 1) + s(k)) * gx;
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            let k = grid.idx(i, j);
            f.fy[grid.yface(i, j)] = 0.5 * (s(k - nx) + s(k)) * gy;
        }
    }
    f
}

#[inline]
fn upwind_derivative(a: f64, below: f64, here: f64, above: f64, h: f64) -> f64 {
    if a > 0.0 {
        (here - below) / h
    } else if a < 0.0 {
        (above - here) / h
    } else {
        0.0
    }
}

/// `kappa (u . grad) u` on each staggered component, first-order upwind.
///
/// Tangential neighbors across a wall use the no-slip ghost `-u`. With
/// `kappa == 0` the result is identically zero.
pub fn convective_term(u: &MacVelocity, params: &SimParams) -> MacVelocity {
    let grid = *u.grid();
    let mut out = FaceField::zeros(grid);
    let kappa = params.kappa;
    if kappa == 0.0 {
        return out;
    }
    let (nx, ny, hx, hy) = (grid.nx(), grid.ny(), grid.hx(), grid.hy());
    let ux = |i: usize, j: usize| u.fx[grid.xface(i, j)];
    let uy = |i: usize, j: usize| u.fy[grid.yface(i, j)];

    for j in 0..ny {
        for i in 1..nx {
            let a = ux(i, j);
            let b = 0.25 * (uy(i - 1, j) + uy(i, j) + uy(i - 1, j + 1) + uy(i, j + 1));
            let dx = upwind_derivative(a, ux(i - 1, j), a, ux(i + 1, j), hx);
            let below = if j > 0 { ux(i, j - 1) } else { -a };
            let above = if j + 1 < ny { ux(i, j + 1) } else { -a };
            let dy = upwind_derivative(b, below, a, above, hy);
            out.fx[grid.xface(i, j)] = kappa * (a * dx + b * dy);
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            let b = uy(i, j);
            let a = 0.25 * (ux(i, j - 1) + ux(i + 1, j - 1) + ux(i, j) + ux(i + 1, j));
            let dy = upwind_derivative(b, uy(i, j - 1), b, uy(i, j + 1), hy);
            let left = if i > 0 { uy(i - 1, j) } else { -b };
            let right = if i + 1 < nx { uy(i + 1, j) } else { -b };
            let dx = upwind_derivative(a, left, b, right, hx);
            out.fy[grid.yface(i, j)] = kappa * (a * dx + b * dy);
        }
    }
    out
}

/// Solves `Lap_N p = rhs - mean(rhs)` for a mean-zero `p`, to
/// `max|Lap_N p - rhs_corrected| <= tol * (1 + max|rhs|)`.
pub fn pressure_poisson_solve(
    rhs: &ScalarField,
    ws: &mut PoissonWorkspace,
    tol: f64,
) -> Result<ScalarField> {
    let mean = rhs.mean();
    let l1: f64 = rhs.values.iter().map(|v| v.abs()).sum();
    if mean.abs() * rhs.values.len() as f64 > 1e-8 * l1 {
        debug!("pressure rhs incompatible with Neumann walls (mean {mean:e}); correcting");
    }
    // -Lap is positive semi-definite, so solve (-Lap) p = -(rhs - mean)
    ws.rhs.clear();
    ws.rhs.extend(rhs.values.iter().map(|v| mean - v));
    ws.sol.clear();
    ws.sol.resize(rhs.values.len(), 0.0);
    ws.solve_cells(0.0, 1.0, tol * (1.0 + rhs.sup_norm()), true)?;
    let mut p = ScalarField::from_values(*rhs.grid(), ws.sol.clone())?;
    let mean_p = p.mean();
    p.values.iter_mut().for_each(|v| *v -= mean_p);
    Ok(p)
}

/// Chorin projection: `u = u_star - dt grad(p)` with `Lap_N p = div(u_star) / dt`.
pub fn project(
    u_star: &MacVelocity,
    dt: f64,
    tol: f64,
    ws: &mut PoissonWorkspace,
) -> Result<(MacVelocity, ScalarField)> {
    let mut rhs = divergence_mac(u_star);
    rhs.values.iter_mut().for_each(|v| *v /= dt);
    let p = pressure_poisson_solve(&rhs, ws, tol)?;
    let mut u = u_star.clone();
    u.axpy(-dt, &gradient_faces(&p));
    u.zero_boundary();
    Ok((u, p))
}

/// One velocity step. Viscosity acts implicitly on `u - dt * convection`;
/// buoyancy is added afterwards so that a gradient force is removed exactly
/// by the projection.
pub fn fluid_step(
    state: &SimState,
    params: &SimParams,
    dt: f64,
    ws: &mut PoissonWorkspace,
) -> Result<(MacVelocity, ScalarField)> {
    let u = &state.u;
    let mut v = u.clone();
    if params.kappa != 0.0 {
        let courant = dt * u.max_abs() / state.grid().min_spacing();
        if courant > 1.0 {
            return Err(Error::CflViolation { courant });
        }
        v.axpy(-dt, &convective_term(u, params));
    }
    let mut u_star = ws.implicit_velocity(&v, dt, params.implicit_tol)?;
    u_star.axpy(dt, &buoyancy_force(&state.n, &state.m, params));
    u_star.zero_boundary();
    project(&u_star, dt, params.poisson_tol, ws)
}
