//! Matrix-free solvers for `(shift - coeff * Lap) x = b` on tensor-product
//! grids.
//!
//! The 1-D second-difference operator along each axis takes one of three
//! wall treatments:
//!
//! * `Neumann`: cell-centered unknowns, zero-flux walls (missing neighbor
//!   contributes nothing);
//! * `Dirichlet`: face unknowns strictly inside the domain, zero value on the
//!   wall faces;
//! * `Reflect`: cell-centered unknowns with a zero value half a cell beyond
//!   the last unknown, realized by an odd ghost (`ghost = -v`).
//!
//! Each of these is diagonalized by a real trigonometric transform (DCT-II,
//! DST-I and DST-II respectively), so the exact inverse of the 2-D operator
//! is available in `O(N log N)` and is used as the preconditioner for CG.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustdct::{DctPlanner, Dst1, TransformType2And3};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AxisBc {
    Neumann,
    Dirichlet,
    Reflect,
}

impl AxisBc {
    /// Weight of the diagonal contribution of a missing wall neighbor.
    #[inline]
    fn wall_weight(self) -> f64 {
        match self {
            AxisBc::Neumann => 0.0,
            AxisBc::Dirichlet => 1.0,
            AxisBc::Reflect => 2.0,
        }
    }
}

/// Matrix-free `y = shift * x - coeff * Lap x` on an `len_x x len_y` block
/// (x fastest).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Helmholtz2d {
    pub bc_x: AxisBc,
    pub bc_y: AxisBc,
    pub len_x: usize,
    pub len_y: usize,
    pub hx: f64,
    pub hy: f64,
}

impl Helmholtz2d {
    pub fn len(&self) -> usize {
        self.len_x * self.len_y
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `out = Lap x`
    pub fn laplacian(&self, x: &[f64], out: &mut [f64]) {
        let (lx, ly) = (self.len_x, self.len_y);
        let (ax, ay) = (1.0 / (self.hx * self.hx), 1.0 / (self.hy * self.hy));
        let (wx, wy) = (self.bc_x.wall_weight(), self.bc_y.wall_weight());
        for j in 0..ly {
            for i in 0..lx {
                let k = j * lx + i;
                let v = x[k];
                let mut acc = 0.0;
                if i > 0 {
                    acc += ax * (x[k - 1] - v);
                } else {
                    acc -= ax * wx * v;
                }
                if i + 1 < lx {
                    acc += ax * (x[k + 1] - v);
                } else {
                    acc -= ax * wx * v;
                }
                if j > 0 {
                    acc += ay * (x[k - lx] - v);
                } else {
                    acc -= ay * wy * v;
                }
                if j + 1 < ly {
                    acc += ay * (x[k + lx] - v);
                } else {
                    acc -= ay * wy * v;
                }
                out[k] = acc;
            }
        }
    }

    pub fn apply(&self, shift: f64, coeff: f64, x: &[f64], out: &mut [f64]) {
        self.laplacian(x, out);
        for (o, v) in out.iter_mut().zip(x) {
            *o = shift * v - coeff * *o;
        }
    }
}

enum Plan {
    Type23(Arc<dyn TransformType2And3<f64>>),
    Dst1(Arc<dyn Dst1<f64>>),
}

/// One axis of the spectral solver: transform pair plus the eigenvalues of
/// `-Lap` along that axis.
struct AxisTransform {
    bc: AxisBc,
    plan: Plan,
    /// Eigenvalues of the positive 1-D operator `-d2/dx2`.
    eig: Vec<f64>,
    /// `inverse(forward(v)) = v / norm`
    norm: f64,
    scratch: Vec<f64>,
}

impl AxisTransform {
    /// `cells` is the number of cells along the axis; the transform length
    /// is `cells - 1` for `Dirichlet` and `cells` otherwise.
    fn new(planner: &mut DctPlanner<f64>, bc: AxisBc, cells: usize, h: f64) -> Self {
        let c = 4.0 / (h * h);
        let nf = cells as f64;
        let (plan, eig) = match bc {
            AxisBc::Neumann => (
                Plan::Type23(planner.plan_dct2(cells)),
                (0..cells)
                    .map(|k| c * (PI * k as f64 / (2.0 * nf)).sin().powi(2))
                    .collect(),
            ),
            AxisBc::Reflect => (
                Plan::Type23(planner.plan_dst2(cells)),
                (0..cells)
                    .map(|k| c * (PI * (k + 1) as f64 / (2.0 * nf)).sin().powi(2))
                    .collect(),
            ),
            AxisBc::Dirichlet => (
                Plan::Dst1(planner.plan_dst1(cells - 1)),
                (0..cells - 1)
                    .map(|k| c * (PI * (k + 1) as f64 / (2.0 * nf)).sin().powi(2))
                    .collect(),
            ),
        };
        let scratch_len = match &plan {
            Plan::Type23(p) => p.get_scratch_len(),
            Plan::Dst1(p) => p.get_scratch_len(),
        };
        Self {
            bc,
            plan,
            eig,
            norm: nf / 2.0,
            scratch: vec![0.0; scratch_len],
        }
    }

    fn len(&self) -> usize {
        self.eig.len()
    }

    fn forward(&mut self, buf: &mut [f64]) {
        match (&self.plan, self.bc) {
            (Plan::Type23(p), AxisBc::Neumann) => {
                p.process_dct2_with_scratch(buf, &mut self.scratch)
            }
            (Plan::Type23(p), _) => p.process_dst2_with_scratch(buf, &mut self.scratch),
            (Plan::Dst1(p), _) => p.process_dst1_with_scratch(buf, &mut self.scratch),
        }
    }

    fn inverse(&mut self, buf: &mut [f64]) {
        match (&self.plan, self.bc) {
            (Plan::Type23(p), AxisBc::Neumann) => {
                p.process_dct3_with_scratch(buf, &mut self.scratch)
            }
            (Plan::Type23(p), _) => p.process_dst3_with_scratch(buf, &mut self.scratch),
            (Plan::Dst1(p), _) => p.process_dst1_with_scratch(buf, &mut self.scratch),
        }
    }
}

/// Direct solver for [`Helmholtz2d`] systems via separable transforms.
///
/// Singular modes (zero denominator) are mapped to zero, which gives the
/// mean-zero pseudo-inverse for the pure Neumann Laplacian.
pub struct SpectralSolver {
    op: Helmholtz2d,
    tx: AxisTransform,
    ty: AxisTransform,
    work: Vec<f64>,
    transposed: Vec<f64>,
}

impl fmt::Debug for SpectralSolver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralSolver")
            .field("op", &self.op)
            .finish()
    }
}

impl SpectralSolver {
    /// `cells_x`, `cells_y` are the grid cell counts; the block shape follows
    /// from the wall treatment on each axis.
    pub fn new(
        bc_x: AxisBc,
        bc_y: AxisBc,
        cells_x: usize,
        cells_y: usize,
        hx: f64,
        hy: f64,
    ) -> Self {
        let mut planner = DctPlanner::new();
        let tx = AxisTransform::new(&mut planner, bc_x, cells_x, hx);
        let ty = AxisTransform::new(&mut planner, bc_y, cells_y, hy);
        let op = Helmholtz2d {
            bc_x,
            bc_y,
            len_x: tx.len(),
            len_y: ty.len(),
            hx,
            hy,
        };
        let n = op.len();
        Self {
            op,
            tx,
            ty,
            work: vec![0.0; n],
            transposed: vec![0.0; n],
        }
    }

    pub fn operator(&self) -> &Helmholtz2d {
        &self.op
    }

    /// `out = (shift - coeff * Lap)^+ rhs`
    pub fn solve(&mut self, shift: f64, coeff: f64, rhs: &[f64], out: &mut [f64]) {
        let (lx, ly) = (self.op.len_x, self.op.len_y);
        self.work.copy_from_slice(rhs);
        for row in self.work.chunks_exact_mut(lx) {
            self.tx.forward(row);
        }
        transpose(&self.work, &mut self.transposed, lx, ly);
        for (i, col) in self.transposed.chunks_exact_mut(ly).enumerate() {
            self.ty.forward(col);
            let ex = self.tx.eig[i];
            for (v, ey) in col.iter_mut().zip(&self.ty.eig) {
                let denom = shift + coeff * (ex + ey);
                *v = if denom == 0.0 { 0.0 } else { *v / denom };
            }
            self.ty.inverse(col);
        }
        transpose(&self.transposed, &mut self.work, ly, lx);
        let scale = 1.0 / (self.tx.norm * self.ty.norm);
        for (row, orow) in self.work.chunks_exact_mut(lx).zip(out.chunks_exact_mut(lx)) {
            self.tx.inverse(row);
            for (o, v) in orow.iter_mut().zip(row.iter()) {
                *o = v * scale;
            }
        }
    }
}

/// `dst[i * rows + j] = src[j * cols + i]` for a `rows x cols` source.
fn transpose(src: &[f64], dst: &mut [f64], cols: usize, rows: usize) {
    for j in 0..rows {
        for i in 0..cols {
            dst[i * rows + j] = src[j * cols + i];
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Preconditioner {
    #[default]
    Spectral,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgReport {
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Default)]
pub(crate) struct CgScratch {
    r: Vec<f64>,
    z: Vec<f64>,
    p: Vec<f64>,
    q: Vec<f64>,
}

impl CgScratch {
    fn resize(&mut self, n: usize) {
        for v in [&mut self.r, &mut self.z, &mut self.p, &mut self.q] {
            v.clear();
            v.resize(n, 0.0);
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sup(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn remove_mean(v: &mut [f64]) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
}

/// Preconditioned conjugate gradients on a symmetric positive
/// (semi-)definite operator. Stops once the sup norm of the residual is at
/// most `threshold`; the final residual is recomputed from scratch before
/// convergence is declared. With `project_mean` every iterate and residual
/// is kept mean-free (null space of the Neumann Laplacian).
#[allow(clippy::too_many_arguments)]
pub(crate) fn pcg(
    apply: &dyn Fn(&[f64], &mut [f64]),
    precond: &mut dyn FnMut(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    threshold: f64,
    max_iters: usize,
    project_mean: bool,
    s: &mut CgScratch,
) -> Result<CgReport> {
    let n = b.len();
    s.resize(n);
    let CgScratch { r, z, p, q } = s;

    let true_residual = |x: &[f64], r: &mut Vec<f64>, q: &mut Vec<f64>| {
        apply(x, q);
        for ((ri, bi), qi) in r.iter_mut().zip(b).zip(q.iter()) {
            *ri = bi - qi;
        }
        if project_mean {
            remove_mean(r);
        }
        sup(r)
    };

    if project_mean {
        remove_mean(x);
    }
    let mut res = true_residual(x, r, q);
    let mut iterations = 0;
    while res > threshold {
        // (re)start the Krylov sequence from the current residual
        precond(r, z);
        if project_mean {
            remove_mean(z);
        }
        p.copy_from_slice(z);
        let mut rz = dot(r, z);
        loop {
            if iterations >= max_iters {
                return Err(Error::NoConvergence {
                    max_iters,
                    last_residual: res,
                });
            }
            iterations += 1;
            apply(p, q);
            let pq = dot(p, q);
            let positive = pq > 0.0 && rz > 0.0;
            if !positive {
                // breakdown: the residual is numerically zero in the
                // preconditioned norm; let the true residual decide
                break;
            }
            let alpha = rz / pq;
            for ((xi, ri), (pi, qi)) in x.iter_mut().zip(r.iter_mut()).zip(p.iter().zip(q.iter())) {
                *xi += alpha * pi;
                *ri -= alpha * qi;
            }
            if project_mean {
                remove_mean(x);
                remove_mean(r);
            }
            if sup(r) <= threshold {
                break;
            }
            precond(r, z);
            if project_mean {
                remove_mean(z);
            }
            let rz_new = dot(r, z);
            let beta = rz_new / rz;
            rz = rz_new;
            for (pi, zi) in p.iter_mut().zip(z.iter()) {
                *pi = zi + beta * *pi;
            }
        }
        res = true_residual(x, r, q);
    }
    if res > threshold {
        return Err(Error::NoConvergence {
            max_iters,
            last_residual: res,
        });
    }
    Ok(CgReport {
        iterations,
        residual: res,
    })
}
