//! Spatial operators on the staggered grid.
//!
//! All flux-form operators put exactly zero flux on boundary faces, so their
//! cell integrals telescope to zero. Divergence-type operators return
//! `div(F)`; the corresponding tendency in an evolution equation is `-div(F)`.

use crate::error::{Error, Result};
use crate::grid::{FaceField, Grid2D, MacVelocity, ScalarField, SimParams};

/// Chemotactic sensitivity `S(n) = c_s (1 + n)^(-alpha)`.
pub fn sensitivity(n_value: f64, params: &SimParams) -> Result<f64> {
    if n_value < 0.0 {
        return Err(Error::NegativeDensity(n_value));
    }
    Ok(sensitivity_unchecked(n_value, params.c_s, params.alpha))
}

#[inline]
pub(crate) fn sensitivity_unchecked(n_value: f64, c_s: f64, alpha: f64) -> f64 {
    if alpha == 0.0 {
        c_s
    } else {
        c_s * (1.0 + n_value).powf(-alpha)
    }
}

/// Five-point Laplacian with zero normal derivative on every wall.
pub fn laplacian_neumann(f: &ScalarField) -> ScalarField {
    let mut out = ScalarField::zeros(*f.grid());
    laplacian_neumann_into(f.grid(), &f.values, &mut out.values);
    out
}

pub(crate) fn laplacian_neumann_into(grid: &Grid2D, f: &[f64], out: &mut [f64]) {
    let (nx, ny) = (grid.nx(), grid.ny());
    let (ax, ay) = (1.0 / (grid.hx() * grid.hx()), 1.0 / (grid.hy() * grid.hy()));
    for j in 0..ny {
        for i in 0..nx {
            let k = j * nx + i;
            let v = f[k];
            let mut acc = 0.0;
            if i > 0 {
                acc += ax * (f[k - 1] - v);
            }
            if i + 1 < nx {
                acc += ax * (f[k + 1] - v);
            }
            if j > 0 {
                acc += ay * (f[k - nx] - v);
            }
            if j + 1 < ny {
                acc += ay * (f[k + nx] - v);
            }
            out[k] = acc;
        }
    }
}

/// Two-point differences on interior faces, zero on boundary faces.
pub fn gradient_faces(f: &ScalarField) -> FaceField {
    let grid = *f.grid();
    let mut g = FaceField::zeros(grid);
    gradient_faces_into(&grid, &f.values, &mut g);
    g
}

pub(crate) fn gradient_faces_into(grid: &Grid2D, f: &[f64], g: &mut FaceField) {
    let (nx, ny) = (grid.nx(), grid.ny());
    let (hx, hy) = (grid.hx(), grid.hy());
    for j in 0..ny {
        let row = j * (nx + 1);
        g.fx[row] = 0.0;
        g.fx[row + nx] = 0.0;
        for i in 1..nx {
            let k = j * nx + i;
            g.fx[row + i] = (f[k] - f[k - 1]) / hx;
        }
    }
    for i in 0..nx {
        g.fy[i] = 0.0;
        g.fy[ny * nx + i] = 0.0;
    }
    for j in 1..ny {
        for i in 0..nx {
            let k = j * nx + i;
            g.fy[k] = (f[k] - f[k - nx]) / hy;
        }
    }
}

/// Cell-wise `(ux[i+1,j] - ux[i,j]) / hx + (uy[i,j+1] - uy[i,j]) / hy`.
pub fn divergence_mac(u: &MacVelocity) -> ScalarField {
    let grid = *u.grid();
    let mut out = ScalarField::zeros(grid);
    divergence_into(&grid, u, &mut out.values);
    out
}

pub(crate) fn divergence_into(grid: &Grid2D, u: &FaceField, out: &mut [f64]) {
    let (nx, ny) = (grid.nx(), grid.ny());
    let (ihx, ihy) = (1.0 / grid.hx(), 1.0 / grid.hy());
    for j in 0..ny {
        for i in 0..nx {
            let xf = j * (nx + 1) + i;
            let yf = j * nx + i;
            out[j * nx + i] = (u.fx[xf + 1] - u.fx[xf]) * ihx + (u.fy[yf + nx] - u.fy[yf]) * ihy;
        }
    }
}

#[inline]
fn donor(velocity: f64, left: f64, right: f64) -> f64 {
    if velocity > 0.0 {
        left
    } else if velocity < 0.0 {
        right
    } else {
        0.0
    }
}

/// Donor-cell fluxes `u * f_upwind` on every face.
pub fn advective_flux(f: &ScalarField, u: &MacVelocity) -> FaceField {
    let grid = *f.grid();
    let (nx, ny) = (grid.nx(), grid.ny());
    let v = &f.values;
    let mut flux = FaceField::zeros(grid);
    for j in 0..ny {
        for i in 1..nx {
            let xf = grid.xface(i, j);
            let k = grid.idx(i, j);
            let w = u.fx[xf];
            flux.fx[xf] = w * donor(w, v[k - 1], v[k]);
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            let yf = grid.yface(i, j);
            let k = grid.idx(i, j);
            let w = u.fy[yf];
            flux.fy[yf] = w * donor(w, v[k - nx], v[k]);
        }
    }
    flux
}

/// Conservative donor-cell approximation of `div(u f)`.
pub fn advect_scalar(f: &ScalarField, u: &MacVelocity) -> ScalarField {
    divergence_mac(&advective_flux(f, u))
}

/// Face fluxes `n_d S(n_d) (grad c)_face`, where `n_d` is the donor cell in
/// the direction of the chemotactic drift. Boundary faces carry no flux.
pub fn chemotaxis_flux(n: &ScalarField, c: &ScalarField, params: &SimParams) -> Result<FaceField> {
    if let Some(&bad) = n.values.iter().find(|v| **v < 0.0) {
        return Err(Error::NegativeDensity(bad));
    }
    let grid = *n.grid();
    let (nx, ny) = (grid.nx(), grid.ny());
    let (c_s, alpha) = (params.c_s, params.alpha);
    let mobility = |nv: f64| nv * sensitivity_unchecked(nv, c_s, alpha);
    let (nv, cv) = (&n.values, &c.values);
    let mut flux = FaceField::zeros(grid);
    let (ihx, ihy) = (1.0 / grid.hx(), 1.0 / grid.hy());
    for j in 0..ny {
        for i in 1..nx {
            let k = grid.idx(i, j);
            let gc = (cv[k] - cv[k - 1]) * ihx;
            let nd = donor(gc, nv[k - 1], nv[k]);
            flux.fx[grid.xface(i, j)] = if gc == 0.0 { 0.0 } else { mobility(nd) * gc };
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            let k = grid.idx(i, j);
            let gc = (cv[k] - cv[k - nx]) * ihy;
            let nd = donor(gc, nv[k - nx], nv[k]);
            flux.fy[grid.yface(i, j)] = if gc == 0.0 { 0.0 } else { mobility(nd) * gc };
        }
    }
    Ok(flux)
}

/// Cell-wise `div(n S(n) grad c)` built from [`chemotaxis_flux`].
pub fn chemotaxis_divergence(
    n: &ScalarField,
    c: &ScalarField,
    params: &SimParams,
) -> Result<ScalarField> {
    Ok(divergence_mac(&chemotaxis_flux(n, c, params)?))
}

/// Cell-sum inner product (no area weight).
pub fn cell_dot(a: &ScalarField, b: &ScalarField) -> f64 {
    a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::integrate_cellwise;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{RngExt, SeedableRng};

    fn params(alpha: f64, c_s: f64) -> SimParams {
        SimParams {
            alpha,
            c_s,
            ..SimParams::default()
        }
    }

    fn random_field(grid: Grid2D, rng: &mut StdRng, lo: f64, hi: f64) -> ScalarField {
        let v = (0..grid.cells())
            .map(|_| rng.random_range(lo..hi))
            .collect();
        ScalarField::from_values(grid, v).unwrap()
    }

    #[test]
    fn sensitivity_values() {
        assert_eq!(sensitivity(0.0, &params(-0.5, 1.0)).unwrap(), 1.0);
        assert_eq!(sensitivity(3.0, &params(1.0, 2.0)).unwrap(), 0.5);
        let s = sensitivity(1.0, &params(-0.5, 1.0)).unwrap();
        assert!((s - std::f64::consts::SQRT_2).abs() < 1e-15);
        assert!(matches!(
            sensitivity(-1e-3, &params(0.0, 1.0)),
            Err(Error::NegativeDensity(_))
        ));
        // saturation for alpha >= 0, growth for alpha < 0
        for n in [0.0, 0.5, 10.0, 1e4] {
            assert!(sensitivity(n, &params(0.7, 1.5)).unwrap() <= 1.5);
            assert!(sensitivity(n, &params(-0.7, 1.5)).unwrap() >= 1.5);
        }
    }

    #[test]
    fn laplacian_kills_constants() {
        let g = Grid2D::new(7, 5, 1.0, 2.0).unwrap();
        let l = laplacian_neumann(&ScalarField::constant(g, 5.0));
        assert!(l.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn laplacian_cosine_eigenpair() {
        for nx in [4usize, 7, 12, 16] {
            let (lx, ny) = (1.7, 5);
            let g = Grid2D::new(nx, ny, lx, 1.0).unwrap();
            let hx = g.hx();
            let f = ScalarField::from_fn(g, |x, _| (std::f64::consts::PI * x / lx).cos());
            let lam = 2.0 / (hx * hx) * (1.0 - (std::f64::consts::PI * hx / lx).cos());

            // explicit 1-D Neumann matrix
            let mut a = vec![vec![0.0; nx]; nx];
            for (i, row) in a.iter_mut().enumerate() {
                if i > 0 {
                    row[i - 1] = 1.0 / (hx * hx);
                    row[i] -= 1.0 / (hx * hx);
                }
                if i + 1 < nx {
                    row[i + 1] = 1.0 / (hx * hx);
                    row[i] -= 1.0 / (hx * hx);
                }
            }
            let profile: Vec<f64> = (0..nx).map(|i| f.at(i, 0)).collect();
            for i in 0..nx {
                let av: f64 = (0..nx).map(|k| a[i][k] * profile[k]).sum();
                assert!((av + lam * profile[i]).abs() < 1e-10 * lam);
            }

            let l = laplacian_neumann(&f);
            for (lv, fv) in l.values.iter().zip(&f.values) {
                assert!((lv + lam * fv).abs() < 1e-10 * lam, "nx={nx}");
            }
        }
    }

    #[test]
    fn laplacian_unit_spike() {
        let g = Grid2D::new(6, 5, 1.2, 1.0).unwrap();
        let mut f = ScalarField::zeros(g);
        f.values[g.idx(2, 2)] = 1.0;
        let l = laplacian_neumann(&f);
        let (ax, ay) = (1.0 / (g.hx() * g.hx()), 1.0 / (g.hy() * g.hy()));
        for j in 0..5 {
            for i in 0..6 {
                let expect = match (i as i64 - 2, j as i64 - 2) {
                    (0, 0) => -(2.0 * ax + 2.0 * ay),
                    (1, 0) | (-1, 0) => ax,
                    (0, 1) | (0, -1) => ay,
                    _ => 0.0,
                };
                assert!((l.at(i, j) - expect).abs() <= 1e-12 * ax, "({i},{j})");
            }
        }
    }

    #[test]
    fn gradient_of_constant_and_linear() {
        let g = Grid2D::new(6, 4, 1.0, 1.0).unwrap();
        assert_eq!(
            gradient_faces(&ScalarField::constant(g, 3.0)).max_abs(),
            0.0
        );
        let f = ScalarField::from_fn(g, |x, _| 2.5 * x + 1.0);
        let gr = gradient_faces(&f);
        for j in 0..4 {
            assert_eq!(gr.fx[g.xface(0, j)], 0.0);
            assert_eq!(gr.fx[g.xface(6, j)], 0.0);
            for i in 1..6 {
                assert!((gr.fx[g.xface(i, j)] - 2.5).abs() < 1e-13);
            }
        }
        assert!(gr.fy.iter().all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn gradient_matches_direct_differences() {
        let g = Grid2D::new(5, 7, 1.0, 0.6).unwrap();
        let mut rng = StdRng::seed_from_u64(3);
        let f = random_field(g, &mut rng, -1.0, 1.0);
        let gr = gradient_faces(&f);
        for j in 0..7 {
            for i in 0..=5 {
                let expect = if i == 0 || i == 5 {
                    0.0
                } else {
                    (f.at(i, j) - f.at(i - 1, j)) / g.hx()
                };
                assert_eq!(gr.fx[g.xface(i, j)], expect);
            }
        }
        for j in 0..=7 {
            for i in 0..5 {
                let expect = if j == 0 || j == 7 {
                    0.0
                } else {
                    (f.at(i, j) - f.at(i, j - 1)) / g.hy()
                };
                assert_eq!(gr.fy[g.yface(i, j)], expect);
            }
        }
    }

    #[test]
    fn divergence_of_uniform_interior_flow() {
        let g = Grid2D::new(5, 4, 1.0, 1.0).unwrap();
        let mut u = FaceField::zeros(g);
        assert_eq!(divergence_mac(&u).sup_norm(), 0.0);
        for j in 0..4 {
            for i in 1..5 {
                u.fx[g.xface(i, j)] = 0.3;
            }
        }
        let d = divergence_mac(&u);
        for j in 0..4 {
            for i in 0..5 {
                let v = d.at(i, j);
                match i {
                    0 => assert!((v - 0.3 / g.hx()).abs() < 1e-13),
                    4 => assert!((v + 0.3 / g.hx()).abs() < 1e-13),
                    _ => assert_eq!(v, 0.0),
                }
            }
        }
    }

    #[test]
    fn chemotaxis_trivial_cases() {
        let g = Grid2D::unit_square(6).unwrap();
        let mut rng = StdRng::seed_from_u64(11);
        let p = params(-0.5, 1.3);
        let n = random_field(g, &mut rng, 0.0, 2.0);
        let c = random_field(g, &mut rng, 0.0, 2.0);
        let d = chemotaxis_divergence(&n, &ScalarField::constant(g, 4.0), &p).unwrap();
        assert_eq!(d.sup_norm(), 0.0);
        let d = chemotaxis_divergence(&ScalarField::zeros(g), &c, &p).unwrap();
        assert_eq!(d.sup_norm(), 0.0);
        let mut bad = n.clone();
        bad.values[3] = -1e-9;
        assert!(chemotaxis_divergence(&bad, &c, &p).is_err());
    }

    #[test]
    fn chemotaxis_drift_moves_up_the_gradient() {
        // n concentrated in column 1, c increasing in x: mass flows to column 2.
        let g = Grid2D::new(4, 4, 1.0, 1.0).unwrap();
        let p = params(0.0, 1.0);
        let mut n = ScalarField::zeros(g);
        for j in 0..4 {
            n.values[g.idx(1, j)] = 1.0;
        }
        let c = ScalarField::from_fn(g, |x, _| x);
        let d = chemotaxis_divergence(&n, &c, &p).unwrap();
        for j in 0..4 {
            assert!(d.at(1, j) > 0.0);
            assert!(d.at(2, j) < 0.0);
            assert_eq!(d.at(0, j), 0.0);
            assert_eq!(d.at(3, j), 0.0);
        }
    }

    #[test]
    fn advection_single_face_exchange() {
        let g = Grid2D::unit_square(4).unwrap();
        let mut u = FaceField::zeros(g);
        u.fx[g.xface(2, 1)] = -0.7;
        let f = ScalarField::from_fn(g, |x, y| 1.0 + x + 2.0 * y);
        let a = advect_scalar(&f, &u);
        let (left, right) = (g.idx(1, 1), g.idx(2, 1));
        for (k, v) in a.values.iter().enumerate() {
            if k != left && k != right {
                assert_eq!(*v, 0.0);
            }
        }
        assert!(a.values[left] != 0.0);
        assert_eq!(a.values[left], -a.values[right]);
        // flow to the left carries the right-hand value
        assert!((a.values[left] - (-0.7 * f.values[right] / g.hx())).abs() < 1e-14);
    }

    #[test]
    fn advection_with_zero_velocity() {
        let g = Grid2D::unit_square(5).unwrap();
        let f = ScalarField::from_fn(g, |x, y| x * y);
        assert_eq!(advect_scalar(&f, &FaceField::zeros(g)).sup_norm(), 0.0);
    }

    fn random_velocity(grid: Grid2D, rng: &mut StdRng, amp: f64) -> FaceField {
        let mut u = FaceField::zeros(grid);
        for v in u.fx.iter_mut().chain(u.fy.iter_mut()) {
            *v = rng.random_range(-amp..amp);
        }
        u.zero_boundary();
        u
    }

    proptest! {
        #[test]
        fn laplacian_symmetric_and_dissipative(seed in any::<u64>(), nx in 4usize..9, ny in 4usize..9) {
            let g = Grid2D::new(nx, ny, 1.0, 0.8).unwrap();
            let mut rng = StdRng::seed_from_u64(seed);
            let f = random_field(g, &mut rng, -1.0, 1.0);
            let h = random_field(g, &mut rng, -1.0, 1.0);
            let (lf, lh) = (laplacian_neumann(&f), laplacian_neumann(&h));
            let norm = cell_dot(&f, &f).sqrt() * cell_dot(&h, &h).sqrt();
            let scale = 8.0 / (g.min_spacing() * g.min_spacing());
            prop_assert!((cell_dot(&lf, &h) - cell_dot(&f, &lh)).abs() <= 1e-12 * norm * scale);
            prop_assert!(cell_dot(&lf, &f) <= 0.0);
        }

        #[test]
        fn flux_operators_conserve(seed in any::<u64>(), nx in 4usize..9, ny in 4usize..9, alpha in -1.0f64..1.0) {
            let g = Grid2D::new(nx, ny, 1.0, 1.0).unwrap();
            let mut rng = StdRng::seed_from_u64(seed);
            let f = random_field(g, &mut rng, 0.0, 3.0);
            let c = random_field(g, &mut rng, 0.0, 3.0);
            let u = random_velocity(g, &mut rng, 1.0);
            let p = params(alpha, 1.0);
            let l1 = |s: &ScalarField| s.values.iter().map(|v| v.abs()).sum::<f64>() * g.cell_area();
            for out in [
                laplacian_neumann(&f),
                advect_scalar(&f, &u),
                chemotaxis_divergence(&f, &c, &p).unwrap(),
                divergence_mac(&u),
            ] {
                prop_assert!(integrate_cellwise(&out).abs() <= 1e-13 * l1(&out).max(1e-300));
            }
        }

        #[test]
        fn chemotaxis_euler_step_keeps_positivity(seed in any::<u64>(), alpha in -1.0f64..1.0) {
            let g = Grid2D::unit_square(6).unwrap();
            let mut rng = StdRng::seed_from_u64(seed);
            let n = random_field(g, &mut rng, 0.0, 4.0);
            let c = random_field(g, &mut rng, 0.0, 1.0);
            let p = params(alpha, 1.0);
            let flux = chemotaxis_flux(&n, &c, &p).unwrap();
            // each cell can lose through at most four faces
            let vmax = gradient_faces(&c).max_abs()
                * n.values.iter().map(|&v| sensitivity_unchecked(v, 1.0, alpha)).fold(0.0, f64::max);
            let dt = 0.25 * g.min_spacing() / vmax.max(1e-300);
            let d = divergence_mac(&flux);
            for (nv, dv) in n.values.iter().zip(&d.values) {
                prop_assert!(nv - dt * dv >= -1e-14);
            }
        }

        #[test]
        fn donor_cell_step_is_monotone(seed in any::<u64>()) {
            let g = Grid2D::unit_square(8).unwrap();
            let mut rng = StdRng::seed_from_u64(seed);
            let f = random_field(g, &mut rng, 0.5, 2.0);
            // divergence-free: discrete curl of a random streamfunction on nodes
            let (nx, ny) = (8, 8);
            let mut psi = vec![0.0; (nx + 1) * (ny + 1)];
            for j in 1..ny {
                for i in 1..nx {
                    psi[j * (nx + 1) + i] = rng.random_range(-0.05..0.05);
                }
            }
            let mut u = FaceField::zeros(g);
            for j in 0..ny {
                for i in 0..=nx {
                    u.fx[g.xface(i, j)] = (psi[(j + 1) * (nx + 1) + i] - psi[j * (nx + 1) + i]) / g.hy();
                }
            }
            for j in 0..=ny {
                for i in 0..nx {
                    u.fy[g.yface(i, j)] = -(psi[j * (nx + 1) + i + 1] - psi[j * (nx + 1) + i]) / g.hx();
                }
            }
            prop_assert!(u.boundary_is_zero());
            prop_assert!(divergence_mac(&u).sup_norm() < 1e-12);
            let dt = 0.4 * g.min_spacing() / u.max_abs();
            let a = advect_scalar(&f, &u);
            let (lo, hi) = (f.min(), f.max());
            for (fv, av) in f.values.iter().zip(&a.values) {
                let nv = fv - dt * av;
                prop_assert!(nv >= lo - 1e-12 && nv <= hi + 1e-12);
            }
            // constants are transported to zero tendency
            let ones = advect_scalar(&ScalarField::constant(g, 1.0), &u);
            prop_assert!(ones.sup_norm() < 1e-13 / g.min_spacing());
        }
    }
}
