//! Per-step functionals, cumulative integrals and invariant checks.
//!
//! Gradients of cell fields use the interior face differences of
//! [`gradient_faces`], so `‖∇_h m‖²` is exactly the quantity dissipated by
//! the implicit diffusion solve. Velocity gradients use the no-slip
//! viscous stencil, `‖∇_h u‖² = -<u, Lap_h u>`.

use std::fmt;
use std::io::{self, Write};

use crate::grid::{integrate_cellwise, MacVelocity, ScalarField, SimState};
use crate::linsolve::{AxisBc, Helmholtz2d};
use crate::operators::gradient_faces;

pub const CSV_HEADER: &str = "step,t,dt,mass_n,mass_m,mass_diff,sup_n,sup_c,sup_m,sup_u,l2_m_sq,grad_c_l2,grad_c_l4,entropy,grad_u_l2_sq,lyapunov,cum_reaction,cum_grad_m,clamp_total";

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DiagnosticsRecord {
    pub step: u64,
    pub t: f64,
    pub dt: f64,
    pub mass_n: f64,
    pub mass_m: f64,
    pub mass_diff: f64,
    pub sup_n: f64,
    pub sup_c: f64,
    pub sup_m: f64,
    pub sup_u: f64,
    pub l2_m_sq: f64,
    /// `∫ |∇_h c|²`
    pub grad_c_l2: f64,
    /// `∫ |∇_h c|⁴` with the gradient averaged to cell centers.
    pub grad_c_l4: f64,
    /// `∫ (n + 1) ln(n + 1)`
    pub entropy: f64,
    pub grad_u_l2_sq: f64,
    /// `∫ ln(n + 1) + |u|² + |∇_h c|²`
    pub lyapunov: f64,
    /// Running `Σ dt ∫ n m`.
    pub cum_reaction: f64,
    /// Running `Σ 2 dt ‖∇_h m‖²`.
    pub cum_grad_m: f64,
    pub clamp_total: f64,
}

/// `∫ |∇_h f|²` over faces, each face carrying the area `hx * hy`.
pub fn grad_l2_sq(f: &ScalarField) -> f64 {
    let g = gradient_faces(f);
    let s: f64 = g.fx.iter().chain(g.fy.iter()).map(|v| v * v).sum();
    s * f.grid().cell_area()
}

/// `∫ |∇_h f|⁴` with face differences averaged to cell centers.
pub fn grad_l4_pow(f: &ScalarField) -> f64 {
    let grid = *f.grid();
    let g = gradient_faces(f);
    let mut s = 0.0;
    for j in 0..grid.ny() {
        for i in 0..grid.nx() {
            let gx = 0.5 * (g.fx[grid.xface(i, j)] + g.fx[grid.xface(i + 1, j)]);
            let gy = 0.5 * (g.fy[grid.yface(i, j)] + g.fy[grid.yface(i, j + 1)]);
            let q = gx * gx + gy * gy;
            s += q * q;
        }
    }
    s * grid.cell_area()
}

/// `-<u, Lap_h u>` with the no-slip viscous stencil on both components.
pub fn grad_u_l2_sq(u: &MacVelocity) -> f64 {
    let grid = *u.grid();
    let (nx, ny) = (grid.nx(), grid.ny());
    let xop = Helmholtz2d {
        bc_x: AxisBc::Dirichlet,
        bc_y: AxisBc::Reflect,
        len_x: nx - 1,
        len_y: ny,
        hx: grid.hx(),
        hy: grid.hy(),
    };
    let yop = Helmholtz2d {
        bc_x: AxisBc::Reflect,
        bc_y: AxisBc::Dirichlet,
        len_x: nx,
        len_y: ny - 1,
        hx: grid.hx(),
        hy: grid.hy(),
    };
    let ux: Vec<f64> = (0..ny)
        .flat_map(|j| u.fx[grid.xface(1, j)..grid.xface(nx, j)].iter().copied())
        .collect();
    let uy = &u.fy[grid.yface(0, 1)..grid.yface(0, ny)];
    let mut lap = vec![0.0; ux.len().max(uy.len())];
    let mut total = 0.0;
    xop.laplacian(&ux, &mut lap[..ux.len()]);
    total -= ux.iter().zip(&lap).map(|(a, b)| a * b).sum::<f64>();
    yop.laplacian(uy, &mut lap[..uy.len()]);
    total -= uy.iter().zip(&lap).map(|(a, b)| a * b).sum::<f64>();
    total * grid.cell_area()
}

/// Computes every functional of `state`. `dt` is the step that produced the
/// state; cumulative fields extend `prev` or start at zero.
pub fn compute_record(
    state: &SimState,
    prev: Option<&DiagnosticsRecord>,
    dt: f64,
) -> DiagnosticsRecord {
    let area = state.grid().cell_area();
    let mass_n = integrate_cellwise(&state.n);
    let mass_m = integrate_cellwise(&state.m);
    let grad_c_l2 = grad_l2_sq(&state.c);
    let grad_m = grad_l2_sq(&state.m);
    let nm: f64 = state
        .n
        .values
        .iter()
        .zip(&state.m.values)
        .map(|(a, b)| a * b)
        .sum::<f64>()
        * area;
    let entropy: f64 = state
        .n
        .values
        .iter()
        .map(|&v| (v + 1.0) * v.ln_1p())
        .sum::<f64>()
        * area;
    let log_mass: f64 = state.n.values.iter().map(|v| v.ln_1p()).sum::<f64>() * area;
    let l2_m_sq = state.m.values.iter().map(|v| v * v).sum::<f64>() * area;
    let (cum_reaction, cum_grad_m) = match prev {
        Some(p) => (p.cum_reaction + dt * nm, p.cum_grad_m + 2.0 * dt * grad_m),
        None => (0.0, 0.0),
    };
    DiagnosticsRecord {
        step: state.step_index,
        t: state.t,
        dt,
        mass_n,
        mass_m,
        mass_diff: mass_n - mass_m,
        sup_n: state.n.sup_norm(),
        sup_c: state.c.sup_norm(),
        sup_m: state.m.sup_norm(),
        sup_u: state.u.max_abs(),
        l2_m_sq,
        grad_c_l2,
        grad_c_l4: grad_l4_pow(&state.c),
        entropy,
        grad_u_l2_sq: grad_u_l2_sq(&state.u),
        lyapunov: log_mass + state.u.l2_sq() + grad_c_l2,
        cum_reaction,
        cum_grad_m,
        clamp_total: state.clamp_total,
    }
}

/// Reference values from the initial record plus the allowed slack of each
/// check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvariantTolerances {
    pub initial: DiagnosticsRecord,
    /// `mass_n` may grow by at most `mass_n_rel * ∫n₀` per step.
    pub mass_n_rel: f64,
    /// `|mass_diff - mass_diff₀| <= mass_diff_rel * (∫n₀ + ∫m₀)`.
    pub mass_diff_rel: f64,
    /// Absolute slack on the sup-norm bounds for `m` and `c`.
    pub sup_abs: f64,
    pub reaction_abs: f64,
    pub dissipation_rel: f64,
    /// `clamp_total <= clamp_rel * ∫n₀`
    pub clamp_rel: f64,
}

impl InvariantTolerances {
    pub fn from_initial(initial: &DiagnosticsRecord) -> Self {
        Self {
            initial: *initial,
            mass_n_rel: 1e-12,
            mass_diff_rel: 1e-10,
            sup_abs: 1e-9,
            reaction_abs: 1e-8,
            dissipation_rel: 1e-6,
            clamp_rel: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub check: &'static str,
    /// Value that failed.
    pub value: f64,
    /// Bound it was compared against, before slack.
    pub reference: f64,
    pub slack: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: value {:e} vs reference {:e} (slack {:e})",
            self.check, self.value, self.reference, self.slack
        )
    }
}

/// Monotonicity and conservation checks between consecutive records.
pub fn assert_invariants(
    curr: &DiagnosticsRecord,
    prev: &DiagnosticsRecord,
    tol: &InvariantTolerances,
) -> Vec<Violation> {
    let init = &tol.initial;
    let mut out = Vec::new();
    let mut check = |name: &'static str, value: f64, reference: f64, slack: f64| {
        let within = value <= reference + slack;
        if !within {
            out.push(Violation {
                check: name,
                value,
                reference,
                slack,
            });
        }
    };
    check(
        "mass_n monotonicity",
        curr.mass_n,
        prev.mass_n,
        tol.mass_n_rel * init.mass_n,
    );
    check(
        "mass_diff conservation",
        (curr.mass_diff - init.mass_diff).abs(),
        0.0,
        tol.mass_diff_rel * (init.mass_n + init.mass_m),
    );
    check("sup_m bound", curr.sup_m, init.sup_m, tol.sup_abs);
    check(
        "sup_c bound",
        curr.sup_c,
        init.sup_c.max(init.sup_m),
        tol.sup_abs,
    );
    check(
        "cumulative reaction bound",
        curr.cum_reaction,
        init.mass_n.min(init.mass_m),
        tol.reaction_abs,
    );
    check(
        "m dissipation",
        curr.l2_m_sq + curr.cum_grad_m,
        init.l2_m_sq,
        tol.dissipation_rel * init.l2_m_sq,
    );
    check(
        "clamp budget",
        curr.clamp_total,
        0.0,
        tol.clamp_rel * init.mass_n,
    );
    out
}

/// Non-fatal growth checks, reported but never counted as violations.
pub fn soft_warnings(curr: &DiagnosticsRecord, initial: &DiagnosticsRecord) -> Vec<String> {
    let mut out = Vec::new();
    if !curr.lyapunov.is_finite() {
        out.push(format!("lyapunov is not finite at t={}", curr.t));
    } else if initial.lyapunov > 0.0 && curr.lyapunov > 100.0 * initial.lyapunov {
        out.push(format!(
            "lyapunov {:e} exceeds 100x its initial value {:e} at t={}",
            curr.lyapunov, initial.lyapunov, curr.t
        ));
    }
    if initial.sup_n > 0.0 && curr.sup_n > 10.0 * initial.sup_n {
        out.push(format!(
            "suspected unbounded: sup_n {:e} is more than 10x the initial {:e} at t={}",
            curr.sup_n, initial.sup_n, curr.t
        ));
    }
    out
}

impl DiagnosticsRecord {
    pub fn values(&self) -> [f64; 18] {
        [
            self.t,
            self.dt,
            self.mass_n,
            self.mass_m,
            self.mass_diff,
            self.sup_n,
            self.sup_c,
            self.sup_m,
            self.sup_u,
            self.l2_m_sq,
            self.grad_c_l2,
            self.grad_c_l4,
            self.entropy,
            self.grad_u_l2_sq,
            self.lyapunov,
            self.cum_reaction,
            self.cum_grad_m,
            self.clamp_total,
        ]
    }

    /// One CSV row without the trailing newline. Floats use Rust's
    /// shortest round-trip formatting.
    pub fn csv_row(&self) -> String {
        let mut s = self.step.to_string();
        for v in self.values() {
            s.push(',');
            s.push_str(&format!("{v:?}"));
        }
        s
    }

    /// Inverse of [`DiagnosticsRecord::csv_row`]; `None` if the row does not
    /// have 19 parsable fields.
    pub fn from_csv_row(row: &str) -> Option<Self> {
        let mut it = row.trim_end().split(',');
        let step = it.next()?.parse().ok()?;
        let v: Vec<f64> = it.map(|s| s.parse().ok()).collect::<Option<_>>()?;
        let [t, dt, mass_n, mass_m, mass_diff, sup_n, sup_c, sup_m, sup_u, l2_m_sq, grad_c_l2, grad_c_l4, entropy, grad_u_l2_sq, lyapunov, cum_reaction, cum_grad_m, clamp_total] =
            <[f64; 18]>::try_from(v).ok()?;
        Some(Self {
            step,
            t,
            dt,
            mass_n,
            mass_m,
            mass_diff,
            sup_n,
            sup_c,
            sup_m,
            sup_u,
            l2_m_sq,
            grad_c_l2,
            grad_c_l4,
            entropy,
            grad_u_l2_sq,
            lyapunov,
            cum_reaction,
            cum_grad_m,
            clamp_total,
        })
    }
}

/// Streams records as CSV with LF line endings.
pub struct CsvWriter<W: Write> {
    inner: W,
}

impl<W: Write> CsvWriter<W> {
    pub fn new(mut inner: W) -> io::Result<Self> {
        inner.write_all(CSV_HEADER.as_bytes())?;
        inner.write_all(b"\n")?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, rec: &DiagnosticsRecord) -> io::Result<()> {
        self.inner.write_all(rec.csv_row().as_bytes())?;
        self.inner.write_all(b"\n")
    }

    pub fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }

    pub fn into_inner(self) -> W {
        self.inner
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{FaceField, Grid2D};
    use rand::rngs::StdRng;
    use rand::{RngExt, SeedableRng};

    #[test]
    fn zero_state_record() {
        let g = Grid2D::unit_square(6).unwrap();
        let r = compute_record(&SimState::rest(g), None, 0.0);
        for v in r.values() {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn unit_density_entropy() {
        let g = Grid2D::unit_square(5).unwrap();
        let mut s = SimState::rest(g);
        s.n = ScalarField::constant(g, 1.0);
        let r = compute_record(&s, None, 0.0);
        assert!((r.mass_n - 1.0).abs() < 1e-15);
        assert!((r.entropy - 2.0 * std::f64::consts::LN_2).abs() < 1e-15);
        assert!((r.entropy - 1.386294).abs() < 1e-6);
    }

    /// Every functional recomputed with plain double loops over indices.
    fn oracle(s: &SimState, prev: &DiagnosticsRecord, dt: f64) -> DiagnosticsRecord {
        let g = *s.grid();
        let (nx, ny, hx, hy) = (g.nx(), g.ny(), g.hx(), g.hy());
        let a = hx * hy;
        let (mut mn, mut mm, mut l2m, mut ent, mut lg, mut nm) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        let (mut sn, mut sc, mut sm) = (0.0f64, 0.0f64, 0.0f64);
        for j in 0..ny {
            for i in 0..nx {
                let (n, c, m) = (s.n.at(i, j), s.c.at(i, j), s.m.at(i, j));
                mn += n * a;
                mm += m * a;
                l2m += m * m * a;
                ent += (1.0 + n) * (1.0 + n).ln() * a;
                lg += (1.0 + n).ln() * a;
                nm += n * m * a;
                sn = sn.max(n.abs());
                sc = sc.max(c.abs());
                sm = sm.max(m.abs());
            }
        }
        let gsq = |f: &ScalarField| {
            let mut t = 0.0;
            for j in 0..ny {
                for i in 1..nx {
                    t += ((f.at(i, j) - f.at(i - 1, j)) / hx).powi(2) * a;
                }
            }
            for j in 1..ny {
                for i in 0..nx {
                    t += ((f.at(i, j) - f.at(i, j - 1)) / hy).powi(2) * a;
                }
            }
            t
        };
        let mut l4 = 0.0;
        for j in 0..ny {
            for i in 0..nx {
                let d = |f: &ScalarField, di: i64, dj: i64| -> f64 {
                    let (ii, jj) = (i as i64 + di, j as i64 + dj);
                    if ii < 0 || jj < 0 || ii >= nx as i64 || jj >= ny as i64 {
                        0.0
                    } else {
                        f.at(ii as usize, jj as usize)
                    }
                };
                let c = &s.c;
                let left = if i > 0 {
                    (c.at(i, j) - d(c, -1, 0)) / hx
                } else {
                    0.0
                };
                let right = if i + 1 < nx {
                    (d(c, 1, 0) - c.at(i, j)) / hx
                } else {
                    0.0
                };
                let down = if j > 0 {
                    (c.at(i, j) - d(c, 0, -1)) / hy
                } else {
                    0.0
                };
                let up = if j + 1 < ny {
                    (d(c, 0, 1) - c.at(i, j)) / hy
                } else {
                    0.0
                };
                let q = ((left + right) / 2.0).powi(2) + ((down + up) / 2.0).powi(2);
                l4 += q * q * a;
            }
        }
        // velocity gradient: squared differences including the wall terms
        let ux = |i: usize, j: usize| s.u.fx[g.xface(i, j)];
        let uy = |i: usize, j: usize| s.u.fy[g.yface(i, j)];
        let mut gu = 0.0;
        for j in 0..ny {
            for i in 0..nx {
                gu += ((ux(i + 1, j) - ux(i, j)) / hx).powi(2) * a;
            }
            for i in 1..nx {
                if j + 1 < ny {
                    gu += ((ux(i, j + 1) - ux(i, j)) / hy).powi(2) * a;
                }
            }
        }
        for i in 1..nx {
            gu += 2.0 * (ux(i, 0) / hy).powi(2) * a + 2.0 * (ux(i, ny - 1) / hy).powi(2) * a;
        }
        for i in 0..nx {
            for j in 0..ny {
                gu += ((uy(i, j + 1) - uy(i, j)) / hy).powi(2) * a;
            }
        }
        for j in 1..ny {
            for i in 0..nx - 1 {
                gu += ((uy(i + 1, j) - uy(i, j)) / hx).powi(2) * a;
            }
            gu += 2.0 * (uy(0, j) / hx).powi(2) * a + 2.0 * (uy(nx - 1, j) / hx).powi(2) * a;
        }
        let mut usq = 0.0;
        let mut su = 0.0f64;
        for v in s.u.fx.iter().chain(s.u.fy.iter()) {
            usq += v * v * a;
            su = su.max(v.abs());
        }
        let gc = gsq(&s.c);
        DiagnosticsRecord {
            step: s.step_index,
            t: s.t,
            dt,
            mass_n: mn,
            mass_m: mm,
            mass_diff: mn - mm,
            sup_n: sn,
            sup_c: sc,
            sup_m: sm,
            sup_u: su,
            l2_m_sq: l2m,
            grad_c_l2: gc,
            grad_c_l4: l4,
            entropy: ent,
            grad_u_l2_sq: gu,
            lyapunov: lg + usq + gc,
            cum_reaction: prev.cum_reaction + dt * nm,
            cum_grad_m: prev.cum_grad_m + 2.0 * dt * gsq(&s.m),
            clamp_total: s.clamp_total,
        }
    }

    #[test]
    fn record_matches_double_loop_oracle() {
        let mut rng = StdRng::seed_from_u64(61);
        for _ in 0..10 {
            let g = Grid2D::new(6, 6, 1.0, 0.8).unwrap();
            let mut s = SimState::rest(g);
            let mut fill = |f: &mut ScalarField| {
                f.values
                    .iter_mut()
                    .for_each(|v| *v = rng.random_range(0.0..3.0));
            };
            fill(&mut s.n);
            fill(&mut s.c);
            fill(&mut s.m);
            let mut u = FaceField::zeros(g);
            for v in u.fx.iter_mut().chain(u.fy.iter_mut()) {
                *v = rng.random_range(-1.0..1.0);
            }
            u.zero_boundary();
            s.u = u;
            s.t = 0.25;
            s.step_index = 9;
            s.clamp_total = 1e-17;
            let prev = DiagnosticsRecord {
                cum_reaction: 0.125,
                cum_grad_m: 0.5,
                ..Default::default()
            };
            let r = compute_record(&s, Some(&prev), 0.01);
            let o = oracle(&s, &prev, 0.01);
            assert_eq!(r.step, o.step);
            for (a, b) in r.values().iter().zip(o.values()) {
                assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-300), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn identical_zero_records_pass() {
        let r = DiagnosticsRecord::default();
        let tol = InvariantTolerances::from_initial(&r);
        assert!(assert_invariants(&r, &r, &tol).is_empty());
    }

    #[test]
    fn mass_growth_is_flagged() {
        let prev = DiagnosticsRecord {
            mass_n: 1.0,
            mass_m: 1.0,
            ..Default::default()
        };
        let curr = DiagnosticsRecord {
            mass_n: 1.1,
            mass_diff: 0.0,
            ..prev
        };
        let tol = InvariantTolerances::from_initial(&prev);
        let v = assert_invariants(&curr, &prev, &tol);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].check, "mass_n monotonicity");
        assert_eq!(v[0].value, 1.1);
        assert_eq!(v[0].reference, 1.0);
    }

    #[test]
    fn each_check_can_fire() {
        let init = DiagnosticsRecord {
            mass_n: 1.0,
            mass_m: 2.0,
            mass_diff: -1.0,
            sup_m: 3.0,
            sup_c: 1.0,
            l2_m_sq: 4.0,
            ..Default::default()
        };
        let tol = InvariantTolerances::from_initial(&init);
        let cases: [(&str, DiagnosticsRecord); 6] = [
            (
                "mass_diff conservation",
                DiagnosticsRecord {
                    mass_diff: -0.9,
                    ..init
                },
            ),
            ("sup_m bound", DiagnosticsRecord { sup_m: 3.1, ..init }),
            ("sup_c bound", DiagnosticsRecord { sup_c: 3.1, ..init }),
            (
                "cumulative reaction bound",
                DiagnosticsRecord {
                    cum_reaction: 1.01,
                    ..init
                },
            ),
            (
                "m dissipation",
                DiagnosticsRecord {
                    cum_grad_m: 0.01,
                    ..init
                },
            ),
            (
                "clamp budget",
                DiagnosticsRecord {
                    clamp_total: 1e-6,
                    ..init
                },
            ),
        ];
        for (name, rec) in cases {
            let v = assert_invariants(&rec, &init, &tol);
            assert_eq!(v.iter().map(|x| x.check).collect::<Vec<_>>(), vec![name]);
        }
    }

    #[test]
    fn csv_layout() {
        assert_eq!(CSV_HEADER.split(',').count(), 19);
        let r = DiagnosticsRecord {
            step: 3,
            t: 0.1,
            dt: 1e-7,
            mass_n: 1.0,
            ..Default::default()
        };
        let row = r.csv_row();
        assert!(row.starts_with("3,0.1,1e-7,1.0,0.0,"));
        assert_eq!(row.split(',').count(), 19);
        for (field, v) in row.split(',').skip(1).zip(r.values()) {
            assert_eq!(field.parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
        let mut w = CsvWriter::new(Vec::new()).unwrap();
        w.write(&r).unwrap();
        let text = String::from_utf8(w.into_inner()).unwrap();
        assert_eq!(text, format!("{CSV_HEADER}\n{row}\n"));
        assert_eq!(DiagnosticsRecord::from_csv_row(&row), Some(r));
        assert_eq!(DiagnosticsRecord::from_csv_row("1,2.0"), None);
        assert_eq!(DiagnosticsRecord::from_csv_row(&format!("{row},1.0")), None);
    }

    #[test]
    fn soft_warnings_fire_on_growth() {
        let init = DiagnosticsRecord {
            sup_n: 1.0,
            lyapunov: 1.0,
            ..Default::default()
        };
        assert!(soft_warnings(&init, &init).is_empty());
        let grown = DiagnosticsRecord {
            sup_n: 11.0,
            lyapunov: 101.0,
            ..init
        };
        assert_eq!(soft_warnings(&grown, &init).len(), 2);
    }
}
