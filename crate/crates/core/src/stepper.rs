//! One Lie-split time step: fluid, then transport with implicit
//! diffusion, then the fertilization reaction.

use log::{debug, trace};

use crate::error::{Error, Result};
use crate::fluid::{fluid_step, PoissonWorkspace};
use crate::grid::{
    integrate_cellwise, DtPolicy, FaceField, MacVelocity, ScalarField, SimParams, SimState,
};
use crate::operators::{advective_flux, divergence_mac, sensitivity_unchecked};

/// Values of `n`, `c`, `m` in `[-NEGATIVE_SLACK, 0)` are round-off and get
/// clamped to zero; anything below is a monotonicity failure.
pub const NEGATIVE_SLACK: f64 = 1e-13;

const MAX_TRANSPORT_SUBSTEPS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LimitingConstraint {
    AdvectiveCfl,
    ChemotacticCfl,
    Fixed,
}

impl LimitingConstraint {
    pub fn as_str(&self) -> &'static str {
        match self {
            LimitingConstraint::AdvectiveCfl => "advective_cfl",
            LimitingConstraint::ChemotacticCfl => "chemotactic_cfl",
            LimitingConstraint::Fixed => "fixed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DtReport {
    pub dt_used: f64,
    pub limiting_constraint: LimitingConstraint,
    /// Largest `|u| + |S(n_donor) grad c|` over all faces.
    pub max_drift_speed: f64,
}

#[inline]
fn donor(velocity: f64, left: f64, right: f64) -> f64 {
    if velocity > 0.0 {
        left
    } else {
        right
    }
}

/// Scans every interior face for the fastest combined drift. Returns
/// `(v_max, advective part, chemotactic part)` at the maximizing face.
fn max_face_speed(state: &SimState, params: &SimParams) -> (f64, f64, f64) {
    let grid = state.grid();
    let (nx, ny, hx, hy) = (grid.nx(), grid.ny(), grid.hx(), grid.hy());
    let (n, c, u) = (&state.n.values, &state.c.values, &state.u);
    let chem = |gc: f64, left: usize, right: usize| {
        if gc == 0.0 {
            0.0
        } else {
            let nd = donor(gc, n[left], n[right]).max(0.0);
            (sensitivity_unchecked(nd, params.c_s, params.alpha) * gc).abs()
        }
    };
    let mut best = (0.0, 0.0, 0.0);
    let mut consider = |adv: f64, ch: f64| {
        if adv + ch > best.0 {
            best = (adv + ch, adv, ch);
        }
    };
    for j in 0..ny {
        for i in 1..nx {
            let k = grid.idx(i, j);
            let gc = (c[k] - c[k - 1]) / hx;
            consider(u.fx[grid.xface(i, j)].abs(), chem(gc, k - 1, k));
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            let k = grid.idx(i, j);
            let gc = (c[k] - c[k - nx]) / hy;
            consider(u.fy[grid.yface(i, j)].abs(), chem(gc, k - nx, k));
        }
    }
    best
}

/// `dt = min(dt_max, safety * min(hx, hy) / v_max)`.
pub fn choose_dt(state: &SimState, params: &SimParams) -> DtReport {
    let (v_max, adv, chem) = max_face_speed(state, params);
    match params.dt_policy {
        DtPolicy::Fixed { dt } => DtReport {
            dt_used: dt,
            limiting_constraint: LimitingConstraint::Fixed,
            max_drift_speed: v_max,
        },
        DtPolicy::Adaptive { dt_max, safety } => {
            if v_max == 0.0 {
                return DtReport {
                    dt_used: dt_max,
                    limiting_constraint: LimitingConstraint::Fixed,
                    max_drift_speed: 0.0,
                };
            }
            let dt_cfl = safety * state.grid().min_spacing() / v_max;
            let (dt_used, limiting_constraint) = if dt_max <= dt_cfl {
                (dt_max, LimitingConstraint::Fixed)
            } else if chem > adv {
                (dt_cfl, LimitingConstraint::ChemotacticCfl)
            } else {
                (dt_cfl, LimitingConstraint::AdvectiveCfl)
            };
            DtReport {
                dt_used,
                limiting_constraint,
                max_drift_speed: v_max,
            }
        }
    }
}

/// Output of [`scalar_substep`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarUpdate {
    pub n: ScalarField,
    pub c: ScalarField,
    pub m: ScalarField,
    /// Integral of the negative round-off removed by clamping.
    pub clamped: f64,
    pub transport_substeps: usize,
}

/// Chemotactic face fluxes without the sign check; negative round-off in
/// `n` is treated as zero.
fn chemotaxis_flux_clamped(n: &ScalarField, c: &ScalarField, params: &SimParams) -> FaceField {
    let grid = *n.grid();
    let (nx, ny, hx, hy) = (grid.nx(), grid.ny(), grid.hx(), grid.hy());
    let (nv, cv) = (&n.values, &c.values);
    let mobility = |v: f64| {
        let v = v.max(0.0);
        v * sensitivity_unchecked(v, params.c_s, params.alpha)
    };
    let mut flux = FaceField::zeros(grid);
    for j in 0..ny {
        for i in 1..nx {
            let k = grid.idx(i, j);
            let gc = (cv[k] - cv[k - 1]) / hx;
            if gc != 0.0 {
                flux.fx[grid.xface(i, j)] = mobility(donor(gc, nv[k - 1], nv[k])) * gc;
            }
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            let k = grid.idx(i, j);
            let gc = (cv[k] - cv[k - nx]) / hy;
            if gc != 0.0 {
                flux.fy[grid.yface(i, j)] = mobility(donor(gc, nv[k - nx], nv[k])) * gc;
            }
        }
    }
    flux
}

/// Largest per-cell outflow rate of the explicit donor-cell update of `n`
/// (advection plus chemotactic drift). A forward-Euler step of length
/// `tau` keeps `n` nonnegative when `tau * rate <= 1`; advection of `c`
/// and `m` has a smaller rate.
pub fn max_outflow_rate(
    n: &ScalarField,
    c: &ScalarField,
    u: &MacVelocity,
    params: &SimParams,
) -> f64 {
    let grid = *n.grid();
    let (nx, ny, hx, hy) = (grid.nx(), grid.ny(), grid.hx(), grid.hy());
    let (nv, cv) = (&n.values, &c.values);
    let sens = |k: usize| sensitivity_unchecked(nv[k].max(0.0), params.c_s, params.alpha);
    let mut rate = vec![0.0; grid.cells()];
    for j in 0..ny {
        for i in 1..nx {
            let (l, r) = (grid.idx(i - 1, j), grid.idx(i, j));
            let w = u.fx[grid.xface(i, j)];
            if w > 0.0 {
                rate[l] += w / hx;
            } else {
                rate[r] -= w / hx;
            }
            let gc = (cv[r] - cv[l]) / hx;
            if gc > 0.0 {
                rate[l] += sens(l) * gc / hx;
            } else if gc < 0.0 {
                rate[r] -= sens(r) * gc / hx;
            }
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            let (b, t) = (grid.idx(i, j - 1), grid.idx(i, j));
            let w = u.fy[grid.yface(i, j)];
            if w > 0.0 {
                rate[b] += w / hy;
            } else {
                rate[t] -= w / hy;
            }
            let gc = (cv[t] - cv[b]) / hy;
            if gc > 0.0 {
                rate[b] += sens(b) * gc / hy;
            } else if gc < 0.0 {
                rate[t] -= sens(t) * gc / hy;
            }
        }
    }
    rate.into_iter().fold(0.0, f64::max)
}

fn euler_update(f: &mut ScalarField, tau: f64, flux: &FaceField) {
    let d = divergence_mac(flux);
    for (v, dv) in f.values.iter_mut().zip(&d.values) {
        *v -= tau * dv;
    }
}

/// Explicit donor-cell transport of `n`, `c`, `m` over `dt`, sub-cycled so
/// every stage satisfies the exact positivity bound.
fn transport(
    n: &ScalarField,
    c: &ScalarField,
    m: &ScalarField,
    u: &MacVelocity,
    params: &SimParams,
    dt: f64,
) -> Result<(ScalarField, ScalarField, ScalarField, usize)> {
    let (mut n, mut c, mut m) = (n.clone(), c.clone(), m.clone());
    let moving = u.max_abs() > 0.0;
    let mut remaining = dt;
    let mut substeps = 0;
    while remaining > 0.0 {
        if substeps == MAX_TRANSPORT_SUBSTEPS {
            return Err(Error::MonotonicityViolation(format!(
                "transport needed more than {MAX_TRANSPORT_SUBSTEPS} sub-steps"
            )));
        }
        substeps += 1;
        let rate = max_outflow_rate(&n, &c, u, params);
        let tau = if rate * remaining <= 1.0 {
            remaining
        } else {
            1.0 / rate
        };
        let mut flux_n = chemotaxis_flux_clamped(&n, &c, params);
        if moving {
            flux_n.axpy(1.0, &advective_flux(&n, u));
            let (flux_c, flux_m) = (advective_flux(&c, u), advective_flux(&m, u));
            euler_update(&mut c, tau, &flux_c);
            euler_update(&mut m, tau, &flux_m);
        }
        euler_update(&mut n, tau, &flux_n);
        remaining = if tau == remaining {
            0.0
        } else {
            remaining - tau
        };
    }
    if substeps > 1 {
        debug!("transport sub-cycled {substeps} times");
    }
    Ok((n, c, m, substeps))
}

/// Zeroes values in `[-NEGATIVE_SLACK, 0)` and returns the removed integral.
fn clamp_negative(name: &str, f: &mut ScalarField) -> Result<f64> {
    let mut removed = 0.0;
    for v in f.values.iter_mut() {
        if *v < 0.0 {
            if *v < -NEGATIVE_SLACK {
                return Err(Error::MonotonicityViolation(format!(
                    "{name} = {v:e} below the round-off slack"
                )));
            }
            removed -= *v;
            *v = 0.0;
        }
    }
    Ok(removed * f.grid().cell_area())
}

/// Transport followed by implicit diffusion and signal relaxation:
///
/// ```text
/// (I - dt Lap) m_new = m~
/// ((1 + dt) I - dt Lap) c_new = c~ + dt m~
/// (I - dt Lap) n_new = n~
/// ```
///
/// where `~` marks the transported fields. Uses `state.u` as the transport
/// velocity.
pub fn scalar_substep(
    state: &SimState,
    params: &SimParams,
    dt: f64,
    ws: &mut PoissonWorkspace,
) -> Result<ScalarUpdate> {
    let (nt, mut ct, mt, transport_substeps) =
        transport(&state.n, &state.c, &state.m, &state.u, params, dt)?;
    let tol = params.implicit_tol;

    let mut m = ws.implicit_scalar(&mt, 0.0, dt, tol)?;
    ct.values
        .iter_mut()
        .zip(&mt.values)
        .for_each(|(cv, mv)| *cv += dt * mv);
    let mut c = ws.implicit_scalar(&ct, dt, dt, tol)?;
    let mut n = ws.implicit_scalar(&nt, 0.0, dt, tol)?;

    let clamped =
        clamp_negative("n", &mut n)? + clamp_negative("m", &mut m)? + clamp_negative("c", &mut c)?;

    let violation = |msg: String| Err(Error::MonotonicityViolation(msg));
    let (m_sup, c_sup) = (state.m.sup_norm(), state.c.sup_norm());
    if m.sup_norm() > m_sup + 1e-12 {
        return violation(format!("max m grew from {m_sup:e} to {:e}", m.sup_norm()));
    }
    let c_bound = c_sup.max(m_sup);
    if c.sup_norm() > c_bound + 1e-12 {
        return violation(format!("max c = {:e} exceeds {c_bound:e}", c.sup_norm()));
    }
    let (mass_old, mass_new) = (integrate_cellwise(&state.n), integrate_cellwise(&n));
    if (mass_new - mass_old).abs() > 1e-12 * mass_old + clamped {
        return violation(format!("mass of n moved from {mass_old:e} to {mass_new:e}"));
    }
    trace!("scalar substep: {transport_substeps} transport stages, clamp {clamped:e}");
    Ok(ScalarUpdate {
        n,
        c,
        m,
        clamped,
        transport_substeps,
    })
}

/// Symmetric Patankar-type reaction `n' = m' = -nm`:
/// `r = n m / (1 + dt (n + m))`, both fields lose `dt * r`.
pub fn reaction_substep(
    n: &ScalarField,
    m: &ScalarField,
    dt: f64,
) -> Result<(ScalarField, ScalarField)> {
    if let Some(&bad) = n.values.iter().chain(&m.values).find(|v| **v < 0.0) {
        return Err(Error::NegativeDensity(bad));
    }
    let (mut n_new, mut m_new) = (n.clone(), m.clone());
    for (nv, mv) in n_new.values.iter_mut().zip(m_new.values.iter_mut()) {
        let r = *nv * *mv / (1.0 + dt * (*nv + *mv));
        // same amount from both; the min only guards against round-up
        let loss = (dt * r).min(*nv).min(*mv);
        *nv -= loss;
        *mv -= loss;
    }
    Ok((n_new, m_new))
}

/// Per-step monotonicity checks of `next` against `prev`.
fn check_step(prev: &SimState, next: &SimState, clamped: f64) -> Result<()> {
    let fail = |check: &str, detail: String| {
        Err(Error::InvariantViolation {
            check: check.into(),
            detail,
        })
    };
    let (mn0, mn1) = (integrate_cellwise(&prev.n), integrate_cellwise(&next.n));
    if mn1 > mn0 + 1e-12 * mn0 + clamped {
        return fail("mass_n monotonicity", format!("{mn0:e} -> {mn1:e}"));
    }
    let (mm0, mm1) = (integrate_cellwise(&prev.m), integrate_cellwise(&next.m));
    let (d0, d1) = (mn0 - mm0, mn1 - mm1);
    if (d1 - d0).abs() > 1e-13 * (mn0 + mm0) + 2.0 * clamped {
        return fail("mass_diff conservation", format!("{d0:e} -> {d1:e}"));
    }
    let (s0, s1) = (prev.m.sup_norm(), next.m.sup_norm());
    if s1 > s0 + 1e-12 {
        return fail("sup_m monotonicity", format!("{s0:e} -> {s1:e}"));
    }
    let bound = prev.c.sup_norm().max(s0);
    let c1 = next.c.sup_norm();
    if c1 > bound + 1e-12 {
        return fail("sup_c bound", format!("{c1:e} > {bound:e}"));
    }
    Ok(())
}

/// Advances `state` by one step of length `dt`.
pub fn step_with_dt(
    state: &SimState,
    params: &SimParams,
    dt: f64,
    ws: &mut PoissonWorkspace,
) -> Result<SimState> {
    let (u, p) = fluid_step(state, params, dt, ws)?;
    let mut moved = SimState {
        u,
        p,
        ..state.clone()
    };
    let upd = scalar_substep(&moved, params, dt, ws)?;
    let (n, m) = reaction_substep(&upd.n, &upd.m, dt)?;
    moved.n = n;
    moved.m = m;
    moved.c = upd.c;
    moved.t = state.t + dt;
    moved.step_index = state.step_index + 1;
    moved.clamp_total = state.clamp_total + upd.clamped;
    moved.check(params)?;
    check_step(state, &moved, upd.clamped)?;
    Ok(moved)
}

/// One adaptive step; the last step is shortened to land on `t_end`.
pub fn step(
    state: &SimState,
    params: &SimParams,
    ws: &mut PoissonWorkspace,
) -> Result<(SimState, DtReport)> {
    let mut report = choose_dt(state, params);
    let left = params.t_end - state.t;
    if left > 0.0 && left < report.dt_used {
        report.dt_used = left;
    }
    let next = step_with_dt(state, params, report.dt_used, ws)?;
    Ok((next, report))
}
