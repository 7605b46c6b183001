//! Constructive inversion of I - C(T,beta^0)R and the linearized operator.
//!
//! The equation u = C(T)Ru + f couples the two components only through their
//! boundary traces, so it reduces to a scalar periodic functional equation
//!
//! ```text
//! w(t) = K(t) w(t + delta/T) + f~(t)
//! ```
//!
//! for one trace (u_2(.,0) or u_1(.,1)). When the loop gain satisfies
//! max|K| < 1 this is solved by direct fixed-point iteration; when
//! min|K| > 1 the equation is rearranged for the backward shift and the
//! reciprocal gain iterated instead. Which case applies is governed by the
//! two non-resonance conditions (one per trace): |r_1 r_2| must differ from
//! exp of a characteristic-averaged difference of the diagonal linearization
//! coefficients, uniformly in t. The margins of those conditions are what
//! `check_nonres_sys` reports.

use crate::charops::{self, nsamp, SysDisc, SysKernel};
use crate::field::PeriodicField;
use crate::grid::{self, eval_on_uniform, project_modes, shift_modes};
use crate::problem::SystemProblem;
use crate::{Error, Result};
use num_complex::Complex64;

/// Which rearrangement of the trace equation converges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    /// loop gain max|K| < 1: iterate the equation as written
    Contraction,
    /// loop gain min|K| > 1: iterate the inverted equation
    Inverted,
}

/// Margins of the two non-resonance conditions and the applicable routes.
#[derive(Debug, Clone)]
pub struct NonResonanceReport {
    /// min over t of |log|r1 r2| - I_k(t)| for the two conditions
    pub margin: [f64; 2],
    pub satisfied: [bool; 2],
    /// max over t of the loop gain |r1 r2| e^{-I_k(t)}, per condition
    pub c_plus: [f64; 2],
    /// min over t of the loop gain, per condition
    pub c_minus: [f64; 2],
    pub route: [Option<Route>; 2],
}

impl NonResonanceReport {
    pub fn any(&self) -> bool {
        self.satisfied[0] || self.satisfied[1]
    }

    /// Condition index with the larger margin (ties toward the first).
    pub fn best(&self) -> Option<(usize, Route)> {
        let k = if self.margin[0] >= self.margin[1] { 0 } else { 1 };
        let k = if self.satisfied[k] {
            k
        } else if self.satisfied[1 - k] {
            1 - k
        } else {
            return None;
        };
        self.route[k].map(|r| (k, r))
    }
}

/// Outcome of one trace-equation solve.
pub struct FunctionalEquationSolve {
    pub iterations: usize,
    pub contraction_factor: f64,
    pub solution: PeriodicField,
    pub residual: f64,
}

const NONRES_TOL: f64 = 1e-8;
const TRACE_TOL: f64 = 1e-11;

/// Evaluate both non-resonance margins on a fine t-grid.
///
/// Condition k compares log|r1 r2| against
/// I_k(t) = INT_0^1 [b_11(t -+ ..., x)/a_1 - b_22(t -+ ..., x)/a_2] dx,
/// where the time arguments follow the backward (k=0) or forward (k=1)
/// characteristics.
pub fn check_nonres_sys(p: &SystemProblem, u0: &PeriodicField) -> NonResonanceReport {
    let d = SysDisc::new(p, u0.m, u0.nx);
    let nt = 256;
    let b_jj = |j: usize, t: f64, x: f64| -> f64 {
        let u1 = u0.eval(t.rem_euclid(1.0), x, 0);
        let u2 = u0.eval(t.rem_euclid(1.0), x, 1);
        (p.db[j][j])(x, u1, u2)
    };
    let log_r = (p.r[0] * p.r[1]).abs().ln();
    let mut margin = [f64::INFINITY; 2];
    let mut c_plus = [f64::NEG_INFINITY; 2];
    let mut c_minus = [f64::INFINITY; 2];
    for it in 0..nt {
        let t = it as f64 / nt as f64;
        for k in 0..2 {
            let integral: f64 = (0..u0.nx - 1)
                .map(|i| {
                    let xs = grid::xnodes(u0.nx);
                    grid::integrate_gl5(xs[i], xs[i + 1], |x| {
                        let (s1, s2) = if k == 0 {
                            (t - d.alpha(0, x, 1.0), t - d.alpha(1, x, 1.0))
                        } else {
                            (t + d.alpha(0, 0.0, x), t + d.alpha(1, 0.0, x))
                        };
                        b_jj(0, s1, x) / (p.a[0])(x) - b_jj(1, s2, x) / (p.a[1])(x)
                    })
                })
                .sum();
            margin[k] = margin[k].min((log_r - integral).abs());
            let gain = (p.r[0] * p.r[1]).abs() * (-integral).exp();
            c_plus[k] = c_plus[k].max(gain);
            c_minus[k] = c_minus[k].min(gain);
        }
    }
    if p.r[0] * p.r[1] == 0.0 {
        // zero reflection: the loop gain vanishes identically
        margin = [f64::INFINITY; 2];
        c_plus = [0.0; 2];
        c_minus = [0.0; 2];
    }
    let mut satisfied = [false; 2];
    let mut route = [None; 2];
    for k in 0..2 {
        satisfied[k] = margin[k] > NONRES_TOL;
        route[k] = if satisfied[k] && c_plus[k] < 1.0 {
            Some(Route::Contraction)
        } else if satisfied[k] && c_minus[k] > 1.0 {
            Some(Route::Inverted)
        } else {
            None
        };
        satisfied[k] = route[k].is_some();
    }
    NonResonanceReport { margin, satisfied, c_plus, c_minus, route }
}

/// Scalar trace equation w(t) = K(tary) w(t + delta) + f~(t), with everything
/// held as time samples (gain) and modes (data).
struct TraceEq {
    /// gain samples K on the uniform s-grid
    gain: Vec<f64>,
    /// right-hand side modes
    rhs: Vec<Complex64>,
    /// argument shift of the unknown
    delta: f64,
}

/// W_j(., x_q) modes, optionally pre-shifted in time.
fn w_modes(kern: &SysKernel, j: usize, q: usize, m: usize, dt: f64) -> Vec<Complex64> {
    let mut w = kern.w[j][q * (m + 1)..(q + 1) * (m + 1)].to_vec();
    if dt != 0.0 {
        shift_modes(&mut w, dt);
    }
    w
}

fn exp_samples(modes: &[Complex64], ns: usize, sign: f64) -> Vec<f64> {
    eval_on_uniform(modes, ns).iter().map(|v| (sign * v).exp()).collect()
}

fn build_trace(
    p: &SystemProblem,
    d: &SysDisc,
    kern: &SysKernel,
    f: &PeriodicField,
    cond: usize,
) -> TraceEq {
    let m = d.m;
    let ns = nsamp(m);
    let t_big = kern.t_big;
    let qe = d.np() - 1;
    let a1e = d.anti[0][qe];
    let a2e = d.anti[1][qe];
    let rr = p.r[0] * p.r[1];
    if cond == 0 {
        // unknown w = u_2(., 0):
        // w(t) = r1 r2 c_1(t + alpha_2(0,1)/T, 1, 0) c_2(t, 0, 1) w(t + delta)
        //        + r2 c_2(t, 0, 1) f_1(t + alpha_2(0,1)/T, 1) + f_2(t, 0)
        let delta = (a2e - a1e) / t_big;
        let w2 = w_modes(kern, 1, qe, m, 0.0);
        let mut w1 = w_modes(kern, 0, qe, m, (a2e - a1e) / t_big);
        for c in w1.iter_mut() {
            *c = -*c;
        }
        let e2 = exp_samples(&w2, ns, 1.0);
        let e1 = exp_samples(&w1, ns, 1.0);
        let gain: Vec<f64> = (0..ns).map(|s| rr * e1[s] * e2[s]).collect();
        let mut f1 = f.col_signal(0, f.nx - 1);
        f1 = f1.shifted(a2e / t_big);
        let f1s = eval_on_uniform(&f1.modes, ns);
        let vals: Vec<f64> = (0..ns).map(|s| p.r[1] * e2[s] * f1s[s]).collect();
        let mut rhs = project_modes(&vals, m);
        let f2 = f.col_signal(1, 0);
        for (c, fc) in rhs.iter_mut().zip(&f2.modes) {
            *c += fc;
        }
        TraceEq { gain, rhs, delta }
    } else {
        // unknown v = u_1(., 1):
        // v(t) = r1 r2 c_1(t, 1, 0) c_2(t + alpha_1(1,0)/T, 0, 1) v(t + delta)
        //        + r1 c_1(t, 1, 0) f_2(t + alpha_1(1,0)/T, 0) + f_1(t, 1)
        let delta = (a2e - a1e) / t_big;
        let mut w1 = w_modes(kern, 0, qe, m, -a1e / t_big);
        for c in w1.iter_mut() {
            *c = -*c;
        }
        let w2 = w_modes(kern, 1, qe, m, -a1e / t_big);
        let e1 = exp_samples(&w1, ns, 1.0);
        let e2 = exp_samples(&w2, ns, 1.0);
        let gain: Vec<f64> = (0..ns).map(|s| rr * e1[s] * e2[s]).collect();
        let mut f2 = f.col_signal(1, 0);
        f2 = f2.shifted(-a1e / t_big);
        let f2s = eval_on_uniform(&f2.modes, ns);
        let vals: Vec<f64> = (0..ns).map(|s| p.r[0] * e1[s] * f2s[s]).collect();
        let mut rhs = project_modes(&vals, m);
        let f1 = f.col_signal(0, f.nx - 1);
        for (c, fc) in rhs.iter_mut().zip(&f1.modes) {
            *c += fc;
        }
        TraceEq { gain, rhs, delta }
    }
}

/// Fixed-point iteration for the trace equation; returns (modes, iterations,
/// contraction estimate).
fn iterate_trace(eq: &TraceEq, m: usize, route: Route) -> Result<(Vec<Complex64>, usize, f64)> {
    let ns = eq.gain.len();
    let contraction = match route {
        Route::Contraction => eq.gain.iter().fold(0.0f64, |a, &g| a.max(g.abs())),
        Route::Inverted => {
            1.0 / eq.gain.iter().fold(f64::INFINITY, |a, &g| a.min(g.abs()))
        }
    };
    if !(contraction < 1.0) {
        return Err(Error::Assumption(
            "non-resonant inversion unavailable (loop gain not contractive)".into(),
        ));
    }
    let cap = 10 * (TRACE_TOL.ln() / contraction.ln()).ceil().max(1.0) as usize;
    // inverted form: w(t) = [w(t - delta) - f~(t - delta)] / K(t - delta)
    let (inv_gain, inv_rhs): (Vec<f64>, Vec<Complex64>) = match route {
        Route::Contraction => (Vec::new(), Vec::new()),
        Route::Inverted => {
            // delta is generally irrational w.r.t. the sample grid, so shift
            // the trigonometric interpolant of the gain (full sample
            // resolution, not truncated to m modes)
            let mut km = project_modes(&eq.gain, ns / 2 - 1);
            shift_modes(&mut km, -eq.delta);
            let shifted_gain = eval_on_uniform(&km, ns);
            let mut rm = eq.rhs.clone();
            shift_modes(&mut rm, -eq.delta);
            (shifted_gain, rm)
        }
    };
    let mut w = vec![Complex64::new(0.0, 0.0); m + 1];
    let mut iters = 0;
    loop {
        let wn = match route {
            Route::Contraction => {
                let mut ws = w.clone();
                shift_modes(&mut ws, eq.delta);
                let wsamp = eval_on_uniform(&ws, ns);
                let vals: Vec<f64> = (0..ns).map(|s| eq.gain[s] * wsamp[s]).collect();
                let mut out = project_modes(&vals, m);
                for (c, fc) in out.iter_mut().zip(&eq.rhs) {
                    *c += fc;
                }
                out
            }
            Route::Inverted => {
                let mut ws = w.clone();
                shift_modes(&mut ws, -eq.delta);
                for (c, fc) in ws.iter_mut().zip(&inv_rhs) {
                    *c -= fc;
                }
                let wsamp = eval_on_uniform(&ws, ns);
                let vals: Vec<f64> = (0..ns).map(|s| wsamp[s] / inv_gain[s]).collect();
                project_modes(&vals, m)
            }
        };
        let diff: f64 = {
            let dm: Vec<Complex64> =
                wn.iter().zip(&w).map(|(a, b)| a - b).collect();
            let samp = eval_on_uniform(&dm, ns);
            samp.iter().fold(0.0f64, |a, &v| a.max(v.abs()))
        };
        w = wn;
        iters += 1;
        if diff < TRACE_TOL {
            break;
        }
        if iters >= cap {
            return Err(Error::NoConvergence(format!(
                "trace iteration exceeded {cap} steps (contraction estimate {contraction:.3})"
            )));
        }
    }
    Ok((w, iters, contraction))
}

/// Rebuild the full field from a solved boundary trace.
fn reconstruct(
    p: &SystemProblem,
    d: &SysDisc,
    kern: &SysKernel,
    f: &PeriodicField,
    cond: usize,
    trace: &[Complex64],
) -> PeriodicField {
    let (m, nx) = (d.m, d.nx);
    let ns = nsamp(m);
    let t_big = kern.t_big;
    let qe = d.np() - 1;
    let (a1e, a2e) = (d.anti[0][qe], d.anti[1][qe]);
    let mut u = f.clone();
    if cond == 0 {
        // trace = u_2(., 0)
        // u_1(t,x) = r1 c_1(t,x,0) w(t + alpha_1(x,0)/T) + f_1:
        // in the characteristic variable s = t - A_1(x)/T the argument of w
        // is exactly s, so each column is a plain product.
        let tr_s = eval_on_uniform(trace, ns);
        for ix in 0..nx {
            let q = d.node_q(ix);
            let e1 = exp_samples(&w_modes(kern, 0, q, m, 0.0), ns, -1.0);
            let vals: Vec<f64> = (0..ns).map(|s| p.r[0] * e1[s] * tr_s[s]).collect();
            let mut modes = project_modes(&vals, m);
            shift_modes(&mut modes, -d.anti[0][q] / t_big);
            for (c, fc) in modes.iter_mut().zip(f.col(0, ix)) {
                *c += fc;
            }
            u.set_col_modes(0, ix, modes);
        }
        // u_2(t,x) = r1 r2 c_2(t,x,1) c_1(t + alpha_2(x,1)/T, 1, 0)
        //            w(t + (alpha_2(x,1)+alpha_1(1,0))/T)
        //          + r2 c_2(t,x,1) f_1(t + alpha_2(x,1)/T, 1) + f_2(t,x)
        let dshift = (a2e - a1e) / t_big;
        let mut wsh = trace.to_vec();
        shift_modes(&mut wsh, dshift);
        let tr2 = eval_on_uniform(&wsh, ns);
        let e1e = exp_samples(&w_modes(kern, 0, qe, m, dshift), ns, -1.0);
        let w2e = w_modes(kern, 1, qe, m, 0.0);
        let f1 = {
            let s = f.col_signal(0, nx - 1).shifted(a2e / t_big);
            eval_on_uniform(&s.modes, ns)
        };
        for ix in 0..nx {
            let q = d.node_q(ix);
            let w2x = w_modes(kern, 1, q, m, 0.0);
            let c2: Vec<f64> = {
                let dm: Vec<Complex64> =
                    w2e.iter().zip(&w2x).map(|(a, b)| a - b).collect();
                exp_samples(&dm, ns, 1.0)
            };
            let vals: Vec<f64> = (0..ns)
                .map(|s| {
                    p.r[0] * p.r[1] * c2[s] * e1e[s] * tr2[s] + p.r[1] * c2[s] * f1[s]
                })
                .collect();
            let mut modes = project_modes(&vals, m);
            shift_modes(&mut modes, -d.anti[1][q] / t_big);
            for (c, fc) in modes.iter_mut().zip(f.col(1, ix)) {
                *c += fc;
            }
            u.set_col_modes(1, ix, modes);
        }
    } else {
        // trace = u_1(., 1)
        // u_2(t,x) = r2 c_2(t,x,1) v(t + alpha_2(x,1)/T) + f_2:
        // with s = t - A_2(x)/T the argument of v is s + A_2(1)/T.
        let mut vsh = trace.to_vec();
        shift_modes(&mut vsh, a2e / t_big);
        let tr_s = eval_on_uniform(&vsh, ns);
        let w2e = w_modes(kern, 1, qe, m, 0.0);
        for ix in 0..nx {
            let q = d.node_q(ix);
            let w2x = w_modes(kern, 1, q, m, 0.0);
            let dm: Vec<Complex64> = w2e.iter().zip(&w2x).map(|(a, b)| a - b).collect();
            let c2 = exp_samples(&dm, ns, 1.0);
            let vals: Vec<f64> = (0..ns).map(|s| p.r[1] * c2[s] * tr_s[s]).collect();
            let mut modes = project_modes(&vals, m);
            shift_modes(&mut modes, -d.anti[1][q] / t_big);
            for (c, fc) in modes.iter_mut().zip(f.col(1, ix)) {
                *c += fc;
            }
            u.set_col_modes(1, ix, modes);
        }
        // u_1 from the reflected freshly built u_2(., 0) trace
        let u2tr = u.col_signal(1, 0);
        let tr1 = eval_on_uniform(&u2tr.modes, ns);
        for ix in 0..nx {
            let q = d.node_q(ix);
            let e1 = exp_samples(&w_modes(kern, 0, q, m, 0.0), ns, -1.0);
            let vals: Vec<f64> = (0..ns).map(|s| p.r[0] * e1[s] * tr1[s]).collect();
            let mut modes = project_modes(&vals, m);
            shift_modes(&mut modes, -d.anti[0][q] / t_big);
            for (c, fc) in modes.iter_mut().zip(f.col(0, ix)) {
                *c += fc;
            }
            u.set_col_modes(0, ix, modes);
        }
    }
    u
}

/// Solve (I - C(T,beta)R) u = f via the trace equation of the given
/// non-resonance condition.
pub fn solve_i_minus_cr_route(
    p: &SystemProblem,
    d: &SysDisc,
    t_big: f64,
    beta: &PeriodicField,
    f: &PeriodicField,
    cond: usize,
    route: Route,
) -> Result<FunctionalEquationSolve> {
    let kern = d.kernel(t_big, beta);
    let eq = build_trace(p, d, &kern, f, cond);
    let (trace, iterations, contraction_factor) = iterate_trace(&eq, d.m, route)?;
    let solution = reconstruct(p, d, &kern, f, cond, &trace);
    // residual of the operator equation itself
    let bc = charops::apply_r(p, &solution);
    let mut res = solution.clone();
    res.axpy(-1.0, &charops::apply_c(d, &kern, &bc));
    res.axpy(-1.0, f);
    let residual = res.sup_norm();
    Ok(FunctionalEquationSolve { iterations, contraction_factor, solution, residual })
}

/// Solve (I - C(T,beta^0)R) u = f, choosing the non-resonance condition with
/// the larger margin.
pub fn solve_i_minus_cr(
    p: &SystemProblem,
    d: &SysDisc,
    u0: &PeriodicField,
    t_big: f64,
    beta: &PeriodicField,
    f: &PeriodicField,
) -> Result<FunctionalEquationSolve> {
    let report = check_nonres_sys(p, u0);
    let (cond, route) = report
        .best()
        .ok_or_else(|| Error::Assumption("non-resonant inversion unavailable".into()))?;
    solve_i_minus_cr_route(p, d, t_big, beta, f, cond, route)
}

/// Application of the linearized operator
/// L w = w - C(T,beta^0) R w - D(T,beta^0) d_u B(beta^0, u^0) w.
pub fn apply_linearized(
    p: &SystemProblem,
    d: &SysDisc,
    kern: &SysKernel,
    beta0: &PeriodicField,
    u0: &PeriodicField,
    w: &PeriodicField,
) -> PeriodicField {
    let bc = charops::apply_r(p, w);
    let dbw = charops::apply_db(p, beta0, u0, w);
    let mut out = w.clone();
    out.axpy(-1.0, &charops::apply_c(d, kern, &bc));
    out.axpy(-1.0, &charops::apply_d(d, kern, &dbw));
    out
}

/// Dense row-major matrix of the linearized operator in the flat real basis
/// of `PeriodicField`.
pub fn linearized_matrix(
    p: &SystemProblem,
    d: &SysDisc,
    kern: &SysKernel,
    beta0: &PeriodicField,
    u0: &PeriodicField,
) -> ndarray::Array2<f64> {
    let proto = PeriodicField::zeros(d.m, d.nx, 2);
    let n = proto.to_flat().len();
    let mut mat = ndarray::Array2::<f64>::zeros((n, n));
    let mut e = vec![0.0; n];
    for col in 0..n {
        e[col] = 1.0;
        let w = PeriodicField::from_flat(d.m, d.nx, 2, &e);
        let lw = apply_linearized(p, d, kern, beta0, u0, &w).to_flat();
        for row in 0..n {
            mat[(row, col)] = lw[row];
        }
        e[col] = 0.0;
    }
    mat
}
