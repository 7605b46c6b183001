//! Locked solutions: the scaled equation for (phi, w) at given (eps, tau).
//!
//! With the ansatz u = S_phi(u^0 + eps w), T = 1 + eps tau, and w constrained
//! to the complement V = { <w, u*> = 0 } of the orbit tangent, the abstract
//! equation divided by eps becomes F(eps,tau,phi,w) = 0 with
//!
//! ```text
//! eps F = v - C(T,beta0)(R v + eps g_phi) - D(T,beta0)(B(beta0,v) + eps f_phi),
//! v = u^0 + eps w,   g_phi = g(.-phi),   f_phi = f(.-phi),
//! ```
//!
//! where the shift equivariance of all operators has been used to move S_phi
//! from the unknown onto the forcing. The pair (phi, w) is solved by a
//! bordered Newton iteration: the w-block is the dense linearized operator,
//! the extra column is the phi-derivative C(T)g'_phi + D(T)f'_phi, and the
//! extra row is the pairing with u* that pins w to V. The Jacobian is
//! assembled and factored once at the eps = 0 seed (where it is exact) and
//! reused as a chord iteration; the contraction rate of that iteration is
//! O(eps + |T-1|), so close to the locking limit it converges in a handful
//! of steps while every step costs only one operator application and one
//! triangular solve.

use crate::adjoint::AdjointSolution;
use crate::charops::{self, SysDisc, SysKernel};
use crate::field::PeriodicField;
use crate::linalg::Lu;
use crate::linsolve;
use crate::phase::PhaseCurve;
use crate::problem::{beta0, SystemProblem};
use crate::{Error, Result};
use ndarray::Array2;

/// One locked time-periodic solution of the forced problem.
pub struct LockedSolution {
    pub eps: f64,
    pub t_big: f64,
    pub tau: f64,
    /// asymptotic phase of this solution
    pub phi: f64,
    /// first-order correction, constrained to <w, u*> = 0
    pub w: PeriodicField,
    /// assembled solution S_phi(u^0 + eps w)
    pub u: PeriodicField,
    pub residual_abstract: f64,
    pub residual_pde: f64,
    pub orbit_distance: f64,
    pub newton_iters: usize,
}

/// Outcome of one point of a sweep over the locking wedge.
pub struct SweepPoint {
    pub eps: f64,
    pub tau: f64,
    pub result: std::result::Result<LockedSolution, String>,
}

pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    /// sup over converged points of orbit_distance / eps
    pub uniform_ratio: f64,
}

/// Shared discretization state for locking runs: the problem tabulated at
/// the Newton grid, the unforced solution, the adjoint solution, the dense
/// linearized operator at (eps, T) = (0, 1), and its two bordered
/// factorizations (seed solve and chord Newton).
pub struct LockingContext {
    pub p: SystemProblem,
    pub u0: PeriodicField,
    pub beta: PeriodicField,
    pub d: SysDisc,
    pub kern1: SysKernel,
    pub adj: AdjointSolution,
    /// dense linearized operator at the seed (flat basis)
    lmat: Array2<f64>,
    /// row of the <., u*> functional in the flat basis
    urow: Vec<f64>,
    n: usize,
}

const NEWTON_TOL: f64 = 1e-10;
const MAX_NEWTON: usize = 60;

impl LockingContext {
    /// Assemble the dense seed Jacobian once. `p` must carry its forcing `f`
    /// tabulated at the same resolution as `u0`.
    pub fn new(p: SystemProblem, u0: PeriodicField, adj: AdjointSolution) -> Result<LockingContext> {
        let (m, nx) = (u0.m, u0.nx);
        let mut p = p;
        if p.f.m != m || p.f.nx != nx {
            p.f = p.f.resample(m, nx);
        }
        let beta = beta0(&p, &u0);
        let d = SysDisc::new(&p, m, nx);
        let kern1 = d.kernel(1.0, &beta);
        let lmat = linsolve::linearized_matrix(&p, &d, &kern1, &beta, &u0);
        let n = lmat.nrows();
        let urow = pairing_row(&adj.u_star);
        Ok(LockingContext { p, u0, beta, d, kern1, adj, lmat, urow, n })
    }

    /// eps * F as a field, for eps possibly zero (the caller divides).
    fn scaled_residual(
        &self,
        kern: &SysKernel,
        eps: f64,
        phi: f64,
        v: &PeriodicField,
    ) -> PeriodicField {
        let mut bc = charops::apply_r(&self.p, v);
        let mut rhs = charops::apply_b(&self.p, &self.beta, v);
        if eps != 0.0 {
            for (s, g) in bc.iter_mut().zip(&self.p.g) {
                let gs = g.shifted(-phi);
                for (c, gc) in s.modes.iter_mut().zip(&gs.modes) {
                    *c += eps * gc;
                }
            }
            rhs.axpy(eps, &self.p.f.shifted(-phi));
        }
        let mut out = v.clone();
        out.axpy(-1.0, &charops::apply_c(&self.d, kern, &bc));
        out.axpy(-1.0, &charops::apply_d(&self.d, kern, &rhs));
        out
    }

    /// F(eps,tau,phi,w) for eps > 0.
    fn f_value(
        &self,
        kern: &SysKernel,
        eps: f64,
        phi: f64,
        w: &PeriodicField,
    ) -> PeriodicField {
        let mut v = self.u0.clone();
        v.axpy(eps, w);
        let mut g = self.scaled_residual(kern, eps, phi, &v);
        g.scale(1.0 / eps);
        g
    }

    /// The phi-derivative column C(T)g'(.-phi) + D(T)f'(.-phi).
    fn phi_column(&self, kern: &SysKernel, phi: f64) -> PeriodicField {
        let gp = [
            self.p.g[0].derivative().shifted(-phi),
            self.p.g[1].derivative().shifted(-phi),
        ];
        let fp = self.p.f.dt().shifted(-phi);
        let mut col = charops::apply_c(&self.d, kern, &gp);
        col.axpy(1.0, &charops::apply_d(&self.d, kern, &fp));
        col
    }

    /// d/dT of C(T)Ru0 + D(T)B(beta0,u0) at T = 1, by central differences
    /// in T (the operators are analytic in T).
    fn dt_term(&self) -> PeriodicField {
        let h = 5e-4;
        let bc = charops::apply_r(&self.p, &self.u0);
        let rhs = charops::apply_b(&self.p, &self.beta, &self.u0);
        let eval = |t_big: f64| {
            let kern = self.d.kernel(t_big, &self.beta);
            let mut v = charops::apply_c(&self.d, &kern, &bc);
            v.axpy(1.0, &charops::apply_d(&self.d, &kern, &rhs));
            v
        };
        let mut out = eval(1.0 + h);
        out.axpy(-1.0, &eval(1.0 - h));
        out.scale(0.5 / h);
        out
    }

    fn bordered_lu(&self, col: &PeriodicField) -> Result<Lu> {
        let n = self.n;
        let mut a = Array2::<f64>::zeros((n + 1, n + 1));
        for r in 0..n {
            for c in 0..n {
                a[(r, c)] = self.lmat[(r, c)];
            }
        }
        for (r, v) in col.to_flat().iter().enumerate() {
            a[(r, n)] = *v;
        }
        for (c, v) in self.urow.iter().enumerate() {
            a[(n, c)] = *v;
        }
        Lu::new(a)
    }
}

/// Row vector of the functional w -> <w, u*> in the flat basis.
fn pairing_row(u_star: &PeriodicField) -> Vec<f64> {
    let proto = PeriodicField::zeros(u_star.m, u_star.nx, u_star.ncomp);
    let n = proto.to_flat().len();
    let mut row = vec![0.0; n];
    let mut e = vec![0.0; n];
    for i in 0..n {
        e[i] = 1.0;
        let b = PeriodicField::from_flat(u_star.m, u_star.nx, u_star.ncomp, &e);
        row[i] = b.l2_inner(u_star);
        e[i] = 0.0;
    }
    row
}

/// The eps = 0 correction w0 in V: solves the bordered linear system
/// [L, D(1)d_t u0; <., u*>, 0] (w0, lambda) = (rhs(tau0, phi0), 0).
pub fn seed_solution(ctx: &LockingContext, tau0: f64, phi0: f64) -> Result<PeriodicField> {
    // rhs of the eps = 0 equation: tau * dT-term + C g_phi + D f_phi
    let mut rhs = ctx.dt_term();
    rhs.scale(tau0);
    let gp = [ctx.p.g[0].shifted(-phi0), ctx.p.g[1].shifted(-phi0)];
    rhs.axpy(1.0, &charops::apply_c(&ctx.d, &ctx.kern1, &gp));
    rhs.axpy(
        1.0,
        &charops::apply_d(&ctx.d, &ctx.kern1, &ctx.p.f.shifted(-phi0)),
    );
    let col = charops::apply_d(&ctx.d, &ctx.kern1, &ctx.u0.dt());
    let lu = ctx
        .bordered_lu(&col)
        .map_err(|_| Error::Assumption("seed solve failed (kernel assumptions violated numerically)".into()))?;
    let mut b = rhs.to_flat();
    b.push(0.0);
    let sol = lu
        .solve(&b)
        .map_err(|_| Error::Assumption("seed solve failed (kernel assumptions violated numerically)".into()))?;
    Ok(PeriodicField::from_flat(ctx.u0.m, ctx.u0.nx, 2, &sol[..ctx.n]))
}

/// Newton (chord) solver for the locked solution at one (eps, tau).
pub fn solve_locked(
    ctx: &LockingContext,
    eps: f64,
    tau: f64,
    seed: (f64, &PeriodicField),
) -> Result<LockedSolution> {
    if eps <= 0.0 {
        return Err(Error::Config("solve_locked requires eps > 0".into()));
    }
    let lu = ctx.bordered_lu(&ctx.phi_column(&ctx.kern1, seed.0))?;
    match newton_run(ctx, &lu, eps, tau, seed, 1.0) {
        Ok(s) => Ok(s),
        // one retry with damped steps
        Err(_) => newton_run(ctx, &lu, eps, tau, seed, 0.5),
    }
}

fn newton_run(
    ctx: &LockingContext,
    lu: &Lu,
    eps: f64,
    tau: f64,
    seed: (f64, &PeriodicField),
    damp0: f64,
) -> Result<LockedSolution> {
    let t_big = 1.0 + eps * tau;
    let kern = ctx.d.kernel(t_big, &ctx.beta);
    let (mut phi, mut w) = (seed.0, seed.1.clone());
    let mut prev_step = f64::INFINITY;
    let mut growth = 0usize;
    let mut iters = 0usize;
    let mut converged = false;
    for it in 0..MAX_NEWTON {
        iters = it + 1;
        let fval = ctx.f_value(&kern, eps, phi, &w);
        let mut b = fval.to_flat();
        b.push(w.l2_inner(&ctx.adj.u_star));
        for v in b.iter_mut() {
            *v = -*v;
        }
        let step = lu.solve(&b)?;
        let dw = PeriodicField::from_flat(ctx.u0.m, ctx.u0.nx, 2, &step[..ctx.n]);
        let dphi = step[ctx.n];
        let norm = dw.sup_norm().max(dphi.abs());
        // damped first steps on retry only
        let damp = if damp0 < 1.0 && it < 20 { damp0 } else { 1.0 };
        w.axpy(damp, &dw);
        phi += damp * dphi;
        if norm < NEWTON_TOL {
            converged = true;
            break;
        }
        if norm > prev_step * 1.5 {
            growth += 1;
            if growth >= 3 {
                return Err(Error::Assumption(format!(
                    "Newton divergence at eps={eps}, tau={tau} (last step {norm:.3e})"
                )));
            }
        } else {
            growth = 0;
        }
        prev_step = norm;
    }
    if !converged {
        return Err(Error::Assumption(format!(
            "Newton did not reach tolerance at eps={eps}, tau={tau} (last step {prev_step:.3e})"
        )));
    }
    // assemble u = S_phi(u0 + eps w) and evaluate residuals
    let mut v = ctx.u0.clone();
    v.axpy(eps, &w);
    let u = v.shifted(phi);
    let residual_abstract = ctx
        .scaled_residual(&kern, eps, phi, &v)
        .sup_norm();
    let (pde, bres) = charops::residual_pde(&ctx.p, eps, t_big, &u);
    let residual_pde = pde
        .sup_norm()
        .max(bres[0].sup_norm())
        .max(bres[1].sup_norm());
    let (_, dist) = orbit_distance(&u, &ctx.u0);
    Ok(LockedSolution {
        eps,
        t_big,
        tau,
        phi: phi.rem_euclid(1.0),
        w,
        u,
        residual_abstract,
        residual_pde,
        orbit_distance: dist,
        newton_iters: iters,
    })
}

/// Continuation over the wedge K(eps0, tau0): eps outer (increasing), tau
/// inner, warm-starting each point from its converged neighbor.
pub fn sweep(
    ctx: &LockingContext,
    phi0: f64,
    eps_grid: &[f64],
    tau_grid: &[f64],
) -> Result<SweepResult> {
    let mut points = Vec::new();
    let mut ratio = 0.0f64;
    let mut eps_sorted = eps_grid.to_vec();
    eps_sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut eps_seeds: Vec<Option<(f64, PeriodicField)>> = vec![None; tau_grid.len()];
    for &eps in &eps_sorted {
        for (k, &tau) in tau_grid.iter().enumerate() {
            let seed_pair: (f64, PeriodicField) = match (&eps_seeds[k], k) {
                (Some(s), _) => s.clone(),
                (None, kk) if kk > 0 && eps_seeds[kk - 1].is_some() => {
                    eps_seeds[kk - 1].clone().unwrap()
                }
                _ => (phi0, seed_solution(ctx, tau, phi0)?),
            };
            match solve_locked(ctx, eps, tau, (seed_pair.0, &seed_pair.1)) {
                Ok(sol) => {
                    ratio = ratio.max(sol.orbit_distance / eps);
                    eps_seeds[k] = Some((sol.phi, sol.w.clone()));
                    points.push(SweepPoint { eps, tau, result: Ok(sol) });
                }
                Err(e) => {
                    points.push(SweepPoint { eps, tau, result: Err(e.to_string()) });
                }
            }
        }
    }
    Ok(SweepResult { points, uniform_ratio: ratio })
}

/// Distance of u to the orbit of u0: minimizes ||u - S_phi u0||_inf over phi
/// by a 256-point scan refined by golden-section search; ties broken toward
/// the smallest phi in [0,1).
pub fn orbit_distance(u: &PeriodicField, u0: &PeriodicField) -> (f64, f64) {
    let h = |phi: f64| u.minus(&u0.shifted(phi)).sup_norm();
    let n = 256;
    let vals: Vec<f64> = (0..n).map(|i| h(i as f64 / n as f64)).collect();
    let mut best = 0usize;
    for i in 1..n {
        if vals[i] < vals[best] - 1e-14 {
            best = i;
        }
    }
    // golden-section refinement inside the bracketing neighbors
    let (mut lo, mut hi) = (
        (best as f64 - 1.0) / n as f64,
        (best as f64 + 1.0) / n as f64,
    );
    let gr = (5.0f64.sqrt() - 1.0) / 2.0;
    let (mut c, mut d) = (hi - gr * (hi - lo), lo + gr * (hi - lo));
    let (mut fc, mut fd) = (h(c), h(d));
    for _ in 0..80 {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - gr * (hi - lo);
            fc = h(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + gr * (hi - lo);
            fd = h(d);
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    let phi = (0.5 * (lo + hi)).rem_euclid(1.0);
    (phi, h(phi))
}

/// The limit diagnostic along a sequence of solutions: Phi(phi_k) -
/// (T_k - 1)/eps_k, with non-solutions (PDE residual above `res_tol`)
/// flagged as None.
pub fn sys2_diagnostic(
    ctx: &LockingContext,
    curve: &PhaseCurve,
    seq: &[(f64, f64, PeriodicField)],
    res_tol: f64,
) -> Vec<Option<f64>> {
    seq.iter()
        .map(|(eps, t_big, u)| {
            let (pde, bres) = charops::residual_pde(&ctx.p, *eps, *t_big, u);
            let res = pde
                .sup_norm()
                .max(bres[0].sup_norm())
                .max(bres[1].sup_norm());
            if res > res_tol {
                return None;
            }
            let (phi_k, _) = orbit_distance(u, &ctx.u0);
            Some(curve.eval(phi_k) - (t_big - 1.0) / eps)
        })
        .collect()
}

/// Seed-residual diagnostic used by tests: || L w0 - (I - P) rhs ||_inf
/// where P projects along D(1) d_t u0 using the functional phi.
pub fn seed_residual(ctx: &LockingContext, tau0: f64, phi0: f64, w0: &PeriodicField) -> f64 {
    let mut rhs = ctx.dt_term();
    rhs.scale(tau0);
    let gp = [ctx.p.g[0].shifted(-phi0), ctx.p.g[1].shifted(-phi0)];
    rhs.axpy(1.0, &charops::apply_c(&ctx.d, &ctx.kern1, &gp));
    rhs.axpy(
        1.0,
        &charops::apply_d(&ctx.d, &ctx.kern1, &ctx.p.f.shifted(-phi0)),
    );
    let lw = linsolve::apply_linearized(&ctx.p, &ctx.d, &ctx.kern1, &ctx.beta, &ctx.u0, w0);
    let phi_rhs = charops::functional_phi(&ctx.p, &ctx.u0, &ctx.adj.u_star, &rhs);
    let mut proj = charops::apply_d(&ctx.d, &ctx.kern1, &ctx.u0.dt());
    proj.scale(phi_rhs);
    let mut res = lw;
    res.axpy(-1.0, &rhs);
    res.axpy(1.0, &proj);
    res.sup_norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adjoint::solve_adjoint_sys;
    use crate::field::Signal;
    use crate::grid::TAU;
    use crate::phase::{find_locked_phases, phi_curve_sys};
    use crate::problem::{manufacture_system, EllipseSpec};

    fn forced_instance(m: usize, nx: usize) -> (LockingContext, PhaseCurve) {
        let (mut p, sol) = manufacture_system(&EllipseSpec::default_instance(m, nx)).unwrap();
        p.f = PeriodicField::from_fn(m, nx, 2, |t, x, c| {
            0.8 * (TAU * t).cos() * (1.0 + 0.3 * x * (1.0 - c as f64))
        });
        p.g = [
            Signal::from_fn(m, |t| 0.5 * (TAU * t).sin()),
            Signal::from_fn(m, |t| 0.3 * (TAU * t + 0.4).cos()),
        ];
        let adj = solve_adjoint_sys(&p, &sol.u0).unwrap();
        let curve = phi_curve_sys(&p, &adj.u_star);
        let ctx = LockingContext::new(p, sol.u0, adj).unwrap();
        (ctx, curve)
    }

    #[test]
    fn orbit_distance_recovers_shift() {
        let (_, sol) = manufacture_system(&EllipseSpec::default_instance(8, 33)).unwrap();
        let shifted = sol.u0.shifted(0.3);
        let (phi, d) = orbit_distance(&shifted, &sol.u0);
        assert!((phi - 0.3).abs() < 1e-9, "phi = {phi}");
        assert!(d < 1e-9, "d = {d}");
    }

    #[test]
    fn orbit_distance_perturbation_bound() {
        let (_, sol) = manufacture_system(&EllipseSpec::default_instance(8, 33)).unwrap();
        let mut u = sol.u0.clone();
        let n = PeriodicField::from_fn(8, 33, 2, |t, x, c| {
            1e-3 * (2.0 * TAU * t).cos() * (x + 0.3 * c as f64)
        });
        u.axpy(1.0, &n);
        let (phi, d) = orbit_distance(&u, &sol.u0);
        assert!(d <= 1e-3 * 1.4 + 1e-12, "d = {d}");
        assert!(phi < 0.05 || phi > 0.95, "phi = {phi}");
    }

    #[test]
    fn unforced_seed_vanishes_and_locked_stays_on_orbit() {
        let (mut p, sol) = manufacture_system(&EllipseSpec::default_instance(10, 33)).unwrap();
        p.f = PeriodicField::zeros(10, 33, 2);
        p.g = [Signal::zeros(10), Signal::zeros(10)];
        let adj = solve_adjoint_sys(&p, &sol.u0).unwrap();
        let ctx = LockingContext::new(p, sol.u0, adj).unwrap();
        let w0 = seed_solution(&ctx, 0.0, 0.37).unwrap();
        assert!(w0.sup_norm() < 1e-9, "w0 = {}", w0.sup_norm());
        let sol1 = solve_locked(&ctx, 1e-3, 0.0, (0.37, &w0)).unwrap();
        assert!((sol1.phi - 0.37).abs() < 1e-8, "phi = {}", sol1.phi);
        assert!(sol1.w.sup_norm() < 1e-8, "w = {}", sol1.w.sup_norm());
    }

    #[test]
    fn locked_solution_on_forced_instance() {
        let (ctx, curve) = forced_instance(10, 33);
        let roots = find_locked_phases(&curve, 0.0).unwrap();
        let root = roots.iter().find(|r| r.nondegenerate()).expect("nondegenerate root");
        let (phi0, tau0) = (root.phi0, 0.0);
        let w0 = seed_solution(&ctx, tau0, phi0).unwrap();
        // seed diagnostics
        assert!(w0.l2_inner(&ctx.adj.u_star).abs() < 1e-9);
        let sres = seed_residual(&ctx, tau0, phi0, &w0);
        assert!(sres < 1e-7, "seed residual {sres}");
        // locked solves on an eps ladder: |phi - phi0| = O(eps)
        let mut prev_gap = f64::INFINITY;
        for &eps in &[4e-3, 2e-3, 1e-3] {
            let sol = solve_locked(&ctx, eps, tau0, (phi0, &w0)).unwrap();
            let gap = (sol.phi - phi0).abs().min((sol.phi - phi0 - 1.0).abs());
            assert!(gap < prev_gap * 0.75, "gap {gap} prev {prev_gap}");
            assert!(sol.residual_abstract < 1e-9 * eps.max(1e-3) / eps * 2.0 + 1e-8);
            assert!(sol.residual_pde < 1e-6, "pde residual {}", sol.residual_pde);
            assert!(sol.w.l2_inner(&ctx.adj.u_star).abs() < 1e-9);
            prev_gap = gap;
        }
    }

    #[test]
    fn sweep_over_small_wedge() {
        let (ctx, curve) = forced_instance(10, 33);
        let roots = find_locked_phases(&curve, 0.0).unwrap();
        let root = roots.iter().find(|r| r.nondegenerate()).unwrap();
        let taus = [-0.05, 0.0, 0.05];
        let res = sweep(&ctx, root.phi0, &[2e-3, 4e-3], &taus).unwrap();
        assert_eq!(res.points.len(), 6);
        for pt in &res.points {
            let sol = pt.result.as_ref().expect("converged");
            assert!(sol.residual_pde < 1e-6);
        }
        assert!(res.uniform_ratio.is_finite() && res.uniform_ratio > 0.0);
        // empty wedge
        let empty = sweep(&ctx, root.phi0, &[], &taus).unwrap();
        assert!(empty.points.is_empty());
    }

    #[test]
    fn diagnostic_on_generated_sequence() {
        let (ctx, curve) = forced_instance(10, 33);
        let roots = find_locked_phases(&curve, 0.0).unwrap();
        let root = roots.iter().find(|r| r.nondegenerate()).unwrap();
        let w0 = seed_solution(&ctx, 0.0, root.phi0).unwrap();
        let mut seq = Vec::new();
        for &eps in &[4e-3, 2e-3, 1e-3] {
            let sol = solve_locked(&ctx, eps, 0.0, (root.phi0, &w0)).unwrap();
            seq.push((eps, sol.t_big, sol.u));
        }
        let diag = sys2_diagnostic(&ctx, &curve, &seq, 1e-5);
        let vals: Vec<f64> = diag.iter().map(|d| d.unwrap().abs()).collect();
        assert!(vals[2] < 1e-3, "diagnostic {vals:?}");
        assert!(vals[2] <= vals[0] + 1e-9, "not decreasing: {vals:?}");
        // a mismatched-phase impostor is rejected
        let mut fake = ctx.u0.shifted(root.phi0 + 0.1);
        let w0s = w0.shifted(root.phi0 + 0.1);
        fake.axpy(4e-3, &w0s);
        let diag2 = sys2_diagnostic(&ctx, &curve, &[(4e-3, 1.0, fake)], 1e-7);
        assert!(diag2[0].is_none());
    }
}
