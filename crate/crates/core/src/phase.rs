//! The phase function Φ and the phase equation Φ(φ) = τ.
//!
//! For the 2x2 system with interior forcing f and boundary forcing g the
//! phase function is
//!
//! ```text
//! Φ(φ) = - SUM_j ∬ f_j(t-φ,x) u*_j(t,x) dt dx
//!        - ∫ ( a_1(0) g_1(t-φ) u*_1(t,0) - a_2(1) g_2(t-φ) u*_2(t,1) ) dt,
//! ```
//!
//! a cross-correlation of the forcing shapes with the adjoint solution u*.
//! Since every factor is a trig polynomial, Φ is itself a trig polynomial
//! and is assembled exactly, mode by mode, for all φ at once. Nondegenerate
//! roots of Φ(φ) = τ are the asymptotic phases of the locked solutions.

use crate::field::{PeriodicField, Signal};
use crate::grid::{self, eval_modes_at};
use crate::problem::SystemProblem;
use crate::{Error, Result};
use num_complex::Complex64;

/// Default number of φ samples carried by a [`PhaseCurve`].
pub const PHASE_SAMPLES: usize = 512;

/// The phase function Φ as an exact trig polynomial plus a uniform sample
/// table of Φ and Φ′ on [0,1).
#[derive(Clone, Debug)]
pub struct PhaseCurve {
    /// Φ as one-sided Fourier modes
    pub phi: Signal,
    /// uniform φ samples in [0,1)
    pub grid: Vec<f64>,
    /// Φ(φ) at the samples
    pub values: Vec<f64>,
    /// Φ′(φ) at the samples (exact Fourier differentiation)
    pub derivative: Vec<f64>,
}

/// One solution of Φ(φ₀) = τ together with Φ′(φ₀).
#[derive(Clone, Copy, Debug)]
pub struct PhaseRoot {
    pub phi0: f64,
    pub dphi: f64,
}

impl PhaseRoot {
    /// Persistence of the locked solution requires Φ′(φ₀) ≠ 0.
    pub fn nondegenerate(&self) -> bool {
        self.dphi.abs() > 1e-8
    }
}

impl PhaseCurve {
    pub fn from_signal(phi: Signal) -> PhaseCurve {
        let n = PHASE_SAMPLES;
        let grid = (0..n).map(|i| i as f64 / n as f64).collect();
        let values = phi.samples(n);
        let derivative = phi.derivative().samples(n);
        PhaseCurve { phi, grid, values, derivative }
    }

    pub fn eval(&self, phi: f64) -> f64 {
        self.phi.eval(phi)
    }

    pub fn eval_derivative(&self, phi: f64) -> f64 {
        eval_modes_at(&grid::derivative_modes(&self.phi.modes), phi)
    }

    /// Sup-norm of the nonconstant part of Φ.
    pub fn oscillation(&self) -> f64 {
        let mut osc = self.phi.clone();
        osc.modes[0] = Complex64::new(0.0, 0.0);
        osc.sup_norm()
    }
}

/// Cross-correlation modes: the one-sided modes of
/// `φ -> ∫ f(t-φ) v(t) dt` given one-sided modes of f and v.
fn correlate(f: &[Complex64], v: &[Complex64], out: &mut [Complex64], weight: f64) {
    let deg = (f.len() - 1).min(v.len() - 1).min(out.len() - 1);
    for k in 0..=deg {
        out[k] += weight * f[k].conj() * v[k];
    }
}

/// Phase function of the first-order system route.
pub fn phi_curve_sys(p: &SystemProblem, u_star: &PeriodicField) -> PhaseCurve {
    let nx = u_star.nx;
    // interior x-quadrature on the adjoint grid; the forcing is interpolated
    // to those nodes if it was tabulated on a different one
    let f = if p.f.nx == nx { p.f.clone() } else { p.f.resample(p.f.m, nx) };
    let deg = u_star.m.max(p.f.m).max(p.g[0].degree()).max(p.g[1].degree());
    let mut modes = vec![Complex64::new(0.0, 0.0); deg + 1];
    let wx = grid::simpson_weights(nx);
    for ix in 0..nx {
        for j in 0..2 {
            correlate(f.col(j, ix), u_star.col(j, ix), &mut modes, -wx[ix]);
        }
    }
    correlate(&p.g[0].modes, u_star.col(0, 0), &mut modes, -(p.a[0])(0.0));
    correlate(&p.g[1].modes, u_star.col(1, nx - 1), &mut modes, (p.a[1])(1.0));
    PhaseCurve::from_signal(Signal { modes })
}

/// All solutions of Φ(φ) = τ in [0,1), located by sign-change bracketing on
/// the sample grid and polished by safeguarded Newton on the trig polynomial.
/// Roots are tagged with Φ′(φ₀); degenerate roots (|Φ′| ≤ 1e-8) are returned
/// but flagged.
pub fn find_locked_phases(curve: &PhaseCurve, tau: f64) -> Result<Vec<PhaseRoot>> {
    if curve.oscillation() < 1e-12 {
        if (curve.phi.modes[0].re - tau).abs() < 1e-12 {
            return Err(Error::Assumption("degenerate phase curve".into()));
        }
        return Ok(Vec::new());
    }
    let n = curve.grid.len();
    let mut roots: Vec<PhaseRoot> = Vec::new();
    for i in 0..n {
        let (lo, hi) = (curve.grid[i], curve.grid[i] + 1.0 / n as f64);
        let (flo, fhi) = (curve.values[i] - tau, curve.eval(hi) - tau);
        if flo == 0.0 {
            push_root(&mut roots, curve, lo);
            continue;
        }
        if flo * fhi < 0.0 {
            let phi0 = refine_root(curve, tau, lo, hi, flo);
            push_root(&mut roots, curve, phi0);
        }
    }
    Ok(roots)
}

fn push_root(roots: &mut Vec<PhaseRoot>, curve: &PhaseCurve, phi0: f64) {
    let phi0 = phi0.rem_euclid(1.0);
    if roots
        .iter()
        .any(|r| (r.phi0 - phi0).abs() < 1e-9 || (r.phi0 - phi0).abs() > 1.0 - 1e-9)
    {
        return;
    }
    roots.push(PhaseRoot { phi0, dphi: curve.eval_derivative(phi0) });
}

/// Newton with bisection fallback inside a sign-change bracket.
fn refine_root(curve: &PhaseCurve, tau: f64, mut lo: f64, mut hi: f64, mut flo: f64) -> f64 {
    let mut x = 0.5 * (lo + hi);
    for _ in 0..100 {
        let fx = curve.eval(x) - tau;
        if fx.abs() < 1e-14 {
            return x;
        }
        if fx * flo < 0.0 {
            hi = x;
        } else {
            lo = x;
            flo = fx;
        }
        let dfx = curve.eval_derivative(x);
        let newton = x - fx / dfx;
        x = if dfx != 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if hi - lo < 1e-15 {
            break;
        }
    }
    x
}

/// Image interval of Φ over [φ₋, φ₊], valid only when Φ′ does not vanish
/// there (so the image is traversed monotonically).
pub fn locking_interval(curve: &PhaseCurve, phi_range: (f64, f64)) -> Result<(f64, f64)> {
    let (lo, hi) = phi_range;
    if !(hi > lo) {
        return Err(Error::Config("empty phase range".into()));
    }
    let n = 1024;
    for i in 0..=n {
        let phi = lo + (hi - lo) * i as f64 / n as f64;
        if curve.eval_derivative(phi).abs() <= 1e-8 {
            return Err(Error::Assumption(format!(
                "phase curve derivative vanishes at phi = {phi:.6} inside the range"
            )));
        }
    }
    let (ta, tb) = (curve.eval(lo), curve.eval(hi));
    Ok((ta.min(tb), ta.max(tb)))
}
