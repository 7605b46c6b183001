//! Discretization helpers: uniform x-grids, quadrature rules, trigonometric
//! interpolation in time, and finite differences in space.

use num_complex::Complex64;
use std::f64::consts::PI;

pub const TAU: f64 = 2.0 * PI;

/// Uniform nodes on [0, 1] including both endpoints.
pub fn xnodes(nx: usize) -> Vec<f64> {
    assert!(nx >= 5, "need at least 5 x-nodes");
    let h = 1.0 / (nx - 1) as f64;
    (0..nx).map(|i| i as f64 * h).collect()
}

/// Composite Simpson weights on a uniform grid with an odd number of nodes.
pub fn simpson_weights(nx: usize) -> Vec<f64> {
    assert!(nx >= 3 && nx % 2 == 1, "Simpson rule needs an odd node count");
    let h = 1.0 / (nx - 1) as f64;
    let mut w = vec![0.0; nx];
    let mut i = 0;
    while i + 2 < nx {
        w[i] += h / 3.0;
        w[i + 1] += 4.0 * h / 3.0;
        w[i + 2] += h / 3.0;
        i += 2;
    }
    w
}

/// Two-point Gauss-Legendre nodes/weights on [lo, hi].
pub fn gauss2(lo: f64, hi: f64) -> [(f64, f64); 2] {
    let c = 0.5 * (lo + hi);
    let r = 0.5 * (hi - lo);
    let d = r / 3.0f64.sqrt();
    [(c - d, r), (c + d, r)]
}

/// Five-point Gauss-Legendre nodes/weights on [lo, hi].
pub fn gauss5(lo: f64, hi: f64) -> [(f64, f64); 5] {
    const X: [f64; 5] = [
        -0.906179845938663992797626878299,
        -0.538469310105683091036314420700,
        0.0,
        0.538469310105683091036314420700,
        0.906179845938663992797626878299,
    ];
    const W: [f64; 5] = [
        0.236926885056189087514264040720,
        0.478628670499366468041291514836,
        0.568888888888888888888888888889,
        0.478628670499366468041291514836,
        0.236926885056189087514264040720,
    ];
    let c = 0.5 * (lo + hi);
    let r = 0.5 * (hi - lo);
    let mut out = [(0.0, 0.0); 5];
    for i in 0..5 {
        out[i] = (c + r * X[i], r * W[i]);
    }
    out
}

/// ∫_lo^hi f via 5-point Gauss-Legendre (exact through degree 9).
pub fn integrate_gl5(lo: f64, hi: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    gauss5(lo, hi).iter().map(|&(x, w)| w * f(x)) .sum()
}

/// Periodic Dirichlet kernel `D_m(theta) = (1/(2m+1)) sum_{|k|<=m} e^{2 pi i k theta}`.
pub fn dirichlet(m: usize, theta: f64) -> f64 {
    let nt = (2 * m + 1) as f64;
    let s = (PI * theta).sin();
    if s.abs() < 1e-12 {
        // Near an integer: expand around the removable singularity.
        let t = theta - theta.round();
        let x = PI * t;
        // sin(nt x')/ (nt sin x') with x' = pi t; series keeps full accuracy.
        if x.abs() < 1e-14 {
            return 1.0;
        }
        return (nt * x).sin() / (nt * x.sin());
    }
    (nt * PI * theta).sin() / (nt * s)
}

/// Trigonometric interpolation in time: conversions between uniform samples
/// and one-sided Fourier modes `c_0..c_m` of a real 1-periodic function
/// `f(t) = c_0 + 2 Re sum_{k=1}^m c_k e^{2 pi i k t}` (with `c_0` real).
#[derive(Clone)]
pub struct TimeGrid {
    pub m: usize,
    /// collocation count, `2m + 1`
    pub nt: usize,
}

impl TimeGrid {
    pub fn new(m: usize) -> TimeGrid {
        assert!(m >= 1);
        TimeGrid { m, nt: 2 * m + 1 }
    }

    /// Collocation times.
    pub fn times(&self) -> Vec<f64> {
        (0..self.nt).map(|s| s as f64 / self.nt as f64).collect()
    }

    /// Exact projection of `nt` uniform samples onto modes `0..=m`.
    pub fn modes_from_samples(&self, samples: &[f64]) -> Vec<Complex64> {
        project_modes(samples, self.m)
    }

    /// Evaluate modes at the `nt` collocation times.
    pub fn samples_from_modes(&self, modes: &[Complex64]) -> Vec<f64> {
        eval_on_uniform(modes, self.nt)
    }
}

/// Projection of uniform samples (any count `ns >= 2m+1`) onto modes `0..=m`.
pub fn project_modes(samples: &[f64], m: usize) -> Vec<Complex64> {
    let ns = samples.len();
    assert!(ns >= 2 * m + 1, "too few samples for degree {m}");
    let mut modes = vec![Complex64::new(0.0, 0.0); m + 1];
    let w = -TAU / ns as f64;
    for k in 0..=m {
        let mut acc = Complex64::new(0.0, 0.0);
        for (s, &v) in samples.iter().enumerate() {
            let ph = w * (k * s % ns) as f64;
            acc += Complex64::new(ph.cos(), ph.sin()) * v;
        }
        modes[k] = acc / ns as f64;
    }
    modes[0] = Complex64::new(modes[0].re, 0.0);
    modes
}

/// Evaluate one-sided modes on a uniform grid of `ns` points.
pub fn eval_on_uniform(modes: &[Complex64], ns: usize) -> Vec<f64> {
    let m = modes.len() - 1;
    let mut out = vec![modes[0].re; ns];
    let w = TAU / ns as f64;
    for k in 1..=m {
        let c = modes[k];
        for (s, o) in out.iter_mut().enumerate() {
            let ph = w * (k * s % ns) as f64;
            *o += 2.0 * (c.re * ph.cos() - c.im * ph.sin());
        }
    }
    out
}

/// Evaluate one-sided modes at an arbitrary time.
pub fn eval_modes_at(modes: &[Complex64], t: f64) -> f64 {
    let mut out = modes[0].re;
    let rot = Complex64::new((TAU * t).cos(), (TAU * t).sin());
    let mut e = Complex64::new(1.0, 0.0);
    for c in modes.iter().skip(1) {
        e *= rot;
        out += 2.0 * (c.re * e.re - c.im * e.im);
    }
    out
}

/// In-place time shift: modes of `t -> f(t + dt)`.
pub fn shift_modes(modes: &mut [Complex64], dt: f64) {
    let rot = Complex64::new((TAU * dt).cos(), (TAU * dt).sin());
    let mut e = Complex64::new(1.0, 0.0);
    for c in modes.iter_mut().skip(1) {
        e *= rot;
        *c *= e;
    }
}

/// Modes of the derivative `f'`.
pub fn derivative_modes(modes: &[Complex64]) -> Vec<Complex64> {
    modes
        .iter()
        .enumerate()
        .map(|(k, c)| Complex64::new(0.0, TAU * k as f64) * c)
        .collect()
}

/// Fourth-order finite-difference first derivative on a uniform grid.
pub fn fd4_derivative(v: &[f64], h: f64) -> Vec<f64> {
    let n = v.len();
    assert!(n >= 5);
    let mut d = vec![0.0; n];
    // One-sided 6-point stencils (order 5) at the edges: one order above the
    // interior, because their error constants are much larger and the edge
    // values dominate the overall accuracy otherwise.
    if n >= 6 {
        d[0] = (-137.0 * v[0] + 300.0 * v[1] - 300.0 * v[2] + 200.0 * v[3] - 75.0 * v[4]
            + 12.0 * v[5])
            / (60.0 * h);
        d[1] = (-12.0 * v[0] - 65.0 * v[1] + 120.0 * v[2] - 60.0 * v[3] + 20.0 * v[4]
            - 3.0 * v[5])
            / (60.0 * h);
        d[n - 1] = (137.0 * v[n - 1] - 300.0 * v[n - 2] + 300.0 * v[n - 3] - 200.0 * v[n - 4]
            + 75.0 * v[n - 5]
            - 12.0 * v[n - 6])
            / (60.0 * h);
        d[n - 2] = (12.0 * v[n - 1] + 65.0 * v[n - 2] - 120.0 * v[n - 3] + 60.0 * v[n - 4]
            - 20.0 * v[n - 5]
            + 3.0 * v[n - 6])
            / (60.0 * h);
    } else {
        d[0] = (-25.0 * v[0] + 48.0 * v[1] - 36.0 * v[2] + 16.0 * v[3] - 3.0 * v[4]) / (12.0 * h);
        d[1] = (-3.0 * v[0] - 10.0 * v[1] + 18.0 * v[2] - 6.0 * v[3] + v[4]) / (12.0 * h);
        d[n - 2] = (3.0 * v[n - 1] + 10.0 * v[n - 2] - 18.0 * v[n - 3] + 6.0 * v[n - 4]
            - v[n - 5])
            / (12.0 * h);
        d[n - 1] = (25.0 * v[n - 1] - 48.0 * v[n - 2] + 36.0 * v[n - 3] - 16.0 * v[n - 4]
            + 3.0 * v[n - 5])
            / (12.0 * h);
    }
    for i in 2..n - 2 {
        d[i] = (v[i - 2] - 8.0 * v[i - 1] + 8.0 * v[i + 1] - v[i + 2]) / (12.0 * h);
    }
    d
}

/// Finite-difference weights for the first derivative at grid index `i0`
/// (relative to `offsets`, in units of the spacing), computed by Lagrange
/// differentiation of the interpolating polynomial.
pub fn fd_weights_first(i0: f64, offsets: &[f64]) -> Vec<f64> {
    let n = offsets.len();
    let mut w = vec![0.0; n];
    for j in 0..n {
        // derivative of the j-th Lagrange basis at i0
        let mut denom = 1.0;
        for k in 0..n {
            if k != j {
                denom *= offsets[j] - offsets[k];
            }
        }
        let mut num = 0.0;
        for l in 0..n {
            if l == j {
                continue;
            }
            let mut prod = 1.0;
            for k in 0..n {
                if k != j && k != l {
                    prod *= i0 - offsets[k];
                }
            }
            num += prod;
        }
        w[j] = num / denom;
    }
    w
}

/// Upwind-biased 6-point derivative (order 5). With `left_bias` the stencil
/// reaches further toward smaller x, which is the stable choice for
/// transport with positive speed. Unlike a centered stencil, a biased one
/// does not annihilate the grid sawtooth, which keeps collocation matrices
/// built from it free of spurious near-kernel modes.
pub fn fd_derivative_biased(v: &[f64], h: f64, left_bias: bool) -> Vec<f64> {
    let n = v.len();
    assert!(n >= 6);
    let mut d = vec![0.0; n];
    for i in 0..n {
        let want = if left_bias { i as isize - 4 } else { i as isize - 1 };
        let start = want.clamp(0, n as isize - 6) as usize;
        let offsets: Vec<f64> = (0..6).map(|k| (start + k) as f64).collect();
        let w = fd_weights_first(i as f64, &offsets);
        d[i] = w
            .iter()
            .enumerate()
            .map(|(k, &wk)| wk * v[start + k])
            .sum::<f64>()
            / h;
    }
    d
}

/// Cubic Lagrange interpolation stencil for a point `x` on a uniform grid of
/// `nx` nodes over [0,1]: returns (first node index, 4 weights).
pub fn cubic_stencil(x: f64, nx: usize) -> (usize, [f64; 4]) {
    let h = 1.0 / (nx - 1) as f64;
    let xi = (x / h).floor() as isize - 1;
    let i0 = xi.clamp(0, nx as isize - 4) as usize;
    let s = x / h - i0 as f64; // in node units relative to stencil start
    let mut w = [0.0; 4];
    for j in 0..4 {
        let mut p = 1.0;
        for l in 0..4 {
            if l != j {
                p *= (s - l as f64) / (j as f64 - l as f64);
            }
        }
        w[j] = p;
    }
    (i0, w)
}

/// Quintic Lagrange interpolation stencil for a point `x` on a uniform grid
/// of `nx` nodes over [0,1]: returns (first node index, 6 weights).
pub fn quintic_stencil(x: f64, nx: usize) -> (usize, [f64; 6]) {
    debug_assert!(nx >= 6);
    let h = 1.0 / (nx - 1) as f64;
    let xi = (x / h).floor() as isize - 2;
    let i0 = xi.clamp(0, nx as isize - 6) as usize;
    let s = x / h - i0 as f64;
    let mut w = [0.0; 6];
    for j in 0..6 {
        let mut p = 1.0;
        for l in 0..6 {
            if l != j {
                p *= (s - l as f64) / (j as f64 - l as f64);
            }
        }
        w[j] = p;
    }
    (i0, w)
}

/// Weights of the integral of the quintic interpolant over each grid cell
/// [x_i, x_{i+1}]: entry i is (first node index, 6 node weights) so that
/// INT_{x_i}^{x_{i+1}} f ~= SUM_j w[j] f(x_{i0+j}), exact for degree <= 5.
pub fn cell_quintic_weights(nx: usize) -> Vec<(usize, [f64; 6])> {
    debug_assert!(nx >= 6);
    let h = 1.0 / (nx - 1) as f64;
    (0..nx - 1)
        .map(|i| {
            let i0 = (i as isize - 2).clamp(0, nx as isize - 6) as usize;
            let mut w = [0.0; 6];
            for (j, wj) in w.iter_mut().enumerate() {
                // integrate the j-th Lagrange basis over the cell (Gauss-5 is
                // exact for the quintic)
                *wj = integrate_gl5(i as f64 * h, (i + 1) as f64 * h, |x| {
                    let s = x / h - i0 as f64;
                    let mut p = 1.0;
                    for l in 0..6 {
                        if l != j {
                            p *= (s - l as f64) / (j as f64 - l as f64);
                        }
                    }
                    p
                });
            }
            (i0, w)
        })
        .collect()
}

/// Cumulative integral C(x_i) = INT_0^{x_i} of nodal values, sixth order.
pub fn cumulative_integral(values: &[f64], cells: &[(usize, [f64; 6])]) -> Vec<f64> {
    let mut out = vec![0.0; values.len()];
    for (i, (i0, w)) in cells.iter().enumerate() {
        let cell: f64 = (0..6).map(|j| w[j] * values[i0 + j]).sum();
        out[i + 1] = out[i] + cell;
    }
    out
}

/// Septic Lagrange interpolation stencil for a point `x` on a uniform grid
/// of `nx` nodes over [0,1]: returns (first node index, 8 weights).
pub fn septic_stencil(x: f64, nx: usize) -> (usize, [f64; 8]) {
    debug_assert!(nx >= 8);
    let h = 1.0 / (nx - 1) as f64;
    let xi = (x / h).floor() as isize - 3;
    let i0 = xi.clamp(0, nx as isize - 8) as usize;
    let s = x / h - i0 as f64;
    let mut w = [0.0; 8];
    for j in 0..8 {
        let mut p = 1.0;
        for l in 0..8 {
            if l != j {
                p *= (s - l as f64) / (j as f64 - l as f64);
            }
        }
        w[j] = p;
    }
    (i0, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn septic_stencil_reproduces_septics() {
        let nx = 17;
        let xs = xnodes(nx);
        let f = |x: f64| 1.0 - 2.0 * x + x.powi(3) - 0.5 * x.powi(5) + 0.25 * x.powi(7);
        for &x in &[0.0, 0.013, 0.26, 0.5, 0.77, 0.99, 1.0] {
            let (i0, w) = septic_stencil(x, nx);
            let v: f64 = (0..8).map(|j| w[j] * f(xs[i0 + j])).sum();
            assert!((v - f(x)).abs() < 1e-11);
        }
    }

    #[test]
    fn quintic_stencil_reproduces_quintics() {
        let nx = 17;
        let xs = xnodes(nx);
        let f = |x: f64| 1.0 - 2.0 * x + x.powi(3) - 0.5 * x.powi(5);
        for &x in &[0.0, 0.013, 0.26, 0.5, 0.77, 0.99, 1.0] {
            let (i0, w) = quintic_stencil(x, nx);
            let v: f64 = (0..6).map(|j| w[j] * f(xs[i0 + j])).sum();
            assert!((v - f(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn simpson_integrates_cubics_exactly() {
        let w = simpson_weights(9);
        let xs = xnodes(9);
        let val: f64 = xs.iter().zip(&w).map(|(x, w)| w * (x.powi(3) - x + 2.0)).sum();
        assert!((val - (0.25 - 0.5 + 2.0)).abs() < 1e-14);
    }

    #[test]
    fn mode_roundtrip_and_shift() {
        let m = 6;
        let tg = TimeGrid::new(m);
        let f = |t: f64| 0.3 + (TAU * t).cos() - 2.0 * (2.0 * TAU * t).sin() + 0.1 * (5.0 * TAU * t).cos();
        let samples: Vec<f64> = tg.times().iter().map(|&t| f(t)).collect();
        let modes = tg.modes_from_samples(&samples);
        for &t in &[0.0, 0.17, 0.431, 0.99] {
            assert!((eval_modes_at(&modes, t) - f(t)).abs() < 1e-12);
        }
        let mut sh = modes.clone();
        shift_modes(&mut sh, 0.3);
        assert!((eval_modes_at(&sh, 0.2) - f(0.5)).abs() < 1e-12);
        let d = derivative_modes(&modes);
        let fd = (f(0.2 + 5e-7) - f(0.2 - 5e-7)) / 1e-6;
        assert!((eval_modes_at(&d, 0.2) - fd).abs() < 1e-4);
    }

    #[test]
    fn dirichlet_reproduces_shift_matrix_action() {
        // Row of shift matrix = Dirichlet kernel; shifting samples of a low
        // degree trig polynomial must be exact.
        let m = 4;
        let tg = TimeGrid::new(m);
        let f = |t: f64| (TAU * t).sin() + 0.5 * (3.0 * TAU * t).cos();
        let samples: Vec<f64> = tg.times().iter().map(|&t| f(t)).collect();
        let dt = 0.123;
        let times = tg.times();
        for (s, &ts) in times.iter().enumerate() {
            let mut acc = 0.0;
            for (q, &tq) in times.iter().enumerate() {
                acc += dirichlet(m, ts + dt - tq) * samples[q];
            }
            let _ = s;
            assert!((acc - f(ts + dt)).abs() < 1e-12);
        }
    }

    #[test]
    fn fd4_is_fourth_order() {
        let nx = 129;
        let xs = xnodes(nx);
        let h = xs[1] - xs[0];
        let v: Vec<f64> = xs.iter().map(|&x| (2.5 * x).sin()).collect();
        let d = fd4_derivative(&v, h);
        let err = xs
            .iter()
            .zip(&d)
            .map(|(&x, &dv)| (dv - 2.5 * (2.5 * x).cos()).abs())
            .fold(0.0f64, f64::max);
        // Boundary stencils carry the larger h^4 constant; interior is tighter.
        assert!(err < 1e-7, "err = {err}");
    }

    #[test]
    fn cubic_stencil_reproduces_cubics() {
        let nx = 17;
        let xs = xnodes(nx);
        let f = |x: f64| 1.0 - x + 3.0 * x * x - 2.0 * x * x * x;
        let vals: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
        for &x in &[0.0, 0.013, 0.5, 0.77, 0.98, 1.0] {
            let (i0, w) = cubic_stencil(x, nx);
            let v: f64 = (0..4).map(|j| w[j] * vals[i0 + j]).sum();
            assert!((v - f(x)).abs() < 1e-13);
        }
    }

    #[test]
    fn gl5_exactness() {
        let v = integrate_gl5(0.2, 1.3, |x| x.powi(8));
        let exact = (1.3f64.powi(9) - 0.2f64.powi(9)) / 9.0;
        assert!((v - exact).abs() < 1e-13 * exact.abs());
    }
}
