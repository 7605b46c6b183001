//! Space-time fields, 1-periodic in time.
//!
//! A [`PeriodicField`] stores, for each component and each node of a uniform
//! x-grid on [0,1], the one-sided Fourier modes `c_0..c_m` of a real trig
//! polynomial in time. Time shifts and time derivatives are exact; evaluation
//! between x-nodes uses cubic Lagrange interpolation.

use crate::grid::{
    self, eval_modes_at, eval_on_uniform, project_modes, septic_stencil, shift_modes, TimeGrid,
};
use crate::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// A scalar 1-periodic function of time as one-sided Fourier modes.
#[derive(Clone, Debug)]
pub struct Signal {
    pub modes: Vec<Complex64>,
}

impl Signal {
    pub fn zeros(m: usize) -> Signal {
        Signal { modes: vec![Complex64::new(0.0, 0.0); m + 1] }
    }

    pub fn degree(&self) -> usize {
        self.modes.len() - 1
    }

    pub fn from_fn(m: usize, f: impl Fn(f64) -> f64) -> Signal {
        let ns = 4 * m.max(1);
        let samples: Vec<f64> = (0..ns).map(|s| f(s as f64 / ns as f64)).collect();
        Signal { modes: project_modes(&samples, m) }
    }

    pub fn eval(&self, t: f64) -> f64 {
        eval_modes_at(&self.modes, t)
    }

    /// `t -> f(t + dt)`
    pub fn shifted(&self, dt: f64) -> Signal {
        let mut s = self.clone();
        shift_modes(&mut s.modes, dt);
        s
    }

    pub fn derivative(&self) -> Signal {
        Signal { modes: grid::derivative_modes(&self.modes) }
    }

    pub fn samples(&self, ns: usize) -> Vec<f64> {
        eval_on_uniform(&self.modes, ns)
    }

    pub fn sup_norm(&self) -> f64 {
        let ns = (8 * self.degree()).max(64);
        let samples = self.samples(ns);
        let (imax, _) = samples
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |a, (i, v)| if v.abs() > a.1 { (i, v.abs()) } else { a });
        polish_abs_max(&self.modes, imax as f64 / ns as f64, 1.0 / ns as f64)
    }

    /// ∫_0^1 f g dt via Parseval.
    pub fn inner(&self, other: &Signal) -> f64 {
        assert_eq!(self.modes.len(), other.modes.len());
        let mut acc = self.modes[0].re * other.modes[0].re;
        for k in 1..self.modes.len() {
            acc += 2.0 * (self.modes[k] * other.modes[k].conj()).re;
        }
        acc
    }
}

/// Metadata persisted next to a CSV field dump.
#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct FieldHeader {
    pub modes: usize,
    pub xnodes: usize,
    pub components: usize,
    pub tsamples: usize,
}

#[derive(Clone, Debug)]
pub struct PeriodicField {
    pub m: usize,
    pub nx: usize,
    pub ncomp: usize,
    /// `data[(comp * nx + ix) * (m+1) + k]`
    data: Vec<Complex64>,
}

impl PeriodicField {
    pub fn zeros(m: usize, nx: usize, ncomp: usize) -> PeriodicField {
        PeriodicField { m, nx, ncomp, data: vec![Complex64::new(0.0, 0.0); ncomp * nx * (m + 1)] }
    }

    /// Project a closure `(t, x, comp) -> value` onto the representation.
    pub fn from_fn(m: usize, nx: usize, ncomp: usize, f: impl Fn(f64, f64, usize) -> f64) -> Self {
        let mut out = PeriodicField::zeros(m, nx, ncomp);
        let xs = grid::xnodes(nx);
        let ns = 4 * m.max(1);
        let mut samples = vec![0.0; ns];
        for c in 0..ncomp {
            for (ix, &x) in xs.iter().enumerate() {
                for (s, smp) in samples.iter_mut().enumerate() {
                    *smp = f(s as f64 / ns as f64, x, c);
                }
                out.set_col_modes(c, ix, project_modes(&samples, m));
            }
        }
        out
    }

    #[inline]
    pub fn col(&self, comp: usize, ix: usize) -> &[Complex64] {
        let o = (comp * self.nx + ix) * (self.m + 1);
        &self.data[o..o + self.m + 1]
    }

    #[inline]
    pub fn col_mut(&mut self, comp: usize, ix: usize) -> &mut [Complex64] {
        let o = (comp * self.nx + ix) * (self.m + 1);
        &mut self.data[o..o + self.m + 1]
    }

    pub fn set_col_modes(&mut self, comp: usize, ix: usize, modes: Vec<Complex64>) {
        assert_eq!(modes.len(), self.m + 1);
        self.col_mut(comp, ix).copy_from_slice(&modes);
    }

    pub fn col_signal(&self, comp: usize, ix: usize) -> Signal {
        Signal { modes: self.col(comp, ix).to_vec() }
    }

    /// Interpolated time-modes at an arbitrary x (septic in x).
    pub fn modes_at(&self, comp: usize, x: f64) -> Vec<Complex64> {
        let (i0, w) = septic_stencil(x, self.nx);
        let mut out = vec![Complex64::new(0.0, 0.0); self.m + 1];
        for j in 0..8 {
            let col = self.col(comp, i0 + j);
            let wj = w[j];
            for (o, c) in out.iter_mut().zip(col) {
                *o += wj * c;
            }
        }
        out
    }

    pub fn eval(&self, t: f64, x: f64, comp: usize) -> f64 {
        eval_modes_at(&self.modes_at(comp, x), t)
    }

    pub fn eval_node(&self, t: f64, ix: usize, comp: usize) -> f64 {
        eval_modes_at(self.col(comp, ix), t)
    }

    /// Exact time shift: `t -> u(t + dt, x)`.
    pub fn shifted(&self, dt: f64) -> PeriodicField {
        let mut out = self.clone();
        let rot: Vec<Complex64> = (0..=self.m)
            .map(|k| {
                let ph = grid::TAU * k as f64 * dt;
                Complex64::new(ph.cos(), ph.sin())
            })
            .collect();
        for c in 0..self.ncomp {
            for ix in 0..self.nx {
                for (v, r) in out.col_mut(c, ix).iter_mut().zip(&rot) {
                    *v *= r;
                }
            }
        }
        out
    }

    /// Exact time derivative.
    pub fn dt(&self) -> PeriodicField {
        let mut out = self.clone();
        for c in 0..self.ncomp {
            for ix in 0..self.nx {
                for (k, v) in out.col_mut(c, ix).iter_mut().enumerate() {
                    *v *= Complex64::new(0.0, grid::TAU * k as f64);
                }
            }
        }
        out
    }

    /// Fourth-order finite-difference x-derivative (per mode).
    pub fn dx(&self) -> PeriodicField {
        let h = 1.0 / (self.nx - 1) as f64;
        let mut out = PeriodicField::zeros(self.m, self.nx, self.ncomp);
        let mut re = vec![0.0; self.nx];
        let mut im = vec![0.0; self.nx];
        for c in 0..self.ncomp {
            for k in 0..=self.m {
                for ix in 0..self.nx {
                    let v = self.col(c, ix)[k];
                    re[ix] = v.re;
                    im[ix] = v.im;
                }
                let dre = grid::fd4_derivative(&re, h);
                let dim = grid::fd4_derivative(&im, h);
                for ix in 0..self.nx {
                    out.col_mut(c, ix)[k] = Complex64::new(dre[ix], dim[ix]);
                }
            }
        }
        out
    }

    pub fn scale(&mut self, s: f64) {
        for v in self.data.iter_mut() {
            *v *= s;
        }
    }

    /// `self += s * other`
    pub fn axpy(&mut self, s: f64, other: &PeriodicField) {
        assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn minus(&self, other: &PeriodicField) -> PeriodicField {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    /// Max of |u| over an 8m-point time grid at every x-node.
    pub fn sup_norm(&self) -> f64 {
        let ns = (8 * self.m).max(64);
        let mut best = 0.0f64;
        for c in 0..self.ncomp {
            for ix in 0..self.nx {
                let col = self.col(c, ix);
                let vals = eval_on_uniform(col, ns);
                let (imax, _) = vals
                    .iter()
                    .enumerate()
                    .fold((0, 0.0f64), |a, (i, v)| if v.abs() > a.1 { (i, v.abs()) } else { a });
                best = best.max(polish_abs_max(col, imax as f64 / ns as f64, 1.0 / ns as f64));
            }
        }
        best
    }

    /// L2 inner product over the strip: Parseval in t, composite Simpson in x.
    pub fn l2_inner(&self, other: &PeriodicField) -> f64 {
        assert_eq!(self.m, other.m);
        assert_eq!(self.nx, other.nx);
        assert_eq!(self.ncomp, other.ncomp);
        let wx = grid::simpson_weights(self.nx);
        let mut acc = 0.0;
        for c in 0..self.ncomp {
            for ix in 0..self.nx {
                let a = self.col(c, ix);
                let b = other.col(c, ix);
                let mut it = a[0].re * b[0].re;
                for k in 1..=self.m {
                    it += 2.0 * (a[k] * b[k].conj()).re;
                }
                acc += wx[ix] * it;
            }
        }
        acc
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_inner(self).sqrt()
    }

    /// Re-project onto another grid (exact in t for `m2 >= m`, cubic in x).
    pub fn resample(&self, m2: usize, nx2: usize) -> PeriodicField {
        let xs = grid::xnodes(nx2);
        let mut out = PeriodicField::zeros(m2, nx2, self.ncomp);
        let kmax = m2.min(self.m);
        for c in 0..self.ncomp {
            for (ix, &x) in xs.iter().enumerate() {
                let src = self.modes_at(c, x);
                let dst = out.col_mut(c, ix);
                dst[..=kmax].copy_from_slice(&src[..=kmax]);
            }
        }
        out
    }

    /// Flat collocation vector: samples at `2m+1` uniform times per node,
    /// ordered `(comp, t, x)`.
    pub fn to_flat(&self) -> Vec<f64> {
        let tg = TimeGrid::new(self.m);
        let mut out = vec![0.0; self.ncomp * tg.nt * self.nx];
        for c in 0..self.ncomp {
            for ix in 0..self.nx {
                let s = tg.samples_from_modes(self.col(c, ix));
                for (it, v) in s.iter().enumerate() {
                    out[(c * tg.nt + it) * self.nx + ix] = *v;
                }
            }
        }
        out
    }

    pub fn from_flat(m: usize, nx: usize, ncomp: usize, flat: &[f64]) -> PeriodicField {
        let tg = TimeGrid::new(m);
        assert_eq!(flat.len(), ncomp * tg.nt * nx);
        let mut out = PeriodicField::zeros(m, nx, ncomp);
        let mut smp = vec![0.0; tg.nt];
        for c in 0..ncomp {
            for ix in 0..nx {
                for it in 0..tg.nt {
                    smp[it] = flat[(c * tg.nt + it) * nx + ix];
                }
                out.set_col_modes(c, ix, tg.modes_from_samples(&smp));
            }
        }
        out
    }

    pub fn header(&self) -> FieldHeader {
        FieldHeader {
            modes: self.m,
            xnodes: self.nx,
            components: self.ncomp,
            tsamples: 4 * self.m,
        }
    }

    /// CSV dump: one block per component, `4m` rows of t-samples, `nx` columns.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        let ns = 4 * self.m;
        for c in 0..self.ncomp {
            let cols: Vec<Vec<f64>> =
                (0..self.nx).map(|ix| eval_on_uniform(self.col(c, ix), ns)).collect();
            for s in 0..ns {
                let row: Vec<String> = (0..self.nx).map(|ix| format!("{:.17e}", cols[ix][s])).collect();
                writeln!(w, "{}", row.join(","))?;
            }
        }
        Ok(())
    }

    pub fn read_csv<R: std::io::BufRead>(header: &FieldHeader, r: R) -> Result<PeriodicField> {
        let FieldHeader { modes: m, xnodes: nx, components: ncomp, tsamples: ns } = *header;
        let mut rows = Vec::new();
        for line in r.lines() {
            let line = line.map_err(|e| Error::Config(format!("csv read: {e}")))?;
            if line.trim().is_empty() {
                continue;
            }
            let row: std::result::Result<Vec<f64>, _> =
                line.split(',').map(|v| v.trim().parse::<f64>()).collect();
            rows.push(row.map_err(|e| Error::Config(format!("csv parse: {e}")))?);
        }
        if rows.len() != ncomp * ns || rows.iter().any(|r| r.len() != nx) {
            return Err(Error::Config("csv shape does not match header".into()));
        }
        let mut out = PeriodicField::zeros(m, nx, ncomp);
        let mut samples = vec![0.0; ns];
        for c in 0..ncomp {
            for ix in 0..nx {
                for s in 0..ns {
                    samples[s] = rows[c * ns + s][ix];
                }
                out.set_col_modes(c, ix, project_modes(&samples, m));
            }
        }
        Ok(out)
    }
}

/// Refine a sampled maximum of |f| for a trig polynomial: Newton on (f^2)' = 0
/// starting from the best sample, with steps capped at one sample spacing.
fn polish_abs_max(modes: &[Complex64], t0: f64, h: f64) -> f64 {
    let d1 = grid::derivative_modes(modes);
    let d2 = grid::derivative_modes(&d1);
    let mut t = t0;
    for _ in 0..6 {
        let f = eval_modes_at(modes, t);
        let fp = eval_modes_at(&d1, t);
        let fpp = eval_modes_at(&d2, t);
        let g = f * fp;
        let gp = fp * fp + f * fpp;
        if gp >= 0.0 {
            break; // not locally concave in f^2: keep the sampled point
        }
        let step = (g / gp).clamp(-h, h);
        t -= step;
        if step.abs() < 1e-15 {
            break;
        }
    }
    eval_modes_at(modes, t).abs().max(eval_modes_at(modes, t0).abs())
}
