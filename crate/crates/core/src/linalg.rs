//! Dense linear algebra on top of the system BLAS/LAPACK (OpenBLAS).
//!
//! Matrices are stored row-major as `ndarray::Array2<f64>`; calls into the
//! column-major Fortran routines are arranged via transpose bookkeeping so no
//! data is copied for factorizations.

use crate::{Error, Result};
use ndarray::{Array1, Array2};

extern "C" {
    fn dgemm_(
        transa: *const u8,
        transb: *const u8,
        m: *const i32,
        n: *const i32,
        k: *const i32,
        alpha: *const f64,
        a: *const f64,
        lda: *const i32,
        b: *const f64,
        ldb: *const i32,
        beta: *const f64,
        c: *mut f64,
        ldc: *const i32,
    );
    fn dgetrf_(
        m: *const i32,
        n: *const i32,
        a: *mut f64,
        lda: *const i32,
        ipiv: *mut i32,
        info: *mut i32,
    );
    fn dgetrs_(
        trans: *const u8,
        n: *const i32,
        nrhs: *const i32,
        a: *const f64,
        lda: *const i32,
        ipiv: *const i32,
        b: *mut f64,
        ldb: *const i32,
        info: *mut i32,
    );
}

/// `a * b` for row-major matrices.
pub fn matmul(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let a = a.as_standard_layout();
    let b = b.as_standard_layout();
    let (m, k) = a.dim();
    let (k2, n) = b.dim();
    assert_eq!(k, k2, "matmul: inner dimensions differ");
    let mut c = Array2::<f64>::zeros((m, n));
    if m == 0 || n == 0 || k == 0 {
        return c;
    }
    // Row-major C = A B  <=>  column-major C^T = B^T A^T, and the row-major
    // buffers are exactly the column-major transposes.
    let (mm, nn, kk) = (n as i32, m as i32, k as i32);
    let (alpha, beta) = (1.0, 0.0);
    unsafe {
        dgemm_(
            b"N".as_ptr(),
            b"N".as_ptr(),
            &mm,
            &nn,
            &kk,
            &alpha,
            b.as_slice().unwrap().as_ptr(),
            &mm,
            a.as_slice().unwrap().as_ptr(),
            &kk,
            &beta,
            c.as_slice_mut().unwrap().as_mut_ptr(),
            &mm,
        );
    }
    c
}

/// Gram matrix `a^T a` of a (possibly rectangular) row-major matrix.
pub fn gram(a: &Array2<f64>) -> Array2<f64> {
    let a = a.as_standard_layout();
    let (m, n) = a.dim();
    let mut g = Array2::<f64>::zeros((n, n));
    if m == 0 || n == 0 {
        return g;
    }
    // Column-major view of `a` is A^T (n x m); G = (A^T) (A^T)^T is symmetric,
    // so the row/column-major distinction drops out.
    let (mm, nn, kk) = (n as i32, n as i32, m as i32);
    let (alpha, beta) = (1.0, 0.0);
    unsafe {
        dgemm_(
            b"N".as_ptr(),
            b"T".as_ptr(),
            &mm,
            &nn,
            &kk,
            &alpha,
            a.as_slice().unwrap().as_ptr(),
            &mm,
            a.as_slice().unwrap().as_ptr(),
            &mm,
            &beta,
            g.as_slice_mut().unwrap().as_mut_ptr(),
            &mm,
        );
    }
    g
}

/// matrix-vector product `a * x` (row-major).
pub fn matvec(a: &Array2<f64>, x: &[f64]) -> Vec<f64> {
    let (m, n) = a.dim();
    assert_eq!(n, x.len());
    let s = a.as_slice().unwrap();
    let mut y = vec![0.0; m];
    for i in 0..m {
        let row = &s[i * n..(i + 1) * n];
        let mut acc = 0.0;
        for j in 0..n {
            acc += row[j] * x[j];
        }
        y[i] = acc;
    }
    y
}

/// `a^T * x` for rectangular `a` (row-major), without forming the transpose.
pub fn matvec_t(a: &Array2<f64>, x: &[f64]) -> Vec<f64> {
    let (m, n) = a.dim();
    assert_eq!(m, x.len());
    let s = a.as_slice().unwrap();
    let mut y = vec![0.0; n];
    for i in 0..m {
        let row = &s[i * n..(i + 1) * n];
        let xi = x[i];
        for j in 0..n {
            y[j] += row[j] * xi;
        }
    }
    y
}

/// LU factorization with partial pivoting of a square matrix.
pub struct Lu {
    n: usize,
    /// Row-major A, factored in place by LAPACK as the column-major A^T.
    lu: Array2<f64>,
    ipiv: Vec<i32>,
}

impl Lu {
    pub fn new(mut a: Array2<f64>) -> Result<Lu> {
        let (m, n) = a.dim();
        assert_eq!(m, n, "Lu: matrix must be square");
        let ni = n as i32;
        let mut ipiv = vec![0i32; n];
        let mut info = 0i32;
        unsafe {
            dgetrf_(
                &ni,
                &ni,
                a.as_slice_mut().unwrap().as_mut_ptr(),
                &ni,
                ipiv.as_mut_ptr(),
                &mut info,
            );
        }
        if info < 0 {
            return Err(Error::Linalg(format!("dgetrf: illegal argument {}", -info)));
        }
        // info > 0 (exact zero pivot) is tolerated: the factorization is still
        // usable for inverse iteration on nearly singular matrices; plain
        // solves will surface the problem as infinities.
        Ok(Lu { n, lu: a, ipiv })
    }

    /// Solve `A x = b`. The stored factors are those of the column-major A^T,
    /// so LAPACK is asked for the transposed solve.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.solve_flag(b"T", b)
    }

    /// Solve `A^T x = b`.
    pub fn solve_transposed(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.solve_flag(b"N", b)
    }

    fn solve_flag(&self, flag: &[u8; 1], b: &[f64]) -> Result<Vec<f64>> {
        assert_eq!(b.len(), self.n);
        let mut x = b.to_vec();
        let ni = self.n as i32;
        let one = 1i32;
        let mut info = 0i32;
        unsafe {
            dgetrs_(
                flag.as_ptr(),
                &ni,
                &one,
                self.lu.as_slice().unwrap().as_ptr(),
                &ni,
                self.ipiv.as_ptr(),
                x.as_mut_ptr(),
                &ni,
                &mut info,
            );
        }
        if info != 0 {
            return Err(Error::Linalg(format!("dgetrs: info {info}")));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Linalg("singular system in LU solve".into()));
        }
        Ok(x)
    }
}

/// Solve a square dense system `A x = b`.
pub fn solve(a: Array2<f64>, b: &[f64]) -> Result<Vec<f64>> {
    Lu::new(a)?.solve(b)
}

/// The two smallest singular values of a square matrix `a` and the right
/// singular vector of the smallest one.
///
/// Uses inverse iteration on `A^T A` driven by a single LU factorization of
/// `A` (one pass of `A^{-T}` then `A^{-1}` per step), so the cost is one
/// factorization plus cheap triangular solves. A tiny diagonal ridge keeps
/// the factorization usable when `A` is numerically singular. The second
/// direction is obtained by re-orthogonalizing against the first inside the
/// same iteration; it is accurate to a few digits, which is all the
/// gap checks need. The returned smallest value saturates around
/// `||A|| * sqrt(eps_machine)`, far below every threshold compared against.
pub fn two_smallest_singular(a: &Array2<f64>) -> Result<(f64, f64, Vec<f64>)> {
    let (m, n) = a.dim();
    assert!(m == n && n >= 2, "two_smallest_singular: square input");
    let scale = a.diag().iter().fold(0.0f64, |s, v| s.max(v.abs())).max(1e-300);
    let mut ar = a.clone();
    for i in 0..n {
        ar[(i, i)] += scale * 1e-13;
    }
    let lu = Lu::new(ar)?;
    let step = |v: &[f64]| -> Result<Vec<f64>> {
        let y = lu.solve_transposed(v)?;
        lu.solve(&y)
    };

    // Deterministic pseudo-random start vectors.
    let mut state = 0x9E3779B97F4A7C15u64;
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    let mut v1: Vec<f64> = (0..n).map(|_| next()).collect();
    normalize(&mut v1);

    let sing = |v: &[f64]| -> f64 {
        let av = matvec(a, v);
        av.iter().map(|x| x * x).sum::<f64>().sqrt()
    };

    // Stage 1: the smallest singular direction. Converges in a couple of
    // iterations whenever sigma_min is well separated.
    let mut s1 = f64::INFINITY;
    for _ in 0..60 {
        let mut w1 = step(&v1)?;
        normalize(&mut w1);
        v1 = w1;
        let t1 = sing(&v1);
        let done = rel_close(t1, s1);
        s1 = t1;
        if done {
            break;
        }
    }

    // Stage 2: iterate in the complement of the found direction. The solves
    // reintroduce a large component along v1 (amplified by 1/sigma_1^2); two
    // rounds of Gram-Schmidt against the very accurately known v1 remove it.
    let mut v2: Vec<f64> = (0..n).map(|_| next()).collect();
    orthonormalize(&mut v2, &v1);
    let mut s2 = f64::INFINITY;
    for _ in 0..60 {
        let mut w2 = step(&v2)?;
        orthonormalize(&mut w2, &v1);
        v2 = w2;
        let t2 = sing(&v2);
        let done = rel_close(t2, s2);
        s2 = t2;
        if done {
            break;
        }
    }
    Ok((s1, s2, v1))
}

fn rel_close(a: f64, b: f64) -> bool {
    a.is_finite() && b.is_finite() && (a - b).abs() <= 1e-10 * (a.abs() + b.abs() + 1e-300)
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
}

fn orthonormalize(v: &mut [f64], against: &[f64]) {
    for _ in 0..2 {
        let d: f64 = v.iter().zip(against).map(|(x, y)| x * y).sum();
        for (x, y) in v.iter_mut().zip(against) {
            *x -= d * y;
        }
    }
    normalize(v);
}

/// Dot product helper.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Euclidean norm helper.
pub fn nrm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Max-norm helper.
pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |s, v| s.max(v.abs()))
}

#[allow(dead_code)]
fn _unused(_: Array1<f64>) {}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn lu_solves_small_system() {
        let a = array![[4.0, 1.0, 0.0], [1.0, 3.0, 1.0], [0.0, 1.0, 2.0]];
        let x = solve(a.clone(), &[1.0, 2.0, 3.0]).unwrap();
        let r = matvec(&a, &x);
        for (ri, bi) in r.iter().zip(&[1.0, 2.0, 3.0]) {
            assert!((ri - bi).abs() < 1e-12);
        }
    }

    #[test]
    fn matmul_matches_reference() {
        let a = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]];
        let b = array![[1.0, 0.0, 2.0], [0.0, 1.0, -1.0]];
        let c = matmul(&a, &b);
        let expect = array![[1.0, 2.0, 0.0], [3.0, 4.0, 2.0], [5.0, 6.0, 4.0]];
        assert!((&c - &expect).iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn smallest_singular_of_diagonal() {
        // rotated diag(3, 2, 1e-7): Q diag Q^T with a fixed rotation so the
        // singular vectors are nontrivial
        let q = array![
            [0.6, 0.0, 0.8],
            [0.0, 1.0, 0.0],
            [-0.8, 0.0, 0.6]
        ];
        let d = array![[3.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 1e-7]];
        let a = matmul(&matmul(&q, &d), &q.t().to_owned());
        let (s_min, s_next, v) = two_smallest_singular(&a).unwrap();
        assert!((s_min - 1e-7).abs() < 1e-10, "s_min = {s_min}");
        assert!((s_next - 2.0).abs() < 1e-6, "s_next = {s_next}");
        // smallest direction is the third column of q
        let align = 0.8 * v[0] + 0.6 * v[2];
        assert!(align.abs() > 0.999999, "align = {align}");
    }

    #[test]
    fn gram_matches_matmul() {
        let a = array![[1.0, 2.0], [0.5, -1.0], [2.0, 0.25]];
        let g = gram(&a);
        let at = a.t().to_owned();
        let g2 = matmul(&at, &a);
        assert!((&g - &g2).iter().all(|v| v.abs() < 1e-14));
    }
}
