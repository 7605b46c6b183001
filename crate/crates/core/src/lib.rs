//! Computation of time-periodic solutions of 1D semilinear hyperbolic problems
//! and their frequency locking under small time-periodic forcing.
//!
//! The library works with two problem classes on the strip `(t, x) in R x [0,1]`,
//! both 1-periodic in (rescaled) time:
//!
//! * 2x2 first-order systems with reflection boundary conditions
//!   `(1/T) d_t u_j + a_j(x) d_x u_j + b_j(x, u) = eps f_j(t, x)`,
//! * second-order wave equations
//!   `(1/T^2) d_tt u - a(x)^2 d_xx u + b(x, u, d_t u / T, d_x u) = eps f(t, x)`,
//!   which are handled through an equivalent first-order system in the
//!   Riemann-type invariants.
//!
//! The main pipeline: given an unforced solution `u0` (period 1, `T = 1`),
//! compute boundary-trace solvers for the principal part, the adjoint
//! solution `u*`, the phase function `Phi`, and then continue locked
//! solutions `u ~ S_phi(u0 + eps w)`, `T = 1 + eps tau` in the forced regime.

pub mod adjoint;
pub mod charops;
pub mod expr;
pub mod field;
pub mod grid;
pub mod linalg;
pub mod linsolve;
pub mod locking;
pub mod phase;
pub mod problem;
pub mod secondorder;

/// Errors surfaced by solvers and problem constructors.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A structural assumption of the method fails on the given data
    /// (non-resonance violated, degenerate kernel, contraction impossible, ...).
    #[error("assumption violated: {0}")]
    Assumption(String),
    /// An iteration failed to converge within its budget.
    #[error("no convergence: {0}")]
    NoConvergence(String),
    /// Malformed configuration / problem data.
    #[error("invalid problem data: {0}")]
    Config(String),
    /// Dense linear algebra failure (singular factorization etc.).
    #[error("linear algebra: {0}")]
    Linalg(String),
}

pub type Result<T> = std::result::Result<T, Error>;
