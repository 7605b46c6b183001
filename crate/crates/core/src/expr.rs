//! Coefficient functions parsed from configuration expression strings.
//!
//! Problem definitions in JSON carry coefficients like `a1 = "4 + 0.4*x"` or
//! `b1 = "0.1*u1^3"`. This module compiles such strings into shared callable
//! closures. All the usual scalar functions (`sin`, `cos`, `exp`, ...) and the
//! constant `pi` are available.

use crate::{Error, Result};
use std::sync::Arc;

pub type Fn1 = Arc<dyn Fn(f64) -> f64>;
pub type Fn2 = Arc<dyn Fn(f64, f64) -> f64>;
pub type Fn3 = Arc<dyn Fn(f64, f64, f64) -> f64>;
pub type Fn4 = Arc<dyn Fn(f64, f64, f64, f64) -> f64>;

fn parse(src: &str) -> Result<meval::Expr> {
    src.parse::<meval::Expr>()
        .map_err(|e| Error::Config(format!("cannot parse expression {src:?}: {e}")))
}

/// Compile an expression of one variable.
pub fn parse1(src: &str, var: &str) -> Result<Fn1> {
    let f = parse(src)?
        .bind(var)
        .map_err(|e| Error::Config(format!("bad expression {src:?}: {e}")))?;
    Ok(Arc::new(f))
}

/// Compile an expression of two variables.
pub fn parse2(src: &str, v1: &str, v2: &str) -> Result<Fn2> {
    let f = parse(src)?
        .bind2(v1, v2)
        .map_err(|e| Error::Config(format!("bad expression {src:?}: {e}")))?;
    Ok(Arc::new(f))
}

/// Compile an expression of three variables.
pub fn parse3(src: &str, v1: &str, v2: &str, v3: &str) -> Result<Fn3> {
    let f = parse(src)?
        .bind3(v1, v2, v3)
        .map_err(|e| Error::Config(format!("bad expression {src:?}: {e}")))?;
    Ok(Arc::new(f))
}

/// Compile an expression of four variables.
pub fn parse4(src: &str, v1: &str, v2: &str, v3: &str, v4: &str) -> Result<Fn4> {
    let f = parse(src)?
        .bind4(v1, v2, v3, v4)
        .map_err(|e| Error::Config(format!("bad expression {src:?}: {e}")))?;
    Ok(Arc::new(f))
}

/// Constant function of one variable.
pub fn const1(c: f64) -> Fn1 {
    Arc::new(move |_| c)
}

/// Constant function of three variables.
pub fn const3(c: f64) -> Fn3 {
    Arc::new(move |_, _, _| c)
}

/// Constant function of four variables.
pub fn const4(c: f64) -> Fn4 {
    Arc::new(move |_, _, _, _| c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_evaluates() {
        let f = parse1("2 + sin(pi*x)", "x").unwrap();
        assert!((f(0.5) - 3.0).abs() < 1e-15);
        let g = parse3("x*u1 - u2^2", "x", "u1", "u2").unwrap();
        assert!((g(2.0, 3.0, 1.5) - (6.0 - 2.25)).abs() < 1e-15);
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse1("2 +* x", "x").is_err());
        assert!(parse1("y + 1", "x").is_err());
    }
}
