use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The parameter triple (p, delta, eps) plus the spatial dimension n.
///
/// Every formula in the crate is governed by these four numbers: the growth
/// exponent `p >= 2`, the degeneracy shift `delta` in (0, 1), the
/// regularization weight `eps` in [0, 1] and the dimension `n >= 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub p: f64,
    pub delta: f64,
    pub eps: f64,
    pub n: usize,
}

impl Params {
    pub fn new(p: f64, delta: f64, eps: f64, n: usize) -> Result<Self> {
        let params = Params { p, delta, eps, n };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.p.is_finite() || self.p < 2.0 {
            return Err(Error::Parameter(format!("p must satisfy p >= 2, got {}", self.p)));
        }
        if !self.delta.is_finite() || self.delta <= 0.0 || self.delta >= 1.0 {
            return Err(Error::Parameter(format!(
                "delta must lie in (0, 1), got {}",
                self.delta
            )));
        }
        if !self.eps.is_finite() || self.eps < 0.0 || self.eps > 1.0 {
            return Err(Error::Parameter(format!(
                "eps must lie in [0, 1], got {}",
                self.eps
            )));
        }
        if self.n < 2 {
            return Err(Error::Parameter(format!("n must be >= 2, got {}", self.n)));
        }
        Ok(())
    }
}

/// Euclidean norm of a gradient vector.
pub fn norm(xi: &[f64]) -> f64 {
    xi.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Standard inner product.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn check_finite(xi: &[f64]) -> Result<()> {
    if xi.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("non-finite vector component".into()));
    }
    Ok(())
}

/// x^e with integer exponents evaluated by repeated multiplication so that
/// exact cases (p = 2, 3, 4, ...) stay reproducible across platforms.
pub fn pow(x: f64, e: f64) -> f64 {
    if e == 0.0 {
        return 1.0;
    }
    if e.fract() == 0.0 && e.abs() <= 64.0 {
        x.powi(e as i32)
    } else {
        x.powf(e)
    }
}
