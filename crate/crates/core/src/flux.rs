//! Exact evaluation of the auxiliary scalar and vector functions: the
//! degenerate flux H, the nondegenerate companion V, the regularized operator
//! A, the gate g with its derivative, and the integrated gate G.

use crate::error::{Error, Result};
use crate::params::{check_finite, norm, pow, Params};
use crate::quad::{adaptive_simpson, DEFAULT_ABS_TOL, DEFAULT_MAX_SUBDIV};

/// H_lambda(xi) = (|xi| - 1)_+^lambda xi / |xi|, with the zero branch at
/// xi = 0. The positive part is computed first so the whole region
/// |xi| <= 1 maps to the exact zero vector.
pub fn eval_h(xi: &[f64], lambda: f64) -> Result<Vec<f64>> {
    check_finite(xi)?;
    if lambda <= 0.0 {
        return Err(Error::Parameter(format!("lambda must be > 0, got {lambda}")));
    }
    let r = norm(xi);
    let m = r - 1.0;
    if m <= 0.0 {
        return Ok(vec![0.0; xi.len()]);
    }
    let scale = pow(m, lambda) / r;
    Ok(xi.iter().map(|x| scale * x).collect())
}

/// V_p(xi) = (1 + |xi|^2)^{(p-2)/4} xi.
pub fn eval_v(xi: &[f64], p: f64) -> Result<Vec<f64>> {
    check_finite(xi)?;
    if p < 2.0 {
        return Err(Error::Parameter(format!("p must be >= 2, got {p}")));
    }
    let scale = pow(1.0 + norm(xi).powi(2), (p - 2.0) / 4.0);
    Ok(xi.iter().map(|x| scale * x).collect())
}

/// Regularized operator
/// A_eps(xi) = (|xi| - 1)_+^{p-1} xi/|xi| + eps (1 + |xi|^2)^{(p-2)/2} xi.
pub fn eval_a_eps(xi: &[f64], params: &Params) -> Result<Vec<f64>> {
    params.validate()?;
    check_finite(xi)?;
    let mut out = eval_h(xi, params.p - 1.0)?;
    if params.eps > 0.0 {
        let scale = params.eps * pow(1.0 + norm(xi).powi(2), (params.p - 2.0) / 2.0);
        for (o, x) in out.iter_mut().zip(xi) {
            *o += scale * x;
        }
    }
    Ok(out)
}

fn check_gate_args(s: f64, k: f64) -> Result<()> {
    if k <= 1.0 {
        return Err(Error::Parameter(format!("gate parameter k must be > 1, got {k}")));
    }
    if !s.is_finite() || s < 0.0 {
        return Err(Error::InvalidInput(format!("gate argument must be >= 0, got {s}")));
    }
    Ok(())
}

/// g_k(s) = s^2 / (k + s^2), a gate in [0, 1) nondecreasing in s.
pub fn eval_g(s: f64, k: f64) -> Result<f64> {
    check_gate_args(s, k)?;
    Ok(s * s / (k + s * s))
}

/// g_k'(s) = 2 k s / (k + s^2)^2.
pub fn eval_g_prime(s: f64, k: f64) -> Result<f64> {
    check_gate_args(s, k)?;
    let d = k + s * s;
    Ok(2.0 * k * s / (d * d))
}

/// Integrand of the integrated gate:
/// G_delta'(t) = t (t + delta)^{(p-2)/2} / sqrt(1 + delta + t^2).
pub fn eval_big_g_prime(t: f64, params: &Params) -> Result<f64> {
    params.validate()?;
    if !t.is_finite() || t < 0.0 {
        return Err(Error::InvalidInput(format!("t must be >= 0, got {t}")));
    }
    Ok(big_g_integrand(t, params.p, params.delta))
}

fn big_g_integrand(t: f64, p: f64, delta: f64) -> f64 {
    t * pow(t + delta, (p - 2.0) / 2.0) / (1.0 + delta + t * t).sqrt()
}

/// G_delta(t) = int_0^t s (s + delta)^{(p-2)/2} / sqrt(1 + delta + s^2) ds.
///
/// At p = 2 the closed form sqrt(1 + delta + t^2) - sqrt(1 + delta) is used;
/// otherwise adaptive Simpson at absolute tolerance 1e-10.
pub fn eval_big_g(t: f64, params: &Params) -> Result<f64> {
    params.validate()?;
    if !t.is_finite() || t < 0.0 {
        return Err(Error::InvalidInput(format!("t must be >= 0, got {t}")));
    }
    let (p, delta) = (params.p, params.delta);
    if p == 2.0 {
        return Ok((1.0 + delta + t * t).sqrt() - (1.0 + delta).sqrt());
    }
    Ok(adaptive_simpson(
        |s| big_g_integrand(s, p, delta),
        0.0,
        t,
        DEFAULT_ABS_TOL,
        DEFAULT_MAX_SUBDIV,
    ))
}

/// Directional derivative of A_eps: returns DA_eps(xi)[v].
///
/// On the degenerate set |xi| <= 1 the generalized Jacobian takes the zero
/// branch for the first term, so only the eps part contributes there.
pub fn a_eps_jacobian_apply(xi: &[f64], v: &[f64], params: &Params) -> Vec<f64> {
    let n = xi.len();
    let p = params.p;
    let r2 = xi.iter().map(|x| x * x).sum::<f64>();
    let r = r2.sqrt();
    let xv = xi.iter().zip(v).map(|(x, y)| x * y).sum::<f64>();
    let mut out = vec![0.0; n];

    let m = r - 1.0;
    if m > 0.0 {
        // D[(r-1)^{p-1} xi/r] v
        let a = (p - 1.0) * pow(m, p - 2.0) * xv / r2; // radial part coefficient on xi
        let b = pow(m, p - 1.0) / r;
        let c = pow(m, p - 1.0) * xv / (r2 * r);
        for i in 0..n {
            out[i] += a * xi[i] + b * v[i] - c * xi[i];
        }
    }
    if params.eps > 0.0 {
        let w = 1.0 + r2;
        let s = params.eps * pow(w, (p - 2.0) / 2.0);
        let ds = params.eps * (p - 2.0) * pow(w, (p - 4.0) / 2.0) * xv;
        for i in 0..n {
            out[i] += s * v[i] + ds * xi[i];
        }
    }
    out
}

/// Potential whose gradient is A_eps; the implicit Euler step minimizes the
/// sum of this over faces plus the mass and source terms.
pub fn a_eps_potential(xi: &[f64], params: &Params) -> f64 {
    let p = params.p;
    let r = norm(xi);
    let m = (r - 1.0).max(0.0);
    let mut e = pow(m, p) / p;
    if params.eps > 0.0 {
        e += params.eps / p * pow(1.0 + r * r, p / 2.0);
    }
    e
}
