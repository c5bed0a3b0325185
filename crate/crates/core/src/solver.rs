//! Backward-Euler solver for the regularized flows
//! u_t - div A_eps(Du) = f with Dirichlet data on the parabolic boundary,
//! plus the mollification of the source term.
//!
//! Each implicit step minimizes the strictly convex objective
//!   F(u) = sum_i vol [ (u_i - u_prev_i)^2 / (2 dt) - f_i u_i ] + E_Phi(u),
//! where E_Phi sums the flux potential over grid cells with the gradient
//! reconstructed at each cell center (each component is the average of the
//! cell's parallel edge differences, i.e. the multilinear element gradient
//! at the midpoint). The minimizer satisfies the conservative discrete
//! equation (u - u_prev)/dt - div_h A_eps(D_h u) = f.
//! The nonlinear solve is a semismooth Newton iteration (the generalized
//! Jacobian takes the zero branch of the degenerate term on |Du| <= 1) with
//! matrix-free conjugate gradients and Armijo backtracking on F; when the
//! Newton direction stalls it falls back to a gradient step preconditioned
//! by the mass term, which is a contraction for small dt thanks to the
//! eps-ellipticity.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::flux::{a_eps_jacobian_apply, a_eps_potential, eval_a_eps};
use crate::grid::{Grid, ScalarField};
use crate::params::Params;

/// Time-dependent Dirichlet trace g(x, t) on the parabolic boundary.
pub type TraceFn = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy)]
pub struct NonlinearSettings {
    pub max_iter: usize,
    /// sup-norm tolerance on the pointwise equation residual
    pub abs_tol: f64,
    /// initial line-search step factor
    pub damping: f64,
    /// enable the preconditioned gradient fallback when Newton stalls
    pub fallback: bool,
}

impl Default for NonlinearSettings {
    fn default() -> Self {
        NonlinearSettings {
            max_iter: 60,
            abs_tol: 1e-9,
            damping: 1.0,
            fallback: true,
        }
    }
}

impl NonlinearSettings {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter < 1 {
            return Err(Error::Parameter("max_iter must be >= 1".into()));
        }
        if !(self.abs_tol > 0.0) {
            return Err(Error::Parameter("abs_tol must be > 0".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::Parameter("damping must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// One regularized initial-boundary value problem on a grid.
pub struct ProblemSpec {
    pub params: Params,
    pub grid: Arc<Grid>,
    /// source term, in units of u per time; mollify separately if desired
    pub f: ScalarField,
    /// spatial slice at the initial time level
    pub initial: Vec<f64>,
    pub boundary: TraceFn,
    pub newton: NonlinearSettings,
}

impl ProblemSpec {
    /// `for_solve` additionally demands eps > 0 (eps = 0 is admitted only
    /// for residual evaluation).
    pub fn validate(&self, for_solve: bool) -> Result<()> {
        self.params.validate()?;
        self.newton.validate()?;
        if self.params.n != self.grid.n {
            return Err(Error::Precondition("params.n does not match grid".into()));
        }
        if for_solve && !(self.params.eps > 0.0) {
            return Err(Error::Precondition(
                "eps must be > 0 to solve; eps = 0 only evaluates residuals".into(),
            ));
        }
        if self.initial.len() != self.grid.spatial_len() {
            return Err(Error::Precondition("initial slice length mismatch".into()));
        }
        if self.f.grid().as_ref() != self.grid.as_ref() {
            return Err(Error::Precondition("source field lives on another grid".into()));
        }
        // initial and boundary traces must agree on the corner of the
        // parabolic boundary
        let t0 = self.grid.t0;
        for i in 0..self.grid.spatial_len() {
            if is_boundary(&self.grid, i) {
                let x = self.grid.coords(i);
                let g = (self.boundary)(&x, t0);
                if (g - self.initial[i]).abs() > 1e-8 * (1.0 + g.abs()) {
                    return Err(Error::Precondition(format!(
                        "initial and boundary data disagree at x = {x:?}: {} vs {g}",
                        self.initial[i]
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLog {
    pub step: usize,
    pub iters: usize,
    pub residual: f64,
}

pub struct Solution {
    pub u: ScalarField,
    pub logs: Vec<StepLog>,
}

pub fn is_boundary(grid: &Grid, spatial: usize) -> bool {
    let mi = grid.multi_index(spatial);
    (0..grid.n).any(|s| mi[s] == 0 || mi[s] + 1 == grid.nx[s])
}

/// Cell-based discrete operator for the flux potential on one spatial
/// slice. The gradient is reconstructed at each cell center: component s is
/// the average of the cell's 2^{n-1} edge differences in direction s (the
/// multilinear element gradient at the cell midpoint, second-order there).
/// The adjoint distributes the flux back onto the cell corners, so the
/// assembled operator needs no boundary stencils and its nodal equations
/// are pointwise consistent with -div A_eps up to O(h^2).
struct FluxOperator<'a> {
    grid: &'a Grid,
    params: &'a Params,
    /// flat offsets of the 2^n cell corners from the lower corner node
    corner_offsets: Vec<usize>,
    /// corner_masks[k] = axis bitmask of corner k
    corner_masks: Vec<usize>,
    /// lower-corner node index of every cell
    cells: Vec<usize>,
}

impl<'a> FluxOperator<'a> {
    fn new(grid: &'a Grid, params: &'a Params) -> Self {
        let n = grid.n;
        let mut corner_offsets = Vec::with_capacity(1 << n);
        let mut corner_masks = Vec::with_capacity(1 << n);
        for mask in 0..(1usize << n) {
            let mut off = 0;
            for s in 0..n {
                if mask & (1 << s) != 0 {
                    off += grid.stride(s);
                }
            }
            corner_offsets.push(off);
            corner_masks.push(mask);
        }
        let cells = (0..grid.spatial_len())
            .filter(|&i| {
                let mi = grid.multi_index(i);
                (0..n).all(|s| mi[s] + 1 < grid.nx[s])
            })
            .collect();
        FluxOperator {
            grid,
            params,
            corner_offsets,
            corner_masks,
            cells,
        }
    }

    /// Multilinear gradient at the center of the cell with lower corner `i`.
    fn cell_xi(&self, vals: &[f64], i: usize) -> Vec<f64> {
        let n = self.grid.n;
        let pairs = (1usize << (n - 1)) as f64;
        let mut xi = vec![0.0; n];
        for (off, mask) in self.corner_offsets.iter().zip(&self.corner_masks) {
            let v = vals[i + off];
            for s in 0..n {
                if mask & (1 << s) != 0 {
                    xi[s] += v;
                } else {
                    xi[s] -= v;
                }
            }
        }
        for s in 0..n {
            xi[s] /= pairs * self.grid.spacing(s);
        }
        xi
    }

    /// out += (d xi_cell / d u)^T w for the cell at lower corner `i`.
    fn distribute(&self, i: usize, w: &[f64], out: &mut [f64]) {
        let n = self.grid.n;
        let pairs = (1usize << (n - 1)) as f64;
        for (off, mask) in self.corner_offsets.iter().zip(&self.corner_masks) {
            let mut acc = 0.0;
            for s in 0..n {
                let c = 1.0 / (pairs * self.grid.spacing(s));
                if mask & (1 << s) != 0 {
                    acc += w[s] * c;
                } else {
                    acc -= w[s] * c;
                }
            }
            out[i + off] += acc;
        }
    }

    /// E_Phi(u) = vol * sum_cells Phi(xi_cell).
    fn energy(&self, vals: &[f64]) -> f64 {
        let w = self.grid.cell_volume();
        self.cells
            .iter()
            .map(|&i| a_eps_potential(&self.cell_xi(vals, i), self.params) * w)
            .sum()
    }

    /// out += dE_Phi/du.
    fn add_gradient(&self, vals: &[f64], out: &mut [f64]) -> Result<()> {
        let w = self.grid.cell_volume();
        for &i in &self.cells {
            let xi = self.cell_xi(vals, i);
            let mut a = eval_a_eps(&xi, self.params)?;
            for v in a.iter_mut() {
                *v *= w;
            }
            self.distribute(i, &a, out);
        }
        Ok(())
    }

    /// out += d^2 E_Phi(u)[v] using the generalized Jacobian of A_eps.
    fn add_hessian_apply(&self, vals: &[f64], v: &[f64], out: &mut [f64]) {
        let w = self.grid.cell_volume();
        for &i in &self.cells {
            let xi = self.cell_xi(vals, i);
            let nu = self.cell_xi(v, i);
            let mut dv = a_eps_jacobian_apply(&xi, &nu, self.params);
            for x in dv.iter_mut() {
                *x *= w;
            }
            self.distribute(i, &dv, out);
        }
    }
}

/// Conjugate gradients on an implicit SPD operator; returns the iterate and
/// whether the relative tolerance was met.
fn cg_solve(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    rel_tol: f64,
    max_iter: usize,
) -> (Vec<f64>, bool) {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u * v).sum::<f64>();
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        return (x, true);
    }
    let mut rr = dot(&r, &r);
    for _ in 0..max_iter {
        if rr.sqrt() <= rel_tol * b_norm {
            return (x, true);
        }
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            // operator not positive along p (should not happen for a convex
            // potential); bail out with the current iterate
            return (x, false);
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    (x, rr.sqrt() <= rel_tol * b_norm)
}

/// Full objective of the implicit step (boundary entries of `u` are fixed).
fn objective(
    op: &FluxOperator,
    u: &[f64],
    u_prev: &[f64],
    f: &[f64],
    dt: f64,
) -> f64 {
    let vol = op.grid.cell_volume();
    let mut acc = op.energy(u);
    for i in 0..u.len() {
        let d = u[i] - u_prev[i];
        acc += vol * (d * d / (2.0 * dt) - f[i] * u[i]);
    }
    acc
}

/// Gradient of the objective, zeroed on boundary nodes. Returns
/// (gradient, sup-norm of the pointwise equation residual).
fn objective_gradient(
    op: &FluxOperator,
    u: &[f64],
    u_prev: &[f64],
    f: &[f64],
    dt: f64,
    interior: &[bool],
) -> Result<(Vec<f64>, f64)> {
    let vol = op.grid.cell_volume();
    let mut g = vec![0.0; u.len()];
    op.add_gradient(u, &mut g)?;
    let mut sup = 0.0_f64;
    for i in 0..u.len() {
        if !interior[i] {
            g[i] = 0.0;
            continue;
        }
        g[i] += vol * ((u[i] - u_prev[i]) / dt - f[i]);
        sup = sup.max(g[i].abs() / vol);
    }
    Ok((g, sup))
}

/// One backward-Euler step: solves
/// (u - u_prev)/dt - div_h A_eps(D_h u) = f_slice on interior nodes with the
/// Dirichlet trace imposed at time `t_new`. `guess` optionally overrides the
/// initial Newton iterate on interior nodes.
pub fn step(
    u_prev: &[f64],
    t_new: f64,
    f_slice: &[f64],
    spec: &ProblemSpec,
    guess: Option<&[f64]>,
) -> Result<(Vec<f64>, StepLog)> {
    let grid = &spec.grid;
    let sp = grid.spatial_len();
    let dt = grid.dt;
    let vol = grid.cell_volume();
    let op = FluxOperator::new(grid, &spec.params);
    let interior: Vec<bool> = (0..sp).map(|i| !is_boundary(grid, i)).collect();

    let mut u: Vec<f64> = match guess {
        Some(g) => g.to_vec(),
        None => u_prev.to_vec(),
    };
    for i in 0..sp {
        if !interior[i] {
            u[i] = (spec.boundary)(&grid.coords(i), t_new);
        }
    }

    let mut last_res = f64::INFINITY;
    let mut res0 = f64::INFINITY;
    for iter in 0..spec.newton.max_iter {
        let (g, res) = objective_gradient(&op, &u, u_prev, f_slice, dt, &interior)?;
        log::debug!("newton t={t_new} iter={iter} res={res:.3e}");
        if iter == 0 {
            res0 = res;
        }
        last_res = res;
        if res <= spec.newton.abs_tol {
            return Ok((
                u,
                StepLog {
                    step: 0,
                    iters: iter,
                    residual: res,
                },
            ));
        }

        let hess = |v: &[f64]| {
            let mut hv = vec![0.0; sp];
            op.add_hessian_apply(&u, v, &mut hv);
            for i in 0..sp {
                if interior[i] {
                    hv[i] += vol / dt * v[i];
                } else {
                    hv[i] = 0.0;
                }
            }
            hv
        };
        let b: Vec<f64> = g.iter().map(|x| -x).collect();
        let (mut d, _) = cg_solve(
            |v| {
                // mask the Krylov space to interior nodes
                let mut vm = v.to_vec();
                for i in 0..sp {
                    if !interior[i] {
                        vm[i] = 0.0;
                    }
                }
                hess(&vm)
            },
            &b,
            // tighten the linear solves as the outer residual shrinks so the
            // late Newton directions are accurate enough to keep contracting
            (1e-3 * res).clamp(1e-12, 1e-6),
            4 * sp,
        );
        for i in 0..sp {
            if !interior[i] {
                d[i] = 0.0;
            }
        }

        // In the locally convergent regime the objective (a strictly convex
        // implicit-Euler functional) can no longer resolve the predicted
        // decrease above rounding, so an objective-based line search stalls.
        // Accept the full Newton step outright there.
        if res <= 1e-4 || res <= 1e-3 * res0 {
            for i in 0..sp {
                u[i] += d[i];
            }
            continue;
        }

        let gd: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
        let f0 = objective(&op, &u, u_prev, f_slice, dt);
        let mut accepted = try_armijo(&op, &mut u, &d, gd, f0, u_prev, f_slice, dt, spec.newton.damping);
        if !accepted && spec.newton.fallback {
            // gradient step preconditioned by the mass term
            let d_fb: Vec<f64> = b.iter().map(|x| x * dt / vol).collect();
            let gd_fb: f64 = g.iter().zip(&d_fb).map(|(a, b)| a * b).sum();
            accepted = try_armijo(&op, &mut u, &d_fb, gd_fb, f0, u_prev, f_slice, dt, 1.0);
        }
        if !accepted {
            return Err(Error::SolverStall {
                time: t_new,
                residual: res,
                iters: iter,
            });
        }
    }
    Err(Error::SolverStall {
        time: t_new,
        residual: last_res,
        iters: spec.newton.max_iter,
    })
}

#[allow(clippy::too_many_arguments)]
fn try_armijo(
    op: &FluxOperator,
    u: &mut Vec<f64>,
    d: &[f64],
    gd: f64,
    f0: f64,
    u_prev: &[f64],
    f: &[f64],
    dt: f64,
    start: f64,
) -> bool {
    if !(gd < 0.0) {
        return false;
    }
    let mut t = start;
    for _ in 0..40 {
        let trial: Vec<f64> = u.iter().zip(d).map(|(a, b)| a + t * b).collect();
        let ft = objective(op, &trial, u_prev, f, dt);
        // near the minimizer the predicted decrease drops below the rounding
        // level of the objective; accept rounding-level non-increase so the
        // final Newton steps are not rejected spuriously
        let round_slack = 8.0 * f64::EPSILON * (1.0 + f0.abs());
        if ft <= f0 + 1e-4 * t * gd + round_slack {
            *u = trial;
            return true;
        }
        t *= 0.5;
    }
    false
}

/// Full evolution: backward Euler over all time levels, recording per-step
/// Newton iteration counts and final residuals.
pub fn solve(spec: &ProblemSpec) -> Result<Solution> {
    spec.validate(true)?;
    let grid = spec.grid.clone();
    let mut u = ScalarField::zeros(grid.clone());
    u.set_slice(0, &spec.initial);
    let mut logs = Vec::with_capacity(grid.nt.saturating_sub(1));
    let mut prev = spec.initial.clone();
    for it in 1..grid.nt {
        let t = grid.time(it);
        let (next, mut log) = step(&prev, t, spec.f.slice(it), spec, None)
            .map_err(|e| Error::SolveStep {
                step: it,
                source: Box::new(e),
            })?;
        log.step = it;
        logs.push(log);
        u.set_slice(it, &next);
        prev = next;
    }
    Ok(Solution { u, logs })
}

/// Strong pointwise residual (u_t - div_h A_eps(D_h u) - f) on interior
/// nodes at time levels >= 1; zero elsewhere. Admits eps = 0.
pub fn residual(u: &ScalarField, spec: &ProblemSpec) -> Result<ScalarField> {
    spec.validate(false)?;
    if u.grid().as_ref() != spec.grid.as_ref() {
        return Err(Error::Precondition("field lives on another grid".into()));
    }
    let grid = &spec.grid;
    let sp = grid.spatial_len();
    let vol = grid.cell_volume();
    let op = FluxOperator::new(grid, &spec.params);
    let mut out = ScalarField::zeros(grid.clone());
    for it in 1..grid.nt {
        let vals = u.slice(it);
        let prev = u.slice(it - 1);
        let f = spec.f.slice(it);
        let mut de = vec![0.0; sp];
        op.add_gradient(vals, &mut de)?;
        for i in 0..sp {
            if is_boundary(grid, i) {
                continue;
            }
            let r = (vals[i] - prev[i]) / grid.dt + de[i] / vol - f[i];
            out.set(it, i, r);
        }
    }
    Ok(out)
}

/// Space-time mollification with a normalized tensor-product bump
/// (1 - r^2)^3 of radius `eps` per axis, applied separably with even
/// reflection at the ends. The resulting per-axis averaging matrix is
/// nonnegative and row-stochastic, so the L^2 norm never increases; the
/// total integral is preserved exactly for fields supported away from the
/// boundary.
pub fn mollify(f: &ScalarField, eps: f64) -> Result<ScalarField> {
    if !(eps >= 0.0) {
        return Err(Error::Parameter(format!("eps must be >= 0, got {eps}")));
    }
    if eps == 0.0 {
        return Ok(f.clone());
    }
    let grid = f.grid().clone();
    // axis layout: spatial axes then time
    let mut shape: Vec<usize> = grid.nx.clone();
    shape.push(grid.nt);
    let mut spacing: Vec<f64> = (0..grid.n).map(|s| grid.spacing(s)).collect();
    spacing.push(grid.dt);
    for (s, (&m, &h)) in shape.iter().zip(&spacing).enumerate() {
        let taps = (eps / h).ceil() as usize - 1;
        if taps >= m {
            return Err(Error::Parameter(format!(
                "mollifier radius {eps} too large for axis {s}"
            )));
        }
    }

    let mut values = f.values().to_vec();
    let sp = grid.spatial_len();
    for axis in 0..=grid.n {
        let h = spacing[axis];
        let m = shape[axis];
        let mut taps = 0usize;
        while (taps + 1) as f64 * h < eps {
            taps += 1;
        }
        if taps == 0 {
            continue;
        }
        // normalized symmetric kernel weights
        let mut w = vec![0.0; taps + 1];
        for (j, wj) in w.iter_mut().enumerate() {
            let r = j as f64 * h / eps;
            *wj = (1.0 - r * r).powi(3);
        }
        let total = w[0] + 2.0 * w[1..].iter().sum::<f64>();
        for wj in w.iter_mut() {
            *wj /= total;
        }
        let (stride, lanes, lane_stride, count) = if axis < grid.n {
            // spatial axis, applied within each time slice
            (grid.stride(axis), grid.nt, sp, sp / m)
        } else {
            // time axis
            (sp, 1, 0, sp)
        };
        let src = values.clone();
        for lane in 0..lanes {
            let base = lane * lane_stride;
            // iterate over all 1-D pencils along `axis`
            for pencil in 0..count {
                // compute the flat index of the pencil's first element
                let mut rem = pencil;
                let mut start = 0usize;
                if axis < grid.n {
                    for s in 0..grid.n {
                        if s == axis {
                            continue;
                        }
                        let st = grid.stride(s);
                        let sz = grid.nx[s];
                        let i = rem % sz;
                        rem /= sz;
                        start += i * st;
                    }
                } else {
                    start = pencil;
                }
                for k in 0..m {
                    let mut acc = w[0] * src[base + start + k * stride];
                    for j in 1..=taps {
                        let kl = reflect(k as i64 - j as i64, m);
                        let kr = reflect(k as i64 + j as i64, m);
                        acc += w[j] * (src[base + start + kl * stride] + src[base + start + kr * stride]);
                    }
                    values[base + start + k * stride] = acc;
                }
            }
        }
    }
    ScalarField::from_values(grid, values)
}

/// Even reflection of an index about the end nodes 0 and m-1.
fn reflect(k: i64, m: usize) -> usize {
    let m = m as i64;
    let mut k = k;
    loop {
        if k < 0 {
            k = -k;
        } else if k >= m {
            k = 2 * (m - 1) - k;
        } else {
            return k as usize;
        }
    }
}

/// Manufactured nondegenerate profile used by the convergence studies:
/// u*(x, t) = 1.5 (x1 + x2) + 0.2 sin(x1) sin(x2) cos(t) on n = 2, with
/// |Du*| >= 1.5 everywhere, and the matching forcing
/// f = u*_t - div A_eps(Du*) evaluated analytically.
pub mod manufactured {
    use super::*;

    pub fn exact(x: &[f64], t: f64) -> f64 {
        1.5 * (x[0] + x[1]) + 0.2 * x[0].sin() * x[1].sin() * t.cos()
    }

    pub fn exact_gradient(x: &[f64], t: f64) -> [f64; 2] {
        let c = t.cos();
        [
            1.5 + 0.2 * x[0].cos() * x[1].sin() * c,
            1.5 + 0.2 * x[0].sin() * x[1].cos() * c,
        ]
    }

    /// Hessian columns d/dx_s Du*.
    fn hessian_cols(x: &[f64], t: f64) -> [[f64; 2]; 2] {
        let c = t.cos();
        let a = -0.2 * x[0].sin() * x[1].sin() * c;
        let b = 0.2 * x[0].cos() * x[1].cos() * c;
        [[a, b], [b, a]]
    }

    pub fn forcing(x: &[f64], t: f64, params: &Params) -> f64 {
        let ut = -0.2 * x[0].sin() * x[1].sin() * t.sin();
        let du = exact_gradient(x, t);
        let cols = hessian_cols(x, t);
        let mut div = 0.0;
        for s in 0..2 {
            div += a_eps_jacobian_apply(&du, &cols[s], params)[s];
        }
        ut - div
    }
}
