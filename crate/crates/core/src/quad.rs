//! Adaptive Simpson quadrature for the scalar auxiliary integrals.

/// Absolute tolerance used for the gate function integral.
pub const DEFAULT_ABS_TOL: f64 = 1e-10;
/// Cap on the number of interval subdivisions.
pub const DEFAULT_MAX_SUBDIV: usize = 10_000;

fn simpson(f: &impl Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
    let m = 0.5 * (a + b);
    let fm = f(m);
    let s = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    (m, fm, s)
}

/// Adaptive Simpson with absolute tolerance `tol` and a budget of at most
/// `max_subdiv` interval splits. The budget is generous for the smooth
/// integrands this crate feeds in; on exhaustion the current estimate is
/// returned.
pub fn adaptive_simpson(
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    tol: f64,
    max_subdiv: usize,
) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let (m, fm, whole) = simpson(&f, a, fa, b, fb);
    let mut budget = max_subdiv;
    recurse(&f, a, fa, m, fm, b, fb, whole, tol, 50, &mut budget)
}

#[allow(clippy::too_many_arguments)]
fn recurse(
    f: &impl Fn(f64) -> f64,
    a: f64,
    fa: f64,
    m: f64,
    fm: f64,
    b: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: usize,
    budget: &mut usize,
) -> f64 {
    let (lm, flm, left) = simpson(f, a, fa, m, fm);
    let (rm, frm, right) = simpson(f, m, fm, b, fb);
    let delta = left + right - whole;
    if depth == 0 || *budget == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    *budget -= 1;
    recurse(f, a, fa, lm, flm, m, fm, left, 0.5 * tol, depth - 1, budget)
        + recurse(f, m, fm, rm, frm, b, fb, right, 0.5 * tol, depth - 1, budget)
}

/// Composite Simpson on `panels` uniform panels. Used as an independent
/// oracle against the adaptive routine; `panels` must be even.
pub fn composite_simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    assert!(panels >= 2 && panels.is_multiple_of(2), "panels must be even");
    let h = (b - a) / panels as f64;
    let mut acc = f(a) + f(b);
    for i in 1..panels {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomial_exactly() {
        // Simpson is exact on cubics.
        let v = adaptive_simpson(|x| x * x * x - 2.0 * x, 0.0, 2.0, 1e-12, 100);
        assert!((v - 0.0).abs() < 1e-12);
    }

    #[test]
    fn matches_composite_on_smooth_integrand() {
        let f = |x: f64| (1.0 + x * x).sqrt() * x.sin();
        let a = adaptive_simpson(f, 0.0, 3.0, 1e-11, 10_000);
        let c = composite_simpson(f, 0.0, 3.0, 100_000);
        assert!((a - c).abs() < 1e-9, "adaptive {a} vs composite {c}");
    }
}
