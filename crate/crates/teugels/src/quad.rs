//! Adaptive Gauss-Kronrod quadrature.
//!
//! Workhorse for tail integrals, copula moments and the Hypothesis 1
//! certificate. Relative tolerance defaults to 1e-9 with an absolute floor of
//! 1e-14; nonconvergence surfaces as an error carrying the residual estimate.

use crate::error::{Error, Result};

pub const DEFAULT_REL_TOL: f64 = 1e-9;
pub const DEFAULT_ABS_FLOOR: f64 = 1e-14;

/// 15-point Kronrod abscissae on [-1, 1] (positive half).
#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144838258730,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];

/// 7-point Gauss weights.
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// 15-point Kronrod weights.
#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: f64,
    pub abs_err: f64,
    pub evals: usize,
}

fn qk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut res_g = fc * WG[3];
    let mut res_k = fc * WGK[7];
    let mut res_abs = res_k.abs();
    let mut fv = [0.0f64; 15];
    fv[7] = fc;
    for j in 0..7 {
        let x = half * XGK[j];
        let f1 = f(center - x);
        let f2 = f(center + x);
        fv[j] = f1;
        fv[14 - j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = res_k * 0.5;
    let mut res_asc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        res_asc += WGK[j] * ((fv[j] - mean).abs() + (fv[14 - j] - mean).abs());
    }
    let mut err = ((res_k - res_g) * half).abs();
    res_abs *= half.abs();
    res_asc *= half.abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    (res_k * half, err, res_abs)
}

/// Adaptive integral of `f` over the finite interval [a, b].
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64, abs_floor: f64) -> Result<QuadResult> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Domain("integrate requires finite endpoints".into()));
    }
    if a == b {
        return Ok(QuadResult {
            value: 0.0,
            abs_err: 0.0,
            evals: 0,
        });
    }
    const MAX_SEGS: usize = 4000;
    // (error, seq, a, b, value) max-heap by error with a deterministic tiebreak
    let mut segs: Vec<(f64, f64, f64, f64)> = Vec::new();
    let (v, e, _) = qk15(&f, a, b);
    segs.push((e, a, b, v));
    let mut evals = 15usize;
    loop {
        let total: f64 = segs.iter().map(|s| s.3).sum();
        let toterr: f64 = segs.iter().map(|s| s.0).sum();
        let target = (rel_tol * total.abs()).max(abs_floor);
        if toterr <= target {
            return Ok(QuadResult {
                value: total,
                abs_err: toterr,
                evals,
            });
        }
        if segs.len() >= MAX_SEGS {
            return Err(Error::Numeric(format!(
                "quadrature failed to converge: residual {toterr:.3e} over target {target:.3e} after {} segments",
                segs.len()
            )));
        }
        // split the worst segment; ties resolved by position for determinism
        let mut worst = 0usize;
        for (i, s) in segs.iter().enumerate() {
            if s.0 > segs[worst].0 || (s.0 == segs[worst].0 && s.1 < segs[worst].1) {
                worst = i;
            }
        }
        let (_, wa, wb, _) = segs.swap_remove(worst);
        let mid = 0.5 * (wa + wb);
        if mid <= wa || mid >= wb {
            return Err(Error::Numeric(
                "quadrature interval collapsed below machine resolution".into(),
            ));
        }
        let (v1, e1, _) = qk15(&f, wa, mid);
        let (v2, e2, _) = qk15(&f, mid, wb);
        evals += 30;
        segs.push((e1, wa, mid, v1));
        segs.push((e2, mid, wb, v2));
    }
}

/// Integral over [a, +inf) via the rational stretch x = a + s t/(1-t).
///
/// `scale` should roughly match the decay length of the integrand.
pub fn integrate_tail<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    scale: f64,
    rel_tol: f64,
    abs_floor: f64,
) -> Result<QuadResult> {
    if !(scale > 0.0) {
        return Err(Error::Parameter("tail scale must be positive".into()));
    }
    let g = |t: f64| {
        let om = 1.0 - t;
        if om <= 1e-14 {
            return 0.0;
        }
        let x = a + scale * t / om;
        let w = scale / (om * om);
        let y = f(x);
        if y == 0.0 {
            0.0
        } else {
            y * w
        }
    };
    integrate(g, 0.0, 1.0, rel_tol, abs_floor)
}

/// Integral over (0, b] for integrands that may vary over many decades near
/// zero. Geometric panels [b/2^{k+1}, b/2^k] are accumulated until the next
/// panel is negligible; runaway growth is reported as divergence.
pub fn integrate_down_to_zero<F: Fn(f64) -> f64>(
    f: F,
    b: f64,
    rel_tol: f64,
    abs_floor: f64,
) -> Result<QuadResult> {
    if !(b > 0.0) {
        return Err(Error::Domain("upper endpoint must be positive".into()));
    }
    let mut total = 0.0;
    let mut err = 0.0;
    let mut evals = 0usize;
    let mut hi = b;
    for _panel in 0..2000 {
        let lo = 0.5 * hi;
        let r = integrate(&f, lo, hi, rel_tol, abs_floor * 1e-2)?;
        total += r.value;
        err += r.abs_err;
        evals += r.evals;
        let target = (rel_tol * total.abs()).max(abs_floor);
        if r.value.abs() <= 0.25 * target && hi < b {
            // two consecutive negligible panels, plus a geometric-tail cushion
            return Ok(QuadResult {
                value: total,
                abs_err: err + r.value.abs(),
                evals,
            });
        }
        hi = lo;
        if hi < 1e-300 {
            return Err(Error::Numeric(
                "integrand mass does not decay towards zero: divergence suspected".into(),
            ));
        }
    }
    Err(Error::Numeric(format!(
        "integral down to zero did not settle; partial value {total:.6e}"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn polynomial_is_exact() {
        let r = integrate(|x| 3.0 * x * x, 0.0, 2.0, 1e-12, 1e-15).unwrap();
        assert_relative_eq!(r.value, 8.0, max_relative = 1e-13);
    }

    #[test]
    fn gaussian_tail() {
        let r = integrate_tail(|x| (-x * x / 2.0).exp(), 0.0, 1.0, 1e-10, 1e-14).unwrap();
        assert_relative_eq!(r.value, (std::f64::consts::PI / 2.0).sqrt(), max_relative = 1e-9);
    }

    #[test]
    fn exponential_over_x_tail() {
        // E1(1) = int_1^inf e^-x / x dx
        let r = integrate_tail(|x| (-x).exp() / x, 1.0, 1.0, 1e-10, 1e-14).unwrap();
        assert_relative_eq!(r.value, 0.21938393439552062, max_relative = 1e-9);
    }

    #[test]
    fn log_singularity_at_zero() {
        // int_0^1 ln(1/x) dx = 1
        let r = integrate_down_to_zero(|x| -(x.ln()), 1.0, 1e-10, 1e-14).unwrap();
        assert_relative_eq!(r.value, 1.0, max_relative = 1e-8);
    }

    #[test]
    fn divergence_is_reported() {
        assert!(integrate_down_to_zero(|x| 1.0 / x, 1.0, 1e-9, 1e-14).is_err());
    }
}
