//! One-dimensional marginal Levy densities and their tail integrals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;

/// Arguments closer to zero than this are treated as divergent by
/// `tail_integral` (the infinite-activity marginals blow up at the origin).
pub const TAIL_X_CUTOFF: f64 = 1e-12;

/// Named marginal Levy density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Marginal {
    /// gamma subordinator marginal: shape * exp(-rate x) / x on (0, inf).
    Gamma { shape: f64, rate: f64 },
    /// Meixner marginal: m exp(a x) / (x sinh(pi x)) on the whole line.
    Meixner { m: f64, a: f64 },
}

impl Marginal {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Marginal::Gamma { shape, rate } => {
                if !(shape > 0.0 && rate > 0.0) {
                    return Err(Error::Parameter(format!(
                        "gamma marginal needs shape > 0 and rate > 0, got shape={shape} rate={rate}"
                    )));
                }
            }
            Marginal::Meixner { m, a } => {
                if !(m > 0.0) {
                    return Err(Error::Parameter(format!("meixner marginal needs m > 0, got {m}")));
                }
                if !(-std::f64::consts::PI..=std::f64::consts::PI).contains(&a)
                    || a.abs() == std::f64::consts::PI
                {
                    return Err(Error::Parameter(format!(
                        "meixner marginal needs a in (-pi, pi), got {a}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Levy density at x (zero off the support).
    pub fn density(&self, x: f64) -> f64 {
        match *self {
            Marginal::Gamma { shape, rate } => {
                if x <= 0.0 {
                    0.0
                } else {
                    shape * (-rate * x).exp() / x
                }
            }
            Marginal::Meixner { m, a } => {
                if x == 0.0 {
                    return 0.0;
                }
                let y = x.abs();
                // m e^{ax} / (x sinh(pi x)) in overflow- and cancellation-safe form
                let s = a * x - std::f64::consts::PI * y;
                let denom = -(-2.0 * std::f64::consts::PI * y).exp_m1();
                2.0 * m * s.exp() / (y * denom)
            }
        }
    }

    pub fn has_positive_support(&self) -> bool {
        true
    }

    pub fn has_negative_support(&self) -> bool {
        matches!(self, Marginal::Meixner { .. })
    }

    /// Exponential decay rate of the upper tail: density ~ C e^{-rate x}.
    pub fn decay_rate_pos(&self) -> f64 {
        match *self {
            Marginal::Gamma { rate, .. } => rate,
            Marginal::Meixner { a, .. } => std::f64::consts::PI - a,
        }
    }

    /// Exponential decay rate of the lower tail (infinite when there is none).
    pub fn decay_rate_neg(&self) -> f64 {
        match *self {
            Marginal::Gamma { .. } => f64::INFINITY,
            Marginal::Meixner { a, .. } => std::f64::consts::PI + a,
        }
    }
}

/// Signed tail integral U(x): the measure of [x, inf) for x > 0, and
/// -measure((-inf, x]) for x < 0. Computed by adaptive quadrature at
/// relative tolerance 1e-9.
pub fn tail_integral(marginal: &Marginal, x: f64) -> Result<f64> {
    if x == 0.0 || x.abs() < TAIL_X_CUTOFF {
        return Err(Error::Numeric(format!(
            "tail integral diverges as the argument approaches zero (x = {x})"
        )));
    }
    if x > 0.0 {
        if !marginal.has_positive_support() {
            return Ok(0.0);
        }
        let scale = 1.0 / marginal.decay_rate_pos();
        let r = quad::integrate_tail(
            |y| marginal.density(y),
            x,
            scale.max(x.abs() * 0.1),
            quad::DEFAULT_REL_TOL,
            quad::DEFAULT_ABS_FLOOR,
        )?;
        Ok(r.value)
    } else {
        if !marginal.has_negative_support() {
            return Ok(0.0);
        }
        let scale = 1.0 / marginal.decay_rate_neg();
        let r = quad::integrate_tail(
            |y| marginal.density(-y),
            -x,
            scale.max(x.abs() * 0.1),
            quad::DEFAULT_REL_TOL,
            quad::DEFAULT_ABS_FLOOR,
        )?;
        Ok(-r.value)
    }
}

/// Tabulated magnitude of one tail of a marginal, with interpolation in
/// both directions. Built once per model and reused by the bulk moment and
/// sampling paths; node values come from the same quadrature that backs
/// `tail_integral`.
#[derive(Debug, Clone)]
pub struct TailCurve {
    /// log-spaced abscissae, increasing
    ln_x: Vec<f64>,
    /// ln of tail magnitude at each abscissa, decreasing
    ln_u: Vec<f64>,
    /// d ln_u / d ln_x at each abscissa (= -x density(x) / U(x))
    slope: Vec<f64>,
    pub x_min: f64,
    pub x_max: f64,
}

impl TailCurve {
    /// Build the curve for the given side (+1 upper tail, -1 lower tail)
    /// covering [x_lo, x_hi] in magnitude.
    pub fn build(marginal: &Marginal, side: i8, x_lo: f64, x_hi: f64, points: usize) -> Result<Self> {
        assert!(side == 1 || side == -1);
        assert!(x_lo > 0.0 && x_hi > x_lo && points >= 16);
        let dens = |y: f64| -> f64 {
            if side == 1 {
                marginal.density(y)
            } else {
                marginal.density(-y)
            }
        };
        let ln_lo = x_lo.ln();
        let ln_hi = x_hi.ln();
        let mut ln_x = Vec::with_capacity(points);
        for k in 0..points {
            ln_x.push(ln_lo + (ln_hi - ln_lo) * k as f64 / (points - 1) as f64);
        }
        let xs: Vec<f64> = ln_x.iter().map(|l| l.exp()).collect();
        // tail beyond the last node
        let rate = if side == 1 {
            marginal.decay_rate_pos()
        } else {
            marginal.decay_rate_neg()
        };
        let tail = quad::integrate_tail(dens, x_hi, (1.0 / rate).max(0.1 * x_hi), 1e-11, 1e-300)?;
        let mut u = vec![0.0; points];
        u[points - 1] = tail.value;
        for k in (0..points - 1).rev() {
            let seg = quad::integrate(dens, xs[k], xs[k + 1], 1e-11, 1e-300)?;
            u[k] = u[k + 1] + seg.value;
        }
        let mut ln_u = Vec::with_capacity(points);
        let mut slope = Vec::with_capacity(points);
        for k in 0..points {
            if !(u[k] > 0.0) {
                return Err(Error::Numeric("tail curve hit zero mass".into()));
            }
            ln_u.push(u[k].ln());
            slope.push(-xs[k] * dens(xs[k]) / u[k]);
        }
        Ok(TailCurve {
            ln_x,
            ln_u,
            slope,
            x_min: x_lo,
            x_max: x_hi,
        })
    }

    fn hermite(t: f64, y0: f64, y1: f64, d0: f64, d1: f64, h: f64) -> f64 {
        let t2 = t * t;
        let t3 = t2 * t;
        y0 * (2.0 * t3 - 3.0 * t2 + 1.0)
            + d0 * h * (t3 - 2.0 * t2 + t)
            + y1 * (-2.0 * t3 + 3.0 * t2)
            + d1 * h * (t3 - t2)
    }

    /// Tail magnitude at |x| (clamped to the tabulated range).
    pub fn u_at(&self, x_mag: f64) -> f64 {
        let lx = x_mag.max(self.x_min).min(self.x_max).ln();
        let n = self.ln_x.len();
        let pos = match self
            .ln_x
            .binary_search_by(|v| v.partial_cmp(&lx).unwrap())
        {
            Ok(k) => return self.ln_u[k].exp(),
            Err(k) => k.clamp(1, n - 1),
        };
        let (k0, k1) = (pos - 1, pos);
        let h = self.ln_x[k1] - self.ln_x[k0];
        let t = (lx - self.ln_x[k0]) / h;
        Self::hermite(t, self.ln_u[k0], self.ln_u[k1], self.slope[k0], self.slope[k1], h).exp()
    }

    /// Magnitude |x| with tail mass u (clamped to the tabulated range).
    pub fn x_at(&self, u: f64) -> f64 {
        let n = self.ln_u.len();
        if u >= self.ln_u[0].exp() {
            return self.x_min;
        }
        if u <= self.ln_u[n - 1].exp() {
            return self.x_max;
        }
        let lu = u.ln();
        // ln_u is strictly decreasing
        let mut lo = 0usize;
        let mut hi = n - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.ln_u[mid] > lu {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let h = self.ln_u[hi] - self.ln_u[lo];
        let t = (lu - self.ln_u[lo]) / h;
        let inv0 = 1.0 / self.slope[lo];
        let inv1 = 1.0 / self.slope[hi];
        Self::hermite(t, self.ln_x[lo], self.ln_x[hi], inv0, inv1, h).exp()
    }
}
