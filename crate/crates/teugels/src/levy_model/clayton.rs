//! The two-parameter Clayton-family Levy copula and its mixed partials.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Clayton-family Levy copula parameters: dependence strength `theta` > 0 and
/// positive/negative orthant split `eta` in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Clayton {
    pub theta: f64,
    pub eta: f64,
}

impl Clayton {
    pub fn new(theta: f64, eta: f64) -> Result<Self> {
        if !(theta > 0.0) || !theta.is_finite() {
            return Err(Error::Parameter(format!("clayton theta must be > 0, got {theta}")));
        }
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::Parameter(format!("clayton eta must lie in [0,1], got {eta}")));
        }
        Ok(Clayton { theta, eta })
    }

    /// Orthant factor: eta on the sign-aligned orthant, -(1-eta) otherwise.
    fn orthant(&self, u: &[f64]) -> f64 {
        let neg = u.iter().filter(|&&x| x < 0.0).count();
        if neg % 2 == 0 {
            self.eta
        } else {
            -(1.0 - self.eta)
        }
    }

    /// The copula function F(u) = 2^{2-n} (sum |u_j|^{-theta})^{-1/theta}
    /// times the orthant factor. Errors when any argument is zero.
    pub fn f(&self, u: &[f64]) -> Result<f64> {
        let n = u.len();
        if n < 2 {
            return Err(Error::Dimension("copula needs at least two arguments".into()));
        }
        if u.iter().any(|&x| x == 0.0 || !x.is_finite()) {
            return Err(Error::Domain("copula arguments must be nonzero and finite".into()));
        }
        Ok(self.core(u) * self.orthant(u) * (2.0f64).powi(2 - n as i32))
    }

    /// (sum |u_j|^{-theta})^{-1/theta}, computed overflow-safely by factoring
    /// out the smallest magnitude.
    fn core(&self, u: &[f64]) -> f64 {
        let m = u.iter().map(|x| x.abs()).fold(f64::INFINITY, f64::min);
        let s: f64 = u.iter().map(|x| (m / x.abs()).powf(self.theta)).sum();
        m * s.powf(-1.0 / self.theta)
    }

    /// Magnitude of the n-th mixed partial of F. Defined for n in {2, 3};
    /// the sign of the density contribution is handled by the caller through
    /// `density_factor`.
    fn mixed_partial_magnitude(&self, u: &[f64]) -> Result<f64> {
        let th = self.theta;
        let m = u.iter().map(|x| x.abs()).fold(f64::INFINITY, f64::min);
        let c: f64 = u.iter().map(|x| (m / x.abs()).powf(th)).sum();
        match u.len() {
            2 => {
                let big = u.iter().map(|x| x.abs()).fold(0.0, f64::max);
                Ok((1.0 + th) * c.powf(-1.0 / th - 2.0) * (m / big).powf(th) / big)
            }
            3 => {
                let prod: f64 = u.iter().map(|x| (m / x.abs()).powf(th + 1.0)).product();
                Ok(0.5 * (1.0 + th) * (1.0 + 2.0 * th) * c.powf(-1.0 / th - 3.0) * prod / (m * m))
            }
            n => Err(Error::Capability(format!(
                "closed-form Clayton mixed partial implemented for n in {{2,3}}, got {n}"
            ))),
        }
    }

    /// Mixed partial of F at u, including the orthant and sign factors. This
    /// is the factor appearing in the glued Levy density.
    pub fn density_factor(&self, u: &[f64]) -> Result<f64> {
        if u.iter().any(|&x| x == 0.0 || !x.is_finite()) {
            return Err(Error::Domain("copula arguments must be nonzero and finite".into()));
        }
        let sign_prod: f64 = u.iter().map(|x| x.signum()).product();
        Ok(self.mixed_partial_magnitude(u)? * sign_prod * self.orthant(u))
    }

    /// |dF/du_1| for n = 2: (1 + (|u1|/|u2|)^theta)^{-(1+theta)/theta}.
    /// Symmetric in the roles, so it also serves as |dF/du_2| with swapped
    /// arguments. Ranges in (0, 1).
    pub fn partial_one_magnitude(&self, u_own: f64, u_other: f64) -> f64 {
        let th = self.theta;
        let r = (u_own.abs() / u_other.abs()).powf(th);
        if !r.is_finite() {
            return 0.0;
        }
        (1.0 + r).powf(-(1.0 + th) / th)
    }

    /// Conditional tail mass P(|U_other| <= u_other, same-sign branch | u_own),
    /// normalised to 1 at u_other -> infinity. Used for closed-form inner
    /// integrals and conditional sampling.
    pub fn conditional_cdf(&self, u_own: f64, u_other_mag: f64) -> f64 {
        self.partial_one_magnitude(u_own, u_other_mag.copysign(1.0))
    }

    /// Inverse of `conditional_cdf` in the magnitude: given |u_own| and a
    /// uniform w in (0,1), returns |u_other| with conditional CDF w.
    pub fn conditional_quantile(&self, u_own_mag: f64, w: f64) -> f64 {
        let th = self.theta;
        let t = w.powf(-th / (1.0 + th)) - 1.0;
        if t <= 0.0 {
            return f64::INFINITY;
        }
        u_own_mag * t.powf(-1.0 / th)
    }

    /// Probability that the partner coordinate shares the sign of the
    /// conditioning coordinate.
    pub fn same_sign_prob(&self) -> f64 {
        self.eta
    }

    /// Mass of the outer rectangle {x_i beyond the tail levels}, given the
    /// signed tail values v_i = U_i(x_i): (-1)^{#negative} F(v).
    pub fn rectangle_mass(&self, v: &[f64]) -> Result<f64> {
        let neg = v.iter().filter(|&&x| x < 0.0).count();
        let f = self.f(v)?;
        let mass = if neg % 2 == 0 { f } else { -f };
        Ok(mass.max(0.0))
    }
}
