//! Scalar abstraction shared by the Gram-Schmidt elimination and the
//! polynomial bookkeeping: floating point for production runs, exact
//! rationals where roundoff must not enter.

use num_rational::BigRational;
use num_traits::{FromPrimitive, Num, Signed, ToPrimitive};

/// Field the triangular eliminations and polynomial coefficients live in.
pub trait Scalar: Clone + PartialOrd + Num + Signed + std::fmt::Debug {
    /// Exact scalars make rank decisions by exact zero tests.
    const EXACT: bool;

    /// Lossless conversion from a finite f64 (every finite float is rational).
    fn from_f64_lossless(x: f64) -> Self;

    fn to_f64_approx(&self) -> f64;
}

impl Scalar for f64 {
    const EXACT: bool = false;

    fn from_f64_lossless(x: f64) -> Self {
        x
    }

    fn to_f64_approx(&self) -> f64 {
        *self
    }
}

impl Scalar for f32 {
    const EXACT: bool = false;

    fn from_f64_lossless(x: f64) -> Self {
        x as f32
    }

    fn to_f64_approx(&self) -> f64 {
        *self as f64
    }
}

impl Scalar for BigRational {
    const EXACT: bool = true;

    fn from_f64_lossless(x: f64) -> Self {
        BigRational::from_f64(x).expect("finite float required for exact conversion")
    }

    fn to_f64_approx(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_round_trips_through_rational() {
        for &x in &[0.1, -3.75, 1.0 / 3.0, 2.5e-11] {
            let r = BigRational::from_f64_lossless(x);
            assert_eq!(r.to_f64_approx(), x);
        }
    }
}
