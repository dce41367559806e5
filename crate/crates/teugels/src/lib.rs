//! Orthogonalized Teugels martingale bases for multidimensional Levy
//! processes: moment functionals, the graded-lex Gram-Schmidt basis, chaos
//! expansions of increment products, and Monte Carlo verification of the
//! representation properties.

pub mod error;
pub mod linalg;
pub mod multiindex;
pub mod poly;
pub mod quad;
pub mod scalar;

pub mod chaos;
pub mod levy_model;
pub mod moments;
pub mod orthobasis;
pub mod simulate;
pub mod verify;

pub use error::{Error, Result};
pub use multiindex::{compare_grlex, dim_homogeneous, dim_polyspace, enumerate_degree, enumerate_up_to, MultiIndex};

/// Floating-point scalar used by the numerical lanes.
pub type Real = f64;

/// Exact scalar used by the chaos-expansion bookkeeping and exactness tests.
pub type Rational = num_rational::BigRational;
