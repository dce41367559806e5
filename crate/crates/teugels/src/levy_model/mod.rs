//! Multidimensional Levy processes given by a triplet (drift, covariance,
//! jump measure), with the concrete jump-measure families used throughout:
//! discrete atoms, Clayton-glued marginal densities, and the negative
//! multinomial lattice measure.

mod clayton;
mod copula;
mod discrete;
mod marginal;
mod negmult;

pub use clayton::Clayton;
pub use copula::CopulaMeasure;
pub use discrete::{norm2, Atom, DiscreteAtoms};
pub use marginal::{tail_integral, Marginal, TailCurve, TAIL_X_CUTOFF};
pub use negmult::NegMult;

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SquareMat;
use crate::multiindex::MultiIndex;

/// Jump-measure specification, as it appears in the model JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JumpMeasureSpec {
    Discrete {
        atoms: Vec<Atom>,
    },
    GammaCopula {
        gammas: Vec<f64>,
        rates: Vec<f64>,
        theta: f64,
        eta: f64,
        trunc_eps: f64,
    },
    NegativeMultinomial {
        lambda: f64,
        mu: f64,
        lambdas: Vec<f64>,
    },
    MeixnerCopula {
        m: Vec<f64>,
        a: Vec<f64>,
        theta: f64,
        eta: f64,
        trunc_eps: f64,
    },
    MarginalCopula {
        marginals: Vec<Marginal>,
        theta: f64,
        eta: f64,
        trunc_eps: f64,
    },
}

impl JumpMeasureSpec {
    /// Replace the truncation level on density-backed variants.
    pub fn with_trunc_eps(mut self, eps: f64) -> Self {
        match &mut self {
            JumpMeasureSpec::GammaCopula { trunc_eps, .. }
            | JumpMeasureSpec::MeixnerCopula { trunc_eps, .. }
            | JumpMeasureSpec::MarginalCopula { trunc_eps, .. } => *trunc_eps = eps,
            _ => {}
        }
        self
    }
}

/// Activity class of the jump part.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activity {
    FiniteActivity,
    InfiniteTruncated,
}

/// Resolved measure backend built once at model construction.
#[derive(Debug, Clone)]
pub enum MeasureBackend {
    Discrete(DiscreteAtoms),
    NegMult(NegMult),
    Copula(CopulaMeasure),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LevyModelSpec {
    n: usize,
    drift: Vec<f64>,
    sigma: Vec<Vec<f64>>,
    jumps: JumpMeasureSpec,
}

/// A Levy process triplet with a concrete jump-measure construction.
///
/// Immutable after construction; cheap to clone and safe to share across
/// threads.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "LevyModelSpec", into = "LevyModelSpec")]
pub struct LevyModel {
    n: usize,
    drift: Vec<f64>,
    sigma: SquareMat,
    jumps: JumpMeasureSpec,
    #[serde(skip)]
    backend: Option<Arc<MeasureBackend>>,
    #[serde(skip)]
    fingerprint: Arc<OnceLock<u64>>,
}

impl TryFrom<LevyModelSpec> for LevyModel {
    type Error = Error;

    fn try_from(spec: LevyModelSpec) -> Result<Self> {
        LevyModel::new(spec.n, spec.drift, spec.sigma, spec.jumps)
    }
}

impl From<LevyModel> for LevyModelSpec {
    fn from(m: LevyModel) -> LevyModelSpec {
        LevyModelSpec {
            n: m.n,
            drift: m.drift.clone(),
            sigma: m.sigma.rows(),
            jumps: m.jumps,
        }
    }
}

impl PartialEq for LevyModel {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n
            && self.drift == other.drift
            && self.sigma == other.sigma
            && self.jumps == other.jumps
    }
}

impl LevyModel {
    pub fn new(n: usize, drift: Vec<f64>, sigma: Vec<Vec<f64>>, jumps: JumpMeasureSpec) -> Result<Self> {
        if n == 0 {
            return Err(Error::Dimension("process dimension must be >= 1".into()));
        }
        if drift.len() != n {
            return Err(Error::Dimension(format!(
                "drift has length {}, expected {n}",
                drift.len()
            )));
        }
        if sigma.len() != n || sigma.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension("sigma must be an n x n matrix".into()));
        }
        let sigma = SquareMat::from_rows(&sigma)?;
        if !sigma.is_symmetric() {
            return Err(Error::Parameter("sigma must be symmetric".into()));
        }
        sigma.check_psd()?;
        let backend = Self::build_backend(n, &jumps)?;
        Ok(LevyModel {
            n,
            drift,
            sigma,
            jumps,
            backend: Some(Arc::new(backend)),
            fingerprint: Arc::new(OnceLock::new()),
        })
    }

    fn build_backend(n: usize, jumps: &JumpMeasureSpec) -> Result<MeasureBackend> {
        match jumps {
            JumpMeasureSpec::Discrete { atoms } => {
                let d = DiscreteAtoms { atoms: atoms.clone() };
                d.validate(n)?;
                Ok(MeasureBackend::Discrete(d))
            }
            JumpMeasureSpec::NegativeMultinomial { lambda, mu, lambdas } => {
                if lambdas.len() != n {
                    return Err(Error::Dimension(format!(
                        "negative multinomial has {} coordinates, model has {n}",
                        lambdas.len()
                    )));
                }
                Ok(MeasureBackend::NegMult(NegMult::new(*lambda, *mu, lambdas.clone())?))
            }
            JumpMeasureSpec::GammaCopula { gammas, rates, theta, eta, trunc_eps } => {
                if gammas.len() != n || rates.len() != n {
                    return Err(Error::Dimension("gamma copula parameter lengths must equal n".into()));
                }
                let marginals = gammas
                    .iter()
                    .zip(rates.iter())
                    .map(|(&g, &r)| Marginal::Gamma { shape: g, rate: r })
                    .collect();
                Ok(MeasureBackend::Copula(CopulaMeasure::new(
                    marginals,
                    Clayton::new(*theta, *eta)?,
                    *trunc_eps,
                )?))
            }
            JumpMeasureSpec::MeixnerCopula { m, a, theta, eta, trunc_eps } => {
                if m.len() != n || a.len() != n {
                    return Err(Error::Dimension("meixner copula parameter lengths must equal n".into()));
                }
                let marginals = m
                    .iter()
                    .zip(a.iter())
                    .map(|(&mi, &ai)| Marginal::Meixner { m: mi, a: ai })
                    .collect();
                Ok(MeasureBackend::Copula(CopulaMeasure::new(
                    marginals,
                    Clayton::new(*theta, *eta)?,
                    *trunc_eps,
                )?))
            }
            JumpMeasureSpec::MarginalCopula { marginals, theta, eta, trunc_eps } => {
                if marginals.len() != n {
                    return Err(Error::Dimension("marginal count must equal n".into()));
                }
                Ok(MeasureBackend::Copula(CopulaMeasure::new(
                    marginals.clone(),
                    Clayton::new(*theta, *eta)?,
                    *trunc_eps,
                )?))
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn drift(&self) -> &[f64] {
        &self.drift
    }

    pub fn sigma(&self) -> &SquareMat {
        &self.sigma
    }

    pub fn jumps(&self) -> &JumpMeasureSpec {
        &self.jumps
    }

    pub fn backend(&self) -> &MeasureBackend {
        self.backend
            .as_deref()
            .expect("backend present after construction")
    }

    pub fn activity(&self) -> Activity {
        match self.backend() {
            MeasureBackend::Discrete(_) | MeasureBackend::NegMult(_) => Activity::FiniteActivity,
            MeasureBackend::Copula(_) => Activity::InfiniteTruncated,
        }
    }

    /// Truncation level of density-backed measures.
    pub fn trunc_eps(&self) -> Option<f64> {
        match self.backend() {
            MeasureBackend::Copula(c) => Some(c.eps()),
            _ => None,
        }
    }

    /// Total jump intensity of the (truncated) measure.
    pub fn total_intensity(&self) -> Result<f64> {
        match self.backend() {
            MeasureBackend::Discrete(d) => Ok(d.total_intensity()),
            MeasureBackend::NegMult(nm) => Ok(nm.total_intensity()),
            MeasureBackend::Copula(c) => c.truncated_intensity(),
        }
    }

    /// Jump-measure integral of x^p over the (truncated) support, with method
    /// metadata and an error bound. For discrete measures this is an exact
    /// weighted sum.
    pub fn jump_moment(&self, p: &MultiIndex) -> Result<(f64, MomentMethod, f64)> {
        if p.len() != self.n {
            return Err(Error::Dimension("moment index dimension mismatch".into()));
        }
        match self.backend() {
            MeasureBackend::Discrete(d) => Ok((d.moment(p), MomentMethod::ExactSum, 0.0)),
            MeasureBackend::NegMult(nm) => {
                let (v, tail, k_max) = nm.moment_series(p)?;
                Ok((v, MomentMethod::Series { k_max }, tail))
            }
            MeasureBackend::Copula(c) => {
                let (v, err) = c.moment(p)?;
                Ok((v, MomentMethod::Quadrature, err))
            }
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Config(format!("model JSON: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&LevyModelSpec::from(self.clone())).expect("model serializes")
    }

    /// Stable in-process identity used to catch mixed-model evaluations.
    pub fn fingerprint(&self) -> u64 {
        *self.fingerprint.get_or_init(|| {
            let mut h = DefaultHasher::new();
            serde_json::to_string(&LevyModelSpec::from(self.clone()))
                .expect("model serializes")
                .hash(&mut h);
            h.finish()
        })
    }
}

/// How a moment value was computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentMethod {
    ExactSum,
    Series { k_max: u32 },
    Quadrature,
}

/// The Clayton-family copula function of Eq. (10)-style form, as a free
/// operation on raw tail values.
pub fn clayton_f(u: &[f64], theta: f64, eta: f64) -> Result<f64> {
    Clayton::new(theta, eta)?.f(u)
}

/// Levy density of a copula-glued model at x (off the coordinate axes).
pub fn copula_levy_density(model: &LevyModel, x: &[f64]) -> Result<f64> {
    match model.backend() {
        MeasureBackend::Copula(c) => c.density(x),
        _ => Err(Error::Config(
            "copula density requested on a non-copula jump measure".into(),
        )),
    }
}

/// Levy mass of the negative multinomial measure at lattice point k.
pub fn negmult_levy_mass(model: &LevyModel, k: &MultiIndex) -> Result<f64> {
    match model.backend() {
        MeasureBackend::NegMult(nm) => nm.mass(k),
        _ => Err(Error::Config(
            "negative multinomial mass requested on a different jump measure".into(),
        )),
    }
}

/// Outcome of the exponential-moment check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Hypothesis1Report {
    pub lambda: f64,
    pub eps: f64,
    pub holds: bool,
    /// The integral value when finite.
    pub value: Option<f64>,
    pub error_bound: Option<f64>,
    pub method: String,
    pub diagnostic: Option<String>,
}

/// Evaluate int_{||x|| >= eps} exp(lambda ||x||) nu(dx): exactly for discrete
/// measures, by a ratio-tested series for the negative multinomial, and by
/// quadrature (with an analytic rate pre-screen) for density variants.
pub fn check_hypothesis1(model: &LevyModel, lambda: f64, eps: f64) -> Result<Hypothesis1Report> {
    if !(lambda > 0.0) || !(eps > 0.0) {
        return Err(Error::Parameter("hypothesis 1 check needs lambda > 0 and eps > 0".into()));
    }
    let report = match model.backend() {
        MeasureBackend::Discrete(d) => Hypothesis1Report {
            lambda,
            eps,
            holds: true,
            value: Some(d.hyp1_value(lambda, eps)),
            error_bound: Some(0.0),
            method: "exact_sum".into(),
            diagnostic: None,
        },
        MeasureBackend::NegMult(nm) => match nm.hyp1_series(lambda) {
            Ok((v, tail, k_max)) => Hypothesis1Report {
                lambda,
                eps,
                holds: true,
                value: Some(v),
                error_bound: Some(tail),
                method: format!("series(k_max={k_max})"),
                diagnostic: None,
            },
            Err(Error::Numeric(msg)) => Hypothesis1Report {
                lambda,
                eps,
                holds: false,
                value: None,
                error_bound: None,
                method: "series".into(),
                diagnostic: Some(msg),
            },
            Err(e) => return Err(e),
        },
        MeasureBackend::Copula(c) => match c.hyp1_integral(lambda, eps) {
            Ok((true, v, err)) => Hypothesis1Report {
                lambda,
                eps,
                holds: true,
                value: Some(v),
                error_bound: Some(err),
                method: "quadrature".into(),
                diagnostic: None,
            },
            Ok((false, _, _)) => Hypothesis1Report {
                lambda,
                eps,
                holds: false,
                value: None,
                error_bound: None,
                method: "rate_prescreen".into(),
                diagnostic: Some(
                    "lambda is at or above a marginal exponential decay rate".into(),
                ),
            },
            Err(Error::Numeric(msg)) => Hypothesis1Report {
                lambda,
                eps,
                holds: false,
                value: None,
                error_bound: None,
                method: "quadrature".into(),
                diagnostic: Some(msg),
            },
            Err(e) => return Err(e),
        },
    };
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    pub fn two_atom_model() -> LevyModel {
        LevyModel::new(
            2,
            vec![0.0, 0.0],
            vec![vec![0.0, 0.0], vec![0.0, 0.0]],
            JumpMeasureSpec::Discrete {
                atoms: vec![
                    Atom { x: vec![1.0, 1.0], rate: 2.0 },
                    Atom { x: vec![1.0, 2.0], rate: 0.5 },
                ],
            },
        )
        .unwrap()
    }

    #[test]
    fn json_round_trip_is_lossless() {
        let m = two_atom_model();
        let s = m.to_json();
        let back = LevyModel::from_json(&s).unwrap();
        assert_eq!(m, back);
        assert_eq!(m.fingerprint(), back.fingerprint());

        let g = LevyModel::new(
            2,
            vec![0.1, -0.2],
            vec![vec![1.0, 0.3], vec![0.3, 0.8]],
            JumpMeasureSpec::GammaCopula {
                gammas: vec![1.0, 1.5],
                rates: vec![2.0, 2.5],
                theta: 1.0,
                eta: 1.0,
                trunc_eps: 0.2,
            },
        )
        .unwrap();
        let back = LevyModel::from_json(&g.to_json()).unwrap();
        assert_eq!(g, back);
    }

    #[test]
    fn construction_validates() {
        // asymmetric sigma
        assert!(LevyModel::new(
            2,
            vec![0.0, 0.0],
            vec![vec![1.0, 0.5], vec![0.2, 1.0]],
            JumpMeasureSpec::Discrete { atoms: vec![] },
        )
        .is_err());
        // indefinite sigma
        assert!(LevyModel::new(
            2,
            vec![0.0, 0.0],
            vec![vec![1.0, 2.0], vec![2.0, 1.0]],
            JumpMeasureSpec::Discrete { atoms: vec![] },
        )
        .is_err());
        // negative multinomial constraint enforced through the backend
        assert!(LevyModel::new(
            2,
            vec![0.0, 0.0],
            vec![vec![0.0, 0.0], vec![0.0, 0.0]],
            JumpMeasureSpec::NegativeMultinomial { lambda: 0.8, mu: 1.0, lambdas: vec![0.1, 0.2] },
        )
        .is_err());
    }

    #[test]
    fn hypothesis1_discrete_is_exact() {
        let m = two_atom_model();
        let rep = check_hypothesis1(&m, 0.5, 0.1).unwrap();
        assert!(rep.holds);
        let expect = 2.0 * (0.5 * 2.0f64.sqrt()).exp() + 0.5 * (0.5 * 5.0f64.sqrt()).exp();
        assert_relative_eq!(rep.value.unwrap(), expect, max_relative = 1e-15);
    }

    #[test]
    fn hypothesis1_negmult_divergence() {
        let m = LevyModel::new(
            2,
            vec![0.0, 0.0],
            vec![vec![0.0, 0.0], vec![0.0, 0.0]],
            JumpMeasureSpec::NegativeMultinomial { lambda: 0.4, mu: 1.0, lambdas: vec![0.3, 0.3] },
        )
        .unwrap();
        let rep = check_hypothesis1(&m, 2.0, 0.5).unwrap();
        assert!(!rep.holds);
        assert!(rep.diagnostic.is_some());
        let rep = check_hypothesis1(&m, 0.05, 0.5).unwrap();
        assert!(rep.holds);
    }

    #[test]
    fn hypothesis1_gamma_rate_threshold() {
        let g = LevyModel::new(
            1,
            vec![0.0],
            vec![vec![0.0]],
            JumpMeasureSpec::GammaCopula {
                gammas: vec![1.0],
                rates: vec![1.0],
                theta: 1.0,
                eta: 1.0,
                trunc_eps: 0.1,
            },
        )
        .unwrap();
        let rep = check_hypothesis1(&g, 0.5, 0.1).unwrap();
        assert!(rep.holds);
        // oracle: int_eps^inf e^{0.5 x} e^{-x}/x dx = E1(0.5 * 0.1)
        let rep2 = check_hypothesis1(&g, 1.5, 0.1).unwrap();
        assert!(!rep2.holds);
    }

    #[test]
    fn spec_op_wrappers_dispatch() {
        let m = two_atom_model();
        assert!(copula_levy_density(&m, &[1.0, 1.0]).is_err());
        let k = MultiIndex::new(vec![1, 0]).unwrap();
        assert!(negmult_levy_mass(&m, &k).is_err());
        let nm = LevyModel::new(
            2,
            vec![0.0, 0.0],
            vec![vec![0.0, 0.0], vec![0.0, 0.0]],
            JumpMeasureSpec::NegativeMultinomial { lambda: 0.8, mu: 1.0, lambdas: vec![0.1, 0.1] },
        )
        .unwrap();
        assert_relative_eq!(negmult_levy_mass(&nm, &k).unwrap(), 0.1, max_relative = 1e-14);
    }
}
