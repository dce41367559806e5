//! Discrete (finitely many atoms) jump measures.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multiindex::MultiIndex;

/// One atom of a discrete Levy measure: a nonzero jump vector and an
/// intensity per unit time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub x: Vec<f64>,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DiscreteAtoms {
    pub atoms: Vec<Atom>,
}

impl DiscreteAtoms {
    pub fn validate(&self, n: usize) -> Result<()> {
        for (j, atom) in self.atoms.iter().enumerate() {
            if atom.x.len() != n {
                return Err(Error::Dimension(format!(
                    "atom {j} has dimension {}, model has {n}",
                    atom.x.len()
                )));
            }
            if atom.x.iter().all(|&c| c == 0.0) {
                return Err(Error::Parameter(format!("atom {j} is the zero vector")));
            }
            if !(atom.rate > 0.0) || !atom.rate.is_finite() {
                return Err(Error::Parameter(format!(
                    "atom {j} has nonpositive intensity {}",
                    atom.rate
                )));
            }
        }
        Ok(())
    }

    pub fn total_intensity(&self) -> f64 {
        self.atoms.iter().map(|a| a.rate).sum()
    }

    /// Exact jump moment: sum_j rate_j * x_j^p.
    pub fn moment(&self, p: &MultiIndex) -> f64 {
        self.atoms.iter().map(|a| a.rate * p.eval_pow(&a.x)).sum()
    }

    /// Exact Hypothesis 1 value over atoms with ||x|| >= eps.
    pub fn hyp1_value(&self, lambda: f64, eps: f64) -> f64 {
        self.atoms
            .iter()
            .filter(|a| norm2(&a.x) >= eps)
            .map(|a| a.rate * (lambda * norm2(&a.x)).exp())
            .sum()
    }

    pub fn sample_jump<R: rand::Rng>(&self, rng: &mut R) -> Vec<f64> {
        debug_assert!(!self.atoms.is_empty());
        let total = self.total_intensity();
        let mut v: f64 = rng.gen::<f64>() * total;
        for a in &self.atoms {
            if v < a.rate {
                return a.x.clone();
            }
            v -= a.rate;
        }
        self.atoms.last().expect("nonempty").x.clone()
    }
}

pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|c| c * c).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_atom() -> DiscreteAtoms {
        DiscreteAtoms {
            atoms: vec![
                Atom { x: vec![1.0, 1.0], rate: 2.0 },
                Atom { x: vec![1.0, 2.0], rate: 0.5 },
            ],
        }
    }

    #[test]
    fn moments_are_weighted_sums() {
        let d = two_atom();
        let p = MultiIndex::new(vec![1, 1]).unwrap();
        assert_eq!(d.moment(&p), 3.0);
        let p = MultiIndex::new(vec![2, 2]).unwrap();
        assert_eq!(d.moment(&p), 4.0);
    }

    #[test]
    fn validation_catches_bad_atoms() {
        let d = DiscreteAtoms {
            atoms: vec![Atom { x: vec![0.0, 0.0], rate: 1.0 }],
        };
        assert!(d.validate(2).is_err());
        let d = DiscreteAtoms {
            atoms: vec![Atom { x: vec![1.0], rate: -1.0 }],
        };
        assert!(d.validate(1).is_err());
        assert!(two_atom().validate(2).is_ok());
    }

    #[test]
    fn hyp1_is_finite_sum() {
        let d = two_atom();
        let expect = 2.0 * (0.5 * 2.0f64.sqrt()).exp() + 0.5 * (0.5 * 5.0f64.sqrt()).exp();
        approx::assert_relative_eq!(d.hyp1_value(0.5, 0.1), expect, max_relative = 1e-15);
    }
}
