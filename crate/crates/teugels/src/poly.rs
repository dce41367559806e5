//! Sparse multivariate polynomials over a generic scalar.
//!
//! The chaos-expansion bookkeeping runs these over exact rationals and
//! converts to floating point only at evaluation time.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Polynomial in a fixed number of variables, stored as a sparse map from
/// exponent vectors to coefficients. Zero coefficients are never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly<S: Scalar> {
    vars: usize,
    terms: BTreeMap<Vec<u32>, S>,
}

impl<S: Scalar> Poly<S> {
    pub fn zero(vars: usize) -> Self {
        Poly {
            vars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(vars: usize, c: S) -> Self {
        let mut p = Self::zero(vars);
        if !c.is_zero() {
            p.terms.insert(vec![0; vars], c);
        }
        p
    }

    /// The monomial x_i.
    pub fn var(vars: usize, i: usize) -> Self {
        assert!(i < vars);
        let mut e = vec![0; vars];
        e[i] = 1;
        let mut p = Self::zero(vars);
        p.terms.insert(e, S::one());
        p
    }

    pub fn monomial(vars: usize, exps: Vec<u32>, c: S) -> Self {
        assert_eq!(exps.len(), vars);
        let mut p = Self::zero(vars);
        if !c.is_zero() {
            p.terms.insert(exps, c);
        }
        p
    }

    pub fn vars(&self) -> usize {
        self.vars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<u32>, &S)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn total_degree(&self) -> u32 {
        self.terms
            .keys()
            .map(|e| e.iter().sum::<u32>())
            .max()
            .unwrap_or(0)
    }

    /// Largest exponent of variable i across all terms.
    pub fn degree_in(&self, i: usize) -> u32 {
        self.terms.keys().map(|e| e[i]).max().unwrap_or(0)
    }

    pub fn add_term(&mut self, exps: Vec<u32>, c: S) {
        assert_eq!(exps.len(), self.vars);
        if c.is_zero() {
            return;
        }
        let entry = self.terms.entry(exps);
        match entry {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let s = o.get().clone() + c;
                if s.is_zero() {
                    o.remove();
                } else {
                    *o.get_mut() = s;
                }
            }
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.vars, other.vars);
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.add_term(e.clone(), c.clone());
        }
        out
    }

    pub fn scale(&self, c: &S) -> Self {
        if c.is_zero() {
            return Self::zero(self.vars);
        }
        let mut out = Self::zero(self.vars);
        for (e, v) in &self.terms {
            out.terms.insert(e.clone(), v.clone() * c.clone());
        }
        out
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.vars, other.vars);
        let mut out = Self::zero(self.vars);
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                let e: Vec<u32> = ea.iter().zip(eb.iter()).map(|(a, b)| a + b).collect();
                out.add_term(e, ca.clone() * cb.clone());
            }
        }
        out
    }

    /// Substitute a constant for variable i; the variable stays in the ring
    /// (its exponent becomes zero in every term).
    pub fn substitute(&self, i: usize, value: &S) -> Self {
        assert!(i < self.vars);
        let mut out = Self::zero(self.vars);
        for (e, c) in &self.terms {
            let mut pw = S::one();
            for _ in 0..e[i] {
                pw = pw * value.clone();
            }
            let mut e2 = e.clone();
            e2[i] = 0;
            out.add_term(e2, c.clone() * pw);
        }
        out
    }

    pub fn eval_f64(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.vars);
        let mut acc = 0.0;
        for (e, c) in &self.terms {
            let mut m = c.to_f64_approx();
            for (i, &p) in e.iter().enumerate() {
                if p > 0 {
                    m *= x[i].powi(p as i32);
                }
            }
            acc += m;
        }
        acc
    }

    /// Reinterpret with a wider variable set, mapping old variable j to
    /// new index `map[j]`.
    pub fn embed(&self, vars: usize, map: &[usize]) -> Result<Self> {
        if map.len() != self.vars || map.iter().any(|&m| m >= vars) {
            return Err(Error::Dimension("bad variable embedding".into()));
        }
        let mut out = Self::zero(vars);
        for (e, c) in &self.terms {
            let mut e2 = vec![0u32; vars];
            for (j, &p) in e.iter().enumerate() {
                e2[map[j]] += p;
            }
            out.add_term(e2, c.clone());
        }
        Ok(out)
    }
}

/// n-th power by repeated multiplication (exponents stay tiny here).
pub fn poly_pow<S: Scalar>(p: &Poly<S>, n: u32) -> Poly<S> {
    let mut acc = Poly::constant(p.vars(), S::one());
    for _ in 0..n {
        acc = acc.mul(p);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;
    use num_traits::FromPrimitive;

    type Q = BigRational;

    fn q(n: i64, d: i64) -> Q {
        Q::new(n.into(), d.into())
    }

    #[test]
    fn arithmetic_round_trip() {
        // (t + u)^2 = t^2 + 2tu + u^2
        let t = Poly::<Q>::var(2, 0);
        let u = Poly::<Q>::var(2, 1);
        let s = t.add(&u);
        let sq = poly_pow(&s, 2);
        assert_eq!(sq.num_terms(), 3);
        assert_eq!(sq.eval_f64(&[2.0, 3.0]), 25.0);
        assert_eq!(sq.total_degree(), 2);
    }

    #[test]
    fn substitution_eliminates_variable() {
        let t = Poly::<Q>::var(3, 0);
        let t0 = Poly::<Q>::var(3, 1);
        let p = t.mul(&t0).add(&Poly::constant(3, q(1, 2)));
        let sub = p.substitute(1, &Q::from_f64(0.5).unwrap());
        assert_eq!(sub.degree_in(1), 0);
        assert_eq!(sub.eval_f64(&[4.0, 999.0, 0.0]), 2.5);
    }

    #[test]
    fn cancellation_removes_terms() {
        let t = Poly::<Q>::var(1, 0);
        let d = t.add(&t.scale(&q(-1, 1)));
        assert!(d.is_zero());
    }
}
