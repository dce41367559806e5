//! Multi-index arithmetic, the graded lexicographical order and the
//! dimension counts of the martingale polynomial spaces.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exponent vector labelling a power-jump process.
///
/// Components are nonnegative; the total degree is at least one (the zero
/// index never labels a martingale). Within equal total degree the ordering
/// puts the index with the larger first differing component earlier, so for
/// n = 2, degree 2: (2,0) < (1,1) < (0,2).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(components: Vec<u32>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Dimension("multi-index must have length >= 1".into()));
        }
        let idx = MultiIndex(components);
        if idx.degree() == 0 {
            return Err(Error::Parameter(
                "zero multi-index does not label a martingale".into(),
            ));
        }
        Ok(idx)
    }

    /// Unit index e_i (0-based coordinate).
    pub fn unit(n: usize, i: usize) -> Self {
        assert!(i < n, "unit coordinate out of range");
        let mut c = vec![0; n];
        c[i] = 1;
        MultiIndex(c)
    }

    pub fn components(&self) -> &[u32] {
        &self.0
    }

    /// Ambient dimension n.
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Total degree |p|.
    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    /// Some(i) when the index is the unit vector e_i.
    pub fn as_unit(&self) -> Option<usize> {
        if self.degree() != 1 {
            return None;
        }
        self.0.iter().position(|&c| c == 1)
    }

    /// Componentwise sum p + q with overflow checking.
    pub fn add(&self, other: &MultiIndex) -> Result<MultiIndex> {
        if self.len() != other.len() {
            return Err(Error::Dimension(format!(
                "cannot add multi-indices of lengths {} and {}",
                self.len(),
                other.len()
            )));
        }
        let mut c = Vec::with_capacity(self.len());
        for (a, b) in self.0.iter().zip(other.0.iter()) {
            c.push(a.checked_add(*b).ok_or_else(|| {
                Error::Numeric("multi-index component overflow in addition".into())
            })?);
        }
        Ok(MultiIndex(c))
    }

    /// Monomial evaluation x^p = prod x_i^{p_i}.
    pub fn eval_pow(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.len());
        self.0
            .iter()
            .zip(x.iter())
            .map(|(&p, &xi)| xi.powi(p as i32))
            .product()
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// Graded lexicographical comparison, erroring on a length mismatch.
pub fn compare_grlex(p: &MultiIndex, q: &MultiIndex) -> Result<Ordering> {
    if p.len() != q.len() {
        return Err(Error::Dimension(format!(
            "grlex comparison of lengths {} and {}",
            p.len(),
            q.len()
        )));
    }
    Ok(grlex(p, q))
}

fn grlex(p: &MultiIndex, q: &MultiIndex) -> Ordering {
    match p.degree().cmp(&q.degree()) {
        Ordering::Equal => {}
        other => return other,
    }
    for (a, b) in p.0.iter().zip(q.0.iter()) {
        match a.cmp(b) {
            Ordering::Equal => continue,
            // Larger leading component ranks earlier within a degree.
            Ordering::Greater => return Ordering::Less,
            Ordering::Less => return Ordering::Greater,
        }
    }
    Ordering::Equal
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for MultiIndex {
    /// Graded lex; indices of different ambient dimension sort by length
    /// first so that the order stays total.
    fn cmp(&self, other: &Self) -> Ordering {
        self.len().cmp(&other.len()).then_with(|| grlex(self, other))
    }
}

/// All multi-indices of length n and total degree exactly d, in graded-lex order.
pub fn enumerate_degree(n: usize, d: u32) -> Result<Vec<MultiIndex>> {
    if n == 0 {
        return Err(Error::Dimension("dimension must be >= 1".into()));
    }
    if d == 0 {
        return Err(Error::Parameter(
            "degree 0 excluded: the zero index is not a martingale label".into(),
        ));
    }
    let mut out = Vec::new();
    let mut scratch = vec![0u32; n];
    fill(&mut out, &mut scratch, 0, d);
    Ok(out)
}

fn fill(out: &mut Vec<MultiIndex>, scratch: &mut Vec<u32>, pos: usize, remaining: u32) {
    if pos + 1 == scratch.len() {
        scratch[pos] = remaining;
        out.push(MultiIndex(scratch.clone()));
        return;
    }
    for c in (0..=remaining).rev() {
        scratch[pos] = c;
        fill(out, scratch, pos + 1, remaining - c);
    }
}

/// All indices with 1 <= |p| <= d_max, in graded-lex order.
pub fn enumerate_up_to(n: usize, d_max: u32) -> Result<Vec<MultiIndex>> {
    let mut out = Vec::new();
    for d in 1..=d_max {
        out.extend(enumerate_degree(n, d)?);
    }
    Ok(out)
}

/// Binomial coefficient with overflow checking.
pub fn binomial(n: u64, k: u64) -> Result<u64> {
    if k > n {
        return Ok(0);
    }
    let k = k.min(n - k);
    let mut acc: u64 = 1;
    for i in 0..k {
        acc = acc
            .checked_mul(n - i)
            .ok_or_else(|| Error::Numeric("binomial overflow".into()))?;
        acc /= i + 1;
    }
    Ok(acc)
}

/// Dimension of the homogeneous degree-d space: C(d+n-1, d).
pub fn dim_homogeneous(n: usize, d: u32) -> Result<u64> {
    if n == 0 || d == 0 {
        return Err(Error::Parameter("need n >= 1 and d >= 1".into()));
    }
    binomial(d as u64 + n as u64 - 1, d as u64)
}

/// Dimension of the martingale polynomial space of degree <= d: C(d+n, d) - 1.
pub fn dim_polyspace(n: usize, d: u32) -> Result<u64> {
    if n == 0 || d == 0 {
        return Err(Error::Parameter("need n >= 1 and d >= 1".into()));
    }
    Ok(binomial(d as u64 + n as u64, d as u64)? - 1)
}
