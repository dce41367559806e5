//! The martingale inner product, the Gram matrix over Teugels monomials in
//! graded-lex order, and the modified Gram-Schmidt orthogonalization with
//! rank-deficiency drops.
//!
//! Everything here consumes only the Gram matrix, so running it on the
//! polynomial side or the martingale side of the isometry gives identical
//! coefficients by construction.

use std::io::Write;

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SquareMat;
use crate::moments::MomentTable;
use crate::multiindex::{enumerate_up_to, MultiIndex};
use crate::scalar::Scalar;

/// Scalar product <Y^p, Y^q> = m_{p+q} + sigma_ij 1{p = e_i, q = e_j}, where
/// m_{p+q} is always the pure jump integral (|p + q| >= 2 here).
pub fn inner_product(table: &MomentTable, sigma: &SquareMat, p: &MultiIndex, q: &MultiIndex) -> Result<f64> {
    if p.len() != q.len() || p.len() != table.dim() {
        return Err(Error::Dimension("inner product dimension mismatch".into()));
    }
    let sum = p.add(q)?;
    let mut v = table.value(&sum)?;
    if let (Some(i), Some(j)) = (p.as_unit(), q.as_unit()) {
        v += sigma.get(i, j);
    }
    Ok(v)
}

/// Gram matrix over all indices 1 <= |p| <= d_max in graded-lex order.
/// Symmetry is exact by construction (the upper triangle is mirrored).
pub fn gram_matrix(table: &MomentTable, sigma: &SquareMat, d_max: u32) -> Result<(SquareMat, Vec<MultiIndex>)> {
    if d_max < 1 {
        return Err(Error::Parameter("d_max must be >= 1".into()));
    }
    if table.coverage() < 2 * d_max {
        return Err(Error::Coverage(format!(
            "gram matrix to degree {d_max} needs moment coverage {}, table has {}",
            2 * d_max,
            table.coverage()
        )));
    }
    let indices = enumerate_up_to(table.dim(), d_max)?;
    let n = indices.len();
    let mut g = SquareMat::zeros(n);
    for i in 0..n {
        for j in i..n {
            let v = inner_product(table, sigma, &indices[i], &indices[j])?;
            g.set(i, j, v);
            g.set(j, i, v);
        }
    }
    Ok((g, indices))
}

/// Outcome of the generic Gram-geometry Gram-Schmidt elimination.
#[derive(Debug, Clone)]
pub struct GsOutcome<S> {
    /// Coefficient rows of retained elements, full width, unit diagonal.
    pub rows: Vec<Vec<S>>,
    /// Squared norms of the retained rows.
    pub norms: Vec<S>,
    /// Positions (into the index list) of retained rows.
    pub retained: Vec<usize>,
    /// Positions of dropped (rank-deficient) directions.
    pub dropped: Vec<usize>,
}

/// Modified Gram-Schmidt in the geometry of a Gram matrix, generic over the
/// scalar. Exact scalars drop on exact zero residuals; floating scalars use
/// `drop_tol` and report indefiniteness beyond it as an error.
pub fn gram_schmidt<S: Scalar>(gram: &[Vec<S>], drop_tol: &S, resweep: bool) -> Result<GsOutcome<S>> {
    let n = gram.len();
    if gram.iter().any(|r| r.len() != n) {
        return Err(Error::Dimension("gram matrix must be square".into()));
    }
    let dot = |a: &[S], b: &[S]| -> S {
        let mut acc = S::zero();
        for (i, ai) in a.iter().enumerate() {
            if ai.is_zero() {
                continue;
            }
            for (j, bj) in b.iter().enumerate() {
                if bj.is_zero() {
                    continue;
                }
                acc = acc + ai.clone() * gram[i][j].clone() * bj.clone();
            }
        }
        acc
    };
    let mut out = GsOutcome {
        rows: Vec::new(),
        norms: Vec::new(),
        retained: Vec::new(),
        dropped: Vec::new(),
    };
    for i in 0..n {
        let mut c = vec![S::zero(); n];
        c[i] = S::one();
        let passes = if resweep { 2 } else { 1 };
        for _ in 0..passes {
            for (r, nrm) in out.rows.iter().zip(out.norms.iter()) {
                let alpha = dot(&c, r) / nrm.clone();
                if alpha.is_zero() {
                    continue;
                }
                for (ck, rk) in c.iter_mut().zip(r.iter()).take(i) {
                    *ck = ck.clone() - alpha.clone() * rk.clone();
                }
            }
        }
        let norm = dot(&c, &c);
        if S::EXACT {
            if norm.is_zero() {
                out.dropped.push(i);
            } else if norm < S::zero() {
                return Err(Error::Numeric("exact Gram matrix is indefinite".into()));
            } else {
                out.rows.push(c);
                out.norms.push(norm);
                out.retained.push(i);
            }
        } else if norm <= *drop_tol {
            if norm < -drop_tol.clone() {
                return Err(Error::Numeric(format!(
                    "gram matrix indefinite beyond tolerance: residual norm {:?}",
                    norm
                )));
            }
            out.dropped.push(i);
        } else {
            out.rows.push(c);
            out.norms.push(norm);
            out.retained.push(i);
        }
    }
    Ok(out)
}

/// Options for `orthogonalize`.
#[derive(Debug, Clone, Copy, Default)]
pub struct OrthogonalizeOptions {
    /// Residual-norm drop threshold; defaults to 1e-10 times the largest
    /// Gram diagonal, floored at 1e-14.
    pub drop_tol: Option<f64>,
    /// Run a second MGS sweep (for ill-conditioned Gram matrices).
    pub resweep: bool,
}

/// The graded-lex orthogonal martingale basis: each retained row expresses
/// one H^p as a unit-leading-coefficient combination of the Y^q with q
/// preceding p.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MartingaleBasis {
    /// All candidate indices in graded-lex order (the column labels).
    pub indices: Vec<MultiIndex>,
    /// Positions into `indices` of the retained basis elements.
    pub retained: Vec<usize>,
    /// Coefficient rows, one per retained element, full width.
    pub coefficients: Vec<Vec<f64>>,
    /// Squared norms of the retained elements.
    pub norms: Vec<f64>,
    /// Positions of dropped rank-deficient directions.
    pub dropped: Vec<usize>,
    /// Drop threshold actually used.
    pub drop_tol: f64,
    /// Fingerprint of the model the Gram matrix came from.
    pub fingerprint: u64,
}

/// Graded-lex modified Gram-Schmidt over the Gram matrix.
pub fn orthogonalize(
    gram: &SquareMat,
    indices: &[MultiIndex],
    fingerprint: u64,
    opts: OrthogonalizeOptions,
) -> Result<MartingaleBasis> {
    if gram.dim() != indices.len() {
        return Err(Error::Dimension("gram dimension does not match index list".into()));
    }
    if !gram.is_symmetric() {
        return Err(Error::Numeric("gram matrix must be exactly symmetric".into()));
    }
    let drop_tol = opts
        .drop_tol
        .unwrap_or_else(|| (1e-10 * gram.max_abs_diag()).max(1e-14));
    if !(drop_tol > 0.0) {
        return Err(Error::Parameter("drop tolerance must be positive".into()));
    }
    let rows: Vec<Vec<f64>> = gram.rows();
    let out = gram_schmidt(&rows, &drop_tol, opts.resweep)?;
    Ok(MartingaleBasis {
        indices: indices.to_vec(),
        retained: out.retained,
        coefficients: out.rows,
        norms: out.norms,
        dropped: out.dropped,
        drop_tol,
        fingerprint,
    })
}

impl MartingaleBasis {
    pub fn retained_indices(&self) -> Vec<&MultiIndex> {
        self.retained.iter().map(|&i| &self.indices[i]).collect()
    }

    pub fn dropped_indices(&self) -> Vec<&MultiIndex> {
        self.dropped.iter().map(|&i| &self.indices[i]).collect()
    }

    /// Strong-orthogonality certificate: (max |offdiag|, max diag) of
    /// C G C^T.
    pub fn certificate(&self, gram: &SquareMat) -> (f64, f64) {
        let m = self.coefficients.len();
        let mut max_off: f64 = 0.0;
        let mut max_diag: f64 = 0.0;
        for a in 0..m {
            let ga = gram.matvec(&self.coefficients[a]);
            for b in 0..m {
                let v: f64 = self.coefficients[b]
                    .iter()
                    .zip(ga.iter())
                    .map(|(c, g)| c * g)
                    .sum();
                if a == b {
                    max_diag = max_diag.max(v.abs());
                } else {
                    max_off = max_off.max(v.abs());
                }
            }
        }
        (max_off, max_diag)
    }

    /// JSON export with indices, coefficients, norms and dropped indices.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("basis serializes")
    }

    /// CSV dump of the coefficient matrix: one row per retained index.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "index")?;
        for q in &self.indices {
            write!(w, ",{}", serde_json::to_string(q).expect("index serializes"))?;
        }
        writeln!(w)?;
        for (row, &pos) in self.coefficients.iter().zip(self.retained.iter()) {
            write!(w, "{}", serde_json::to_string(&self.indices[pos]).expect("index serializes"))?;
            for v in row {
                write!(w, ",{v:.17e}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}
