//! Small dense symmetric-matrix helpers. Everything here is desk scale
//! (dimensions of a few dozen), so plain O(n^3) algorithms are fine.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SquareMat {
    n: usize,
    data: Vec<f64>,
}

impl SquareMat {
    pub fn zeros(n: usize) -> Self {
        SquareMat {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension("matrix rows must form a square".into()));
        }
        Ok(SquareMat {
            n,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| self.data[i * self.n..(i + 1) * self.n].to_vec())
            .collect()
    }

    pub fn is_symmetric(&self) -> bool {
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                if self.get(i, j) != self.get(j, i) {
                    return false;
                }
            }
        }
        true
    }

    pub fn max_abs_diag(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i).abs()).fold(0.0, f64::max)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j) * x[j]).sum())
            .collect()
    }

    /// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
    /// Returns (eigenvalues, eigenvectors as columns).
    pub fn sym_eigen(&self) -> Result<(Vec<f64>, SquareMat)> {
        if !self.is_symmetric() {
            return Err(Error::Numeric("sym_eigen requires a symmetric matrix".into()));
        }
        let n = self.n;
        let mut a = self.clone();
        let mut v = SquareMat::identity(n);
        let off = |a: &SquareMat| -> f64 {
            let mut s = 0.0;
            for i in 0..n {
                for j in (i + 1)..n {
                    s += a.get(i, j) * a.get(i, j);
                }
            }
            s
        };
        let scale = self.data.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-300);
        let tol = (scale * 1e-15).powi(2) * (n * n) as f64;
        for _sweep in 0..100 {
            if off(&a) <= tol {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a.get(p, q);
                    if apq.abs() <= scale * 1e-18 {
                        continue;
                    }
                    let theta = (a.get(q, q) - a.get(p, p)) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a.get(k, p);
                        let akq = a.get(k, q);
                        a.set(k, p, c * akp - s * akq);
                        a.set(k, q, s * akp + c * akq);
                    }
                    for k in 0..n {
                        let apk = a.get(p, k);
                        let aqk = a.get(q, k);
                        a.set(p, k, c * apk - s * aqk);
                        a.set(q, k, s * apk + c * aqk);
                    }
                    for k in 0..n {
                        let vkp = v.get(k, p);
                        let vkq = v.get(k, q);
                        v.set(k, p, c * vkp - s * vkq);
                        v.set(k, q, s * vkp + c * vkq);
                    }
                }
            }
        }
        let eig = (0..n).map(|i| a.get(i, i)).collect();
        Ok((eig, v))
    }

    /// Checks numerical positive semidefiniteness: every eigenvalue at least
    /// -1e-12 times the largest eigenvalue magnitude.
    pub fn check_psd(&self) -> Result<()> {
        let (eig, _) = self.sym_eigen()?;
        let max_mag = eig.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let floor = -1e-12 * max_mag.max(1e-300);
        if let Some(bad) = eig.iter().find(|&&e| e < floor) {
            return Err(Error::Numeric(format!(
                "matrix not PSD: eigenvalue {bad} below tolerance {floor}"
            )));
        }
        Ok(())
    }

    /// Factor L with L L^T = max(A, 0) in the spectral sense; used to draw
    /// Gaussian vectors with (possibly singular) covariance A.
    pub fn psd_factor(&self) -> Result<SquareMat> {
        let (eig, v) = self.sym_eigen()?;
        let n = self.n;
        let mut l = SquareMat::zeros(n);
        for j in 0..n {
            let s = eig[j].max(0.0).sqrt();
            for i in 0..n {
                l.set(i, j, v.get(i, j) * s);
            }
        }
        Ok(l)
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&x| x == 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn jacobi_recovers_spectrum() {
        let m = SquareMat::from_rows(&[
            vec![4.0, 1.0, 0.5],
            vec![1.0, 3.0, -0.2],
            vec![0.5, -0.2, 1.0],
        ])
        .unwrap();
        let (eig, v) = m.sym_eigen().unwrap();
        // reconstruct V diag(eig) V^T
        let n = 3;
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += v.get(i, k) * eig[k] * v.get(j, k);
                }
                assert_abs_diff_eq!(s, m.get(i, j), epsilon = 1e-12);
            }
        }
        let trace: f64 = eig.iter().sum();
        assert_abs_diff_eq!(trace, 8.0, epsilon = 1e-12);
    }

    #[test]
    fn psd_factor_squares_back() {
        let m = SquareMat::from_rows(&[vec![2.0, 0.6], vec![0.6, 1.0]]).unwrap();
        let l = m.psd_factor().unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let mut s = 0.0;
                for k in 0..2 {
                    s += l.get(i, k) * l.get(j, k);
                }
                assert_abs_diff_eq!(s, m.get(i, j), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn psd_check_flags_indefinite() {
        let m = SquareMat::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(m.check_psd().is_err());
        let ok = SquareMat::identity(3);
        assert!(ok.check_psd().is_ok());
    }
}
