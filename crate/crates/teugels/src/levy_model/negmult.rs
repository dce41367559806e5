//! The negative multinomial (Pascal) family: a discrete Levy measure on the
//! nonnegative integer lattice with finite total intensity -ln(lambda).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multiindex::MultiIndex;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegMult {
    pub lambda: f64,
    pub mu: f64,
    pub lambdas: Vec<f64>,
}

impl NegMult {
    pub fn new(lambda: f64, mu: f64, lambdas: Vec<f64>) -> Result<Self> {
        let nm = NegMult { lambda, mu, lambdas };
        nm.validate()?;
        Ok(nm)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambdas.is_empty() {
            return Err(Error::Dimension("negative multinomial needs n >= 1".into()));
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(Error::Parameter(format!(
                "negative multinomial needs lambda in (0,1), got {}",
                self.lambda
            )));
        }
        if !(self.mu > 0.0) {
            return Err(Error::Parameter("negative multinomial needs mu > 0".into()));
        }
        for &li in &self.lambdas {
            let mli = self.mu * li;
            if !(mli > 0.0 && mli < 1.0) {
                return Err(Error::Parameter(format!(
                    "negative multinomial needs 0 < mu*lambda_i < 1, got {mli}"
                )));
            }
        }
        let total = self.lambda + self.mu * self.lambdas.iter().sum::<f64>();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Parameter(format!(
                "negative multinomial constraint lambda + mu*sum(lambda_i) = 1 violated by {:.3e}",
                total - 1.0
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lambdas.len()
    }

    /// rho = mu * sum(lambda_i) = 1 - lambda; the per-degree shell mass is
    /// rho^d / d.
    pub fn rho(&self) -> f64 {
        self.mu * self.lambdas.iter().sum::<f64>()
    }

    /// Total intensity -ln(lambda).
    pub fn total_intensity(&self) -> f64 {
        -self.lambda.ln()
    }

    /// Levy mass at lattice point k: (|k|-1)!/(k_1!...k_n!) prod (mu l_i)^{k_i}.
    pub fn mass(&self, k: &MultiIndex) -> Result<f64> {
        if k.len() != self.dim() {
            return Err(Error::Dimension("lattice point dimension mismatch".into()));
        }
        let d = k.degree();
        debug_assert!(d >= 1);
        let lf = LnFactorials::up_to(d as usize);
        let mut ln = lf.ln_fact(d as usize - 1);
        for (i, &ki) in k.components().iter().enumerate() {
            ln -= lf.ln_fact(ki as usize);
            if ki > 0 {
                ln += ki as f64 * (self.mu * self.lambdas[i]).ln();
            }
        }
        Ok(ln.exp())
    }

    /// Exact-style shell sum over |k| = d of k^p * mass(k) (p may be zero
    /// exponents; the weight e^{hyp_lambda ||k||} is applied when given).
    fn shell_sum(&self, d: u32, p: Option<&MultiIndex>, hyp_lambda: Option<f64>, lf: &LnFactorials) -> f64 {
        let n = self.dim();
        let mut total = 0.0;
        let mut k = vec![0u32; n];
        self.shell_rec(&mut k, 0, d, p, hyp_lambda, lf, &mut total);
        total
    }

    #[allow(clippy::too_many_arguments)]
    fn shell_rec(
        &self,
        k: &mut Vec<u32>,
        pos: usize,
        remaining: u32,
        p: Option<&MultiIndex>,
        hyp_lambda: Option<f64>,
        lf: &LnFactorials,
        total: &mut f64,
    ) {
        let n = self.dim();
        if pos + 1 == n {
            k[pos] = remaining;
            *total += self.point_value(k, p, hyp_lambda, lf);
            return;
        }
        for c in 0..=remaining {
            k[pos] = c;
            self.shell_rec(k, pos + 1, remaining - c, p, hyp_lambda, lf, total);
        }
    }

    fn point_value(&self, k: &[u32], p: Option<&MultiIndex>, hyp_lambda: Option<f64>, lf: &LnFactorials) -> f64 {
        let d: u32 = k.iter().sum();
        if d == 0 {
            return 0.0;
        }
        let mut ln = lf.ln_fact(d as usize - 1);
        for (i, &ki) in k.iter().enumerate() {
            ln -= lf.ln_fact(ki as usize);
            if ki > 0 {
                ln += ki as f64 * (self.mu * self.lambdas[i]).ln();
            }
        }
        if let Some(p) = p {
            for (i, &pi) in p.components().iter().enumerate() {
                if pi > 0 {
                    if k[i] == 0 {
                        return 0.0;
                    }
                    ln += pi as f64 * (k[i] as f64).ln();
                }
            }
        }
        if let Some(l) = hyp_lambda {
            let norm = k.iter().map(|&ki| (ki as f64) * (ki as f64)).sum::<f64>().sqrt();
            ln += l * norm;
        }
        ln.exp()
    }

    /// Moment sum_k k^p mass(k), summed shell by shell until the geometric
    /// tail bound drops below 1e-14 (relative to the accumulated value).
    /// Returns (value, tail bound, last degree summed).
    pub fn moment_series(&self, p: &MultiIndex) -> Result<(f64, f64, u32)> {
        if p.len() != self.dim() {
            return Err(Error::Dimension("moment index dimension mismatch".into()));
        }
        self.series(Some(p), None)
    }

    /// Hypothesis 1 series: sum_k exp(lambda ||k||) mass(k). Divergence is
    /// detected by the shell ratio test.
    pub fn hyp1_series(&self, hyp_lambda: f64) -> Result<(f64, f64, u32)> {
        self.series(None, Some(hyp_lambda))
    }

    fn series(&self, p: Option<&MultiIndex>, hyp_lambda: Option<f64>) -> Result<(f64, f64, u32)> {
        const D_MAX: usize = 6000;
        let lf = LnFactorials::up_to(D_MAX + 1);
        let mut acc = 0.0f64;
        let mut prev = f64::NAN;
        let mut bad_ratio_streak = 0u32;
        for d in 1..=D_MAX as u32 {
            let s = self.shell_sum(d, p, hyp_lambda, &lf);
            acc += s;
            if !acc.is_finite() {
                return Err(Error::Numeric("negative multinomial series overflowed: divergent".into()));
            }
            if prev.is_finite() && prev > 0.0 {
                let ratio = s / prev;
                if ratio >= 1.0 {
                    bad_ratio_streak += 1;
                    if bad_ratio_streak >= 8 {
                        return Err(Error::Numeric(format!(
                            "negative multinomial series fails the ratio test at degree {d} (ratio {ratio:.4})"
                        )));
                    }
                } else {
                    bad_ratio_streak = 0;
                    // conservative geometric tail bound with headroom
                    let r = (ratio * 1.05).min(0.999);
                    let tail = s * r / (1.0 - r);
                    if tail < 1e-14 * acc.abs().max(1.0) {
                        return Ok((acc, tail, d));
                    }
                }
            }
            prev = s;
        }
        Err(Error::Numeric(
            "negative multinomial series did not settle within the degree cap".into(),
        ))
    }

    /// Draw one jump: total size from the logarithmic distribution on degrees
    /// (P(d) proportional to rho^d / d), then a multinomial split across
    /// coordinates with weights lambda_i.
    pub fn sample_jump<R: rand::Rng>(&self, rng: &mut R) -> Vec<f64> {
        let rho = self.rho();
        let norm = -(1.0 - rho).ln();
        let mut u: f64 = rng.gen::<f64>() * norm;
        let mut d = 0u64;
        let mut term = 1.0f64;
        loop {
            d += 1;
            term *= rho;
            let pd = term / d as f64;
            if u <= pd || d > 1_000_000 {
                break;
            }
            u -= pd;
        }
        let total: f64 = self.lambdas.iter().sum();
        let mut k = vec![0u64; self.dim()];
        for _ in 0..d {
            let mut v: f64 = rng.gen::<f64>() * total;
            let mut idx = self.dim() - 1;
            for (i, &li) in self.lambdas.iter().enumerate() {
                if v < li {
                    idx = i;
                    break;
                }
                v -= li;
            }
            k[idx] += 1;
        }
        k.into_iter().map(|x| x as f64).collect()
    }
}

/// ln(n!) table from a running sum of logs.
pub struct LnFactorials {
    table: Vec<f64>,
}

impl LnFactorials {
    pub fn up_to(n: usize) -> Self {
        let mut table = Vec::with_capacity(n + 1);
        table.push(0.0);
        let mut acc = 0.0;
        for i in 1..=n {
            acc += (i as f64).ln();
            table.push(acc);
        }
        LnFactorials { table }
    }

    #[inline]
    pub fn ln_fact(&self, n: usize) -> f64 {
        self.table[n]
    }
}
