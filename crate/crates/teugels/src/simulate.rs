//! Path simulation and pathwise evaluation of power-jump processes, Teugels
//! martingales, orthogonalized martingales and quadratic covariations.
//!
//! Reproducibility contract: every path is generated on its own
//! counter-based RNG stream derived from (seed, path index), and Monte Carlo
//! reductions run in path-index order, so results are bit-identical for any
//! degree of parallelism.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levy_model::{LevyModel, MeasureBackend};
use crate::linalg::SquareMat;
use crate::moments::MomentTable;
use crate::multiindex::MultiIndex;
use crate::orthobasis::MartingaleBasis;

/// Time-grid parameters for path generation.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PathConfig {
    pub horizon: f64,
    /// Brownian grid step; unused (and no grid is stored) when sigma = 0.
    pub dt: f64,
}

impl PathConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::Parameter("horizon must be positive".into()));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Parameter("grid step must be positive".into()));
        }
        Ok(())
    }
}

/// Brownian increments on a uniform grid, covariance sigma * dt per step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BrownianGrid {
    pub dt: f64,
    /// increments[step][coordinate]
    pub increments: Vec<Vec<f64>>,
}

/// One realized trajectory. Everything downstream (power jumps, Teugels
/// martingales, brackets, iterated integrals) is evaluated from this record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SamplePath {
    pub dim: usize,
    pub horizon: f64,
    pub drift: Vec<f64>,
    pub sigma: SquareMat,
    /// strictly increasing jump times in (0, horizon]
    pub jump_times: Vec<f64>,
    /// jump vectors, one per jump time
    pub jumps: Vec<Vec<f64>>,
    pub brownian: Option<BrownianGrid>,
    pub trunc_eps: Option<f64>,
    pub seed: u64,
    pub stream: u64,
    pub fingerprint: u64,
}

/// Simulate one path of the model as drift + correlated Brownian grid +
/// compound Poisson jumps from the model's (truncated) measure.
pub fn simulate_path(model: &LevyModel, cfg: &PathConfig, seed: u64, stream: u64) -> Result<SamplePath> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let n = model.dim();
    let total = model.total_intensity()?;
    if !total.is_finite() {
        return Err(Error::Config("truncated jump intensity is not finite".into()));
    }
    let mut jump_times = Vec::new();
    let mut jumps: Vec<Vec<f64>> = Vec::new();
    if total > 0.0 {
        let count = Poisson::new(total * cfg.horizon)
            .map_err(|e| Error::Parameter(format!("poisson parameter: {e}")))?
            .sample(&mut rng) as usize;
        let mut times: Vec<f64> = (0..count)
            .map(|_| (1.0 - rng.gen::<f64>()) * cfg.horizon)
            .collect();
        times.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
        for w in times.windows(2) {
            assert!(w[0] < w[1], "tied jump times have probability zero");
        }
        for _ in 0..count {
            let x = match model.backend() {
                MeasureBackend::Discrete(d) => d.sample_jump(&mut rng),
                MeasureBackend::NegMult(nm) => nm.sample_jump(&mut rng),
                MeasureBackend::Copula(c) => c.sample_jump(&mut rng)?,
            };
            jumps.push(x);
        }
        jump_times = times;
    }
    let brownian = if model.sigma().is_zero() {
        None
    } else {
        let steps = (cfg.horizon / cfg.dt).ceil() as usize;
        let factor = model.sigma().psd_factor()?;
        let sqrt_dt = cfg.dt.sqrt();
        let mut increments = Vec::with_capacity(steps);
        for _ in 0..steps {
            let z: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let inc: Vec<f64> = (0..n)
                .map(|i| sqrt_dt * (0..n).map(|j| factor.get(i, j) * z[j]).sum::<f64>())
                .collect();
            increments.push(inc);
        }
        Some(BrownianGrid { dt: cfg.dt, increments })
    };
    Ok(SamplePath {
        dim: n,
        horizon: cfg.horizon,
        drift: model.drift().to_vec(),
        sigma: model.sigma().clone(),
        jump_times,
        jumps,
        brownian,
        trunc_eps: model.trunc_eps(),
        seed,
        stream,
        fingerprint: model.fingerprint(),
    })
}

impl SamplePath {
    fn check_time(&self, t: f64) -> Result<()> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::Domain(format!(
                "time {t} outside [0, {}]",
                self.horizon
            )));
        }
        Ok(())
    }

    /// Jump-sum power process X^p(t): sum over jumps up to and including t
    /// of prod_i (dx_i)^{p_i}. For |p| = 1 this is the jump component only;
    /// the full coordinate process is `coordinate_at`.
    pub fn power_jump(&self, p: &MultiIndex, t: f64) -> Result<f64> {
        self.check_time(t)?;
        if p.len() != self.dim {
            return Err(Error::Dimension("power jump index dimension mismatch".into()));
        }
        let mut acc = 0.0;
        for (time, x) in self.jump_times.iter().zip(self.jumps.iter()) {
            if *time > t {
                break;
            }
            acc += p.eval_pow(x);
        }
        Ok(acc)
    }

    /// Brownian component at time t: completed grid steps plus a linear
    /// partial step (O(dt) interpolation bias inside a step).
    pub fn brownian_at(&self, i: usize, t: f64) -> f64 {
        let Some(grid) = &self.brownian else {
            return 0.0;
        };
        let whole = (t / grid.dt).floor() as usize;
        let whole = whole.min(grid.increments.len());
        let mut acc = 0.0;
        for inc in grid.increments.iter().take(whole) {
            acc += inc[i];
        }
        if whole < grid.increments.len() {
            let frac = (t - whole as f64 * grid.dt) / grid.dt;
            if frac > 0.0 {
                acc += frac * grid.increments[whole][i];
            }
        }
        acc
    }

    /// Full coordinate process X_i(t) = drift + Brownian + jump sum.
    pub fn coordinate_at(&self, i: usize, t: f64) -> Result<f64> {
        self.check_time(t)?;
        if i >= self.dim {
            return Err(Error::Dimension("coordinate out of range".into()));
        }
        let mut acc = self.drift[i] * t + self.brownian_at(i, t);
        for (time, x) in self.jump_times.iter().zip(self.jumps.iter()) {
            if *time > t {
                break;
            }
            acc += x[i];
        }
        Ok(acc)
    }

    /// Teugels martingale Y^p(t) = X^p(t) - m_p t, with the full coordinate
    /// process (drift and Brownian included) when p is first order.
    pub fn teugels(&self, table: &MomentTable, p: &MultiIndex, t: f64) -> Result<f64> {
        if table.fingerprint() != self.fingerprint {
            return Err(Error::Config(
                "moment table and path come from different models".into(),
            ));
        }
        let m = table.value(p)?;
        let base = if let Some(i) = p.as_unit() {
            self.coordinate_at(i, t)?
        } else {
            self.power_jump(p, t)?
        };
        Ok(base - m * t)
    }

    /// Pathwise quadratic covariation [Y^p, Y^q](t): the jump sum at p + q
    /// plus the continuous part sigma_ij t when both indices are first
    /// order.
    pub fn bracket(&self, p: &MultiIndex, q: &MultiIndex, t: f64) -> Result<f64> {
        let sum = p.add(q)?;
        let mut v = self.power_jump(&sum, t)?;
        if let (Some(i), Some(j)) = (p.as_unit(), q.as_unit()) {
            v += self.sigma.get(i, j) * t;
        }
        Ok(v)
    }

    /// Stacked Teugels evaluations over the basis index list.
    pub fn teugels_vector(&self, table: &MomentTable, indices: &[MultiIndex], t: f64) -> Result<Vec<f64>> {
        indices.iter().map(|p| self.teugels(table, p, t)).collect()
    }

    /// Orthogonalized martingale values H(t) = C Y(t), one entry per
    /// retained basis element.
    pub fn evaluate_basis(&self, basis: &MartingaleBasis, table: &MomentTable, t: f64) -> Result<Vec<f64>> {
        if basis.fingerprint != self.fingerprint {
            return Err(Error::Config(
                "basis and path come from different models".into(),
            ));
        }
        let y = self.teugels_vector(table, &basis.indices, t)?;
        Ok(basis
            .coefficients
            .iter()
            .map(|row| row.iter().zip(y.iter()).map(|(c, v)| c * v).sum())
            .collect())
    }

    /// Pathwise bracket of two basis elements via coefficient combination.
    pub fn bracket_basis(&self, basis: &MartingaleBasis, a: usize, b: usize, t: f64) -> Result<f64> {
        let ca = &basis.coefficients[a];
        let cb = &basis.coefficients[b];
        let mut acc = 0.0;
        for (i, &cai) in ca.iter().enumerate() {
            if cai == 0.0 {
                continue;
            }
            for (j, &cbj) in cb.iter().enumerate() {
                if cbj == 0.0 {
                    continue;
                }
                acc += cai * cbj * self.bracket(&basis.indices[i], &basis.indices[j], t)?;
            }
        }
        Ok(acc)
    }
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
    pub seed: u64,
}

impl McEstimate {
    fn from_values(values: &[f64], seed: u64) -> McEstimate {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
        McEstimate {
            mean,
            se: (var / n as f64).sqrt(),
            n,
            seed,
        }
    }

    /// |mean| / se, with an exact-zero mean giving z = 0 even at se = 0.
    pub fn z_score(&self) -> f64 {
        if self.mean == 0.0 {
            0.0
        } else {
            self.mean.abs() / self.se
        }
    }
}

/// Monte Carlo mean of a vector functional over independent paths. Paths run
/// on streams equal to their index; the reduction is sequential in path
/// order, so the estimate does not depend on the worker count.
pub fn mc_vector_expectation<F>(
    model: &LevyModel,
    cfg: &PathConfig,
    n_paths: usize,
    seed: u64,
    functional: F,
) -> Result<Vec<McEstimate>>
where
    F: Fn(&SamplePath) -> Result<Vec<f64>> + Sync,
{
    if n_paths < 2 {
        return Err(Error::Parameter("need at least two paths".into()));
    }
    let rows: Vec<Result<Vec<f64>>> = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let path = simulate_path(model, cfg, seed, i as u64)?;
            functional(&path).map_err(|e| {
                Error::Numeric(format!(
                    "functional failed on path {i} (seed {seed}, stream {i}): {e}"
                ))
            })
        })
        .collect();
    let mut values: Vec<Vec<f64>> = Vec::with_capacity(n_paths);
    for r in rows {
        values.push(r?);
    }
    let width = values[0].len();
    if values.iter().any(|v| v.len() != width) {
        return Err(Error::Numeric("functional returned inconsistent widths".into()));
    }
    let mut out = Vec::with_capacity(width);
    for k in 0..width {
        let col: Vec<f64> = values.iter().map(|v| v[k]).collect();
        out.push(McEstimate::from_values(&col, seed));
    }
    Ok(out)
}

/// Scalar convenience wrapper over `mc_vector_expectation`.
pub fn mc_expectation<F>(
    model: &LevyModel,
    cfg: &PathConfig,
    n_paths: usize,
    seed: u64,
    functional: F,
) -> Result<McEstimate>
where
    F: Fn(&SamplePath) -> Result<f64> + Sync,
{
    let v = mc_vector_expectation(model, cfg, n_paths, seed, |p| functional(p).map(|x| vec![x]))?;
    Ok(v[0])
}
