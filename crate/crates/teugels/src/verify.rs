//! Statistical and exact verification drivers: martingale/compensator
//! checks, strong-orthogonality statistics, chaotic-representation residuals
//! and chaos-subspace orthogonality. These back both the test suites and the
//! `verify` CLI command; every report is JSON-serializable and embeds enough
//! to replay the run.

use serde::Serialize;

use crate::chaos::{
    evaluate_expansion, evaluate_levels, expand_increment_product, h_level_measure, increment_product,
    to_h_basis, ChaosExpansion, LevelMeasure, DEFAULT_K_MAX,
};
use crate::error::{Error, Result};
use crate::levy_model::{Activity, LevyModel};
use crate::moments::MomentTable;
use crate::multiindex::{enumerate_up_to, MultiIndex};
use crate::orthobasis::MartingaleBasis;
use crate::simulate::{mc_vector_expectation, McEstimate, PathConfig};

/// Shared Monte Carlo verification parameters.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct VerifyConfig {
    pub horizon: f64,
    pub dt: f64,
    pub paths: usize,
    pub seed: u64,
    /// z-score acceptance threshold (4 throughout).
    pub z_max: f64,
    /// pathwise residual tolerance for exact-mode checks
    pub exact_tol: f64,
    /// absolute deviation below which a z test counts as zero (float noise
    /// floor for otherwise-deterministic rows)
    pub mc_atol: f64,
    /// anchor used by the chaos checks
    pub t0: f64,
}

impl VerifyConfig {
    pub fn path_config(&self) -> PathConfig {
        PathConfig {
            horizon: self.horizon,
            dt: self.dt,
        }
    }
}

fn z_of(est: &McEstimate, target: f64, atol: f64) -> f64 {
    let diff = est.mean - target;
    if diff.abs() <= atol {
        0.0
    } else if est.se == 0.0 {
        f64::INFINITY
    } else {
        diff.abs() / est.se
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentRow {
    pub index: MultiIndex,
    pub target: f64,
    pub estimate: McEstimate,
    pub z: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentsReport {
    pub power_rows: Vec<MomentRow>,
    pub martingale_rows: Vec<MomentRow>,
    pub pass: bool,
}

/// Compensator and martingale-mean checks: E[X^p(1)] against m_p and
/// E[Y^p(1)] against zero, for all 1 <= |p| <= degree.
pub fn verify_moments(
    model: &LevyModel,
    table: &MomentTable,
    degree: u32,
    cfg: &VerifyConfig,
) -> Result<MomentsReport> {
    let indices = enumerate_up_to(model.dim(), degree)?;
    let t_eval = cfg.horizon;
    let idx = indices.clone();
    let ests = mc_vector_expectation(model, &cfg.path_config(), cfg.paths, cfg.seed, move |path| {
        let mut out = Vec::with_capacity(2 * idx.len());
        for p in &idx {
            let x = if let Some(i) = p.as_unit() {
                path.coordinate_at(i, t_eval)?
            } else {
                path.power_jump(p, t_eval)?
            };
            out.push(x);
        }
        for p in &idx {
            out.push(path.teugels(table, p, t_eval)?);
        }
        Ok(out)
    })?;
    let mut power_rows = Vec::new();
    let mut martingale_rows = Vec::new();
    let mut pass = true;
    for (j, p) in indices.iter().enumerate() {
        let target = table.value(p)? * t_eval;
        let est = ests[j];
        let z = z_of(&est, target, cfg.mc_atol);
        let ok = z <= cfg.z_max;
        pass &= ok;
        power_rows.push(MomentRow {
            index: p.clone(),
            target,
            estimate: est,
            z,
            pass: ok,
        });
        let est = ests[indices.len() + j];
        let z = z_of(&est, 0.0, cfg.mc_atol);
        let ok = z <= cfg.z_max;
        pass &= ok;
        martingale_rows.push(MomentRow {
            index: p.clone(),
            target: 0.0,
            estimate: est,
            z,
            pass: ok,
        });
    }
    Ok(MomentsReport {
        power_rows,
        martingale_rows,
        pass,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct OrthPairRow {
    pub p: MultiIndex,
    pub q: MultiIndex,
    pub product: McEstimate,
    pub product_z: f64,
    pub bracket: McEstimate,
    pub bracket_z: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct OrthReport {
    pub pairs: Vec<OrthPairRow>,
    pub pass: bool,
}

/// Strong-orthogonality statistics over retained basis pairs:
/// E[H^p(1) H^q(1)] and E[[H^p, H^q](1)] both within z_max standard errors
/// of zero.
pub fn verify_orthogonality(
    model: &LevyModel,
    table: &MomentTable,
    basis: &MartingaleBasis,
    cfg: &VerifyConfig,
) -> Result<OrthReport> {
    let m = basis.retained.len();
    let mut pair_list = Vec::new();
    for a in 0..m {
        for b in (a + 1)..m {
            pair_list.push((a, b));
        }
    }
    let t_eval = cfg.horizon;
    let pairs = pair_list.clone();
    let ests = mc_vector_expectation(model, &cfg.path_config(), cfg.paths, cfg.seed, move |path| {
        let h = path.evaluate_basis(basis, table, t_eval)?;
        let mut out = Vec::with_capacity(2 * pairs.len());
        for &(a, b) in &pairs {
            out.push(h[a] * h[b]);
        }
        for &(a, b) in &pairs {
            out.push(path.bracket_basis(basis, a, b, t_eval)?);
        }
        Ok(out)
    })?;
    let mut rows = Vec::new();
    let mut pass = true;
    for (j, &(a, b)) in pair_list.iter().enumerate() {
        let product = ests[j];
        let bracket = ests[pair_list.len() + j];
        let product_z = z_of(&product, 0.0, cfg.mc_atol);
        let bracket_z = z_of(&bracket, 0.0, cfg.mc_atol);
        let ok = product_z <= cfg.z_max && bracket_z <= cfg.z_max;
        pass &= ok;
        rows.push(OrthPairRow {
            p: basis.indices[basis.retained[a]].clone(),
            q: basis.indices[basis.retained[b]].clone(),
            product,
            product_z,
            bracket,
            bracket_z,
            pass: ok,
        });
    }
    Ok(OrthReport { pairs: rows, pass })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CrpMode {
    Exact,
    Mc,
}

#[derive(Debug, Clone, Serialize)]
pub struct CrpRow {
    pub k: MultiIndex,
    /// exact mode: largest pathwise |LHS - RHS|
    pub max_residual: Option<f64>,
    /// mc mode: estimate of LHS - RHS
    pub residual_estimate: Option<McEstimate>,
    pub z: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CrpReport {
    pub mode: CrpMode,
    pub rows: Vec<CrpRow>,
    /// largest pathwise violation of the bounded-variation identity
    /// X_i(t) = a_i t + sum of jumps (sigma = 0 models only)
    pub bv_identity_max: Option<f64>,
    pub pass: bool,
}

/// Decide the CRP check mode for a model: exact needs bounded variation
/// (sigma = 0) and finite or truncated jump activity (always true here).
pub fn crp_mode_for(model: &LevyModel) -> CrpMode {
    if model.sigma().is_zero() {
        CrpMode::Exact
    } else {
        CrpMode::Mc
    }
}

/// Chaotic-representation check for every |k| <= k_degree.
///
/// Exact mode evaluates both sides pathwise and requires the residual to
/// stay below `exact_tol` on every path; mc mode tests E[LHS - RHS] = 0 at
/// z_max standard errors (grid bias applies).
pub fn verify_crp(
    model: &LevyModel,
    table: &MomentTable,
    k_degree: u32,
    mode: CrpMode,
    cfg: &VerifyConfig,
) -> Result<CrpReport> {
    if mode == CrpMode::Exact {
        if !model.sigma().is_zero() {
            return Err(Error::Config(
                "exact CRP mode requires a bounded-variation model (sigma = 0)".into(),
            ));
        }
        if model.activity() != Activity::FiniteActivity && model.trunc_eps().is_none() {
            return Err(Error::Config("exact CRP mode requires finite activity".into()));
        }
    }
    let ks = enumerate_up_to(model.dim(), k_degree)?;
    let expansions: Vec<ChaosExpansion> = ks
        .iter()
        .map(|k| expand_increment_product(table, model.sigma(), k, DEFAULT_K_MAX))
        .collect::<Result<_>>()?;
    let t0 = cfg.t0;
    let dur = cfg.horizon - t0;
    if dur <= 0.0 {
        return Err(Error::Parameter("anchor t0 must leave a positive window".into()));
    }
    match mode {
        CrpMode::Exact => {
            let maxima = mc_max(model, cfg, &ks, table, &expansions, t0, dur)?;
            let mut rows = Vec::new();
            let mut pass = true;
            for (k, max_res) in ks.iter().zip(maxima.residuals.iter()) {
                let ok = *max_res < cfg.exact_tol;
                pass &= ok;
                rows.push(CrpRow {
                    k: k.clone(),
                    max_residual: Some(*max_res),
                    residual_estimate: None,
                    z: None,
                    pass: ok,
                });
            }
            let bv_ok = maxima.bv_identity < 1e-12;
            pass &= bv_ok;
            Ok(CrpReport {
                mode,
                rows,
                bv_identity_max: Some(maxima.bv_identity),
                pass,
            })
        }
        CrpMode::Mc => {
            let exps = &expansions;
            let ests = mc_vector_expectation(model, &cfg.path_config(), cfg.paths, cfg.seed, move |path| {
                let mut out = Vec::with_capacity(exps.len());
                for e in exps {
                    let lhs = increment_product(path, &e.k, t0, dur)?;
                    let rhs = evaluate_expansion(path, table, e, t0, dur)?;
                    out.push(lhs - rhs);
                }
                Ok(out)
            })?;
            let mut rows = Vec::new();
            let mut pass = true;
            for (k, est) in ks.iter().zip(ests.iter()) {
                let z = z_of(est, 0.0, cfg.mc_atol);
                let ok = z <= cfg.z_max;
                pass &= ok;
                rows.push(CrpRow {
                    k: k.clone(),
                    max_residual: None,
                    residual_estimate: Some(*est),
                    z: Some(z),
                    pass: ok,
                });
            }
            Ok(CrpReport {
                mode,
                rows,
                bv_identity_max: None,
                pass,
            })
        }
    }
}

struct Maxima {
    residuals: Vec<f64>,
    bv_identity: f64,
}

/// Max-aggregated residuals across paths (deterministic sequential max over
/// path index order).
fn mc_max(
    model: &LevyModel,
    cfg: &VerifyConfig,
    ks: &[MultiIndex],
    table: &MomentTable,
    exps: &[ChaosExpansion],
    t0: f64,
    dur: f64,
) -> Result<Maxima> {
    use crate::simulate::simulate_path;
    use rayon::prelude::*;
    let rows: Vec<Result<Vec<f64>>> = (0..cfg.paths)
        .into_par_iter()
        .map(|i| {
            let path = simulate_path(model, &cfg.path_config(), cfg.seed, i as u64)?;
            let mut out = Vec::with_capacity(ks.len() + 1);
            for e in exps {
                let lhs = increment_product(&path, &e.k, t0, dur)?;
                let rhs = evaluate_expansion(&path, table, e, t0, dur)?;
                out.push((lhs - rhs).abs());
            }
            let mut bv: f64 = 0.0;
            for i in 0..path.dim {
                let xi = path.coordinate_at(i, cfg.horizon)?;
                let ji = path.power_jump(&MultiIndex::unit(path.dim, i), cfg.horizon)?;
                bv = bv.max((xi - path.drift[i] * cfg.horizon - ji).abs());
            }
            out.push(bv);
            Ok(out)
        })
        .collect();
    let mut residuals = vec![0.0f64; ks.len()];
    let mut bv_identity = 0.0f64;
    for r in rows {
        let v = r?;
        for (acc, x) in residuals.iter_mut().zip(v.iter()) {
            *acc = acc.max(*x);
        }
        bv_identity = bv_identity.max(v[ks.len()]);
    }
    Ok(Maxima {
        residuals,
        bv_identity,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SubspacePairRow {
    pub signature_a: Vec<MultiIndex>,
    pub signature_b: Vec<MultiIndex>,
    pub estimate: McEstimate,
    pub z: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SubspaceReport {
    pub pairs: Vec<SubspacePairRow>,
    pub pass: bool,
}

/// Orthogonality of distinct chaos subspaces: rewrite the expansions of all
/// |k| <= k_degree over the orthogonal basis, group terms by their
/// H-integrator signature, and test E[V_a V_b] = 0 for every pair of
/// distinct signatures.
pub fn verify_subspace_orthogonality(
    model: &LevyModel,
    table: &MomentTable,
    basis: &MartingaleBasis,
    k_degree: u32,
    cfg: &VerifyConfig,
) -> Result<SubspaceReport> {
    use std::collections::BTreeMap;
    let ks = enumerate_up_to(model.dim(), k_degree)?;
    let mut by_signature: BTreeMap<Vec<usize>, Vec<crate::poly::Poly<crate::chaos::Q>>> = BTreeMap::new();
    for k in &ks {
        let e = expand_increment_product(table, model.sigma(), k, DEFAULT_K_MAX)?;
        let h = to_h_basis(&e, basis)?;
        for (sig, integrand) in h.terms {
            by_signature.entry(sig).or_default().push(integrand);
        }
    }
    let signatures: Vec<Vec<usize>> = by_signature.keys().cloned().collect();
    let t0 = cfg.t0;
    let dur = cfg.horizon - t0;
    let sig_terms: Vec<(Vec<usize>, Vec<crate::poly::Poly<crate::chaos::Q>>)> =
        by_signature.into_iter().collect();
    let mut pair_list = Vec::new();
    for a in 0..signatures.len() {
        for b in (a + 1)..signatures.len() {
            pair_list.push((a, b));
        }
    }
    let pairs = pair_list.clone();
    let terms = &sig_terms;
    let ests = mc_vector_expectation(model, &cfg.path_config(), cfg.paths, cfg.seed, move |path| {
        // evaluate one representative element per signature
        let mut values = Vec::with_capacity(terms.len());
        for (sig, integrands) in terms {
            let measures: Vec<LevelMeasure> = sig
                .iter()
                .map(|&s| h_level_measure(path, table, basis, s, t0, t0 + dur))
                .collect::<Result<_>>()?;
            let refs: Vec<&LevelMeasure> = measures.iter().collect();
            let mut v = 0.0;
            for integrand in integrands {
                v += evaluate_levels(&refs, integrand, t0, dur)?;
            }
            values.push(v);
        }
        Ok(pairs.iter().map(|&(a, b)| values[a] * values[b]).collect())
    })?;
    let mut rows = Vec::new();
    let mut pass = true;
    for (j, &(a, b)) in pair_list.iter().enumerate() {
        let z = z_of(&ests[j], 0.0, cfg.mc_atol);
        let ok = z <= cfg.z_max;
        pass &= ok;
        let name = |sig: &Vec<usize>| -> Vec<MultiIndex> {
            sig.iter()
                .map(|&s| basis.indices[basis.retained[s]].clone())
                .collect()
        };
        rows.push(SubspacePairRow {
            signature_a: name(&signatures[a]),
            signature_b: name(&signatures[b]),
            estimate: ests[j],
            z,
            pass: ok,
        });
    }
    Ok(SubspaceReport { pairs: rows, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy_model::{Atom, JumpMeasureSpec};
    use crate::moments::moment_table;
    use crate::orthobasis::{gram_matrix, orthogonalize};

    fn two_atom_model() -> LevyModel {
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

    fn quick_cfg(paths: usize) -> VerifyConfig {
        VerifyConfig {
            horizon: 1.0,
            dt: 0.05,
            paths,
            seed: 1234,
            z_max: 4.0,
            exact_tol: 1e-9,
            mc_atol: 1e-10,
            t0: 0.0,
        }
    }

    #[test]
    fn moments_check_passes_on_discrete_model() {
        let m = two_atom_model();
        let t = moment_table(&m, 2).unwrap();
        let rep = verify_moments(&m, &t, 2, &quick_cfg(8000)).unwrap();
        assert!(rep.pass, "rows: {:?}", rep.power_rows.iter().map(|r| r.z).collect::<Vec<_>>());
    }

    #[test]
    fn orthogonality_check_passes() {
        let m = two_atom_model();
        let t = moment_table(&m, 2).unwrap();
        let (g, idx) = gram_matrix(&t, m.sigma(), 2).unwrap();
        let basis = orthogonalize(&g, &idx, m.fingerprint(), Default::default()).unwrap();
        let rep = verify_orthogonality(&m, &t, &basis, &quick_cfg(8000)).unwrap();
        assert!(rep.pass);
    }

    #[test]
    fn crp_exact_mode() {
        let m = two_atom_model();
        let t = moment_table(&m, 4).unwrap();
        let rep = verify_crp(&m, &t, 2, CrpMode::Exact, &quick_cfg(300)).unwrap();
        assert!(rep.pass);
        assert!(rep.bv_identity_max.unwrap() < 1e-12);
        for row in &rep.rows {
            assert!(row.max_residual.unwrap() < 1e-9);
        }
    }

    #[test]
    fn crp_exact_rejects_diffusive_model() {
        let m = LevyModel::new(
            1,
            vec![0.0],
            vec![vec![1.0]],
            JumpMeasureSpec::Discrete {
                atoms: vec![Atom { x: vec![1.0], rate: 1.0 }],
            },
        )
        .unwrap();
        let t = moment_table(&m, 2).unwrap();
        assert!(verify_crp(&m, &t, 1, CrpMode::Exact, &quick_cfg(10)).is_err());
        assert_eq!(crp_mode_for(&m), CrpMode::Mc);
    }

    #[test]
    fn crp_mc_mode_on_jump_diffusion() {
        let m = LevyModel::new(
            1,
            vec![0.1],
            vec![vec![1.0]],
            JumpMeasureSpec::Discrete {
                atoms: vec![Atom { x: vec![1.0], rate: 1.0 }],
            },
        )
        .unwrap();
        let t = moment_table(&m, 4).unwrap();
        let mut cfg = quick_cfg(4_000);
        cfg.dt = 0.005;
        let rep = verify_crp(&m, &t, 2, CrpMode::Mc, &cfg).unwrap();
        assert!(rep.pass, "{:?}", rep.rows.iter().map(|r| r.z).collect::<Vec<_>>());
    }

    #[test]
    fn subspace_orthogonality_on_full_rank_model() {
        let m = LevyModel::new(
            2,
            vec![0.0, 0.0],
            vec![vec![1.0, 0.3], vec![0.3, 0.8]],
            JumpMeasureSpec::Discrete {
                atoms: vec![
                    Atom { x: vec![0.7, 1.3], rate: 0.8 },
                    Atom { x: vec![-1.1, 0.4], rate: 0.5 },
                    Atom { x: vec![0.5, -0.9], rate: 0.7 },
                    Atom { x: vec![1.9, 0.6], rate: 0.3 },
                    Atom { x: vec![-0.4, -1.5], rate: 0.4 },
                ],
            },
        )
        .unwrap();
        let t = moment_table(&m, 2).unwrap();
        let (g, idx) = gram_matrix(&t, m.sigma(), 2).unwrap();
        let basis = orthogonalize(&g, &idx, m.fingerprint(), Default::default()).unwrap();
        let mut cfg = quick_cfg(2000);
        cfg.dt = 0.02;
        let rep = verify_subspace_orthogonality(&m, &t, &basis, 2, &cfg).unwrap();
        assert!(!rep.pairs.is_empty());
        assert!(rep.pass, "{:?}", rep.pairs.iter().map(|r| r.z).collect::<Vec<_>>());
    }
}
