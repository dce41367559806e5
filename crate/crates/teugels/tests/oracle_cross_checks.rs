//! Cross-checks of the main modules against the independent brute-force
//! oracles on small instances.

use approx::{assert_abs_diff_eq, assert_relative_eq};
use num_rational::BigRational;
use num_traits::FromPrimitive;
use rand::{Rng, SeedableRng};

use teugels::chaos::{evaluate_levels, LevelMeasure};
use teugels::levy_model::{
    clayton_f, copula_levy_density, negmult_levy_mass, tail_integral, Atom, Clayton,
    JumpMeasureSpec, LevyModel, Marginal,
};
use teugels::moments::{moment, moment_table};
use teugels::multiindex::{enumerate_up_to, MultiIndex};
use teugels::orthobasis::{gram_matrix, inner_product, orthogonalize, OrthogonalizeOptions};
use teugels::poly::Poly;
use teugels::scalar::Scalar;
use teugels::simulate::{simulate_path, PathConfig};

use teugels_oracle as oracle;

fn mi(c: &[u32]) -> MultiIndex {
    MultiIndex::new(c.to_vec()).unwrap()
}

fn discrete_model(atoms: Vec<Atom>, sigma: Vec<Vec<f64>>) -> LevyModel {
    let n = sigma.len();
    LevyModel::new(n, vec![0.0; n], sigma, JumpMeasureSpec::Discrete { atoms }).unwrap()
}

fn generic_three_atom() -> LevyModel {
    discrete_model(
        vec![
            Atom { x: vec![0.7, 1.3], rate: 1.0 },
            Atom { x: vec![-1.1, 0.4], rate: 0.7 },
            Atom { x: vec![0.5, -0.9], rate: 1.3 },
        ],
        vec![vec![1.0, 0.3], vec![0.3, 0.8]],
    )
}

#[test]
fn moments_match_atom_sum_oracle() {
    let m = generic_three_atom();
    let atoms: Vec<(Vec<f64>, f64)> = vec![
        (vec![0.7, 1.3], 1.0),
        (vec![-1.1, 0.4], 0.7),
        (vec![0.5, -0.9], 1.3),
    ];
    for p in enumerate_up_to(2, 6).unwrap() {
        let got = m.jump_moment(&p).unwrap().0;
        let want = oracle::atom_sum_moment(&atoms, &p);
        assert_relative_eq!(got, want, max_relative = 1e-13, epsilon = 1e-13);
    }
}

#[test]
fn gram_schmidt_matches_dense_elimination() {
    let m = generic_three_atom();
    let table = moment_table(&m, 3).unwrap();
    let (g, idx) = gram_matrix(&table, m.sigma(), 3).unwrap();
    let basis = orthogonalize(&g, &idx, m.fingerprint(), Default::default()).unwrap();
    let out = oracle::dense_gram_orthogonalize(&g.rows(), &basis.drop_tol);
    assert_eq!(out.retained, basis.retained);
    assert_eq!(out.dropped, basis.dropped);
    let scale = g.max_abs_diag();
    for (orow, brow) in out.rows.iter().zip(basis.coefficients.iter()) {
        for (a, b) in orow.iter().zip(brow.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12 * scale);
        }
    }
    for (piv, nrm) in out.pivots.iter().zip(basis.norms.iter()) {
        assert_relative_eq!(piv, nrm, max_relative = 1e-10);
    }
}

#[test]
fn poisson_collapse_matches_exact_elimination_every_degree() {
    // 1-d unit atom: rank one at every degree; run the oracle in exact
    // rational arithmetic to pin the dropped set.
    let m = discrete_model(vec![Atom { x: vec![1.0], rate: 1.0 }], vec![vec![0.0]]);
    for d in 1..=5u32 {
        let table = moment_table(&m, d).unwrap();
        let (g, idx) = gram_matrix(&table, m.sigma(), d).unwrap();
        let basis = orthogonalize(&g, &idx, m.fingerprint(), Default::default()).unwrap();
        let rows: Vec<Vec<BigRational>> = g
            .rows()
            .iter()
            .map(|r| r.iter().map(|&x| BigRational::from_f64(x).unwrap()).collect())
            .collect();
        let exact = oracle::dense_gram_orthogonalize(&rows, &BigRational::from_f64(0.0).unwrap());
        assert_eq!(basis.retained, exact.retained);
        assert_eq!(basis.dropped, exact.dropped);
        assert_eq!(basis.retained, vec![0], "degree {d}");
        assert_eq!(basis.dropped.len(), d as usize - 1);
    }
}

#[test]
fn iterated_integral_matches_double_sum_on_dense_path() {
    // a path with ~50 jumps, zero compensators: the nested evaluator must
    // agree with the brute-force ordered-pair sum
    let m = discrete_model(
        vec![
            Atom { x: vec![0.9, -0.3], rate: 30.0 },
            Atom { x: vec![-0.2, 1.1], rate: 25.0 },
        ],
        vec![vec![0.0, 0.0], vec![0.0, 0.0]],
    );
    let cfg = PathConfig { horizon: 1.0, dt: 0.5 };
    let path = simulate_path(&m, &cfg, 2024, 0).unwrap();
    assert!(path.jump_times.len() > 30, "want a dense path");
    for (outer, inner) in [
        (mi(&[1, 0]), mi(&[0, 1])),
        (mi(&[0, 1]), mi(&[1, 0])),
        (mi(&[1, 1]), mi(&[2, 0])),
    ] {
        let mk = |p: &MultiIndex| LevelMeasure {
            atoms: path
                .jump_times
                .iter()
                .zip(path.jumps.iter())
                .map(|(t, x)| (*t, p.eval_pow(x)))
                .collect(),
            rate: 0.0,
        };
        let lm_outer = mk(&outer);
        let lm_inner = mk(&inner);
        let integrand = Poly::<BigRational>::constant(4, BigRational::from_f64(1.0).unwrap());
        let got = evaluate_levels(&[&lm_outer, &lm_inner], &integrand, 0.0, 1.0).unwrap();
        let want = oracle::pathwise_double_sum(&path, &outer, &inner, 1.0);
        assert_relative_eq!(got, want, max_relative = 1e-10);
    }
}

#[test]
fn gamma_tail_matches_exponential_integral_series() {
    let g = Marginal::Gamma { shape: 1.0, rate: 1.0 };
    for x in [0.05, 0.3, 1.0, 2.5, 7.0] {
        assert_relative_eq!(
            tail_integral(&g, x).unwrap(),
            oracle::exp_integral_e1(x),
            max_relative = 1e-8
        );
    }
    let g2 = Marginal::Gamma { shape: 1.3, rate: 2.0 };
    for x in [0.1, 0.9, 3.0] {
        assert_relative_eq!(
            tail_integral(&g2, x).unwrap(),
            1.3 * oracle::exp_integral_e1(2.0 * x),
            max_relative = 1e-8
        );
    }
}

#[test]
fn clayton_partials_match_finite_differences() {
    for (theta, eta) in [(1.0, 1.0), (0.7, 0.4), (2.3, 0.9)] {
        let c = Clayton::new(theta, eta).unwrap();
        let f = |u: &[f64]| c.f(u).unwrap();
        for u in [[0.8, 1.7], [1.2, -0.9], [-0.5, -2.0]] {
            let fd = oracle::mixed_partial_fd(f, &u, 1e-4);
            assert_relative_eq!(c.density_factor(&u).unwrap(), fd, max_relative = 2e-6, epsilon = 1e-9);
        }
        let f3 = |u: &[f64]| c.f(u).unwrap();
        for u in [[0.8, 1.7, 1.1], [1.2, -0.9, 0.6]] {
            let fd = oracle::mixed_partial_fd(f3, &u, 2e-3);
            assert_relative_eq!(c.density_factor(&u).unwrap(), fd, max_relative = 5e-5, epsilon = 1e-9);
        }
    }
}

#[test]
fn negmult_mass_matches_exact_factorials_to_degree_six() {
    let m = LevyModel::new(
        2,
        vec![0.0, 0.0],
        vec![vec![0.0, 0.0], vec![0.0, 0.0]],
        JumpMeasureSpec::NegativeMultinomial { lambda: 0.8, mu: 1.0, lambdas: vec![0.1, 0.1] },
    )
    .unwrap();
    let w = vec![
        BigRational::from_f64(0.1).unwrap(),
        BigRational::from_f64(0.1).unwrap(),
    ];
    for k in enumerate_up_to(2, 6).unwrap() {
        let got = negmult_levy_mass(&m, &k).unwrap();
        let want = oracle::negmult_mass_exact(&k, &w).to_f64_approx();
        assert_relative_eq!(got, want, max_relative = 1e-12);
    }
}

#[test]
fn negmult_moments_match_exact_box_sum() {
    let m = LevyModel::new(
        2,
        vec![0.0, 0.0],
        vec![vec![0.0, 0.0], vec![0.0, 0.0]],
        JumpMeasureSpec::NegativeMultinomial { lambda: 0.8, mu: 1.0, lambdas: vec![0.1, 0.1] },
    )
    .unwrap();
    let w = vec![
        BigRational::from_f64(0.1).unwrap(),
        BigRational::from_f64(0.1).unwrap(),
    ];
    for p in [mi(&[1, 0]), mi(&[1, 1]), mi(&[2, 0]), mi(&[2, 2])] {
        let got = moment(&m, &p).unwrap();
        // box 60 is far beyond the 1e-14 tail for rho = 0.2
        let want = oracle::negmult_moment_box(&w, &p, 60).to_f64_approx();
        assert_relative_eq!(got.value, want, max_relative = 1e-12);
        assert!(got.error_bound < 1e-12);
    }
}

#[test]
fn isometry_s1_route_equals_s2_route() {
    // assembling the Gram matrix through the polynomial-side scalar product
    // gives the same matrix, hence the same basis
    let m = generic_three_atom();
    let atoms: Vec<(Vec<f64>, f64)> = vec![
        (vec![0.7, 1.3], 1.0),
        (vec![-1.1, 0.4], 0.7),
        (vec![0.5, -0.9], 1.3),
    ];
    let sigma_rows = m.sigma().rows();
    let table = moment_table(&m, 2).unwrap();
    let (g2, idx) = gram_matrix(&table, m.sigma(), 2).unwrap();
    let mut g1 = g2.clone();
    for (i, p) in idx.iter().enumerate() {
        for (j, q) in idx.iter().enumerate() {
            g1.set(i, j, oracle::s1_inner_product(&atoms, &sigma_rows, p, q));
        }
    }
    for i in 0..idx.len() {
        for j in 0..idx.len() {
            assert_relative_eq!(g1.get(i, j), g2.get(i, j), max_relative = 1e-13, epsilon = 1e-13);
            // also against the scalar inner_product operation
            let ip = inner_product(&table, m.sigma(), &idx[i], &idx[j]).unwrap();
            assert_relative_eq!(g2.get(i, j), ip, max_relative = 1e-15);
        }
    }
    let b1 = orthogonalize(&g1, &idx, m.fingerprint(), Default::default()).unwrap();
    let b2 = orthogonalize(&g2, &idx, m.fingerprint(), Default::default()).unwrap();
    assert_eq!(b1.retained, b2.retained);
    for (r1, r2) in b1.coefficients.iter().zip(b2.coefficients.iter()) {
        for (a, b) in r1.iter().zip(r2.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
    }
}

fn gamma_pair_model() -> LevyModel {
    LevyModel::new(
        2,
        vec![0.0, 0.0],
        vec![vec![0.0, 0.0], vec![0.0, 0.0]],
        JumpMeasureSpec::GammaCopula {
            gammas: vec![1.0, 1.5],
            rates: vec![2.0, 2.5],
            theta: 1.0,
            eta: 1.0,
            trunc_eps: 0.2,
        },
    )
    .unwrap()
}

#[test]
fn copula_density_matches_fd_oracle() {
    // independent oracle: finite-difference copula partial evaluated at
    // E1-based tails times closed-form marginal densities
    let model = gamma_pair_model();
    let clayton = Clayton::new(1.0, 1.0).unwrap();
    let dens_oracle = |x1: f64, x2: f64| -> f64 {
        let u1 = 1.0 * oracle::exp_integral_e1(2.0 * x1);
        let u2 = 1.5 * oracle::exp_integral_e1(2.5 * x2);
        let fd = oracle::mixed_partial_fd(|u| clayton.f(u).unwrap(), &[u1, u2], 1e-5 * u1.min(u2));
        let d1 = 1.0 * (-2.0 * x1).exp() / x1;
        let d2 = 1.5 * (-2.5 * x2).exp() / x2;
        fd * d1 * d2
    };
    for (x1, x2) in [(0.3, 0.4), (1.0, 0.2), (0.25, 1.4)] {
        let got = copula_levy_density(&model, &[x1, x2]).unwrap();
        assert_relative_eq!(got, dens_oracle(x1, x2), max_relative = 1e-5);
    }
    assert_relative_eq!(
        clayton_f(&[1.0, 1.0], 1.0, 1.0).unwrap(),
        0.5,
        max_relative = 1e-15
    );
}

#[test]
fn copula_moment_matches_log_simpson_oracle() {
    // log-coordinate Simpson grid of the FD/E1 density; the x1 x2 weight
    // damps the axes so the truncated-corner cutoff is negligible
    let model = gamma_pair_model();
    let clayton = Clayton::new(1.0, 1.0).unwrap();
    let dens = |x1: f64, x2: f64| -> f64 {
        let u1 = 1.0 * oracle::exp_integral_e1(2.0 * x1);
        let u2 = 1.5 * oracle::exp_integral_e1(2.5 * x2);
        let fd = oracle::mixed_partial_fd(|u| clayton.f(u).unwrap(), &[u1, u2], 1e-5 * u1.min(u2));
        fd * (-2.0 * x1).exp() / x1 * 1.5 * (-2.5 * x2).exp() / x2
    };
    let p = mi(&[1, 1]);
    let got = moment(&model, &p).unwrap().value;
    // integrate the two truncation regions separately so every Simpson
    // rectangle holds a smooth integrand (log coordinates, jacobian x1 x2)
    let log_simpson = |x1_lo: f64, x1_hi: f64, x2_lo: f64, x2_hi: f64, n: usize| -> f64 {
        let (a, b) = (x1_lo.ln(), x1_hi.ln());
        let (c, d) = (x2_lo.ln(), x2_hi.ln());
        let (hx, hy) = ((b - a) / n as f64, (d - c) / n as f64);
        let wt = |k: usize| -> f64 {
            if k == 0 || k == n {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            }
        };
        let mut s = 0.0;
        for i in 0..=n {
            let x1 = (a + i as f64 * hx).exp();
            for j in 0..=n {
                let x2 = (c + j as f64 * hy).exp();
                s += wt(i) * wt(j) * x1 * x2 * x1 * x2 * dens(x1, x2);
            }
        }
        s * hx * hy / 9.0
    };
    let (eps, tiny, hi) = (0.2, 1e-7, 14.0);
    let brute = log_simpson(eps, hi, tiny, hi, 220) + log_simpson(tiny, eps, eps, hi, 220);
    assert_relative_eq!(got, brute, max_relative = 2e-3);
}

#[test]
fn copula_sampler_and_quadrature_agree() {
    // dual-route check: jump sampling (conditional inversion) against the
    // quadrature-based moments and the Hypothesis 1 integral. The two paths
    // share only the tabulated marginal tails.
    use rand_chacha::ChaCha8Rng;
    let model = gamma_pair_model();
    let backend = match model.backend() {
        teugels::levy_model::MeasureBackend::Copula(c) => c,
        _ => unreachable!(),
    };
    let lambda_eps = model.total_intensity().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let n = 200_000usize;
    let mut sum_m11 = 0.0;
    let mut sum_hyp = 0.0;
    let mut sq_m11 = 0.0;
    let mut sq_hyp = 0.0;
    for _ in 0..n {
        let x = backend.sample_jump(&mut rng).unwrap();
        let v = x[0] * x[1];
        let w = (0.8 * (x[0] * x[0] + x[1] * x[1]).sqrt()).exp();
        sum_m11 += v;
        sum_hyp += w;
        sq_m11 += v * v;
        sq_hyp += w * w;
    }
    let scale = lambda_eps / n as f64;
    let est_m11 = sum_m11 * scale;
    let se_m11 = lambda_eps * ((sq_m11 / n as f64 - (sum_m11 / n as f64).powi(2)) / n as f64).sqrt();
    let est_hyp = sum_hyp * scale;
    let se_hyp = lambda_eps * ((sq_hyp / n as f64 - (sum_hyp / n as f64).powi(2)) / n as f64).sqrt();

    let m11 = moment(&model, &mi(&[1, 1])).unwrap().value;
    assert!(
        (m11 - est_m11).abs() <= 4.0 * se_m11,
        "moment {m11} vs sampled {est_m11} +- {se_m11}"
    );
    let rep = teugels::levy_model::check_hypothesis1(&model, 0.8, 0.2).unwrap();
    assert!(rep.holds);
    let hyp = rep.value.unwrap();
    assert!(
        (hyp - est_hyp).abs() <= 4.0 * se_hyp,
        "hyp1 {hyp} vs sampled {est_hyp} +- {se_hyp}"
    );
}

#[test]
fn dense_random_paths_agree_with_double_sum_after_compensation() {
    // sanity check tying the full evaluator (with compensators) to the
    // oracle: with the compensator rate forced to zero through a synthetic
    // measure the two coincide; with it left on they differ
    let m = discrete_model(
        vec![Atom { x: vec![1.0, 0.5], rate: 40.0 }],
        vec![vec![0.0, 0.0], vec![0.0, 0.0]],
    );
    let cfg = PathConfig { horizon: 1.0, dt: 0.5 };
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    let stream = rng.gen_range(0..8);
    let path = simulate_path(&m, &cfg, 77, stream).unwrap();
    let p = mi(&[1, 0]);
    let q = mi(&[0, 1]);
    let zero_comp = |idx: &MultiIndex| LevelMeasure {
        atoms: path
            .jump_times
            .iter()
            .zip(path.jumps.iter())
            .map(|(t, x)| (*t, idx.eval_pow(x)))
            .collect(),
        rate: 0.0,
    };
    let integrand = Poly::<BigRational>::constant(4, BigRational::from_f64(1.0).unwrap());
    let got = evaluate_levels(&[&zero_comp(&p), &zero_comp(&q)], &integrand, 0.0, 1.0).unwrap();
    let want = oracle::pathwise_double_sum(&path, &p, &q, 1.0);
    assert_relative_eq!(got, want, max_relative = 1e-10);
}
