//! Brute-force reference implementations used to mint expected values and
//! cross-check the main crate on small instances. Each oracle deliberately
//! takes its own arithmetic path (direct loops, series, finite differences,
//! exact integers) independent of the code it checks. Test support only; not
//! part of the library surface.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

use teugels::multiindex::MultiIndex;
use teugels::scalar::Scalar;
use teugels::simulate::SamplePath;

/// Direct weighted sum over atoms: sum_j rate_j * prod_i x_{j,i}^{p_i},
/// powers by iterated multiplication.
pub fn atom_sum_moment(atoms: &[(Vec<f64>, f64)], p: &MultiIndex) -> f64 {
    let mut total = 0.0;
    for (x, rate) in atoms {
        let mut m = *rate;
        for (xi, &pi) in x.iter().zip(p.components()) {
            for _ in 0..pi {
                m *= xi;
            }
        }
        total += m;
    }
    total
}

/// The S1-side scalar product on a discrete measure, evaluated as
/// int x^{p-1} x^{q-1} prod x_i^2 nu(dx) plus the first-order sigma term
/// (exponents combined before evaluation, the measure-side limit at zero
/// components).
pub fn s1_inner_product(
    atoms: &[(Vec<f64>, f64)],
    sigma: &[Vec<f64>],
    p: &MultiIndex,
    q: &MultiIndex,
) -> f64 {
    let mut total = 0.0;
    for (x, rate) in atoms {
        let mut m = *rate;
        for ((xi, &pi), &qi) in x.iter().zip(p.components()).zip(q.components()) {
            let e = (pi as i64 - 1) + (qi as i64 - 1) + 2;
            for _ in 0..e {
                m *= xi;
            }
        }
        total += m;
    }
    if let (Some(i), Some(j)) = (p.as_unit(), q.as_unit()) {
        total += sigma[i][j];
    }
    total
}

/// Result of the dense symmetric elimination oracle.
#[derive(Debug, Clone)]
pub struct GramElimination<S> {
    /// unit-diagonal triangular rows of retained directions
    pub rows: Vec<Vec<S>>,
    /// pivots (squared residual norms)
    pub pivots: Vec<S>,
    pub retained: Vec<usize>,
    pub dropped: Vec<usize>,
}

/// Symmetric (LDL-style) elimination on a full working copy of the Gram
/// matrix: an arithmetic path independent of the modified Gram-Schmidt
/// projections it cross-checks. Exact scalars drop on exactly zero pivots.
pub fn dense_gram_orthogonalize<S: Scalar>(gram: &[Vec<S>], tol: &S) -> GramElimination<S> {
    let n = gram.len();
    let mut w: Vec<Vec<S>> = gram.to_vec();
    // l[i][k]: multiplier of pivot row k eliminated from row i
    let mut l = vec![vec![S::zero(); n]; n];
    let mut out = GramElimination {
        rows: Vec::new(),
        pivots: Vec::new(),
        retained: Vec::new(),
        dropped: Vec::new(),
    };
    for i in 0..n {
        let d = w[i][i].clone();
        let drop = if S::EXACT { d.is_zero() } else { d <= *tol };
        if drop {
            out.dropped.push(i);
            continue;
        }
        for j in (i + 1)..n {
            l[j][i] = w[j][i].clone() / d.clone();
        }
        for j in (i + 1)..n {
            if l[j][i].is_zero() {
                continue;
            }
            for k in (i + 1)..n {
                let delta = l[j][i].clone() * w[i][k].clone();
                w[j][k] = w[j][k].clone() - delta;
            }
        }
        out.retained.push(i);
        out.pivots.push(d);
    }
    // unwind the multipliers to express each retained direction in the
    // original coordinates (unit diagonal)
    for &i in &out.retained {
        let mut row = vec![S::zero(); n];
        row[i] = S::one();
        for j in (0..i).rev() {
            let mut acc = S::zero();
            for k in (j + 1)..=i {
                if !row[k].is_zero() && !l[k][j].is_zero() {
                    acc = acc + row[k].clone() * l[k][j].clone();
                }
            }
            row[j] = S::zero() - acc;
        }
        out.rows.push(row);
    }
    out
}

/// Brute-force ordered-pair sum over jumps: the value of the compensator-free
/// double integral with outer weight (dx)^outer and inner weight (dx)^inner,
/// inner time strictly before outer time, both at or before t.
pub fn pathwise_double_sum(path: &SamplePath, outer: &MultiIndex, inner: &MultiIndex, t: f64) -> f64 {
    let mut total = 0.0;
    for (a, (ta, xa)) in path.jump_times.iter().zip(path.jumps.iter()).enumerate() {
        if *ta > t {
            continue;
        }
        for (b, (tb, xb)) in path.jump_times.iter().zip(path.jumps.iter()).enumerate() {
            if b == a || tb >= ta {
                continue;
            }
            total += pow_vec(xa, outer) * pow_vec(xb, inner);
        }
    }
    total
}

fn pow_vec(x: &[f64], p: &MultiIndex) -> f64 {
    let mut m = 1.0;
    for (xi, &pi) in x.iter().zip(p.components()) {
        for _ in 0..pi {
            m *= xi;
        }
    }
    m
}

/// Exponential integral E1(x) for x > 0: power series below 1, Lentz
/// continued fraction above. Reference for gamma-marginal tail integrals.
pub fn exp_integral_e1(x: f64) -> f64 {
    assert!(x > 0.0, "E1 oracle needs x > 0");
    const EULER: f64 = 0.5772156649015328606;
    if x <= 1.0 {
        // E1(x) = -gamma - ln x + sum_{k>=1} (-1)^{k+1} x^k / (k k!)
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 1..200 {
            term *= -x / k as f64;
            let add = -term / k as f64;
            sum += add;
            if add.abs() < 1e-18 * sum.abs().max(1.0) {
                break;
            }
        }
        -EULER - x.ln() + sum
    } else {
        // modified Lentz for the continued fraction
        // E1(x) = e^{-x} * 1/(x+1- 1^2/(x+3- 2^2/(x+5- ...)))
        let tiny = 1e-300;
        let mut f = tiny;
        let mut c = f;
        let mut d = 0.0;
        for i in 0..200 {
            let (a, b) = if i == 0 {
                (1.0, x + 1.0)
            } else {
                let k = i as f64;
                (-k * k, x + 2.0 * k + 1.0)
            };
            d = b + a * d;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + a / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let del = d * c;
            f *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        (-x).exp() * f
    }
}

/// Exact negative-multinomial mass by integer factorials:
/// (|k|-1)!/(k_1!...k_n!) prod w_i^{k_i} with rational weights w_i = mu l_i.
pub fn negmult_mass_exact(k: &MultiIndex, weights: &[BigRational]) -> BigRational {
    let d: u32 = k.degree();
    let num = fact_big(d.saturating_sub(1));
    let mut den = BigInt::one();
    for &ki in k.components() {
        den *= fact_big(ki);
    }
    let mut acc = BigRational::new(num, den);
    for (&ki, w) in k.components().iter().zip(weights) {
        for _ in 0..ki {
            acc *= w.clone();
        }
    }
    acc
}

fn fact_big(n: u32) -> BigInt {
    let mut acc = BigInt::one();
    for i in 1..=n {
        acc *= BigInt::from(i);
    }
    acc
}

/// Central finite-difference mixed partial (one derivative per coordinate),
/// as an independent check of the closed-form copula partials.
pub fn mixed_partial_fd<F: Fn(&[f64]) -> f64>(f: F, u: &[f64], h: f64) -> f64 {
    let n = u.len();
    let mut total = 0.0;
    for mask in 0..(1u32 << n) {
        let mut point = u.to_vec();
        let mut sign = 1.0;
        for (i, pi) in point.iter_mut().enumerate() {
            if mask & (1 << i) != 0 {
                *pi += h;
            } else {
                *pi -= h;
                sign = -sign;
            }
        }
        total += sign * f(&point);
    }
    total / (2.0 * h).powi(n as i32)
}

/// Exact lattice sum of k^p over a finite box for the negative multinomial,
/// everything in rationals (reference for the truncated series).
pub fn negmult_moment_box(weights: &[BigRational], p: &MultiIndex, box_size: u32) -> BigRational {
    let n = weights.len();
    let mut total = BigRational::zero();
    let mut k = vec![0u32; n];
    loop {
        let d: u32 = k.iter().sum();
        if d >= 1 {
            let ki = MultiIndex::new(k.clone()).expect("nonzero");
            let mut term = negmult_mass_exact(&ki, weights);
            for (&kc, &pc) in k.iter().zip(p.components()) {
                for _ in 0..pc {
                    term *= BigRational::from_integer(BigInt::from(kc));
                }
            }
            total += term;
        }
        let mut pos = 0;
        loop {
            if pos == n {
                return total;
            }
            if k[pos] < box_size {
                k[pos] += 1;
                break;
            }
            k[pos] = 0;
            pos += 1;
        }
    }
}
