//! Chaos expansions of increment products.
//!
//! An increment product prod_i (X_i(t + t0) - X_i(t0))^{k_i} is expanded by
//! iterating the Ito product rule over the alphabet {dY^p, ds}: interleaving
//! two iterated integrals and merging colliding differentials through the
//! bracket d[Y^p, Y^q] = dY^{p+q} + (m_{p+q} + sigma(p,q)) ds. Integrating
//! the ds slots out in closed form leaves iterated integrals against the
//! Teugels martingales with polynomial integrands, exactly the shape the
//! representation lemmas prescribe. All coefficients are exact rationals
//! (moment values enter losslessly), floats appear only at evaluation.

use std::collections::BTreeMap;

use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::SquareMat;
use crate::moments::MomentTable;
use crate::multiindex::MultiIndex;
use crate::orthobasis::MartingaleBasis;
use crate::poly::Poly;
use crate::scalar::Scalar;
use crate::simulate::SamplePath;

pub type Q = BigRational;

/// Default cap on the expandable total degree (combinatorial blowup guard).
pub const DEFAULT_K_MAX: u32 = 3;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Letter {
    /// dY^p differential
    Y(MultiIndex),
    /// ds differential
    Ds,
}

type Word = Vec<Letter>;
type WordSum = BTreeMap<Word, Q>;

fn add_word(sum: &mut WordSum, w: Word, c: Q) {
    if c.is_zero() {
        return;
    }
    let entry = sum.entry(w).or_insert_with(Q::zero);
    *entry += c;
    if entry.is_zero() {
        let w2: Vec<_> = sum
            .iter()
            .filter(|(_, v)| v.is_zero())
            .map(|(k, _)| k.clone())
            .collect();
        for k in w2 {
            sum.remove(&k);
        }
    }
}

/// Collision products [a, b] as combinations of letters.
struct Collider<'a> {
    table: &'a MomentTable,
    sigma: &'a SquareMat,
}

impl Collider<'_> {
    fn collide(&self, a: &Letter, b: &Letter) -> Result<Vec<(Letter, Q)>> {
        match (a, b) {
            (Letter::Y(p), Letter::Y(q)) => {
                let sum = p.add(q)?;
                // jump integral of x^{p+q}; degree >= 2 so the table entry is
                // the pure jump moment
                let mut ds_coeff = Q::from_f64_lossless(self.table.value(&sum)?);
                if let (Some(i), Some(j)) = (p.as_unit(), q.as_unit()) {
                    ds_coeff += Q::from_f64_lossless(self.sigma.get(i, j));
                }
                Ok(vec![(Letter::Y(sum), Q::one()), (Letter::Ds, ds_coeff)])
            }
            _ => Ok(Vec::new()),
        }
    }

    /// Quasi-shuffle product of two words (outermost letter first).
    fn qs(&self, v: &[Letter], w: &[Letter]) -> Result<WordSum> {
        let mut out = WordSum::new();
        if v.is_empty() {
            add_word(&mut out, w.to_vec(), Q::one());
            return Ok(out);
        }
        if w.is_empty() {
            add_word(&mut out, v.to_vec(), Q::one());
            return Ok(out);
        }
        for (rest, c) in self.qs(&v[1..], w)? {
            let mut word = Vec::with_capacity(rest.len() + 1);
            word.push(v[0].clone());
            word.extend(rest);
            add_word(&mut out, word, c);
        }
        for (rest, c) in self.qs(v, &w[1..])? {
            let mut word = Vec::with_capacity(rest.len() + 1);
            word.push(w[0].clone());
            word.extend(rest);
            add_word(&mut out, word, c);
        }
        let merged = self.collide(&v[0], &w[0])?;
        if !merged.is_empty() {
            let inner = self.qs(&v[1..], &w[1..])?;
            for (letter, lc) in merged {
                for (rest, c) in &inner {
                    let mut word = Vec::with_capacity(rest.len() + 1);
                    word.push(letter.clone());
                    word.extend(rest.iter().cloned());
                    add_word(&mut out, word, lc.clone() * c.clone());
                }
            }
        }
        Ok(out)
    }

    fn qs_sums(&self, a: &WordSum, b: &WordSum) -> Result<WordSum> {
        let mut out = WordSum::new();
        for (wa, ca) in a {
            for (wb, cb) in b {
                for (word, c) in self.qs(wa, wb)? {
                    add_word(&mut out, word, ca.clone() * cb.clone() * c);
                }
            }
        }
        Ok(out)
    }
}

/// One iterated-integral term: integrators listed outermost first, the
/// integrand a polynomial in (t, t0, u_1, ..., u_m) with u_1 the outermost
/// integration time.
#[derive(Debug, Clone, PartialEq)]
pub struct ChaosTerm {
    pub integrators: Vec<MultiIndex>,
    pub integrand: Poly<Q>,
}

/// Chaos expansion of an increment product in the Teugels monomial basis.
#[derive(Debug, Clone, PartialEq)]
pub struct ChaosExpansion {
    pub k: MultiIndex,
    /// Deterministic part f^{(k)} as a polynomial in the duration t.
    pub f: Poly<Q>,
    pub terms: Vec<ChaosTerm>,
}

fn factorial_q(n: u32) -> Q {
    let mut acc = Q::one();
    for i in 1..=n {
        acc *= Q::from_f64_lossless(f64::from(i));
    }
    acc
}

/// Expand prod_i (X_i(t + t0) - X_i(t0))^{k_i} into its chaos representation.
/// Exact in the Y basis; moments enter as lossless rationals.
pub fn expand_increment_product(
    table: &MomentTable,
    sigma: &SquareMat,
    k: &MultiIndex,
    k_max: u32,
) -> Result<ChaosExpansion> {
    let degree = k.degree();
    if degree > k_max {
        return Err(Error::Capability(format!(
            "expansion degree |k| = {degree} exceeds the cap {k_max}"
        )));
    }
    if table.coverage() < degree {
        return Err(Error::Coverage(format!(
            "expansion needs moment coverage {degree}, table has {}",
            table.coverage()
        )));
    }
    let collider = Collider { table, sigma };
    // product of degree-one factors, one per unit of each coordinate
    let mut acc: Option<WordSum> = None;
    for (i, &ki) in k.components().iter().enumerate() {
        for _ in 0..ki {
            let unit = MultiIndex::unit(k.len(), i);
            let rate = Q::from_f64_lossless(table.value(&unit)?);
            let mut factor = WordSum::new();
            add_word(&mut factor, vec![Letter::Y(unit)], Q::one());
            add_word(&mut factor, vec![Letter::Ds], rate);
            acc = Some(match acc {
                None => factor,
                Some(prev) => collider.qs_sums(&prev, &factor)?,
            });
        }
    }
    let words = acc.expect("degree >= 1");
    words_to_expansion(k.clone(), words)
}

/// Integrate the ds slots of every word out in closed form, leaving
/// polynomial integrands over the Y-slot times.
fn words_to_expansion(k: MultiIndex, words: WordSum) -> Result<ChaosExpansion> {
    let mut f = Poly::<Q>::zero(1);
    let mut terms: BTreeMap<Vec<MultiIndex>, Poly<Q>> = BTreeMap::new();
    for (word, coeff) in words {
        let y_positions: Vec<usize> = word
            .iter()
            .enumerate()
            .filter_map(|(i, l)| matches!(l, Letter::Y(_)) .then_some(i))
            .collect();
        let m = y_positions.len();
        if m == 0 {
            // pure time volume: t^r / r!
            let r = word.len() as u32;
            f.add_term(vec![r], coeff / factorial_q(r));
            continue;
        }
        let integrators: Vec<MultiIndex> = y_positions
            .iter()
            .map(|&i| match &word[i] {
                Letter::Y(p) => p.clone(),
                Letter::Ds => unreachable!(),
            })
            .collect();
        let vars = 2 + m; // t, t0, u_1..u_m
        let t = Poly::<Q>::var(vars, 0);
        let t0 = Poly::<Q>::var(vars, 1);
        let u = |j: usize| Poly::<Q>::var(vars, 2 + j);
        let mut integrand = Poly::constant(vars, coeff);
        // run of ds letters before the first Y integrates to
        // ((t + t0) - u_1)^{r}/r!
        let r0 = y_positions[0] as u32;
        if r0 > 0 {
            let gap = t.add(&t0).add(&u(0).scale(&-Q::one()));
            integrand = integrand.mul(&crate::poly::poly_pow(&gap, r0)).scale(&(Q::one() / factorial_q(r0)));
        }
        // runs between consecutive Y letters: (u_j - u_{j+1})^{r}/r!
        for j in 0..m - 1 {
            let r = (y_positions[j + 1] - y_positions[j] - 1) as u32;
            if r > 0 {
                let gap = u(j).add(&u(j + 1).scale(&-Q::one()));
                integrand = integrand.mul(&crate::poly::poly_pow(&gap, r)).scale(&(Q::one() / factorial_q(r)));
            }
        }
        // run after the last Y: (u_m - t0)^{r}/r!
        let r_last = (word.len() - 1 - y_positions[m - 1]) as u32;
        if r_last > 0 {
            let gap = u(m - 1).add(&t0.scale(&-Q::one()));
            integrand = integrand.mul(&crate::poly::poly_pow(&gap, r_last)).scale(&(Q::one() / factorial_q(r_last)));
        }
        match terms.entry(integrators) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(integrand);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let merged = o.get().add(&integrand);
                *o.get_mut() = merged;
            }
        }
    }
    let expansion = ChaosExpansion {
        k,
        f,
        terms: terms
            .into_iter()
            .filter(|(_, p)| !p.is_zero())
            .map(|(integrators, integrand)| ChaosTerm { integrators, integrand })
            .collect(),
    };
    expansion.check_structure()?;
    Ok(expansion)
}

impl ChaosExpansion {
    /// Structural invariants: per-coordinate integrator degrees never exceed
    /// k, integrand degrees stay below |k|, and f is a pure polynomial in t.
    fn check_structure(&self) -> Result<()> {
        let k = self.k.components();
        for term in &self.terms {
            let mut per_coord = vec![0u32; k.len()];
            for p in &term.integrators {
                for (acc, &c) in per_coord.iter_mut().zip(p.components()) {
                    *acc += c;
                }
            }
            if per_coord.iter().zip(k.iter()).any(|(a, b)| a > b) {
                return Err(Error::Numeric(format!(
                    "vanishing constraint violated: integrators {:?} exceed k = {}",
                    term.integrators, self.k
                )));
            }
            let y_degree: u32 = term.integrators.iter().map(|p| p.degree()).sum();
            if term.integrand.total_degree() + y_degree > self.k.degree() {
                return Err(Error::Numeric(
                    "integrand degree bound violated".into(),
                ));
            }
        }
        Ok(())
    }

    /// E[prod increments^k] as a function of the duration t (independent of
    /// the anchor t0 by construction).
    pub fn moment_function(&self, t: f64) -> f64 {
        self.f.eval_f64(&[t])
    }

    /// Exact rational coefficients of f, for exact-equality comparisons.
    pub fn f_coefficients(&self) -> Vec<(u32, Q)> {
        self.f.terms().map(|(e, c)| (e[0], c.clone())).collect()
    }

    /// Substitute a numeric anchor t0 into every integrand (f never contains
    /// the anchor).
    pub fn with_anchor(&self, t0: &Q) -> ChaosExpansion {
        ChaosExpansion {
            k: self.k.clone(),
            f: self.f.clone(),
            terms: self
                .terms
                .iter()
                .map(|term| ChaosTerm {
                    integrators: term.integrators.clone(),
                    integrand: term.integrand.substitute(1, t0),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct PolyJson {
            vars: usize,
            coeffs: Vec<(Vec<u32>, String)>,
        }
        fn poly_json(p: &Poly<Q>) -> PolyJson {
            PolyJson {
                vars: p.vars(),
                coeffs: p.terms().map(|(e, c)| (e.clone(), c.to_string())).collect(),
            }
        }
        #[derive(Serialize)]
        struct TermJson {
            integrators: Vec<MultiIndex>,
            integrand: PolyJson,
        }
        #[derive(Serialize)]
        struct ExpansionJson {
            k: MultiIndex,
            f: PolyJson,
            terms: Vec<TermJson>,
        }
        let out = ExpansionJson {
            k: self.k.clone(),
            f: poly_json(&self.f),
            terms: self
                .terms
                .iter()
                .map(|t| TermJson {
                    integrators: t.integrators.clone(),
                    integrand: poly_json(&t.integrand),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&out).expect("expansion serializes")
    }
}

/// Predictable form: terms of an expansion regrouped under their outermost
/// integrator, so each group reads as one integral of a predictable
/// integrand against dH (or dY) of that index.
#[derive(Debug, Clone)]
pub struct PredictableForm {
    pub k: MultiIndex,
    pub f: Poly<Q>,
    /// outer index -> inner terms (inner integrators, integrand unchanged)
    pub groups: BTreeMap<MultiIndex, Vec<(Vec<MultiIndex>, Poly<Q>)>>,
}

pub fn to_predictable_form(e: &ChaosExpansion) -> PredictableForm {
    let mut groups: BTreeMap<MultiIndex, Vec<(Vec<MultiIndex>, Poly<Q>)>> = BTreeMap::new();
    for term in &e.terms {
        let outer = term.integrators[0].clone();
        let inner = term.integrators[1..].to_vec();
        groups.entry(outer).or_default().push((inner, term.integrand.clone()));
    }
    PredictableForm {
        k: e.k.clone(),
        f: e.f.clone(),
        groups,
    }
}

impl PredictableForm {
    /// Reconstruct the flat term multiset (the regrouping is a partition).
    pub fn flatten(&self) -> Vec<ChaosTerm> {
        let mut out = Vec::new();
        for (outer, inners) in &self.groups {
            for (inner, integrand) in inners {
                let mut integrators = Vec::with_capacity(inner.len() + 1);
                integrators.push(outer.clone());
                integrators.extend(inner.iter().cloned());
                out.push(ChaosTerm {
                    integrators,
                    integrand: integrand.clone(),
                });
            }
        }
        out.sort_by(|a, b| a.integrators.cmp(&b.integrators));
        out
    }
}

/// Expansion rewritten over the orthogonal basis: each Y-integrator slot is
/// substituted by its H-combination through the inverse coefficient matrix.
/// Requires a full-rank basis covering the integrator degrees.
#[derive(Debug, Clone)]
pub struct HChaosExpansion {
    pub k: MultiIndex,
    pub f: Poly<Q>,
    /// terms keyed by sequences of retained-basis slots (outermost first)
    pub terms: Vec<(Vec<usize>, Poly<Q>)>,
}

pub fn to_h_basis(e: &ChaosExpansion, basis: &MartingaleBasis) -> Result<HChaosExpansion> {
    if !basis.dropped.is_empty() {
        return Err(Error::Capability(
            "H-basis rewrite needs a full-rank basis (no dropped directions)".into(),
        ));
    }
    let n_idx = basis.indices.len();
    // position of each multi-index among the basis columns
    let pos_of = |p: &MultiIndex| -> Result<usize> {
        basis
            .indices
            .iter()
            .position(|q| q == p)
            .ok_or_else(|| Error::Coverage(format!("basis does not cover integrator {p}")))
    };
    // inverse of the unit-lower-triangular coefficient matrix
    let c = &basis.coefficients;
    let mut inv = vec![vec![0.0; n_idx]; n_idx];
    for i in 0..n_idx {
        inv[i][i] = 1.0;
        for j in 0..i {
            let mut s = 0.0;
            for l in j..i {
                s += c[i][l] * inv[l][j];
            }
            inv[i][j] = -s;
        }
    }
    let mut grouped: BTreeMap<Vec<usize>, Poly<Q>> = BTreeMap::new();
    for term in &e.terms {
        let slots: Vec<usize> = term
            .integrators
            .iter()
            .map(|p| pos_of(p))
            .collect::<Result<_>>()?;
        // expand the product of inverse rows over all slots
        let mut partial: Vec<(Vec<usize>, f64)> = vec![(Vec::new(), 1.0)];
        for &q in &slots {
            let mut next = Vec::new();
            for (seq, w) in &partial {
                for (r, &coef) in inv[q].iter().enumerate().take(q + 1) {
                    if coef == 0.0 {
                        continue;
                    }
                    let mut seq2 = seq.clone();
                    seq2.push(r);
                    next.push((seq2, w * coef));
                }
            }
            partial = next;
        }
        for (seq, w) in partial {
            let contrib = term.integrand.scale(&Q::from_f64_lossless(w));
            match grouped.entry(seq) {
                std::collections::btree_map::Entry::Vacant(v) => {
                    v.insert(contrib);
                }
                std::collections::btree_map::Entry::Occupied(mut o) => {
                    let merged = o.get().add(&contrib);
                    *o.get_mut() = merged;
                }
            }
        }
    }
    Ok(HChaosExpansion {
        k: e.k.clone(),
        f: e.f.clone(),
        terms: grouped
            .into_iter()
            .filter(|(_, p)| !p.is_zero())
            .collect(),
    })
}

/// A single integration level: atoms (jump and Brownian contributions) on
/// (t0, t0 + t] and an absolutely continuous drift rate.
#[derive(Debug, Clone)]
pub struct LevelMeasure {
    /// (time, weight), strictly increasing times within (t0, t0 + t]
    pub atoms: Vec<(f64, f64)>,
    pub rate: f64,
}

/// Level measure of dY^p on the window (t0, t0 + t]: jump atoms weighted by
/// (dx)^p, the compensator drift, and (grid mode, first order only) Brownian
/// increments attributed to their grid step with linear partial overlap.
pub fn y_level_measure(
    path: &SamplePath,
    table: &MomentTable,
    p: &MultiIndex,
    t0: f64,
    t_end: f64,
) -> Result<LevelMeasure> {
    let mut atoms: Vec<(f64, f64)> = Vec::new();
    for (time, x) in path.jump_times.iter().zip(path.jumps.iter()) {
        if *time > t0 && *time <= t_end {
            atoms.push((*time, p.eval_pow(x)));
        }
    }
    if let (Some(i), Some(grid)) = (p.as_unit(), path.brownian.as_ref()) {
        for (step, inc) in grid.increments.iter().enumerate() {
            let lo = step as f64 * grid.dt;
            let hi = (lo + grid.dt).min(path.horizon);
            let olo = lo.max(t0);
            let ohi = hi.min(t_end);
            if ohi <= olo {
                continue;
            }
            let frac = (ohi - olo) / grid.dt;
            atoms.push((ohi, frac * inc[i]));
        }
        atoms.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite times"));
        // merge equal times (a jump can coincide with a grid knot)
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
        for (t, w) in atoms {
            if let Some(last) = merged.last_mut() {
                if last.0 == t {
                    last.1 += w;
                    continue;
                }
            }
            merged.push((t, w));
        }
        atoms = merged;
    }
    Ok(LevelMeasure {
        atoms,
        rate: table.compensator_rate(p)?,
    })
}

/// Level measure of dH^slot as the coefficient combination of Y measures.
pub fn h_level_measure(
    path: &SamplePath,
    table: &MomentTable,
    basis: &MartingaleBasis,
    slot: usize,
    t0: f64,
    t_end: f64,
) -> Result<LevelMeasure> {
    let row = &basis.coefficients[slot];
    let mut atoms: BTreeMap<u64, (f64, f64)> = BTreeMap::new();
    let mut rate = 0.0;
    for (j, &coef) in row.iter().enumerate() {
        if coef == 0.0 {
            continue;
        }
        let lm = y_level_measure(path, table, &basis.indices[j], t0, t_end)?;
        rate += coef * lm.rate;
        for (t, w) in lm.atoms {
            let key = t.to_bits();
            let e = atoms.entry(key).or_insert((t, 0.0));
            e.1 += coef * w;
        }
    }
    Ok(LevelMeasure {
        atoms: atoms.into_values().collect(),
        rate,
    })
}

/// Dense univariate polynomial in absolute time, ascending coefficients.
#[derive(Debug, Clone)]
struct Poly1(Vec<f64>);

impl Poly1 {
    fn constant(c: f64) -> Self {
        Poly1(vec![c])
    }

    fn eval(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        for &c in self.0.iter().rev() {
            acc = acc * x + c;
        }
        acc
    }

    /// u^alpha * self
    fn shift_pow(&self, alpha: u32) -> Poly1 {
        let mut v = vec![0.0; alpha as usize];
        v.extend(&self.0);
        Poly1(v)
    }

    fn antiderivative(&self) -> Poly1 {
        let mut v = vec![0.0];
        for (i, &c) in self.0.iter().enumerate() {
            v.push(c / (i as f64 + 1.0));
        }
        Poly1(v)
    }

    fn scale_add_const(&self, scale: f64, c0: f64) -> Poly1 {
        let mut v: Vec<f64> = self.0.iter().map(|c| c * scale).collect();
        if v.is_empty() {
            v.push(0.0);
        }
        v[0] += c0;
        Poly1(v)
    }
}

/// Evaluate one nested iterated integral for a monomial integrand
/// coeff * prod_j u_j^{alpha_j} over the window (t0, t0 + t], with strict
/// past at inner levels and a closed upper limit at the outermost one.
fn evaluate_monomial(levels: &[(&LevelMeasure, u32)], coeff: f64, t0: f64, t_end: f64) -> f64 {
    if coeff == 0.0 {
        return 0.0;
    }
    // event times strictly inside the window, plus atoms exactly at the end
    let mut interior: Vec<f64> = Vec::new();
    for (lm, _) in levels {
        for (t, _) in &lm.atoms {
            if *t < t_end {
                interior.push(*t);
            }
        }
    }
    interior.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    interior.dedup();
    let mut bounds = Vec::with_capacity(interior.len() + 2);
    bounds.push(t0);
    bounds.extend(&interior);
    bounds.push(t_end);
    let segs = bounds.len() - 1;
    let weight_at = |lm: &LevelMeasure, t: f64| -> f64 {
        match lm.atoms.binary_search_by(|a| a.0.partial_cmp(&t).expect("finite")) {
            Ok(i) => lm.atoms[i].1,
            Err(_) => 0.0,
        }
    };
    // innermost level is the last entry
    let mut q: Vec<Poly1> = vec![Poly1::constant(1.0); segs];
    for (j, (lm, alpha)) in levels.iter().enumerate().rev() {
        let mut p: Vec<Poly1> = Vec::with_capacity(segs);
        let mut c = 0.0;
        for s in 0..segs {
            let a = q[s].shift_pow(*alpha).antiderivative();
            let seg_poly = a.scale_add_const(lm.rate, c - lm.rate * a.eval(bounds[s]));
            if s + 1 < segs {
                let b = bounds[s + 1];
                c = seg_poly.eval(b) + weight_at(lm, b) * b.powi(*alpha as i32) * q[s].eval(b);
            }
            p.push(seg_poly);
        }
        if j == 0 {
            // closed outer limit: include an atom exactly at t_end
            let mut v = p[segs - 1].eval(t_end);
            let w_end = weight_at(lm, t_end);
            if w_end != 0.0 {
                v += w_end * t_end.powi(*alpha as i32) * q[segs - 1].eval(t_end);
            }
            return coeff * v;
        }
        q = p;
    }
    // no levels: the integrand constant itself
    coeff
}

/// Evaluate an iterated integral with a polynomial integrand against the
/// given level measures. `t0` and `t` are substituted into the integrand's
/// first two variables.
pub fn evaluate_levels(
    levels: &[&LevelMeasure],
    integrand: &Poly<Q>,
    t0: f64,
    t: f64,
) -> Result<f64> {
    let m = levels.len();
    if integrand.vars() != 2 + m {
        return Err(Error::Dimension(format!(
            "integrand has {} variables, expected {}",
            integrand.vars(),
            2 + m
        )));
    }
    let t_end = t0 + t;
    let mut total = 0.0;
    let numeric = integrand
        .substitute(0, &Q::from_f64_lossless(t))
        .substitute(1, &Q::from_f64_lossless(t0));
    for (exps, c) in numeric.terms() {
        debug_assert!(exps[0] == 0 && exps[1] == 0);
        let with_alpha: Vec<(&LevelMeasure, u32)> = levels
            .iter()
            .enumerate()
            .map(|(j, lm)| (*lm, exps[2 + j]))
            .collect();
        total += evaluate_monomial(&with_alpha, c.to_f64_approx(), t0, t_end);
    }
    Ok(total)
}

/// Pathwise value of one expansion term over the window (t0, t0 + t].
/// Exact for bounded-variation paths; O(dt)-biased in grid mode.
pub fn evaluate_iterated_integral(
    path: &SamplePath,
    table: &MomentTable,
    term: &ChaosTerm,
    t0: f64,
    t: f64,
) -> Result<f64> {
    if t0 < 0.0 || t < 0.0 || t0 + t > path.horizon + 1e-12 {
        return Err(Error::Domain(format!(
            "window [{t0}, {}] outside the path horizon {}",
            t0 + t,
            path.horizon
        )));
    }
    let t_end = t0 + t;
    let measures: Vec<LevelMeasure> = term
        .integrators
        .iter()
        .map(|p| y_level_measure(path, table, p, t0, t_end))
        .collect::<Result<_>>()?;
    let refs: Vec<&LevelMeasure> = measures.iter().collect();
    evaluate_levels(&refs, &term.integrand, t0, t)
}

/// Pathwise value of the full expansion: f(t) plus every term.
pub fn evaluate_expansion(
    path: &SamplePath,
    table: &MomentTable,
    e: &ChaosExpansion,
    t0: f64,
    t: f64,
) -> Result<f64> {
    let mut acc = e.moment_function(t);
    for term in &e.terms {
        acc += evaluate_iterated_integral(path, table, term, t0, t)?;
    }
    Ok(acc)
}

/// Pathwise increment product prod_i (X_i(t0 + t) - X_i(t0))^{k_i}.
pub fn increment_product(path: &SamplePath, k: &MultiIndex, t0: f64, t: f64) -> Result<f64> {
    let mut acc = 1.0;
    for (i, &ki) in k.components().iter().enumerate() {
        if ki == 0 {
            continue;
        }
        let z = path.coordinate_at(i, t0 + t)? - path.coordinate_at(i, t0)?;
        acc *= z.powi(ki as i32);
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy_model::{Atom, JumpMeasureSpec, LevyModel};
    use crate::moments::moment_table;
    use crate::simulate::{simulate_path, PathConfig};
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use num_traits::FromPrimitive;

    fn mi(c: &[u32]) -> MultiIndex {
        MultiIndex::new(c.to_vec()).unwrap()
    }

    fn q64(x: f64) -> Q {
        Q::from_f64(x).unwrap()
    }

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

    #[test]
    fn base_case_unit_index() {
        let m = LevyModel::new(
            2,
            vec![1.0, 0.0],
            vec![vec![0.0, 0.0], vec![0.0, 0.0]],
            JumpMeasureSpec::Discrete { atoms: vec![] },
        )
        .unwrap();
        let t = moment_table(&m, 1).unwrap();
        let e = expand_increment_product(&t, m.sigma(), &mi(&[1, 0]), DEFAULT_K_MAX).unwrap();
        // f = m_{e1} t = t, one term with integrator (e1) and integrand 1
        assert_eq!(e.moment_function(2.0), 2.0);
        assert_eq!(e.terms.len(), 1);
        assert_eq!(e.terms[0].integrators, vec![mi(&[1, 0])]);
        assert_eq!(e.terms[0].integrand.eval_f64(&[0.0, 0.0, 9.9]), 1.0);
    }

    #[test]
    fn mixed_second_order_expansion_structure() {
        let m = two_atom_model();
        let t = moment_table(&m, 2).unwrap();
        let e = expand_increment_product(&t, m.sigma(), &mi(&[1, 1]), DEFAULT_K_MAX).unwrap();
        // f(t) = m_{(1,1)} t + m_{e1} m_{e2} t^2 = 3 t + 7.5 t^2
        assert_relative_eq!(e.moment_function(1.0), 10.5, max_relative = 1e-14);
        let mut seqs: Vec<Vec<MultiIndex>> = e.terms.iter().map(|t| t.integrators.clone()).collect();
        seqs.sort();
        let mut expect = vec![
            vec![mi(&[1, 0])],
            vec![mi(&[0, 1])],
            vec![mi(&[1, 1])],
            vec![mi(&[1, 0]), mi(&[0, 1])],
            vec![mi(&[0, 1]), mi(&[1, 0])],
        ];
        expect.sort();
        assert_eq!(seqs, expect);
        // single-(e1) integrand is the constant m_{e2} t: the anchor cancels
        let term_e1 = e.terms.iter().find(|t| t.integrators == vec![mi(&[1, 0])]).unwrap();
        let val = term_e1.integrand.eval_f64(&[2.0, 0.7, 1.3]); // t=2, t0=0.7, u1=1.3
        assert_relative_eq!(val, 3.0 * 2.0, max_relative = 1e-14);
        assert_eq!(term_e1.integrand.degree_in(1), 0, "anchor must cancel");
    }

    #[test]
    fn one_dimensional_square() {
        let m = LevyModel::new(
            1,
            vec![0.5],
            vec![vec![0.0]],
            JumpMeasureSpec::Discrete {
                atoms: vec![Atom { x: vec![1.0], rate: 2.0 }],
            },
        )
        .unwrap();
        let t = moment_table(&m, 2).unwrap();
        let e = expand_increment_product(&t, m.sigma(), &mi(&[2]), DEFAULT_K_MAX).unwrap();
        // m1 = 0.5 + 2 = 2.5 (rate), m2_jump = 2: f = 2 t + 6.25 t^2
        assert_relative_eq!(e.moment_function(1.0), 8.25, max_relative = 1e-14);
        let coeffs = e.f_coefficients();
        assert_eq!(coeffs.len(), 2);
        assert_eq!(coeffs[0], (1, q64(2.0)));
        assert_eq!(coeffs[1], (2, q64(6.25)));
    }

    #[test]
    fn anchor_does_not_change_f() {
        let m = two_atom_model();
        let t = moment_table(&m, 2).unwrap();
        let e = expand_increment_product(&t, m.sigma(), &mi(&[1, 1]), DEFAULT_K_MAX).unwrap();
        let a0 = e.with_anchor(&q64(0.0));
        let a7 = e.with_anchor(&q64(0.7));
        assert_eq!(a0.f, a7.f);
        // integrands anchored differently may differ, the f part never does
        assert_eq!(a0.f, e.f);
    }

    #[test]
    fn capability_cap_enforced() {
        let m = two_atom_model();
        let t = moment_table(&m, 2).unwrap();
        assert!(expand_increment_product(&t, m.sigma(), &mi(&[3, 1]), 3).is_err());
    }

    #[test]
    fn predictable_form_round_trip() {
        let m = two_atom_model();
        let t = moment_table(&m, 2).unwrap();
        for k in [mi(&[1, 0]), mi(&[1, 1]), mi(&[2, 0])] {
            let e = expand_increment_product(&t, m.sigma(), &k, DEFAULT_K_MAX).unwrap();
            let pf = to_predictable_form(&e);
            let mut original: Vec<ChaosTerm> = e.terms.clone();
            original.sort_by(|a, b| a.integrators.cmp(&b.integrators));
            assert_eq!(pf.flatten(), original);
        }
    }

    #[test]
    fn predictable_form_k11_groups() {
        let m = two_atom_model();
        let t = moment_table(&m, 2).unwrap();
        let e = expand_increment_product(&t, m.sigma(), &mi(&[1, 1]), DEFAULT_K_MAX).unwrap();
        let pf = to_predictable_form(&e);
        let g_e1 = &pf.groups[&mi(&[1, 0])];
        assert_eq!(g_e1.len(), 2); // constant + one inner dY^{e2}
        let g_11 = &pf.groups[&mi(&[1, 1])];
        assert_eq!(g_11.len(), 1);
        assert_eq!(g_11[0].1.eval_f64(&[1.0, 0.0, 0.5]), 1.0);
    }

    #[test]
    fn pure_drift_single_integral_vanishes() {
        let m = LevyModel::new(
            2,
            vec![1.0, 0.0],
            vec![vec![0.0, 0.0], vec![0.0, 0.0]],
            JumpMeasureSpec::Discrete { atoms: vec![] },
        )
        .unwrap();
        let t = moment_table(&m, 1).unwrap();
        let path = simulate_path(&m, &PathConfig { horizon: 1.0, dt: 0.1 }, 1, 0).unwrap();
        let e = expand_increment_product(&t, m.sigma(), &mi(&[1, 0]), DEFAULT_K_MAX).unwrap();
        let v = evaluate_iterated_integral(&path, &t, &e.terms[0], 0.0, 1.0).unwrap();
        assert_abs_diff_eq!(v, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn double_integral_matches_ordered_pair_sum() {
        // zero-compensator synthetic level measures on a two-jump path:
        // int int dY^{e2} dY^{e1} = sum over pairs s2 < s1 of dx2(s2) dx1(s1)
        let lm_outer = LevelMeasure {
            atoms: vec![(0.3, 1.0), (0.7, 2.0)],
            rate: 0.0,
        };
        let lm_inner = LevelMeasure {
            atoms: vec![(0.3, 2.0), (0.7, 1.0)],
            rate: 0.0,
        };
        let integrand = Poly::<Q>::constant(4, Q::one());
        let v = evaluate_levels(&[&lm_outer, &lm_inner], &integrand, 0.0, 1.0).unwrap();
        // only the ordered pair (0.3 inner, 0.7 outer): 2 * 2 = 4
        assert_abs_diff_eq!(v, 4.0, epsilon = 1e-12);
    }

    #[test]
    fn strict_past_excludes_same_instant() {
        let lm = LevelMeasure {
            atoms: vec![(0.5, 3.0)],
            rate: 0.0,
        };
        let integrand = Poly::<Q>::constant(4, Q::one());
        // both levels driven by the same single atom: the inner integral at
        // the jump instant sees the strict past, so the value is zero
        let v = evaluate_levels(&[&lm, &lm], &integrand, 0.0, 1.0).unwrap();
        assert_abs_diff_eq!(v, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn pathwise_crp_exact_small_cases() {
        let m = two_atom_model();
        let t = moment_table(&m, 4).unwrap();
        let cfg = PathConfig { horizon: 1.0, dt: 0.1 };
        for k in [mi(&[1, 0]), mi(&[0, 1]), mi(&[1, 1]), mi(&[2, 0]), mi(&[0, 2])] {
            let e = expand_increment_product(&t, m.sigma(), &k, DEFAULT_K_MAX).unwrap();
            for stream in 0..20u64 {
                let path = simulate_path(&m, &cfg, 99, stream).unwrap();
                for (t0, dur) in [(0.0, 1.0), (0.25, 0.5), (0.7, 0.3)] {
                    let lhs = increment_product(&path, &k, t0, dur).unwrap();
                    let rhs = evaluate_expansion(&path, &t, &e, t0, dur).unwrap();
                    assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-9);
                }
            }
        }
    }

    #[test]
    fn pathwise_crp_exact_third_order() {
        let m = two_atom_model();
        let t = moment_table(&m, 6).unwrap();
        let cfg = PathConfig { horizon: 1.0, dt: 0.1 };
        for k in [mi(&[2, 1]), mi(&[3, 0]), mi(&[1, 2])] {
            let e = expand_increment_product(&t, m.sigma(), &k, DEFAULT_K_MAX).unwrap();
            for stream in 0..10u64 {
                let path = simulate_path(&m, &cfg, 7, stream).unwrap();
                let lhs = increment_product(&path, &k, 0.2, 0.6).unwrap();
                let rhs = evaluate_expansion(&path, &t, &e, 0.2, 0.6).unwrap();
                assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn h_basis_rewrite_preserves_pathwise_value() {
        use crate::orthobasis::{gram_matrix, orthogonalize};
        // five generic atoms + identity sigma: full rank up to degree 2
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
        assert!(basis.dropped.is_empty(), "test model must be full rank");
        let e = expand_increment_product(&t, m.sigma(), &mi(&[1, 1]), DEFAULT_K_MAX).unwrap();
        let h = to_h_basis(&e, &basis).unwrap();
        let cfg = PathConfig { horizon: 1.0, dt: 0.002 };
        let path = simulate_path(&m, &cfg, 5, 2).unwrap();
        let direct: f64 = e
            .terms
            .iter()
            .map(|term| evaluate_iterated_integral(&path, &t, term, 0.0, 1.0).unwrap())
            .sum();
        let mut via_h = 0.0;
        for (slots, integrand) in &h.terms {
            let measures: Vec<LevelMeasure> = slots
                .iter()
                .map(|&s| h_level_measure(&path, &t, &basis, s, 0.0, 1.0).unwrap())
                .collect();
            let refs: Vec<&LevelMeasure> = measures.iter().collect();
            via_h += evaluate_levels(&refs, integrand, 0.0, 1.0).unwrap();
        }
        assert_relative_eq!(direct, via_h, max_relative = 1e-9, epsilon = 1e-10);
    }
}
