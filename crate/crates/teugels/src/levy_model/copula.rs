//! Jump measures glued from marginal Levy densities by the Clayton-family
//! Levy copula, truncated to {max_i |x_i| >= eps}.
//!
//! Inner integrals over the partner coordinate use the closed-form copula
//! margins where the integrand is a pure mass (the near-axis contribution is
//! only log-integrable in x-space), and adaptive quadrature everywhere else.

use std::cell::RefCell;
use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::multiindex::MultiIndex;
use crate::quad;

use super::clayton::Clayton;
use super::marginal::{tail_integral, Marginal, TailCurve};

const CURVE_POINTS: usize = 2048;
const INNER_REL_TOL: f64 = 3e-10;

#[derive(Debug, Clone)]
pub struct CopulaMeasure {
    marginals: Vec<Marginal>,
    clayton: Clayton,
    eps: f64,
    /// magnitudes of the marginal tails at the truncation level, [pos, neg]
    eps_tails: Vec<[f64; 2]>,
    /// lazily built tail curves per marginal and side, shared across clones
    curves: Vec<[Arc<OnceLock<TailCurve>>; 2]>,
}

impl CopulaMeasure {
    pub fn new(marginals: Vec<Marginal>, clayton: Clayton, eps: f64) -> Result<Self> {
        if marginals.is_empty() {
            return Err(Error::Dimension("need at least one marginal".into()));
        }
        for m in &marginals {
            m.validate()?;
        }
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::Parameter(format!(
                "density-based jump measures need a positive truncation, got {eps}"
            )));
        }
        let any_one_sided = marginals.iter().any(|m| !m.has_negative_support());
        if any_one_sided {
            if marginals.iter().any(|m| m.has_negative_support()) {
                return Err(Error::Parameter(
                    "mixing one-sided and two-sided marginals is not supported".into(),
                ));
            }
            if marginals.len() >= 2 && clayton.eta < 1.0 {
                return Err(Error::Parameter(
                    "one-sided marginals require eta = 1 for marginal consistency".into(),
                ));
            }
        }
        let mut eps_tails = Vec::with_capacity(marginals.len());
        for m in &marginals {
            let pos = tail_integral(m, eps)?;
            let neg = if m.has_negative_support() {
                -tail_integral(m, -eps)?
            } else {
                0.0
            };
            eps_tails.push([pos, neg]);
        }
        let curves = marginals
            .iter()
            .map(|_| [Arc::new(OnceLock::new()), Arc::new(OnceLock::new())])
            .collect();
        Ok(CopulaMeasure {
            marginals,
            clayton,
            eps,
            eps_tails,
            curves,
        })
    }

    pub fn dim(&self) -> usize {
        self.marginals.len()
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn clayton(&self) -> &Clayton {
        &self.clayton
    }

    pub fn marginals(&self) -> &[Marginal] {
        &self.marginals
    }

    fn sides(&self, i: usize) -> &'static [i8] {
        if self.marginals[i].has_negative_support() {
            &[1, -1]
        } else {
            &[1]
        }
    }

    fn eps_tail(&self, i: usize, side: i8) -> f64 {
        self.eps_tails[i][if side == 1 { 0 } else { 1 }]
    }

    fn curve(&self, i: usize, side: i8) -> Result<&TailCurve> {
        let slot = &self.curves[i][if side == 1 { 0 } else { 1 }];
        if let Some(c) = slot.get() {
            return Ok(c);
        }
        let m = &self.marginals[i];
        let rate = if side == 1 {
            m.decay_rate_pos()
        } else {
            m.decay_rate_neg()
        };
        let x_lo = self.eps * 1e-9;
        let x_hi = self.eps + 45.0 / rate;
        let built = TailCurve::build(m, side, x_lo, x_hi, CURVE_POINTS)?;
        let _ = slot.set(built);
        Ok(slot.get().expect("just set"))
    }

    /// Signed tail value via the tabulated curve (bulk path).
    fn u_signed(&self, i: usize, x: f64) -> Result<f64> {
        let side: i8 = if x >= 0.0 { 1 } else { -1 };
        let mag = self.curve(i, side)?.u_at(x.abs());
        Ok(if side == 1 { mag } else { -mag })
    }

    /// Levy density at x, with tails evaluated by direct quadrature
    /// (the contract of the public density operation).
    pub fn density(&self, x: &[f64]) -> Result<f64> {
        self.density_impl(x, false)
    }

    /// Levy density with tails from the tabulated curves (bulk path).
    pub fn density_fast(&self, x: &[f64]) -> Result<f64> {
        self.density_impl(x, true)
    }

    fn density_impl(&self, x: &[f64], fast: bool) -> Result<f64> {
        let n = self.dim();
        if x.len() != n {
            return Err(Error::Dimension("density argument dimension mismatch".into()));
        }
        if n == 1 {
            if x[0] == 0.0 {
                return Err(Error::Domain("density undefined on the coordinate axes".into()));
            }
            return Ok(self.marginals[0].density(x[0]));
        }
        if !(2..=3).contains(&n) {
            return Err(Error::Capability(format!(
                "copula density implemented for n in {{1,2,3}}, got {n}"
            )));
        }
        if x.iter().any(|&c| c == 0.0) {
            return Err(Error::Domain("density undefined on the coordinate axes".into()));
        }
        let mut dens_prod = 1.0;
        for (i, &xi) in x.iter().enumerate() {
            let d = self.marginals[i].density(xi);
            if d == 0.0 {
                return Ok(0.0);
            }
            dens_prod *= d;
        }
        let mut u = Vec::with_capacity(n);
        for (i, &xi) in x.iter().enumerate() {
            let ui = if fast {
                self.u_signed(i, xi)?
            } else {
                tail_integral(&self.marginals[i], xi)?
            };
            if ui == 0.0 {
                return Ok(0.0);
            }
            u.push(ui);
        }
        Ok(self.clayton.density_factor(&u)? * dens_prod)
    }

    /// Total truncated intensity, in closed form through the copula margins.
    pub fn truncated_intensity(&self) -> Result<f64> {
        match self.dim() {
            1 => Ok(self.eps_tail(0, 1) + self.eps_tail(0, -1)),
            2 => {
                let m1: f64 = self.sides(0).iter().map(|&s| self.eps_tail(0, s)).sum();
                let m2: f64 = self.sides(1).iter().map(|&s| self.eps_tail(1, s)).sum();
                let mut overlap = 0.0;
                for &s1 in self.sides(0) {
                    for &s2 in self.sides(1) {
                        let v1 = f64::from(s1) * self.eps_tail(0, s1);
                        let v2 = f64::from(s2) * self.eps_tail(1, s2);
                        if v1 != 0.0 && v2 != 0.0 {
                            overlap += self.clayton.rectangle_mass(&[v1, v2])?;
                        }
                    }
                }
                Ok(m1 + m2 - overlap)
            }
            n => Err(Error::Capability(format!(
                "truncated intensity implemented for n in {{1,2}}, got {n}"
            ))),
        }
    }

    /// Conditional probability, given the partner value with tail magnitude
    /// `u_own`, that coordinate `other` falls beyond level `level` on side
    /// `side_other`, where `same_sign` states whether that side matches the
    /// conditioning coordinate's sign.
    fn cond_tail_mass(&self, other: usize, side_other: i8, level: f64, u_own: f64, same_sign: bool) -> f64 {
        if !self.sides(other).contains(&side_other) {
            return 0.0;
        }
        let weight = if same_sign {
            self.clayton.eta
        } else {
            1.0 - self.clayton.eta
        };
        if weight == 0.0 {
            return 0.0;
        }
        let u_level = if level <= 0.0 {
            return weight; // whole branch
        } else if (level - self.eps).abs() < 1e-15 {
            self.eps_tail(other, side_other)
        } else {
            match self.curve(other, side_other) {
                Ok(c) => c.u_at(level),
                Err(_) => return 0.0,
            }
        };
        weight * self.clayton.partial_one_magnitude(u_own, u_level)
    }

    /// Conditional moment of x_other^p restricted to one side and the
    /// magnitude window [0, hi) (hi = inf for the full branch), given the
    /// conditioning coordinate's signed tail u_own_signed.
    fn cond_moment_branch(
        &self,
        other: usize,
        side_other: i8,
        p: u32,
        hi: Option<f64>,
        u_own_signed: f64,
    ) -> Result<f64> {
        debug_assert!(p >= 1);
        if !self.sides(other).contains(&side_other) {
            return Ok(0.0);
        }
        let err_slot: RefCell<Option<Error>> = RefCell::new(None);
        let f = |y: f64| -> f64 {
            let x_other = f64::from(side_other) * y;
            let u_other_mag = match self.curve(other, side_other) {
                Ok(c) => c.u_at(y),
                Err(e) => {
                    err_slot.borrow_mut().get_or_insert(e);
                    return 0.0;
                }
            };
            let u_other = f64::from(side_other) * u_other_mag;
            let factor = match self.clayton.density_factor(&[u_own_signed, u_other]) {
                Ok(v) => v,
                Err(e) => {
                    err_slot.borrow_mut().get_or_insert(e);
                    return 0.0;
                }
            };
            y.powi(p as i32) * factor * self.marginals[other].density(x_other)
        };
        let rate = if side_other == 1 {
            self.marginals[other].decay_rate_pos()
        } else {
            self.marginals[other].decay_rate_neg()
        };
        let scale = 1.0 / rate;
        let mut total = 0.0;
        match hi {
            None => {
                total += quad::integrate_down_to_zero(&f, scale, INNER_REL_TOL, quad::DEFAULT_ABS_FLOOR)?.value;
                total += quad::integrate_tail(&f, scale, scale, INNER_REL_TOL, quad::DEFAULT_ABS_FLOOR)?.value;
            }
            Some(h) => {
                total += quad::integrate_down_to_zero(&f, h, INNER_REL_TOL, quad::DEFAULT_ABS_FLOOR)?.value;
            }
        }
        if let Some(e) = err_slot.into_inner() {
            return Err(e);
        }
        let sign = if side_other == -1 && p % 2 == 1 { -1.0 } else { 1.0 };
        Ok(sign * total)
    }

    /// Jump moment int_{T_eps} x^p nu(dx) with the region decomposition
    /// A = {|x_1| >= eps} and B = {|x_1| < eps, |x_2| >= eps}.
    pub fn moment(&self, p: &MultiIndex) -> Result<(f64, f64)> {
        if p.len() != self.dim() {
            return Err(Error::Dimension("moment index dimension mismatch".into()));
        }
        match self.dim() {
            1 => self.moment_1d(p.components()[0]),
            2 => self.moment_2d(p.components()[0], p.components()[1]),
            n => Err(Error::Capability(format!(
                "copula moments implemented for n in {{1,2}}, got {n}"
            ))),
        }
    }

    fn moment_1d(&self, p: u32) -> Result<(f64, f64)> {
        let m = &self.marginals[0];
        let mut total = 0.0;
        let mut err = 0.0;
        for &side in self.sides(0) {
            let rate = if side == 1 { m.decay_rate_pos() } else { m.decay_rate_neg() };
            let f = |y: f64| y.powi(p as i32) * m.density(f64::from(side) * y);
            let r = quad::integrate_tail(f, self.eps, 1.0 / rate, quad::DEFAULT_REL_TOL, quad::DEFAULT_ABS_FLOOR)?;
            let sign = if side == -1 && p % 2 == 1 { -1.0 } else { 1.0 };
            total += sign * r.value;
            err += r.abs_err;
        }
        Ok((total, err))
    }

    fn moment_2d(&self, p1: u32, p2: u32) -> Result<(f64, f64)> {
        let mut total = 0.0;
        let mut err = 0.0;
        // region A: |x_1| >= eps, x_2 unrestricted
        for &s1 in self.sides(0) {
            let r = self.outer_integral(0, s1, p1, |u_own_signed, own_sign| {
                self.inner_full_moment(1, p2, u_own_signed, own_sign)
            })?;
            total += r.0;
            err += r.1;
        }
        // region B: |x_2| >= eps, |x_1| < eps
        for &s2 in self.sides(1) {
            let r = self.outer_integral(1, s2, p2, |u_own_signed, own_sign| {
                self.inner_window_moment(0, p1, u_own_signed, own_sign)
            })?;
            total += r.0;
            err += r.1;
        }
        Ok((total, err))
    }

    /// Outer integral over {side * x_own >= eps} of x_own^p nu_own(x) times a
    /// conditional inner factor.
    fn outer_integral<F>(&self, own: usize, side: i8, p: u32, inner: F) -> Result<(f64, f64)>
    where
        F: Fn(f64, i8) -> Result<f64>,
    {
        let m = &self.marginals[own];
        let rate = if side == 1 { m.decay_rate_pos() } else { m.decay_rate_neg() };
        let err_slot: RefCell<Option<Error>> = RefCell::new(None);
        let curve = self.curve(own, side)?;
        let f = |y: f64| -> f64 {
            let dens = m.density(f64::from(side) * y);
            if dens == 0.0 {
                return 0.0;
            }
            let u_mag = curve.u_at(y);
            let u_signed = f64::from(side) * u_mag;
            let inner_val = match inner(u_signed, side) {
                Ok(v) => v,
                Err(e) => {
                    err_slot.borrow_mut().get_or_insert(e);
                    return 0.0;
                }
            };
            y.powi(p as i32) * dens * inner_val
        };
        let r = quad::integrate_tail(&f, self.eps, 1.0 / rate, quad::DEFAULT_REL_TOL, quad::DEFAULT_ABS_FLOOR)?;
        if let Some(e) = err_slot.into_inner() {
            return Err(e);
        }
        let sign = if side == -1 && p % 2 == 1 { -1.0 } else { 1.0 };
        Ok((sign * r.value, r.abs_err))
    }

    /// Conditional moment of x_other^p over the full partner range.
    fn inner_full_moment(&self, other: usize, p: u32, u_own_signed: f64, _own_sign: i8) -> Result<f64> {
        if p == 0 {
            return Ok(1.0); // marginal consistency: total conditional mass
        }
        let mut total = 0.0;
        for &s in self.sides(other) {
            total += self.cond_moment_branch(other, s, p, None, u_own_signed)?;
        }
        Ok(total)
    }

    /// Conditional moment of x_other^p restricted to |x_other| < eps.
    fn inner_window_moment(&self, other: usize, p: u32, u_own_signed: f64, own_sign: i8) -> Result<f64> {
        if p == 0 {
            let mut mass = 1.0;
            for &s in self.sides(other) {
                mass -= self.cond_tail_mass(other, s, self.eps, u_own_signed.abs(), s == own_sign);
            }
            return Ok(mass.max(0.0));
        }
        let mut total = 0.0;
        for &s in self.sides(other) {
            total += self.cond_moment_branch(other, s, p, Some(self.eps), u_own_signed)?;
        }
        Ok(total)
    }

    /// Hypothesis 1 integral over the truncated support. Divergence is
    /// decided analytically from the marginal decay rates.
    pub fn hyp1_integral(&self, lambda: f64, eps: f64) -> Result<(bool, f64, f64)> {
        let mut min_rate = f64::INFINITY;
        for (i, m) in self.marginals.iter().enumerate() {
            for &s in self.sides(i) {
                let r = if s == 1 { m.decay_rate_pos() } else { m.decay_rate_neg() };
                min_rate = min_rate.min(r);
            }
        }
        if lambda >= min_rate {
            return Ok((false, f64::INFINITY, 0.0));
        }
        match self.dim() {
            1 => {
                let m = &self.marginals[0];
                let mut total = 0.0;
                let mut err = 0.0;
                for &side in self.sides(0) {
                    let rate = if side == 1 { m.decay_rate_pos() } else { m.decay_rate_neg() };
                    let f = |y: f64| {
                        let dens = m.density(f64::from(side) * y);
                        if dens == 0.0 {
                            0.0
                        } else {
                            (lambda * y).exp() * dens
                        }
                    };
                    let r = quad::integrate_tail(f, eps, 1.0 / (rate - lambda), quad::DEFAULT_REL_TOL, quad::DEFAULT_ABS_FLOOR)?;
                    total += r.value;
                    err += r.abs_err;
                }
                Ok((true, total, err))
            }
            2 => {
                let (v, e) = self.hyp1_2d(lambda, eps)?;
                Ok((true, v, e))
            }
            n => Err(Error::Capability(format!(
                "Hypothesis 1 quadrature implemented for n in {{1,2}}, got {n}"
            ))),
        }
    }

    fn hyp1_2d(&self, lambda: f64, eps: f64) -> Result<(f64, f64)> {
        // E[e^{lambda ||x||} | x_own] = e^{lambda |x_own|} (mass + correction):
        // the constant part uses the closed-form conditional mass, the
        // correction (e^{lambda(||x|| - |x_own|)} - 1) vanishes at the axis.
        let mut total = 0.0;
        let mut err = 0.0;
        for (own, other) in [(0usize, 1usize), (1usize, 0usize)] {
            for &side in self.sides(own) {
                let m = &self.marginals[own];
                let rate = if side == 1 { m.decay_rate_pos() } else { m.decay_rate_neg() };
                let window = own == 1; // second pass restricts the partner to |x| < eps
                let err_slot: RefCell<Option<Error>> = RefCell::new(None);
                let curve = self.curve(own, side)?;
                let f = |y: f64| -> f64 {
                    let dens = m.density(f64::from(side) * y);
                    if dens == 0.0 {
                        return 0.0;
                    }
                    let u_own = f64::from(side) * curve.u_at(y);
                    let res = self.hyp1_conditional(other, u_own, side, y, lambda, if window { Some(eps) } else { None });
                    match res {
                        Ok(v) => dens * (lambda * y).exp() * v,
                        Err(e) => {
                            err_slot.borrow_mut().get_or_insert(e);
                            0.0
                        }
                    }
                };
                let r = quad::integrate_tail(&f, eps, 1.0 / (rate - lambda), 1e-8, quad::DEFAULT_ABS_FLOOR)?;
                if let Some(e) = err_slot.into_inner() {
                    return Err(e);
                }
                total += r.value;
                err += r.abs_err;
            }
        }
        Ok((total, err))
    }

    /// E[e^{lambda(||x|| - |x_own|)} | x_own], optionally restricted to
    /// |x_other| < window.
    fn hyp1_conditional(
        &self,
        other: usize,
        u_own_signed: f64,
        own_sign: i8,
        y_own: f64,
        lambda: f64,
        window: Option<f64>,
    ) -> Result<f64> {
        // constant part: conditional mass of the admissible partner range
        let mut mass = 1.0;
        if let Some(w) = window {
            for &s in self.sides(other) {
                mass -= self.cond_tail_mass(other, s, w, u_own_signed.abs(), s == own_sign);
            }
            mass = mass.max(0.0);
        }
        let mut total = mass;
        // correction integral per side of the partner
        for &s in self.sides(other) {
            let err_slot: RefCell<Option<Error>> = RefCell::new(None);
            let curve = self.curve(other, s)?;
            let g = |y: f64| -> f64 {
                let x_other = f64::from(s) * y;
                let dens = self.marginals[other].density(x_other);
                if dens == 0.0 {
                    return 0.0;
                }
                let u_other = f64::from(s) * curve.u_at(y);
                let factor = match self.clayton.density_factor(&[u_own_signed, u_other]) {
                    Ok(v) => v,
                    Err(e) => {
                        err_slot.borrow_mut().get_or_insert(e);
                        return 0.0;
                    }
                };
                let norm = (y_own * y_own + y * y).sqrt();
                (lambda * (norm - y_own)).exp_m1() * factor * dens
            };
            let rate = if s == 1 {
                self.marginals[other].decay_rate_pos()
            } else {
                self.marginals[other].decay_rate_neg()
            };
            let v = match window {
                Some(w) => quad::integrate_down_to_zero(&g, w, 1e-8, quad::DEFAULT_ABS_FLOOR)?.value,
                None => {
                    let split = 1.0 / rate;
                    quad::integrate_down_to_zero(&g, split, 1e-8, quad::DEFAULT_ABS_FLOOR)?.value
                        + quad::integrate_tail(&g, split, 1.0 / (rate - lambda), 1e-8, quad::DEFAULT_ABS_FLOOR)?.value
                }
            };
            if let Some(e) = err_slot.into_inner() {
                return Err(e);
            }
            total += v;
        }
        Ok(total)
    }

    /// Draw one jump vector from the normalised truncated measure.
    pub fn sample_jump<R: rand::Rng>(&self, rng: &mut R) -> Result<Vec<f64>> {
        match self.dim() {
            1 => {
                let w_pos = self.eps_tail(0, 1);
                let w_neg = self.eps_tail(0, -1);
                let side: i8 = if rng.gen::<f64>() * (w_pos + w_neg) < w_pos { 1 } else { -1 };
                let u = rng.gen::<f64>() * self.eps_tail(0, side);
                let x = self.curve(0, side)?.x_at(u);
                Ok(vec![f64::from(side) * x])
            }
            2 => self.sample_jump_2d(rng),
            n => Err(Error::Capability(format!(
                "copula sampling implemented for n in {{1,2}}, got {n}"
            ))),
        }
    }

    fn pick_side<R: rand::Rng>(&self, rng: &mut R, i: usize) -> i8 {
        let w_pos = self.eps_tail(i, 1);
        let w_neg = self.eps_tail(i, -1);
        if rng.gen::<f64>() * (w_pos + w_neg) < w_pos {
            1
        } else {
            -1
        }
    }

    fn partner_side<R: rand::Rng>(&self, rng: &mut R, own_side: i8, other: usize) -> i8 {
        if self.sides(other).len() == 1 {
            return 1;
        }
        if rng.gen::<f64>() < self.clayton.same_sign_prob() {
            own_side
        } else {
            -own_side
        }
    }

    fn sample_jump_2d<R: rand::Rng>(&self, rng: &mut R) -> Result<Vec<f64>> {
        let mass_a: f64 = self.sides(0).iter().map(|&s| self.eps_tail(0, s)).sum();
        let lambda = self.truncated_intensity()?;
        let mass_b = (lambda - mass_a).max(0.0);
        if rng.gen::<f64>() * (mass_a + mass_b) < mass_a {
            // region A: |x_1| >= eps, x_2 free
            let s1 = self.pick_side(rng, 0);
            let u1 = rng.gen::<f64>() * self.eps_tail(0, s1);
            let x1 = self.curve(0, s1)?.x_at(u1);
            let s2 = self.partner_side(rng, s1, 1);
            let u2 = self.clayton.conditional_quantile(u1, rng.gen::<f64>());
            let x2 = self.curve(1, s2)?.x_at(u2);
            Ok(vec![f64::from(s1) * x1, f64::from(s2) * x2])
        } else {
            // region B: |x_2| >= eps, |x_1| < eps, by rejection on x_1
            for _ in 0..100_000 {
                let s2 = self.pick_side(rng, 1);
                let u2 = rng.gen::<f64>() * self.eps_tail(1, s2);
                let x2 = self.curve(1, s2)?.x_at(u2);
                let s1 = self.partner_side(rng, s2, 0);
                let u1 = self.clayton.conditional_quantile(u2, rng.gen::<f64>());
                let x1 = self.curve(0, s1)?.x_at(u1);
                if x1 < self.eps {
                    return Ok(vec![f64::from(s1) * x1, f64::from(s2) * x2]);
                }
            }
            Err(Error::Numeric(
                "copula rejection sampling failed to accept within the iteration cap".into(),
            ))
        }
    }
}
