//! Complex truncated polynomial algebra for the WKB jet recursions.
//!
//! Phases and amplitude coefficients live in the boundary chart variables
//! (t, w, y1) — time offset, boundary arclength offset, signed boundary
//! distance. Amplitudes additionally carry the localization cutoff and its
//! derivatives as formal symbols: an [`ChiPoly`] is a finite sum of
//! `P_{a,b}(t, w, y1) * d_t^a d_w^b chi` terms, which is closed under the
//! recursion operators (they are linear in the amplitude).

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::taylor::{shape, Shape};

pub type C = Complex64;

/// Complex polynomial in (t, w, y1), truncated at a total degree.
#[derive(Clone, Debug)]
pub struct CPoly3 {
    pub ord: u8,
    pub c: Vec<C>,
}

pub const VT: usize = 0;
pub const VW: usize = 1;
pub const VY: usize = 2;

impl CPoly3 {
    fn sh(&self) -> &'static Shape {
        shape(3, self.ord)
    }

    pub fn zero(ord: u8) -> Self {
        CPoly3 {
            ord,
            c: vec![C::new(0.0, 0.0); shape(3, ord).len()],
        }
    }

    pub fn constant(ord: u8, v: C) -> Self {
        let mut p = Self::zero(ord);
        p.c[0] = v;
        p
    }

    pub fn var(ord: u8, i: usize) -> Self {
        let mut p = Self::zero(ord);
        let mut e = [0u8; 4];
        e[i] = 1;
        if let Some(idx) = shape(3, ord).index_of(e) {
            p.c[idx] = C::new(1.0, 0.0);
        }
        p
    }

    pub fn from_real(ord: u8, real: &crate::taylor::Jet3) -> Self {
        assert_eq!(real.ord, ord);
        CPoly3 {
            ord,
            c: real.c.iter().map(|v| C::new(*v, 0.0)).collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.c.iter().all(|v| v.norm_sqr() == 0.0)
    }

    pub fn max_coeff(&self) -> f64 {
        self.c.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Sup bound over the polydisc |t|,|w| <= r_tw, |y1| <= r_y1: low-degree
    /// coefficients count directly, coefficients near the truncation cap only
    /// through their (small) monomial size on the ball. `low_cap` is the
    /// largest total degree treated as exactly enforced.
    pub fn ball_bound(&self, low_cap: u8, r_tw: f64, r_y1: f64) -> f64 {
        let sh = self.sh();
        let mut low = 0.0f64;
        let mut high = 0.0f64;
        for (i, e) in sh.exps.iter().enumerate() {
            let c = self.c[i].norm();
            if c == 0.0 {
                continue;
            }
            let deg = e[0] + e[1] + e[2];
            if deg <= low_cap {
                low = low.max(c);
            } else {
                high += c
                    * r_tw.powi((e[VT] + e[VW]) as i32)
                    * r_y1.powi(e[VY] as i32);
            }
        }
        low + high
    }

    pub fn add(&self, o: &Self) -> Self {
        debug_assert_eq!(self.ord, o.ord);
        CPoly3 {
            ord: self.ord,
            c: self.c.iter().zip(&o.c).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, o: &Self) -> Self {
        debug_assert_eq!(self.ord, o.ord);
        CPoly3 {
            ord: self.ord,
            c: self.c.iter().zip(&o.c).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn neg(&self) -> Self {
        CPoly3 {
            ord: self.ord,
            c: self.c.iter().map(|a| -a).collect(),
        }
    }

    pub fn scale(&self, s: C) -> Self {
        CPoly3 {
            ord: self.ord,
            c: self.c.iter().map(|a| a * s).collect(),
        }
    }

    pub fn conj(&self) -> Self {
        CPoly3 {
            ord: self.ord,
            c: self.c.iter().map(|a| a.conj()).collect(),
        }
    }

    pub fn mul(&self, o: &Self) -> Self {
        debug_assert_eq!(self.ord, o.ord);
        let sh = self.sh();
        let mut c = vec![C::new(0.0, 0.0); sh.len()];
        for &(ia, ib, it) in &sh.prod {
            let a = self.c[ia as usize];
            if a.norm_sqr() == 0.0 {
                continue;
            }
            let b = o.c[ib as usize];
            if b.norm_sqr() != 0.0 {
                c[it as usize] += a * b;
            }
        }
        CPoly3 { ord: self.ord, c }
    }

    /// Reciprocal as a truncated series; constant term must be nonzero.
    pub fn recip(&self) -> Self {
        let c0 = self.c[0];
        assert!(c0.norm() > 0.0, "poly reciprocal with zero constant term");
        let mut u = self.scale(1.0 / c0);
        u.c[0] = C::new(0.0, 0.0); // u = (p - c0)/c0
        // 1/p = (1/c0) sum (-u)^k
        let mut acc = CPoly3::constant(self.ord, C::new(1.0, 0.0));
        let mut pw = CPoly3::constant(self.ord, C::new(1.0, 0.0));
        for _ in 0..self.ord {
            pw = pw.mul(&u).neg();
            acc = acc.add(&pw);
        }
        acc.scale(1.0 / c0)
    }

    pub fn deriv(&self, var: usize) -> Self {
        let sh = self.sh();
        let mut out = Self::zero(self.ord);
        for (i, e) in sh.exps.iter().enumerate() {
            if e[var] == 0 || self.c[i].norm_sqr() == 0.0 {
                continue;
            }
            let mut te = *e;
            te[var] -= 1;
            if let Some(it) = sh.index_of(te) {
                out.c[it] += self.c[i] * e[var] as f64;
            }
        }
        out
    }

    /// Coefficient of y1^l as a polynomial with zero y1-content.
    pub fn y1_coeff(&self, l: u8) -> Self {
        let sh = self.sh();
        let mut out = Self::zero(self.ord);
        for (i, e) in sh.exps.iter().enumerate() {
            if e[VY] == l && self.c[i].norm_sqr() != 0.0 {
                let mut te = *e;
                te[VY] = 0;
                out.c[sh.index_of(te).unwrap()] = self.c[i];
            }
        }
        out
    }

    /// Multiplies by y1^l.
    pub fn mul_y1_pow(&self, l: u8) -> Self {
        let sh = self.sh();
        let mut out = Self::zero(self.ord);
        for (i, e) in sh.exps.iter().enumerate() {
            if self.c[i].norm_sqr() == 0.0 {
                continue;
            }
            let mut te = *e;
            te[VY] += l;
            if let Some(it) = sh.index_of(te) {
                out.c[it] = self.c[i];
            }
        }
        out
    }

    pub fn eval(&self, t: f64, w: f64, y1: f64) -> C {
        let sh = self.sh();
        let mut acc = C::new(0.0, 0.0);
        for (i, e) in sh.exps.iter().enumerate() {
            if self.c[i].norm_sqr() == 0.0 {
                continue;
            }
            let mut m = 1.0;
            for _ in 0..e[VT] {
                m *= t;
            }
            for _ in 0..e[VW] {
                m *= w;
            }
            for _ in 0..e[VY] {
                m *= y1;
            }
            acc += self.c[i] * m;
        }
        acc
    }

    /// Value of the partial derivative d^a_t d^b_w d^c_y1 at the origin.
    pub fn deriv_at_origin(&self, a: u8, b: u8, cy: u8) -> C {
        match self.sh().index_of([a, b, cy, 0]) {
            Some(i) => {
                let mut f = 1.0;
                for v in [a, b, cy] {
                    for k in 2..=v as u64 {
                        f *= k as f64;
                    }
                }
                self.c[i] * f
            }
            None => C::new(0.0, 0.0),
        }
    }
}

/// Sum of `P_{a,b}(t,w,y1) * d_t^a d_w^b chi(t,w)` terms.
#[derive(Clone, Debug, Default)]
pub struct ChiPoly {
    pub terms: BTreeMap<(u8, u8), CPoly3>,
}

impl ChiPoly {
    pub fn zero() -> Self {
        ChiPoly {
            terms: BTreeMap::new(),
        }
    }

    /// The bare cutoff chi itself.
    pub fn chi(ord: u8) -> Self {
        let mut t = BTreeMap::new();
        t.insert((0, 0), CPoly3::constant(ord, C::new(1.0, 0.0)));
        ChiPoly { terms: t }
    }

    pub fn add(&self, o: &Self) -> Self {
        let mut out = self.clone();
        for (k, p) in &o.terms {
            out.terms
                .entry(*k)
                .and_modify(|q| *q = q.add(p))
                .or_insert_with(|| p.clone());
        }
        out.prune()
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.add(&o.neg())
    }

    pub fn neg(&self) -> Self {
        ChiPoly {
            terms: self.terms.iter().map(|(k, p)| (*k, p.neg())).collect(),
        }
    }

    pub fn scale(&self, s: C) -> Self {
        ChiPoly {
            terms: self.terms.iter().map(|(k, p)| (*k, p.scale(s))).collect(),
        }
    }

    pub fn mul_poly(&self, q: &CPoly3) -> Self {
        ChiPoly {
            terms: self.terms.iter().map(|(k, p)| (*k, p.mul(q))).collect(),
        }
        .prune()
    }

    pub fn conj(&self) -> Self {
        ChiPoly {
            terms: self.terms.iter().map(|(k, p)| (*k, p.conj())).collect(),
        }
    }

    fn prune(mut self) -> Self {
        self.terms.retain(|_, p| !p.is_zero());
        self
    }

    /// d/dt with the product rule on the chi symbol.
    pub fn d_t(&self) -> Self {
        let mut out = ChiPoly::zero();
        for (&(a, b), p) in &self.terms {
            let dp = p.deriv(VT);
            if !dp.is_zero() {
                out.terms
                    .entry((a, b))
                    .and_modify(|q| *q = q.add(&dp))
                    .or_insert(dp);
            }
            out.terms
                .entry((a + 1, b))
                .and_modify(|q| *q = q.add(p))
                .or_insert_with(|| p.clone());
        }
        out.prune()
    }

    pub fn d_w(&self) -> Self {
        let mut out = ChiPoly::zero();
        for (&(a, b), p) in &self.terms {
            let dp = p.deriv(VW);
            if !dp.is_zero() {
                out.terms
                    .entry((a, b))
                    .and_modify(|q| *q = q.add(&dp))
                    .or_insert(dp);
            }
            out.terms
                .entry((a, b + 1))
                .and_modify(|q| *q = q.add(p))
                .or_insert_with(|| p.clone());
        }
        out.prune()
    }

    pub fn d_y1(&self) -> Self {
        ChiPoly {
            terms: self
                .terms
                .iter()
                .map(|(k, p)| (*k, p.deriv(VY)))
                .collect(),
        }
        .prune()
    }

    /// Coefficient of y1^l.
    pub fn y1_coeff(&self, l: u8) -> Self {
        ChiPoly {
            terms: self
                .terms
                .iter()
                .map(|(k, p)| (*k, p.y1_coeff(l)))
                .collect(),
        }
        .prune()
    }

    pub fn mul_y1_pow(&self, l: u8) -> Self {
        ChiPoly {
            terms: self
                .terms
                .iter()
                .map(|(k, p)| (*k, p.mul_y1_pow(l)))
                .collect(),
        }
        .prune()
    }

    /// Largest chi-derivative order present, as (t-order, w-order) maxima.
    pub fn max_chi_order(&self) -> (u8, u8) {
        let mut out = (0u8, 0u8);
        for &(a, b) in self.terms.keys() {
            out.0 = out.0.max(a);
            out.1 = out.1.max(b);
        }
        out
    }

    /// Evaluates with a cutoff-derivative table `chi(a, b)`.
    pub fn eval(&self, t: f64, w: f64, y1: f64, chi: &impl Fn(u8, u8) -> f64) -> C {
        let mut acc = C::new(0.0, 0.0);
        for (&(a, b), p) in &self.terms {
            let cv = chi(a, b);
            if cv != 0.0 {
                acc += p.eval(t, w, y1) * cv;
            }
        }
        acc
    }

    pub fn max_coeff(&self) -> f64 {
        self.terms.values().map(|p| p.max_coeff()).fold(0.0, f64::max)
    }

    /// See [`CPoly3::ball_bound`]; taken over all chi-symbol coefficients.
    pub fn ball_bound(&self, low_cap: u8, r_tw: f64, r_y1: f64) -> f64 {
        self.terms
            .values()
            .map(|p| p.ball_bound(low_cap, r_tw, r_y1))
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn poly_mul_recip() {
        let ord = 8;
        let one = CPoly3::constant(ord, C::new(1.0, 0.0));
        let p = one
            .add(&CPoly3::var(ord, VW).scale(C::new(0.5, 0.0)))
            .add(&CPoly3::var(ord, VY).scale(C::new(0.0, 1.0)));
        let q = p.mul(&p.recip());
        // p * (1/p) = 1 up to the truncation tail
        assert_relative_eq!(q.c[0].re, 1.0, epsilon = 1e-12);
        for i in 1..q.c.len() {
            let e = shape(3, ord).exps[i];
            if (e[0] + e[1] + e[2]) < ord {
                assert!(q.c[i].norm() < 1e-12, "residual at {e:?}: {}", q.c[i]);
            }
        }
    }

    #[test]
    fn poly_derivative_and_eval() {
        let ord = 6;
        let t = CPoly3::var(ord, VT);
        let w = CPoly3::var(ord, VW);
        let y = CPoly3::var(ord, VY);
        // p = t^2 w + i y^3
        let p = t.mul(&t).mul(&w).add(&y.mul(&y).mul(&y).scale(C::new(0.0, 1.0)));
        let v = p.eval(0.3, -0.2, 0.5);
        assert_relative_eq!(v.re, 0.09 * -0.2, epsilon = 1e-14);
        assert_relative_eq!(v.im, 0.125, epsilon = 1e-14);
        let dp = p.deriv(VT);
        assert_relative_eq!(dp.eval(0.3, -0.2, 0.5).re, 2.0 * 0.3 * -0.2, epsilon = 1e-14);
        assert_relative_eq!(p.y1_coeff(3).eval(0.0, 0.0, 0.0).im, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn chipoly_product_rule() {
        let ord = 6;
        // element w * chi
        let e = ChiPoly::chi(ord).mul_poly(&CPoly3::var(ord, VW));
        let d = e.d_w();
        // = chi + w * d_w chi
        assert_eq!(d.terms.len(), 2);
        let p00 = &d.terms[&(0, 0)];
        assert_relative_eq!(p00.c[0].re, 1.0, epsilon = 1e-15);
        let chi_fn = |a: u8, b: u8| -> f64 {
            // pretend chi = cos(t) sin(w) for the sake of evaluation
            let (t, w) = (0.2f64, 0.4f64);
            let tv = match a % 4 {
                0 => t.cos(),
                1 => -t.sin(),
                2 => -t.cos(),
                _ => t.sin(),
            };
            let wv = match b % 4 {
                0 => w.sin(),
                1 => w.cos(),
                2 => -w.sin(),
                _ => -w.cos(),
            };
            tv * wv
        };
        let got = d.eval(0.2, 0.4, 0.0, &chi_fn);
        let expect = 0.2f64.cos() * 0.4f64.sin() + 0.4 * (0.2f64.cos() * 0.4f64.cos());
        assert_relative_eq!(got.re, expect, epsilon = 1e-14);
    }
}
