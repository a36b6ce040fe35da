//! Truncated multivariate Taylor (jet) arithmetic.
//!
//! A `Jet<D>` is a polynomial in D variables truncated at a fixed total
//! degree, interpreted as the Taylor expansion of a scalar quantity around a
//! base point. Arithmetic and the analytic primitives (exp, sin, cos, sqrt,
//! reciprocal) propagate jets exactly, which gives exact derivatives of
//! closed-form coefficient expressions without numerical differencing.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

/// Exponent layout and multiplication table for jets of dimension `d`,
/// truncated total degree `ord`. Shapes are interned for the process lifetime.
pub struct Shape {
    pub d: usize,
    pub ord: u8,
    /// Multi-indices in graded lexicographic order, padded to 4 entries.
    pub exps: Vec<[u8; 4]>,
    index: HashMap<[u8; 4], u32>,
    /// (ia, ib, itarget) triples with deg(a) + deg(b) <= ord.
    pub prod: Vec<(u32, u32, u32)>,
}

impl Shape {
    pub fn len(&self) -> usize {
        self.exps.len()
    }

    pub fn index_of(&self, e: [u8; 4]) -> Option<usize> {
        self.index.get(&e).map(|i| *i as usize)
    }
}

fn enumerate(d: usize, ord: u8) -> Vec<[u8; 4]> {
    fn rec_exact(d: usize, pos: usize, left: u8, e: &mut [u8; 4], out: &mut Vec<[u8; 4]>) {
        if pos == d - 1 {
            e[pos] = left;
            out.push(*e);
            e[pos] = 0;
            return;
        }
        for v in 0..=left {
            e[pos] = v;
            rec_exact(d, pos + 1, left - v, e, out);
        }
        e[pos] = 0;
    }
    let mut out = Vec::new();
    let mut e = [0u8; 4];
    for total in 0..=ord {
        rec_exact(d, 0, total, &mut e, &mut out);
    }
    out
}

pub fn shape(d: usize, ord: u8) -> &'static Shape {
    static CACHE: OnceLock<Mutex<HashMap<(usize, u8), &'static Shape>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap();
    if let Some(s) = guard.get(&(d, ord)) {
        return s;
    }
    let exps = enumerate(d, ord);
    let mut index = HashMap::with_capacity(exps.len());
    for (i, e) in exps.iter().enumerate() {
        index.insert(*e, i as u32);
    }
    let mut prod = Vec::new();
    for (ia, a) in exps.iter().enumerate() {
        let da: u8 = a.iter().sum();
        for (ib, b) in exps.iter().enumerate() {
            let db: u8 = b.iter().sum();
            if da + db > ord {
                continue;
            }
            let mut t = [0u8; 4];
            for k in 0..4 {
                t[k] = a[k] + b[k];
            }
            prod.push((ia as u32, ib as u32, index[&t]));
        }
    }
    let boxed: &'static Shape = Box::leak(Box::new(Shape {
        d,
        ord,
        exps,
        index,
        prod,
    }));
    guard.insert((d, ord), boxed);
    boxed
}

/// Truncated Taylor expansion in `D` variables with f64 coefficients.
#[derive(Clone, Debug)]
pub struct Jet<const D: usize> {
    pub ord: u8,
    pub c: Vec<f64>,
}

pub type Jet2 = Jet<2>;
pub type Jet3 = Jet<3>;

impl<const D: usize> Jet<D> {
    pub fn shape(&self) -> &'static Shape {
        shape(D, self.ord)
    }

    pub fn constant(ord: u8, v: f64) -> Self {
        let n = shape(D, ord).len();
        let mut c = vec![0.0; n];
        c[0] = v;
        Jet { ord, c }
    }

    /// Jet of the coordinate `x_i` around base value `v`: v + dx_i.
    pub fn var(ord: u8, i: usize, v: f64) -> Self {
        let sh = shape(D, ord);
        let mut c = vec![0.0; sh.len()];
        c[0] = v;
        let mut e = [0u8; 4];
        e[i] = 1;
        if let Some(idx) = sh.index_of(e) {
            c[idx] = 1.0;
        }
        Jet { ord, c }
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    /// Value of the partial derivative d^|e| f / dx^e at the base point.
    pub fn deriv(&self, e: [u8; D]) -> f64 {
        let mut key = [0u8; 4];
        key[..D].copy_from_slice(&e);
        let sh = self.shape();
        match sh.index_of(key) {
            Some(i) => {
                let mut fact = 1.0;
                for v in e {
                    for k in 2..=v as u64 {
                        fact *= k as f64;
                    }
                }
                self.c[i] * fact
            }
            None => 0.0,
        }
    }

    pub fn add(&self, o: &Self) -> Self {
        debug_assert_eq!(self.ord, o.ord);
        let c = self.c.iter().zip(&o.c).map(|(a, b)| a + b).collect();
        Jet { ord: self.ord, c }
    }

    pub fn sub(&self, o: &Self) -> Self {
        debug_assert_eq!(self.ord, o.ord);
        let c = self.c.iter().zip(&o.c).map(|(a, b)| a - b).collect();
        Jet { ord: self.ord, c }
    }

    pub fn neg(&self) -> Self {
        Jet {
            ord: self.ord,
            c: self.c.iter().map(|a| -a).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        Jet {
            ord: self.ord,
            c: self.c.iter().map(|a| a * s).collect(),
        }
    }

    pub fn mul(&self, o: &Self) -> Self {
        debug_assert_eq!(self.ord, o.ord);
        let sh = self.shape();
        let mut c = vec![0.0; sh.len()];
        for &(ia, ib, it) in &sh.prod {
            let v = self.c[ia as usize] * o.c[ib as usize];
            if v != 0.0 {
                c[it as usize] += v;
            }
        }
        Jet { ord: self.ord, c }
    }

    /// Composes a univariate analytic function (given its Taylor coefficients
    /// at the jet's base value) with this jet.
    fn compose1(&self, outer: &[f64]) -> Self {
        // Horner evaluation of sum outer[k] * (self - value)^k
        let mut dx = self.clone();
        dx.c[0] = 0.0;
        let mut acc = Self::constant(self.ord, outer[outer.len() - 1]);
        for k in (0..outer.len() - 1).rev() {
            acc = acc.mul(&dx);
            acc.c[0] += outer[k];
        }
        acc
    }

    pub fn exp(&self) -> Self {
        let e0 = self.value().exp();
        let n = self.ord as usize + 1;
        let mut outer = vec![0.0; n];
        let mut fact = 1.0;
        for (k, o) in outer.iter_mut().enumerate() {
            if k > 0 {
                fact *= k as f64;
            }
            *o = e0 / fact;
        }
        self.compose1(&outer)
    }

    pub fn sin(&self) -> Self {
        let (s0, c0) = self.value().sin_cos();
        let n = self.ord as usize + 1;
        let mut outer = vec![0.0; n];
        let cycle = [s0, c0, -s0, -c0];
        let mut fact = 1.0;
        for (k, o) in outer.iter_mut().enumerate() {
            if k > 0 {
                fact *= k as f64;
            }
            *o = cycle[k % 4] / fact;
        }
        self.compose1(&outer)
    }

    pub fn cos(&self) -> Self {
        let (s0, c0) = self.value().sin_cos();
        let n = self.ord as usize + 1;
        let mut outer = vec![0.0; n];
        let cycle = [c0, -s0, -c0, s0];
        let mut fact = 1.0;
        for (k, o) in outer.iter_mut().enumerate() {
            if k > 0 {
                fact *= k as f64;
            }
            *o = cycle[k % 4] / fact;
        }
        self.compose1(&outer)
    }

    pub fn recip(&self) -> Self {
        let u = self.value();
        assert!(u != 0.0, "jet reciprocal at zero");
        let n = self.ord as usize + 1;
        let mut outer = vec![0.0; n];
        let mut p = 1.0 / u;
        for o in outer.iter_mut() {
            *o = p;
            p *= -1.0 / u;
        }
        self.compose1(&outer)
    }

    pub fn div(&self, o: &Self) -> Self {
        self.mul(&o.recip())
    }

    pub fn sqrt(&self) -> Self {
        let u = self.value();
        assert!(u > 0.0, "jet sqrt of non-positive value");
        let n = self.ord as usize + 1;
        let mut outer = vec![0.0; n];
        // binomial series: sqrt(u)(1 + s/u)^{1/2}
        let s0 = u.sqrt();
        let mut coef = 1.0;
        for (k, o) in outer.iter_mut().enumerate() {
            if k > 0 {
                coef *= (0.5 - (k as f64 - 1.0)) / k as f64;
            }
            *o = s0 * coef / u.powi(k as i32);
        }
        self.compose1(&outer)
    }

    pub fn powi(&self, p: i32) -> Self {
        if p == 0 {
            return Self::constant(self.ord, 1.0);
        }
        let base = if p < 0 { self.recip() } else { self.clone() };
        let mut acc = base.clone();
        for _ in 1..p.unsigned_abs() {
            acc = acc.mul(&base);
        }
        acc
    }

    /// Evaluates the truncated polynomial at offset `dx` from the base point.
    pub fn eval(&self, dx: [f64; D]) -> f64 {
        let sh = self.shape();
        let mut acc = 0.0;
        for (i, e) in sh.exps.iter().enumerate() {
            if self.c[i] == 0.0 {
                continue;
            }
            let mut m = self.c[i];
            for (k, dk) in dx.iter().enumerate() {
                for _ in 0..e[k] {
                    m *= dk;
                }
            }
            acc += m;
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn jet3_basic_derivatives() {
        // f(t,x,y) = exp(x) * sin(t) + y^2 / (1 + x)
        let ord = 5u8;
        let t = Jet3::var(ord, 0, 0.3);
        let x = Jet3::var(ord, 1, 0.2);
        let y = Jet3::var(ord, 2, -0.4);
        let f = x
            .exp()
            .mul(&t.sin())
            .add(&y.mul(&y).div(&Jet3::constant(ord, 1.0).add(&x)));
        let (t0, x0, y0): (f64, f64, f64) = (0.3, 0.2, -0.4);
        assert_relative_eq!(f.value(), x0.exp() * t0.sin() + y0 * y0 / (1.0 + x0), epsilon = 1e-14);
        assert_relative_eq!(f.deriv([1, 0, 0]), x0.exp() * t0.cos(), epsilon = 1e-12);
        assert_relative_eq!(
            f.deriv([0, 1, 0]),
            x0.exp() * t0.sin() - y0 * y0 / (1.0 + x0).powi(2),
            epsilon = 1e-12
        );
        assert_relative_eq!(f.deriv([0, 0, 2]), 2.0 / (1.0 + x0), epsilon = 1e-12);
        assert_relative_eq!(
            f.deriv([0, 2, 1]),
            2.0 * 2.0 * y0 / (1.0 + x0).powi(3),
            epsilon = 1e-12
        );
    }

    #[test]
    fn jet2_sqrt_and_eval() {
        let ord = 8u8;
        let x = Jet2::var(ord, 0, 1.3);
        let y = Jet2::var(ord, 1, 0.4);
        let f = x.mul(&x).add(&y.mul(&y)).sqrt();
        let val = f.eval([0.05, -0.03]);
        let exact = ((1.35f64).powi(2) + (0.37f64).powi(2)).sqrt();
        assert_relative_eq!(val, exact, epsilon = 1e-10);
    }

    #[test]
    fn high_order_exp_jet() {
        let ord = 12u8;
        let x = Jet2::var(ord, 0, 0.0);
        let f = x.mul(&x).scale(-1.0).exp(); // exp(-x^2)
        // d^4/dx^4 exp(-x^2) at 0 = 12
        assert_relative_eq!(f.deriv([4, 0]), 12.0, epsilon = 1e-9);
        assert_relative_eq!(f.deriv([6, 0]), -120.0, epsilon = 1e-7);
    }
}
