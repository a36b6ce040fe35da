//! Closed-form coefficient expressions.
//!
//! Hidden coefficients, references and demo inputs are written in a small
//! grammar over `t`, `x1`, `x2`, `r`, `theta`: `+ - * / ^` (integer powers),
//! `exp`, `sin`, `cos`, and `bump(u)` — the standard compactly supported
//! C-infinity bump `exp(1 - 1/(1 - u^2))` on `|u| < 1`, zero outside.
//! Expressions evaluate either to plain values or to truncated Taylor jets,
//! so every derivative a probe or metric needs is exact.

use std::fmt;

use crate::error::{Error, Result};
use crate::taylor::Jet3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    T,
    X1,
    X2,
    R,
    Theta,
}

#[derive(Debug, Clone)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Exp(Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Bump(Box<Expr>),
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let mut p = Parser {
            src: src.as_bytes(),
            pos: 0,
        };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(Error::parse(format!(
                "unexpected trailing input at byte {} of {src:?}",
                p.pos
            )));
        }
        Ok(e)
    }

    pub fn eval(&self, t: f64, x: [f64; 2]) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Var(Var::T) => t,
            Expr::Var(Var::X1) => x[0],
            Expr::Var(Var::X2) => x[1],
            Expr::Var(Var::R) => (x[0] * x[0] + x[1] * x[1]).sqrt(),
            Expr::Var(Var::Theta) => x[1].atan2(x[0]),
            Expr::Neg(a) => -a.eval(t, x),
            Expr::Add(a, b) => a.eval(t, x) + b.eval(t, x),
            Expr::Sub(a, b) => a.eval(t, x) - b.eval(t, x),
            Expr::Mul(a, b) => a.eval(t, x) * b.eval(t, x),
            Expr::Div(a, b) => a.eval(t, x) / b.eval(t, x),
            Expr::Pow(a, p) => a.eval(t, x).powi(*p),
            Expr::Exp(a) => a.eval(t, x).exp(),
            Expr::Sin(a) => a.eval(t, x).sin(),
            Expr::Cos(a) => a.eval(t, x).cos(),
            Expr::Bump(a) => bump(a.eval(t, x)),
        }
    }

    /// Jet evaluation: the three jet arguments are `t`, `x1`, `x2` expanded in
    /// whatever chart variables the caller chose.
    pub fn eval_jet(&self, t: &Jet3, x1: &Jet3, x2: &Jet3) -> Jet3 {
        match self {
            Expr::Num(v) => Jet3::constant(t.ord, *v),
            Expr::Var(Var::T) => t.clone(),
            Expr::Var(Var::X1) => x1.clone(),
            Expr::Var(Var::X2) => x2.clone(),
            Expr::Var(Var::R) => x1.mul(x1).add(&x2.mul(x2)).sqrt(),
            Expr::Var(Var::Theta) => atan2_jet(x2, x1),
            Expr::Neg(a) => a.eval_jet(t, x1, x2).neg(),
            Expr::Add(a, b) => a.eval_jet(t, x1, x2).add(&b.eval_jet(t, x1, x2)),
            Expr::Sub(a, b) => a.eval_jet(t, x1, x2).sub(&b.eval_jet(t, x1, x2)),
            Expr::Mul(a, b) => a.eval_jet(t, x1, x2).mul(&b.eval_jet(t, x1, x2)),
            Expr::Div(a, b) => a.eval_jet(t, x1, x2).div(&b.eval_jet(t, x1, x2)),
            Expr::Pow(a, p) => a.eval_jet(t, x1, x2).powi(*p),
            Expr::Exp(a) => a.eval_jet(t, x1, x2).exp(),
            Expr::Sin(a) => a.eval_jet(t, x1, x2).sin(),
            Expr::Cos(a) => a.eval_jet(t, x1, x2).cos(),
            Expr::Bump(a) => bump_jet(&a.eval_jet(t, x1, x2)),
        }
    }

    /// Jet of the expression in the ambient variables around `(t0, x0)`.
    pub fn jet_at(&self, ord: u8, t0: f64, x0: [f64; 2]) -> Jet3 {
        let t = Jet3::var(ord, 0, t0);
        let x1 = Jet3::var(ord, 1, x0[0]);
        let x2 = Jet3::var(ord, 2, x0[1]);
        self.eval_jet(&t, &x1, &x2)
    }
}

/// First-order dual number: value plus partials in (t, x1, x2).
/// Allocation-free path for the per-step gradient queries of geodesic tracing.
#[derive(Debug, Clone, Copy)]
pub struct Dual3 {
    pub v: f64,
    pub d: [f64; 3],
}

impl Dual3 {
    pub fn constant(v: f64) -> Self {
        Dual3 { v, d: [0.0; 3] }
    }

    fn unary(self, v: f64, dv: f64) -> Self {
        Dual3 {
            v,
            d: [self.d[0] * dv, self.d[1] * dv, self.d[2] * dv],
        }
    }

    fn add(self, o: Dual3) -> Self {
        Dual3 {
            v: self.v + o.v,
            d: [self.d[0] + o.d[0], self.d[1] + o.d[1], self.d[2] + o.d[2]],
        }
    }

    fn sub(self, o: Dual3) -> Self {
        Dual3 {
            v: self.v - o.v,
            d: [self.d[0] - o.d[0], self.d[1] - o.d[1], self.d[2] - o.d[2]],
        }
    }

    fn mul(self, o: Dual3) -> Self {
        Dual3 {
            v: self.v * o.v,
            d: [
                self.d[0] * o.v + self.v * o.d[0],
                self.d[1] * o.v + self.v * o.d[1],
                self.d[2] * o.v + self.v * o.d[2],
            ],
        }
    }

    fn div(self, o: Dual3) -> Self {
        let inv = 1.0 / o.v;
        let q = self.v * inv;
        Dual3 {
            v: q,
            d: [
                (self.d[0] - q * o.d[0]) * inv,
                (self.d[1] - q * o.d[1]) * inv,
                (self.d[2] - q * o.d[2]) * inv,
            ],
        }
    }
}

impl Expr {
    /// Value and (d/dt, d/dx1, d/dx2) in one pass.
    ///
    /// `theta` and bare `r` are non-differentiable at the origin; there the
    /// radial derivative is reported as zero, which is harmless for the
    /// radially symmetric profiles used in practice (their chain factor
    /// vanishes at the center).
    pub fn eval_dual(&self, t: f64, x: [f64; 2]) -> Dual3 {
        match self {
            Expr::Num(v) => Dual3::constant(*v),
            Expr::Var(Var::T) => Dual3 { v: t, d: [1.0, 0.0, 0.0] },
            Expr::Var(Var::X1) => Dual3 { v: x[0], d: [0.0, 1.0, 0.0] },
            Expr::Var(Var::X2) => Dual3 { v: x[1], d: [0.0, 0.0, 1.0] },
            Expr::Var(Var::R) => {
                let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
                if r < 1e-14 {
                    Dual3 { v: r, d: [0.0, 0.0, 0.0] }
                } else {
                    Dual3 { v: r, d: [0.0, x[0] / r, x[1] / r] }
                }
            }
            Expr::Var(Var::Theta) => {
                let r2 = x[0] * x[0] + x[1] * x[1];
                if r2 < 1e-28 {
                    Dual3::constant(0.0)
                } else {
                    Dual3 {
                        v: x[1].atan2(x[0]),
                        d: [0.0, -x[1] / r2, x[0] / r2],
                    }
                }
            }
            Expr::Neg(a) => {
                let u = a.eval_dual(t, x);
                Dual3 { v: -u.v, d: [-u.d[0], -u.d[1], -u.d[2]] }
            }
            Expr::Add(a, b) => a.eval_dual(t, x).add(b.eval_dual(t, x)),
            Expr::Sub(a, b) => a.eval_dual(t, x).sub(b.eval_dual(t, x)),
            Expr::Mul(a, b) => a.eval_dual(t, x).mul(b.eval_dual(t, x)),
            Expr::Div(a, b) => a.eval_dual(t, x).div(b.eval_dual(t, x)),
            Expr::Pow(a, p) => {
                let u = a.eval_dual(t, x);
                let v = u.v.powi(*p);
                u.unary(v, *p as f64 * u.v.powi(*p - 1))
            }
            Expr::Exp(a) => {
                let u = a.eval_dual(t, x);
                let v = u.v.exp();
                u.unary(v, v)
            }
            Expr::Sin(a) => {
                let u = a.eval_dual(t, x);
                let (s, c) = u.v.sin_cos();
                u.unary(s, c)
            }
            Expr::Cos(a) => {
                let u = a.eval_dual(t, x);
                let (s, c) = u.v.sin_cos();
                u.unary(c, -s)
            }
            Expr::Bump(a) => {
                let u = a.eval_dual(t, x);
                let u2 = u.v * u.v;
                if u2 >= 1.0 {
                    Dual3::constant(0.0)
                } else {
                    let w = 1.0 - u2;
                    let v = (1.0 - 1.0 / w).exp();
                    u.unary(v, v * (-2.0 * u.v / (w * w)))
                }
            }
        }
    }
}

/// Compactly supported bump: exp(1 - 1/(1 - u^2)) on |u| < 1, zero outside.
pub fn bump(u: f64) -> f64 {
    let u2 = u * u;
    if u2 >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - u2)).exp()
    }
}

fn bump_jet(u: &Jet3) -> Jet3 {
    let u0 = u.value();
    if u0 * u0 >= 1.0 - 1e-14 {
        return Jet3::constant(u.ord, 0.0);
    }
    let one = Jet3::constant(u.ord, 1.0);
    one.sub(&one.div(&one.sub(&u.mul(u)))).exp()
}

/// atan2 on jets; the base point must be away from the origin.
fn atan2_jet(y: &Jet3, x: &Jet3) -> Jet3 {
    let (x0, y0) = (x.value(), y.value());
    assert!(
        x0 != 0.0 || y0 != 0.0,
        "theta jet requested at the origin"
    );
    if x0.abs() >= y0.abs() {
        let base = y0.atan2(x0) - (y0 / x0).atan();
        atan_jet(&y.div(x)).add(&Jet3::constant(x.ord, base))
    } else {
        let base = y0.atan2(x0) + (x0 / y0).atan();
        atan_jet(&x.div(y)).neg().add(&Jet3::constant(x.ord, base))
    }
}

fn atan_jet(u: &Jet3) -> Jet3 {
    use num_complex::Complex64;
    let u0 = u.value();
    let n = u.ord as usize + 1;
    // Taylor coefficients of atan at u0 from 1/(1+u^2) = Im(1/(u - i))
    let mut outer = vec![0.0; n];
    outer[0] = u0.atan();
    let z = Complex64::new(u0, -1.0);
    let mut zp = z;
    let mut sign = 1.0;
    for (k, o) in outer.iter_mut().enumerate().skip(1) {
        *o = sign * (1.0 / zp).im / k as f64;
        zp *= z;
        sign = -sign;
    }
    // reuse compose via exp-free path: Horner on (u - u0)
    let mut du = u.clone();
    du.c[0] = 0.0;
    let mut acc = Jet3::constant(u.ord, outer[n - 1]);
    for k in (0..n - 1).rev() {
        acc = acc.mul(&du);
        acc.c[0] += outer[k];
    }
    acc
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(b'-') => {
                    self.pos += 1;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Some(b'/') => {
                    self.pos += 1;
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            self.skip_ws();
            let neg = if self.peek() == Some(b'-') {
                self.pos += 1;
                true
            } else {
                false
            };
            let start = self.pos;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if start == self.pos {
                return Err(Error::parse("expected integer exponent after '^'"));
            }
            let digits = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
            let mut p: i32 = digits
                .parse()
                .map_err(|e| Error::parse(format!("bad exponent {digits:?}: {e}")))?;
            if neg {
                p = -p;
            }
            return Ok(Expr::Pow(Box::new(base), p));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(Error::parse("missing closing parenthesis"));
                }
                self.pos += 1;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.ident(),
            other => Err(Error::parse(format!(
                "unexpected token {:?} at byte {}",
                other.map(|b| b as char),
                self.pos
            ))),
        }
    }

    fn number(&mut self) -> Result<Expr> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() {
            let c = self.src[self.pos];
            if c.is_ascii_digit() || c == b'.' {
                self.pos += 1;
            } else if (c == b'e' || c == b'E')
                && self.pos + 1 < self.src.len()
                && (self.src[self.pos + 1].is_ascii_digit()
                    || self.src[self.pos + 1] == b'-'
                    || self.src[self.pos + 1] == b'+')
            {
                self.pos += 2;
            } else {
                break;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        text.parse::<f64>()
            .map(Expr::Num)
            .map_err(|e| Error::parse(format!("bad number {text:?}: {e}")))
    }

    fn ident(&mut self) -> Result<Expr> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        match name {
            "t" => Ok(Expr::Var(Var::T)),
            "x1" => Ok(Expr::Var(Var::X1)),
            "x2" => Ok(Expr::Var(Var::X2)),
            "r" => Ok(Expr::Var(Var::R)),
            "theta" => Ok(Expr::Var(Var::Theta)),
            "pi" => Ok(Expr::Num(std::f64::consts::PI)),
            "exp" | "sin" | "cos" | "bump" => {
                if self.peek() != Some(b'(') {
                    return Err(Error::parse(format!("{name} requires parentheses")));
                }
                self.pos += 1;
                let arg = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(Error::parse(format!("missing ')' after {name}(...")));
                }
                self.pos += 1;
                let b = Box::new(arg);
                Ok(match name {
                    "exp" => Expr::Exp(b),
                    "sin" => Expr::Sin(b),
                    "cos" => Expr::Cos(b),
                    _ => Expr::Bump(b),
                })
            }
            _ => Err(Error::parse(format!("unknown identifier {name:?}"))),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Var(Var::T) => write!(f, "t"),
            Expr::Var(Var::X1) => write!(f, "x1"),
            Expr::Var(Var::X2) => write!(f, "x2"),
            Expr::Var(Var::R) => write!(f, "r"),
            Expr::Var(Var::Theta) => write!(f, "theta"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, p) => write!(f, "({a}^{p})"),
            Expr::Exp(a) => write!(f, "exp({a})"),
            Expr::Sin(a) => write!(f, "sin({a})"),
            Expr::Cos(a) => write!(f, "cos({a})"),
            Expr::Bump(a) => write!(f, "bump({a})"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn parse_and_eval() {
        let e = Expr::parse("1 + 0.2*(1 - r^2)").unwrap();
        assert_relative_eq!(e.eval(0.0, [0.6, 0.0]), 1.0 + 0.2 * (1.0 - 0.36), epsilon = 1e-15);
        let e = Expr::parse("exp(2*x1) * sin(t) - cos(theta)/2").unwrap();
        let (t, x) = (0.4f64, [0.3f64, 0.2f64]);
        let th: f64 = x[1].atan2(x[0]);
        assert_relative_eq!(
            e.eval(t, x),
            (2.0f64 * x[0]).exp() * t.sin() - th.cos() / 2.0,
            epsilon = 1e-14
        );
        assert!(Expr::parse("1 + unknown(r)").is_err());
        assert!(Expr::parse("1 + ").is_err());
        assert!(Expr::parse("(1 + t").is_err());
    }

    #[test]
    fn bump_support() {
        assert_eq!(bump(1.0), 0.0);
        assert_eq!(bump(-2.0), 0.0);
        assert_relative_eq!(bump(0.0), 1.0, epsilon = 1e-15);
        assert!(bump(0.999) > 0.0 && bump(0.999) < 1e-100);
    }

    #[test]
    fn jets_match_finite_differences() {
        let e = Expr::parse("exp(x1) * (1 + 0.3*cos(theta)) + bump(r/0.8) - 0.1*t^2").unwrap();
        let (t0, x0) = (0.3, [0.4, 0.25]);
        let jet = e.jet_at(3, t0, x0);
        let h = 1e-5;
        let fd_x1 =
            (e.eval(t0, [x0[0] + h, x0[1]]) - e.eval(t0, [x0[0] - h, x0[1]])) / (2.0 * h);
        let fd_x2 =
            (e.eval(t0, [x0[0], x0[1] + h]) - e.eval(t0, [x0[0], x0[1] - h])) / (2.0 * h);
        let fd_t = (e.eval(t0 + h, x0) - e.eval(t0 - h, x0)) / (2.0 * h);
        assert_relative_eq!(jet.deriv([0, 1, 0]), fd_x1, epsilon = 1e-8);
        assert_relative_eq!(jet.deriv([0, 0, 1]), fd_x2, epsilon = 1e-8);
        assert_relative_eq!(jet.deriv([1, 0, 0]), fd_t, epsilon = 1e-8);
        let fd_x1x1 = (e.eval(t0, [x0[0] + h, x0[1]]) - 2.0 * e.eval(t0, x0)
            + e.eval(t0, [x0[0] - h, x0[1]]))
            / (h * h);
        assert_relative_eq!(jet.deriv([0, 2, 0]), fd_x1x1, epsilon = 1e-4);
    }

    #[test]
    fn theta_jet_across_quadrants() {
        let e = Expr::parse("theta").unwrap();
        for x0 in [[0.5, 0.1], [0.1, 0.5], [-0.4, 0.3], [-0.2, -0.6], [0.3, -0.5]] {
            let jet = e.jet_at(2, 0.0, x0);
            let r2 = x0[0] * x0[0] + x0[1] * x0[1];
            assert_relative_eq!(jet.deriv([0, 1, 0]), -x0[1] / r2, epsilon = 1e-10);
            assert_relative_eq!(jet.deriv([0, 0, 1]), x0[0] / r2, epsilon = 1e-10);
        }
    }
}
