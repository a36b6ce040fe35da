//! Localization cutoffs and their high-order derivatives.
//!
//! `chi0` is the C-infinity profile with plateau |s| <= 1/4 and support
//! |s| < 1/2, built from the standard bump kernel beta(x) = exp(-1/x) via
//! the smoothstep H(x) = beta(x) / (beta(x) + beta(1-x)):
//! chi0(s) = H(2 - 4|s|). `chi_delta(t, w)` is its radial version on the
//! lateral boundary with the 1/delta normalization that makes the squared
//! mass delta-independent. Derivatives of any order come from truncated
//! Taylor arithmetic on the same composition, never from differencing.

use crate::taylor::Jet2;

fn beta(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        (-1.0 / x).exp()
    }
}

/// Smoothstep: 0 for x <= 0, 1 for x >= 1, strictly increasing between.
pub fn smoothstep(x: f64) -> f64 {
    let b0 = beta(x);
    let b1 = beta(1.0 - x);
    if b0 == 0.0 {
        0.0
    } else if b1 == 0.0 {
        1.0
    } else {
        b0 / (b0 + b1)
    }
}

/// Plateau cutoff: 1 on |s| <= 1/4, 0 on |s| >= 1/2.
pub fn chi0(s: f64) -> f64 {
    smoothstep(2.0 - 4.0 * s.abs())
}

fn beta_jet(x: &Jet2) -> Jet2 {
    if x.value() <= 1e-12 {
        return Jet2::constant(x.ord, 0.0);
    }
    x.recip().neg().exp()
}

fn smoothstep_jet(x: &Jet2) -> Jet2 {
    if x.value() <= 1e-12 {
        return Jet2::constant(x.ord, 0.0);
    }
    if x.value() >= 1.0 - 1e-12 {
        return Jet2::constant(x.ord, 1.0);
    }
    let b0 = beta_jet(x);
    let b1 = beta_jet(&Jet2::constant(x.ord, 1.0).sub(x));
    b0.div(&b0.add(&b1))
}

/// chi0 value with first and second derivative (for the y1 cutoff factor).
pub fn chi0_d2(s: f64) -> (f64, f64, f64) {
    let sign = if s < 0.0 { -1.0 } else { 1.0 };
    let a = s.abs();
    if a <= 0.25 {
        return (1.0, 0.0, 0.0);
    }
    if a >= 0.5 {
        return (0.0, 0.0, 0.0);
    }
    let x = Jet2::var(2, 0, 2.0 - 4.0 * a);
    let h = smoothstep_jet(&x);
    // chain: d/ds = -4 sign d/dx
    (
        h.value(),
        -4.0 * sign * h.deriv([1, 0]),
        16.0 * h.deriv([2, 0]),
    )
}

/// Table of cutoff derivatives d_t^a d_w^b chi_delta at one point.
pub struct ChiDerivs {
    pub ord: u8,
    jet: Option<Jet2>,
    plateau_value: f64,
}

impl ChiDerivs {
    /// chi_delta(t, w) = (1/delta) chi0(sqrt(t^2 + w^2)/delta) around the
    /// probe center; `t`, `w` are offsets from it.
    pub fn at(delta: f64, t: f64, w: f64, ord: u8) -> ChiDerivs {
        let rho = (t * t + w * w).sqrt();
        let s = rho / delta;
        if s <= 0.25 {
            return ChiDerivs {
                ord,
                jet: None,
                plateau_value: 1.0 / delta,
            };
        }
        if s >= 0.5 {
            return ChiDerivs {
                ord,
                jet: None,
                plateau_value: 0.0,
            };
        }
        let tj = Jet2::var(ord, 0, t);
        let wj = Jet2::var(ord, 1, w);
        let rho2 = tj.mul(&tj).add(&wj.mul(&wj));
        let sj = rho2.sqrt().scale(1.0 / delta);
        let x = Jet2::constant(ord, 2.0).sub(&sj.scale(4.0));
        let h = smoothstep_jet(&x).scale(1.0 / delta);
        ChiDerivs {
            ord,
            jet: Some(h),
            plateau_value: 0.0,
        }
    }

    pub fn get(&self, a: u8, b: u8) -> f64 {
        match &self.jet {
            None => {
                if a == 0 && b == 0 {
                    self.plateau_value
                } else {
                    0.0
                }
            }
            Some(j) => {
                if (a + b) as u8 > self.ord {
                    panic!("chi derivative order {} exceeds table order {}", a + b, self.ord);
                }
                j.deriv([a, b])
            }
        }
    }
}

/// Squared-mass constant of the cutoff: integral of chi_delta^2 over the
/// (t, w) plane, which the 1/delta normalization makes delta-independent:
/// 2 pi * int_0^1/2 chi0(s)^2 s ds.
pub fn chi_delta_sq_mass() -> f64 {
    let n = 4000;
    let h = 0.5 / n as f64;
    let mut acc = 0.0;
    for i in 0..=n {
        let s = i as f64 * h;
        let w = if i == 0 || i == n { 0.5 } else { 1.0 };
        let c = chi0(s);
        acc += w * c * c * s;
    }
    2.0 * std::f64::consts::PI * acc * h
}
