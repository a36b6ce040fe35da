//! Conformally Euclidean Riemannian machinery at fixed time slices.
//!
//! The diffusivity gamma defines the metric g = gamma * (Euclidean) on the
//! ambient region. Geodesics are integrated in Hamiltonian form with
//! classical fourth-order stepping; conjugate points come from the scalar
//! normal Jacobi field; distances come from geodesic shooting (method of
//! record), cross-checked by a Cartesian fast-marching eikonal solve; whole
//! distance fields are built from dense geodesic fans, which also deliver
//! the gradient of the distance (gamma times the arrival tangent) and the
//! normal-polar chart angle needed by the exponential probes.

use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forward::Coeff;
use crate::grid::{cubic_weights, Extent, ScalarField, SpaceTimeGrid, TWO_PI};

/// Conformal metric g = gamma(t0, x) * Euclidean on the ambient region.
#[derive(Clone)]
pub struct ConformalMetric {
    pub grid: Arc<SpaceTimeGrid>,
    pub gamma: Coeff,
    pub t0: f64,
    slice: Option<Arc<SpatialSlice>>,
}

impl ConformalMetric {
    pub fn new(grid: &Arc<SpaceTimeGrid>, gamma: Coeff, t0: f64) -> Result<Self> {
        let slice = match &gamma {
            Coeff::Field(f) => Some(Arc::new(SpatialSlice::from_field(f, t0))),
            _ => None,
        };
        let m = ConformalMetric {
            grid: grid.clone(),
            gamma,
            t0,
            slice,
        };
        for s in 0..grid.nodes(Extent::Ambient) {
            let v = m.gamma_at(grid.node_pos(s));
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::metric(format!(
                    "gamma non-positive or non-finite at node {s}: {v}"
                )));
            }
        }
        Ok(m)
    }

    /// Largest radius safely covered by sampling.
    pub fn ambient_radius(&self) -> f64 {
        self.grid.r_ext
    }

    pub fn gamma_at(&self, x: [f64; 2]) -> f64 {
        match (&self.gamma, &self.slice) {
            (_, Some(sl)) => sl.sample(x),
            (c, None) => c.eval(self.t0, x),
        }
    }

    /// (gamma, grad gamma) with exact duals for closed forms.
    pub fn gamma_grad(&self, x: [f64; 2]) -> (f64, [f64; 2]) {
        match (&self.gamma, &self.slice) {
            (_, Some(sl)) => sl.sample_grad(x),
            (Coeff::Const(v), None) => (*v, [0.0, 0.0]),
            (Coeff::Analytic(e), None) => {
                let d = e.eval_dual(self.t0, x);
                (d.v, [d.d[1], d.d[2]])
            }
            (Coeff::Field(_), None) => unreachable!(),
        }
    }

    /// Gauss curvature K = -Lap(log gamma) / (2 gamma).
    pub fn gauss_curvature(&self, x: [f64; 2]) -> f64 {
        let lap_log = match (&self.gamma, &self.slice) {
            (Coeff::Const(_), None) => 0.0,
            (Coeff::Analytic(e), None) => {
                let j = e.jet_at(2, self.t0, x);
                let g = j.value();
                let gx = j.deriv([0, 1, 0]);
                let gy = j.deriv([0, 0, 1]);
                let gxx = j.deriv([0, 2, 0]);
                let gyy = j.deriv([0, 0, 2]);
                (gxx + gyy) / g - (gx * gx + gy * gy) / (g * g)
            }
            (_, Some(sl)) => {
                let h = sl.h_r;
                let safe = self.ambient_radius() - 1.5 * h;
                let xc = clamp_to_radius(x, safe);
                let f = |p: [f64; 2]| sl.sample(p).ln();
                (f([xc[0] + h, xc[1]]) + f([xc[0] - h, xc[1]]) + f([xc[0], xc[1] + h])
                    + f([xc[0], xc[1] - h])
                    - 4.0 * f(xc))
                    / (h * h)
            }
            (Coeff::Field(_), None) => unreachable!(),
        };
        -lap_log / (2.0 * self.gamma_at(x))
    }
}

fn clamp_to_radius(x: [f64; 2], r_max: f64) -> [f64; 2] {
    let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
    if r <= r_max {
        x
    } else {
        [x[0] * r_max / r, x[1] * r_max / r]
    }
}

/// Spatial slice of a field at a fixed time with fused value+gradient
/// sampling (cubic Lagrange in r and theta).
pub struct SpatialSlice {
    n_rings: usize,
    n_theta: usize,
    h_r: f64,
    h_theta: f64,
    /// center value then ring-major values
    values: Vec<f64>,
}

impl SpatialSlice {
    /// Wraps a bare node-value array (center then ring-major) as a slice.
    pub fn from_node_values(grid: &SpaceTimeGrid, extent: Extent, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), grid.nodes(extent));
        SpatialSlice {
            n_rings: grid.rings(extent),
            n_theta: grid.n_theta,
            h_r: grid.h_r,
            h_theta: grid.h_theta,
            values,
        }
    }

    pub fn from_field(f: &ScalarField, t: f64) -> Self {
        let g = &f.grid;
        let n_rings = g.rings(f.extent);
        let ut = (t / g.dt).clamp(0.0, g.n_t as f64);
        let k0 = (ut.floor() as usize).min(g.n_t - 1);
        let w = ut - k0 as f64;
        let n = g.nodes(f.extent);
        let mut values = vec![0.0; n];
        for s in 0..n {
            values[s] = (1.0 - w) * f.at(k0, s) + w * f.at(k0 + 1, s);
        }
        SpatialSlice {
            n_rings,
            n_theta: g.n_theta,
            h_r: g.h_r,
            h_theta: g.h_theta,
            values,
        }
    }

    #[inline]
    fn node(&self, ring: usize, j: usize) -> f64 {
        if ring == 0 {
            self.values[0]
        } else {
            self.values[1 + (ring - 1) * self.n_theta + j]
        }
    }

    /// Angular value and d/dtheta on a (mirrored) ring.
    fn ring_eval(&self, ring: isize, theta: f64) -> (f64, f64) {
        let (ring, theta) = if ring < 0 {
            ((-ring) as usize, theta + std::f64::consts::PI)
        } else {
            (ring as usize, theta)
        };
        if ring == 0 {
            return (self.values[0], 0.0);
        }
        let n = self.n_theta;
        let v = theta.rem_euclid(TWO_PI) / self.h_theta;
        let j0 = (v.floor() as usize) % n;
        let s = v - v.floor();
        let w = cubic_weights(s);
        let wd = cubic_weight_derivs(s);
        let mut val = 0.0;
        let mut der = 0.0;
        for m in 0..4 {
            let j = (j0 as isize + m as isize - 1).rem_euclid(n as isize) as usize;
            let f = self.node(ring, j);
            val += w[m] * f;
            der += wd[m] * f;
        }
        (val, der / self.h_theta)
    }

    fn radial_stencil(&self, r: f64) -> (isize, f64) {
        let u = (r / self.h_r).min(self.n_rings as f64);
        let mut base = u.floor() as isize - 1;
        if base + 3 > self.n_rings as isize {
            base = self.n_rings as isize - 3;
        }
        (base, u - base as f64 - 1.0)
    }

    pub fn sample(&self, x: [f64; 2]) -> f64 {
        let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
        let theta = x[1].atan2(x[0]);
        let (base, s) = self.radial_stencil(r);
        let w = cubic_weights(s);
        let mut val = 0.0;
        for m in 0..4 {
            val += w[m] * self.ring_eval(base + m as isize, theta).0;
        }
        val
    }

    pub fn sample_grad(&self, x: [f64; 2]) -> (f64, [f64; 2]) {
        let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
        if r < 0.25 * self.h_r {
            // central differences on the interpolant near the polar origin
            let h = 0.5 * self.h_r;
            let f0 = self.sample(x);
            let fx = (self.sample([x[0] + h, x[1]]) - self.sample([x[0] - h, x[1]])) / (2.0 * h);
            let fy = (self.sample([x[0], x[1] + h]) - self.sample([x[0], x[1] - h])) / (2.0 * h);
            return (f0, [fx, fy]);
        }
        let theta = x[1].atan2(x[0]);
        let (base, s) = self.radial_stencil(r);
        let w = cubic_weights(s);
        let wd = cubic_weight_derivs(s);
        let mut val = 0.0;
        let mut d_r = 0.0;
        let mut d_th = 0.0;
        for m in 0..4 {
            let (g, gth) = self.ring_eval(base + m as isize, theta);
            val += w[m] * g;
            d_r += wd[m] * g / self.h_r;
            d_th += w[m] * gth;
        }
        let (sin, cos) = theta.sin_cos();
        (val, [cos * d_r - sin * d_th / r, sin * d_r + cos * d_th / r])
    }
}

#[inline]
fn cubic_weight_derivs(s: f64) -> [f64; 4] {
    [
        -(3.0 * s * s - 6.0 * s + 2.0) / 6.0,
        (3.0 * s * s - 4.0 * s - 1.0) / 2.0,
        -(3.0 * s * s - 2.0 * s - 2.0) / 2.0,
        (3.0 * s * s - 1.0) / 6.0,
    ]
}

/// Disc boundary crossing along a geodesic.
#[derive(Debug, Clone, Copy)]
pub struct CrossEvent {
    pub s: f64,
    pub x: [f64; 2],
    /// Euclidean-unit tangent at the crossing.
    pub v: [f64; 2],
    pub entering: bool,
}

/// Termination data of a traced geodesic.
#[derive(Debug, Clone, Copy)]
pub struct ExitData {
    pub s: f64,
    pub x: [f64; 2],
    pub v: [f64; 2],
    /// True when the curve left the ambient region (rather than hitting s_max).
    pub left_ambient: bool,
}

/// Unit-speed geodesic with tangent samples.
#[derive(Debug, Clone)]
pub struct Geodesic {
    pub t0: f64,
    pub start: [f64; 2],
    pub s: Vec<f64>,
    pub x: Vec<[f64; 2]>,
    /// g-unit tangents dx/ds (Euclidean norm 1/sqrt(gamma)).
    pub v: Vec<[f64; 2]>,
    pub disc_events: Vec<CrossEvent>,
    pub exit: ExitData,
}

impl Geodesic {
    pub fn length(&self) -> f64 {
        *self.s.last().unwrap()
    }

    /// First entry into the disc, if any.
    pub fn disc_entry(&self) -> Option<&CrossEvent> {
        self.disc_events.iter().find(|e| e.entering)
    }

    /// Last exit from the disc, if any.
    pub fn disc_exit(&self) -> Option<&CrossEvent> {
        self.disc_events.iter().rev().find(|e| !e.entering)
    }

    /// Position/velocity at parameter s by cubic Hermite between samples.
    pub fn at(&self, s: f64) -> ([f64; 2], [f64; 2]) {
        let n = self.s.len();
        if s <= self.s[0] {
            return (self.x[0], self.v[0]);
        }
        if s >= self.s[n - 1] {
            return (self.x[n - 1], self.v[n - 1]);
        }
        let mut i = match self.s.binary_search_by(|a| a.partial_cmp(&s).unwrap()) {
            Ok(i) => i,
            Err(i) => i - 1,
        };
        if i >= n - 1 {
            i = n - 2;
        }
        let h = self.s[i + 1] - self.s[i];
        let u = (s - self.s[i]) / h;
        let mut pos = [0.0; 2];
        let mut tan = [0.0; 2];
        for d in 0..2 {
            let (p0, p1) = (self.x[i][d], self.x[i + 1][d]);
            let (m0, m1) = (self.v[i][d] * h, self.v[i + 1][d] * h);
            let u2 = u * u;
            let u3 = u2 * u;
            pos[d] = (2.0 * u3 - 3.0 * u2 + 1.0) * p0
                + (u3 - 2.0 * u2 + u) * m0
                + (-2.0 * u3 + 3.0 * u2) * p1
                + (u3 - u2) * m1;
            tan[d] = ((6.0 * u2 - 6.0 * u) * p0
                + (3.0 * u2 - 4.0 * u + 1.0) * m0
                + (-6.0 * u2 + 6.0 * u) * p1
                + (3.0 * u2 - 2.0 * u) * m1)
                / h;
        }
        (pos, tan)
    }

    /// Writes `s,x1,x2,v1,v2` rows.
    pub fn dump_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut out = String::new();
        out.push_str("s,x1,x2,v1,v2\n");
        for i in 0..self.s.len() {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                self.s[i], self.x[i][0], self.x[i][1], self.v[i][0], self.v[i][1]
            );
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// Integrates the geodesic flow of g = gamma * Euclid from `x0` in direction
/// `v0` (any nonzero vector; normalized to unit g-speed) until `s_max` or
/// ambient exit. The default step is min(h_r, R h_theta)/2.
pub fn trace_geodesic(
    metric: &ConformalMetric,
    x0: [f64; 2],
    v0: [f64; 2],
    s_max: f64,
) -> Result<Geodesic> {
    let g = &metric.grid;
    let step = 0.5 * g.h_r.min(g.radius * g.h_theta);
    trace_geodesic_step(metric, x0, v0, s_max, step)
}

pub fn trace_geodesic_step(
    metric: &ConformalMetric,
    x0: [f64; 2],
    v0: [f64; 2],
    s_max: f64,
    step: f64,
) -> Result<Geodesic> {
    let r_amb = metric.ambient_radius();
    let norm0 = (v0[0] * v0[0] + v0[1] * v0[1]).sqrt();
    if !(norm0 > 0.0) {
        return Err(Error::parameter("zero initial direction"));
    }
    let g0 = metric.gamma_at(x0);
    if !g0.is_finite() || g0 <= 0.0 {
        return Err(Error::metric(format!("gamma at start = {g0}")));
    }
    // momentum p = gamma dx/ds, |p| = sqrt(gamma) on the unit-speed shell
    let mut p = [g0.sqrt() * v0[0] / norm0, g0.sqrt() * v0[1] / norm0];
    let mut x = x0;
    let mut s = 0.0;
    let max_steps = (s_max / step).ceil() as usize + 4;

    let deriv = |x: [f64; 2], p: [f64; 2]| -> Result<([f64; 2], [f64; 2])> {
        let (gam, grad) = metric.gamma_grad(x);
        if !gam.is_finite() || gam <= 0.0 {
            return Err(Error::metric(format!("gamma sample {gam} at {x:?}")));
        }
        let p2 = p[0] * p[0] + p[1] * p[1];
        let w = p2 / (2.0 * gam * gam);
        Ok(([p[0] / gam, p[1] / gam], [w * grad[0], w * grad[1]]))
    };

    let mut ss = Vec::with_capacity(max_steps + 1);
    let mut xs = Vec::with_capacity(max_steps + 1);
    let mut vs = Vec::with_capacity(max_steps + 1);
    ss.push(0.0);
    xs.push(x);
    vs.push([p[0] / g0, p[1] / g0]);

    let mut exit: Option<ExitData> = None;
    for _ in 0..max_steps {
        if s >= s_max - 1e-12 {
            break;
        }
        let h = step.min(s_max - s);
        let (k1x, k1p) = deriv(x, p)?;
        let x2 = [x[0] + 0.5 * h * k1x[0], x[1] + 0.5 * h * k1x[1]];
        let p2 = [p[0] + 0.5 * h * k1p[0], p[1] + 0.5 * h * k1p[1]];
        let (k2x, k2p) = deriv(x2, p2)?;
        let x3 = [x[0] + 0.5 * h * k2x[0], x[1] + 0.5 * h * k2x[1]];
        let p3 = [p[0] + 0.5 * h * k2p[0], p[1] + 0.5 * h * k2p[1]];
        let (k3x, k3p) = deriv(x3, p3)?;
        let x4 = [x[0] + h * k3x[0], x[1] + h * k3x[1]];
        let p4 = [p[0] + h * k3p[0], p[1] + h * k3p[1]];
        let (k4x, k4p) = deriv(x4, p4)?;
        let xn = [
            x[0] + h / 6.0 * (k1x[0] + 2.0 * k2x[0] + 2.0 * k3x[0] + k4x[0]),
            x[1] + h / 6.0 * (k1x[1] + 2.0 * k2x[1] + 2.0 * k3x[1] + k4x[1]),
        ];
        let mut pn = [
            p[0] + h / 6.0 * (k1p[0] + 2.0 * k2p[0] + 2.0 * k3p[0] + k4p[0]),
            p[1] + h / 6.0 * (k1p[1] + 2.0 * k2p[1] + 2.0 * k3p[1] + k4p[1]),
        ];
        let gam = metric.gamma_at(xn);
        if !(gam > 0.0) || !gam.is_finite() {
            return Err(Error::metric(format!("gamma sample {gam} at {xn:?}")));
        }
        // project back to the unit-speed shell
        let pn2 = pn[0] * pn[0] + pn[1] * pn[1];
        let scale = (gam / pn2).sqrt();
        pn = [pn[0] * scale, pn[1] * scale];

        x = xn;
        p = pn;
        s += h;
        ss.push(s);
        xs.push(x);
        vs.push([p[0] / gam, p[1] / gam]);
        let rn = (x[0] * x[0] + x[1] * x[1]).sqrt();
        if rn > r_amb {
            exit = Some(ExitData {
                s,
                x,
                v: [p[0] / gam, p[1] / gam],
                left_ambient: true,
            });
            break;
        }
    }
    let n = ss.len();
    let exit = exit.unwrap_or(ExitData {
        s: ss[n - 1],
        x: xs[n - 1],
        v: vs[n - 1],
        left_ambient: false,
    });
    let mut geo = Geodesic {
        t0: metric.t0,
        start: x0,
        s: ss,
        x: xs,
        v: vs,
        disc_events: Vec::new(),
        exit,
    };
    geo.disc_events = find_disc_crossings(&geo, metric.grid.radius);
    Ok(geo)
}

fn find_disc_crossings(geo: &Geodesic, radius: f64) -> Vec<CrossEvent> {
    let mut events = Vec::new();
    for i in 0..geo.s.len() - 1 {
        let r0 = (geo.x[i][0].powi(2) + geo.x[i][1].powi(2)).sqrt() - radius;
        let r1 = (geo.x[i + 1][0].powi(2) + geo.x[i + 1][1].powi(2)).sqrt() - radius;
        if r0 == 0.0 || r0 * r1 >= 0.0 {
            continue;
        }
        let (mut a, mut b) = (geo.s[i], geo.s[i + 1]);
        for _ in 0..40 {
            let mid = 0.5 * (a + b);
            let (pm, _) = geo.at(mid);
            let rm = (pm[0] * pm[0] + pm[1] * pm[1]).sqrt() - radius;
            if r0 * rm <= 0.0 {
                b = mid;
            } else {
                a = mid;
            }
        }
        let sc = 0.5 * (a + b);
        let (xc, tc) = geo.at(sc);
        let norm = (tc[0] * tc[0] + tc[1] * tc[1]).sqrt().max(1e-300);
        events.push(CrossEvent {
            s: sc,
            x: xc,
            v: [tc[0] / norm, tc[1] / norm],
            entering: r0 > 0.0,
        });
    }
    events
}

/// Scalar normal Jacobi field along a traced geodesic: J'' + K J = 0.
/// Returns (J, J') at every sample.
pub fn jacobi_along(
    metric: &ConformalMetric,
    geo: &Geodesic,
    j0: f64,
    jp0: f64,
) -> Vec<(f64, f64)> {
    let n = geo.s.len();
    let mut out = Vec::with_capacity(n);
    let mut j = j0;
    let mut jp = jp0;
    out.push((j, jp));
    for i in 0..n - 1 {
        let h = geo.s[i + 1] - geo.s[i];
        let k0 = metric.gauss_curvature(geo.x[i]);
        let xm = [
            0.5 * (geo.x[i][0] + geo.x[i + 1][0]),
            0.5 * (geo.x[i][1] + geo.x[i + 1][1]),
        ];
        let km = metric.gauss_curvature(xm);
        let k1 = metric.gauss_curvature(geo.x[i + 1]);
        let f = |k: f64, j: f64, jp: f64| (jp, -k * j);
        let (a1, b1) = f(k0, j, jp);
        let (a2, b2) = f(km, j + 0.5 * h * a1, jp + 0.5 * h * b1);
        let (a3, b3) = f(km, j + 0.5 * h * a2, jp + 0.5 * h * b2);
        let (a4, b4) = f(k1, j + h * a3, jp + h * b3);
        j += h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
        jp += h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4);
        out.push((j, jp));
    }
    out
}

/// Smallest parameter where the normal Jacobi field with J(0)=0, J'(0)=1
/// vanishes again, or None.
pub fn detect_conjugate_points(metric: &ConformalMetric, geo: &Geodesic) -> Option<f64> {
    let jac = jacobi_along(metric, geo, 0.0, 1.0);
    for i in 1..jac.len().saturating_sub(1) {
        let (j0, jp0) = jac[i];
        let (j1, jp1) = jac[i + 1];
        if j0 == 0.0 && geo.s[i] > 1e-9 {
            return Some(geo.s[i]);
        }
        if j0 * j1 < 0.0 {
            // cubic Hermite root by bisection
            let h = geo.s[i + 1] - geo.s[i];
            let eval = |u: f64| {
                let u2 = u * u;
                let u3 = u2 * u;
                (2.0 * u3 - 3.0 * u2 + 1.0) * j0
                    + (u3 - 2.0 * u2 + u) * (jp0 * h)
                    + (-2.0 * u3 + 3.0 * u2) * j1
                    + (u3 - u2) * (jp1 * h)
            };
            let (mut a, mut b) = (0.0, 1.0);
            for _ in 0..60 {
                let m = 0.5 * (a + b);
                if eval(a) * eval(m) <= 0.0 {
                    b = m;
                } else {
                    a = m;
                }
            }
            return Some(geo.s[i] + 0.5 * (a + b) * h);
        }
    }
    None
}

/// Geodesic curvature of the boundary circle under g at every boundary node;
/// the minimum is the convexity margin.
pub fn boundary_convexity(metric: &ConformalMetric) -> Result<f64> {
    Ok(boundary_curvatures(metric)?
        .into_iter()
        .fold(f64::INFINITY, f64::min))
}

/// Geodesic curvature kappa_g of the boundary at each angular node, computed
/// from the covariant acceleration of the boundary curve (Christoffel route).
pub fn boundary_curvatures(metric: &ConformalMetric) -> Result<Vec<f64>> {
    let g = &metric.grid;
    let rad = g.radius;
    let mut out = Vec::with_capacity(g.n_theta);
    for j in 0..g.n_theta {
        let th = g.theta(j);
        let (sin, cos) = th.sin_cos();
        let c = [rad * cos, rad * sin];
        let (gam, grad) = metric.gamma_grad(c);
        if !(gam > 0.0) {
            return Err(Error::metric(format!("gamma {gam} on the boundary")));
        }
        // lambda = log(gamma)/2; conformal Christoffels
        let lam = [grad[0] / (2.0 * gam), grad[1] / (2.0 * gam)];
        let a = [-rad * sin, rad * cos];
        let sg = gam.sqrt();
        let t_vec = [a[0] / (sg * rad), a[1] / (sg * rad)];
        // d/dtheta of gamma^{-1/2}(c(theta)) (-sin, cos)
        let dgam_dth = grad[0] * a[0] + grad[1] * a[1];
        let du_dth = -0.5 * dgam_dth / (gam * sg);
        let dt_dth = [
            du_dth * (-sin) + (1.0 / sg) * (-cos),
            du_dth * cos + (1.0 / sg) * (-sin),
        ];
        let s_prime = sg * rad; // ds_g/dtheta
        let dt_ds = [dt_dth[0] / s_prime, dt_dth[1] / s_prime];
        // Gamma(T,T)^k = 2 T^k (T.lam) - |T|^2 lam^k
        let t_dot_lam = t_vec[0] * lam[0] + t_vec[1] * lam[1];
        let t2 = t_vec[0] * t_vec[0] + t_vec[1] * t_vec[1];
        let acc = [
            dt_ds[0] + 2.0 * t_vec[0] * t_dot_lam - t2 * lam[0],
            dt_ds[1] + 2.0 * t_vec[1] * t_dot_lam - t2 * lam[1],
        ];
        // kappa = g(acc, N), inward g-unit normal N = -(cos, sin)/sqrt(gamma)
        let n_e = [-cos, -sin];
        let kappa = sg * (acc[0] * n_e[0] + acc[1] * n_e[1]);
        out.push(kappa);
    }
    Ok(out)
}

/// Whether the sufficient convexity/no-conjugate-point condition holds:
/// outward normal derivative of gamma nonnegative on the boundary and the
/// Hessian of gamma^{-1/2} negative semidefinite on the disc. Reported
/// separately from the scan verdict, never used as the verdict.
pub fn sufficient_condition(metric: &ConformalMetric) -> bool {
    let g = &metric.grid;
    let tol = 1e-9;
    for j in 0..g.n_theta {
        let th = g.theta(j);
        let x = [g.radius * th.cos(), g.radius * th.sin()];
        let (_, grad) = metric.gamma_grad(x);
        if grad[0] * th.cos() + grad[1] * th.sin() < -tol {
            return false;
        }
    }
    let h = 0.5 * g.h_r;
    let f = |x: [f64; 2]| metric.gamma_at(x).powf(-0.5);
    for s in 0..g.nodes(Extent::Disc) {
        let x = clamp_to_radius(g.node_pos(s), g.r_ext - 2.0 * h);
        let fxx = (f([x[0] + h, x[1]]) - 2.0 * f(x) + f([x[0] - h, x[1]])) / (h * h);
        let fyy = (f([x[0], x[1] + h]) - 2.0 * f(x) + f([x[0], x[1] - h])) / (h * h);
        let fxy = (f([x[0] + h, x[1] + h]) + f([x[0] - h, x[1] - h])
            - f([x[0] + h, x[1] - h])
            - f([x[0] - h, x[1] + h]))
            / (4.0 * h * h);
        let tr = fxx + fyy;
        let det = fxx * fyy - fxy * fxy;
        let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
        if tr / 2.0 + disc > 1e-6 {
            return false;
        }
    }
    true
}

#[derive(Debug, Clone)]
pub struct ConjugateHit {
    pub s: f64,
    pub location: [f64; 2],
    pub source_theta: f64,
    pub launch_angle: f64,
}

#[derive(Debug, Clone)]
pub struct SliceReport {
    pub t: f64,
    pub convexity_margin: f64,
    pub conjugate: Option<ConjugateHit>,
    pub sufficient_condition: bool,
}

impl SliceReport {
    pub fn simple(&self) -> bool {
        self.convexity_margin > 0.0 && self.conjugate.is_none()
    }
}

#[derive(Debug, Clone)]
pub struct SimplicityReport {
    pub slices: Vec<SliceReport>,
    pub simple: bool,
}

/// Convexity margin plus a conjugate-point scan over a fan of
/// boundary-to-boundary geodesics at each requested time slice.
pub fn check_simplicity(
    grid: &Arc<SpaceTimeGrid>,
    gamma: &Coeff,
    times: &[f64],
    n_sources: usize,
    n_dirs: usize,
) -> Result<SimplicityReport> {
    let mut slices = Vec::with_capacity(times.len());
    for &t in times {
        let metric = ConformalMetric::new(grid, gamma.clone(), t)?;
        let margin = boundary_convexity(&metric)?;
        let gamma_max = (0..grid.nodes(Extent::Disc))
            .map(|s| metric.gamma_at(grid.node_pos(s)))
            .fold(0.0f64, f64::max);
        let s_max = 4.0 * grid.radius * gamma_max.sqrt() * std::f64::consts::PI;
        let hits: Vec<Option<ConjugateHit>> = (0..n_sources * n_dirs)
            .into_par_iter()
            .map(|idx| {
                let i = idx / n_dirs;
                let k = idx % n_dirs;
                let th = TWO_PI * i as f64 / n_sources as f64;
                let spread = std::f64::consts::FRAC_PI_2 - 0.03;
                let alpha = -spread + 2.0 * spread * k as f64 / (n_dirs - 1) as f64;
                let x0 = [grid.radius * th.cos(), grid.radius * th.sin()];
                // inward normal rotated by alpha
                let dir = [
                    -(th.cos() * alpha.cos() - th.sin() * alpha.sin()),
                    -(th.sin() * alpha.cos() + th.cos() * alpha.sin()),
                ];
                let geo = trace_geodesic(&metric, x0, dir, s_max).ok()?;
                let s_exit = geo
                    .disc_events
                    .iter()
                    .find(|e| !e.entering && e.s > 1e-6)
                    .map(|e| e.s)
                    .unwrap_or(geo.exit.s);
                let sc = detect_conjugate_points(&metric, &geo)?;
                if sc <= s_exit {
                    let (loc, _) = geo.at(sc);
                    Some(ConjugateHit {
                        s: sc,
                        location: loc,
                        source_theta: th,
                        launch_angle: alpha,
                    })
                } else {
                    None
                }
            })
            .collect();
        let conjugate = hits
            .into_iter()
            .flatten()
            .min_by(|a, b| a.s.partial_cmp(&b.s).unwrap());
        slices.push(SliceReport {
            t,
            convexity_margin: margin,
            conjugate,
            sufficient_condition: sufficient_condition(&metric),
        });
    }
    let simple = slices.iter().all(|s| s.simple());
    Ok(SimplicityReport { slices, simple })
}

/// Result of a two-point geodesic shot.
#[derive(Debug, Clone, Copy)]
pub struct ShotGeodesic {
    pub distance: f64,
    /// Euclidean-unit tangent at the source.
    pub init_tangent: [f64; 2],
    /// Euclidean-unit tangent at the target.
    pub final_tangent: [f64; 2],
    pub miss: f64,
}

/// g-distance by geodesic shooting with angular bisection (method of record).
pub fn distance(metric: &ConformalMetric, x: [f64; 2], y: [f64; 2]) -> Result<f64> {
    Ok(shoot(metric, x, y)?.distance)
}

pub fn shoot(metric: &ConformalMetric, x: [f64; 2], y: [f64; 2]) -> Result<ShotGeodesic> {
    let sep = ((y[0] - x[0]).powi(2) + (y[1] - x[1]).powi(2)).sqrt();
    if sep < 1e-12 {
        return Ok(ShotGeodesic {
            distance: 0.0,
            init_tangent: [1.0, 0.0],
            final_tangent: [1.0, 0.0],
            miss: 0.0,
        });
    }
    let gamma_max = {
        let g = &metric.grid;
        (0..g.nodes(Extent::Ambient))
            .step_by(7)
            .map(|s| metric.gamma_at(g.node_pos(s)))
            .fold(0.0f64, f64::max)
    };
    let s_max = 2.5 * sep * gamma_max.sqrt() + 0.5;
    let alpha0 = (y[1] - x[1]).atan2(y[0] - x[0]);

    // signed lateral offset of y from the ray at closest approach
    let miss_of = |alpha: f64| -> Result<(f64, f64, ShotGeodesic)> {
        let dir = [alpha.cos(), alpha.sin()];
        let geo = trace_geodesic(metric, x, dir, s_max)?;
        let mut best = (f64::INFINITY, 0usize);
        for (i, p) in geo.x.iter().enumerate() {
            let d2 = (p[0] - y[0]).powi(2) + (p[1] - y[1]).powi(2);
            if d2 < best.0 {
                best = (d2, i);
            }
        }
        let i = best.1;
        let (p, tan) = (geo.x[i], geo.v[i]);
        let tn = (tan[0] * tan[0] + tan[1] * tan[1]).sqrt();
        let tv = [tan[0] / tn, tan[1] / tn];
        let dx = [y[0] - p[0], y[1] - p[1]];
        let lateral = -dx[0] * tv[1] + dx[1] * tv[0];
        let along = dx[0] * tv[0] + dx[1] * tv[1];
        let gam = metric.gamma_at(p);
        let dist = geo.s[i] + along * gam.sqrt();
        let euclid_miss = best.0.sqrt();
        Ok((
            lateral,
            euclid_miss,
            ShotGeodesic {
                distance: dist,
                init_tangent: [alpha.cos(), alpha.sin()],
                final_tangent: tv,
                miss: euclid_miss,
            },
        ))
    };

    let n_scan = 65;
    let spread = 1.35;
    let mut prev: Option<(f64, f64)> = None;
    let mut bracket: Option<(f64, f64)> = None;
    let mut best_alpha = alpha0;
    let mut best_abs = f64::INFINITY;
    for k in 0..n_scan {
        let alpha = alpha0 - spread + 2.0 * spread * k as f64 / (n_scan - 1) as f64;
        let (lat, miss, _) = miss_of(alpha)?;
        if miss < best_abs {
            best_abs = miss;
            best_alpha = alpha;
        }
        if let Some((pa, pl)) = prev {
            if pl * lat <= 0.0 && (pl != 0.0 || lat != 0.0) {
                let closer = match bracket {
                    None => true,
                    Some((ba, bb)) => {
                        (0.5 * (pa + alpha) - alpha0).abs() < (0.5 * (ba + bb) - alpha0).abs()
                    }
                };
                if closer {
                    bracket = Some((pa, alpha));
                }
            }
        }
        prev = Some((alpha, lat));
    }
    let (mut a, mut b) = bracket.ok_or_else(|| {
        Error::geometry(format!(
            "no connecting geodesic found from {x:?} to {y:?} (best miss {best_abs:.3e} at angle {best_alpha:.4})"
        ))
    })?;
    let mut la = miss_of(a)?.0;
    for _ in 0..48 {
        let m = 0.5 * (a + b);
        let lm = miss_of(m)?.0;
        if la * lm <= 0.0 {
            b = m;
        } else {
            a = m;
            la = lm;
        }
    }
    Ok(miss_of(0.5 * (a + b))?.2)
}

/// Dense fan of geodesics from one source; the base object for whole
/// distance fields and boundary distance rows.
pub struct GeodesicFan {
    pub source: [f64; 2],
    pub rays: Vec<Geodesic>,
    /// launch angle per ray
    pub angles: Vec<f64>,
}

impl GeodesicFan {
    /// Traces `n_rays` geodesics from `source` covering the disc.
    pub fn trace(metric: &ConformalMetric, source: [f64; 2], n_rays: usize) -> Result<Self> {
        let g = &metric.grid;
        let r0 = (source[0] * source[0] + source[1] * source[1]).sqrt();
        let bearing = (-source[1]).atan2(-source[0]);
        let half = if r0 > g.radius {
            ((g.radius / r0).min(1.0)).asin() * 1.12 + 0.02
        } else {
            std::f64::consts::PI
        };
        let s_max = 2.0 * (r0 + g.r_ext);
        let angles: Vec<f64> = (0..n_rays)
            .map(|k| bearing - half + 2.0 * half * k as f64 / (n_rays - 1) as f64)
            .collect();
        let rays: Result<Vec<Geodesic>> = angles
            .par_iter()
            .map(|&a| trace_geodesic(metric, source, [a.cos(), a.sin()], s_max))
            .collect();
        Ok(GeodesicFan {
            source,
            rays: rays?,
            angles,
        })
    }

    /// All disc boundary crossings as (boundary angle, distance, tangent,
    /// launch angle), sorted by boundary angle.
    pub fn boundary_crossings(&self) -> Vec<(f64, f64, [f64; 2], f64)> {
        let mut out = Vec::new();
        for (ray, &alpha) in self.rays.iter().zip(&self.angles) {
            for e in &ray.disc_events {
                let th = e.x[1].atan2(e.x[0]).rem_euclid(TWO_PI);
                out.push((th, e.s, e.v, alpha));
            }
        }
        out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        out
    }

    /// Distance from the source to the boundary point at angle `theta`, and
    /// the Euclidean-unit tangent of the connecting geodesic there.
    pub fn boundary_distance(&self, theta: f64) -> Result<(f64, [f64; 2])> {
        let cr = self.boundary_crossings();
        if cr.len() < 2 {
            return Err(Error::geometry("fan produced no boundary crossings"));
        }
        let th = theta.rem_euclid(TWO_PI);
        let n = cr.len();
        let i1 = match cr.binary_search_by(|p| p.0.partial_cmp(&th).unwrap()) {
            Ok(i) => i,
            Err(i) => i % n,
        };
        let i0 = (i1 + n - 1) % n;
        let (t0, s0, v0, _) = cr[i0];
        let (t1, s1, v1, _) = cr[i1];
        let mut span = t1 - t0;
        if span <= 0.0 {
            span += TWO_PI;
        }
        let mut off = th - t0;
        if off < 0.0 {
            off += TWO_PI;
        }
        if span > 0.35 {
            return Err(Error::geometry(format!(
                "boundary angle {th:.3} not covered by the fan (gap {span:.3})"
            )));
        }
        let w = off / span;
        let d = (1.0 - w) * s0 + w * s1;
        let (e0, e1) = (unit(v0), unit(v1));
        if (e0[0] - e1[0]).abs() + (e0[1] - e1[1]).abs() > 0.9 {
            return Err(Error::geometry("tangent interpolation across a fold"));
        }
        let tan = unit([
            (1.0 - w) * e0[0] + w * e1[0],
            (1.0 - w) * e0[1] + w * e1[1],
        ]);
        Ok((d, tan))
    }
}

fn unit(v: [f64; 2]) -> [f64; 2] {
    let n = (v[0] * v[0] + v[1] * v[1]).sqrt().max(1e-300);
    [v[0] / n, v[1] / n]
}

/// Distance field (and normal-polar chart data) from one source, sampled at
/// the ambient grid nodes.
pub struct DistanceField {
    pub grid: Arc<SpaceTimeGrid>,
    pub source: [f64; 2],
    /// phi at ambient spatial nodes (NaN where the fan does not reach).
    pub phi: Vec<f64>,
    /// grad phi at ambient nodes.
    pub grad: Vec<[f64; 2]>,
    /// Laplacian of phi at ambient nodes (from the local quadratic fit).
    pub lap: Vec<f64>,
    /// launch angle (normal-polar chart angle) at ambient nodes.
    pub alpha: Vec<f64>,
}

impl DistanceField {
    /// Builds the field by local weighted quadratic least squares over the
    /// fan samples, binned on a Cartesian lattice.
    pub fn from_fan(metric: &ConformalMetric, fan: &GeodesicFan) -> Result<DistanceField> {
        let g = &metric.grid;
        let l = g.r_ext * 1.02;
        let cell = g.h_r.max(g.radius * g.h_theta);
        let nb = ((2.0 * l) / cell).ceil() as usize + 1;
        let mut bins: Vec<Vec<(f64, f64, f64, f64)>> = vec![Vec::new(); nb * nb];
        let bin_of = |x: [f64; 2]| -> Option<usize> {
            let i = ((x[0] + l) / cell).floor() as isize;
            let j = ((x[1] + l) / cell).floor() as isize;
            if i < 0 || j < 0 || i as usize >= nb || j as usize >= nb {
                None
            } else {
                Some(j as usize * nb + i as usize)
            }
        };
        for (ray, &alpha) in fan.rays.iter().zip(&fan.angles) {
            for i in 0..ray.s.len() {
                if let Some(b) = bin_of(ray.x[i]) {
                    bins[b].push((ray.x[i][0], ray.x[i][1], ray.s[i], alpha));
                }
            }
        }
        let nodes = g.nodes(Extent::Ambient);
        let results: Vec<(f64, [f64; 2], f64, f64)> = (0..nodes)
            .into_par_iter()
            .map(|s| {
                let p = g.node_pos(s);
                let mut pts: Vec<(f64, f64, f64, f64)> = Vec::new();
                for range in 1..=2isize {
                    pts.clear();
                    let ci = ((p[0] + l) / cell).floor() as isize;
                    let cj = ((p[1] + l) / cell).floor() as isize;
                    for dj in -range..=range {
                        for di in -range..=range {
                            let (i, j) = (ci + di, cj + dj);
                            if i < 0 || j < 0 || i as usize >= nb || j as usize >= nb {
                                continue;
                            }
                            pts.extend_from_slice(&bins[j as usize * nb + i as usize]);
                        }
                    }
                    if pts.len() >= 10 {
                        break;
                    }
                }
                if pts.len() < 6 {
                    return (f64::NAN, [f64::NAN; 2], f64::NAN, f64::NAN);
                }
                let rho = cell;
                let mut ata = DMatrix::<f64>::zeros(6, 6);
                let mut atb = DVector::<f64>::zeros(6);
                let mut aa = DMatrix::<f64>::zeros(3, 3);
                let mut ab = DVector::<f64>::zeros(3);
                for &(px, py, sv, al) in &pts {
                    let dx = px - p[0];
                    let dy = py - p[1];
                    let w = (-(dx * dx + dy * dy) / (2.0 * rho * rho)).exp();
                    let basis = [1.0, dx, dy, 0.5 * dx * dx, dx * dy, 0.5 * dy * dy];
                    for a in 0..6 {
                        for b in 0..6 {
                            ata[(a, b)] += w * basis[a] * basis[b];
                        }
                        atb[a] += w * basis[a] * sv;
                    }
                    for a in 0..3 {
                        for b in 0..3 {
                            aa[(a, b)] += w * basis[a] * basis[b];
                        }
                        ab[a] += w * basis[a] * al;
                    }
                }
                for k in 0..6 {
                    ata[(k, k)] += 1e-12;
                }
                for k in 0..3 {
                    aa[(k, k)] += 1e-12;
                }
                match (ata.lu().solve(&atb), aa.lu().solve(&ab)) {
                    (Some(c), Some(ca)) => (c[0], [c[1], c[2]], c[3] + c[5], ca[0]),
                    _ => (f64::NAN, [f64::NAN; 2], f64::NAN, f64::NAN),
                }
            })
            .collect();
        let mut phi = Vec::with_capacity(nodes);
        let mut grad = Vec::with_capacity(nodes);
        let mut lap = Vec::with_capacity(nodes);
        let mut alpha = Vec::with_capacity(nodes);
        for (p, gr, lp, al) in results {
            phi.push(p);
            grad.push(gr);
            lap.push(lp);
            alpha.push(al);
        }
        Ok(DistanceField {
            grid: g.clone(),
            source: fan.source,
            phi,
            grad,
            lap,
            alpha,
        })
    }

    /// Max eikonal residual | |grad phi|^2 - gamma | over disc nodes.
    pub fn eikonal_residual(&self, metric: &ConformalMetric) -> f64 {
        let g = &self.grid;
        let mut worst = 0.0f64;
        for s in 0..g.nodes(Extent::Disc) {
            let gr = self.grad[s];
            if !gr[0].is_finite() {
                continue;
            }
            let lhs = gr[0] * gr[0] + gr[1] * gr[1];
            worst = worst.max((lhs - metric.gamma_at(g.node_pos(s))).abs());
        }
        worst
    }
}

/// First-order fast-marching eikonal solver on a Cartesian cover of the
/// ambient square; the cross-check oracle for shooting distances.
pub struct FastMarchField {
    pub origin: [f64; 2],
    pub h: f64,
    pub n: usize,
    pub t: Vec<f64>,
}

impl FastMarchField {
    pub fn solve(metric: &ConformalMetric, source: [f64; 2], n: usize) -> FastMarchField {
        use std::cmp::Ordering;
        use std::collections::BinaryHeap;

        let l = metric.ambient_radius() * 1.02;
        let h = 2.0 * l / (n - 1) as f64;
        let origin = [-l, -l];
        let idx = |i: usize, j: usize| j * n + i;
        let pos = |i: usize, j: usize| [origin[0] + i as f64 * h, origin[1] + j as f64 * h];
        let mut t = vec![f64::INFINITY; n * n];
        let mut known = vec![false; n * n];
        let slow: Vec<f64> = (0..n * n)
            .map(|k| {
                let (i, j) = (k % n, k / n);
                let p = clamp_to_radius(pos(i, j), metric.ambient_radius());
                metric.gamma_at(p).sqrt()
            })
            .collect();

        #[derive(PartialEq)]
        struct Item(f64, usize);
        impl Eq for Item {}
        impl Ord for Item {
            fn cmp(&self, other: &Self) -> Ordering {
                other.0.partial_cmp(&self.0).unwrap_or(Ordering::Equal)
            }
        }
        impl PartialOrd for Item {
            fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
                Some(self.cmp(other))
            }
        }

        let mut heap = BinaryHeap::new();
        let si = ((source[0] - origin[0]) / h).round() as isize;
        let sj = ((source[1] - origin[1]) / h).round() as isize;
        for dj in -3..=3isize {
            for di in -3..=3isize {
                let (i, j) = (si + di, sj + dj);
                if i < 0 || j < 0 || i as usize >= n || j as usize >= n {
                    continue;
                }
                let (iu, ju) = (i as usize, j as usize);
                let p = pos(iu, ju);
                let d = ((p[0] - source[0]).powi(2) + (p[1] - source[1]).powi(2)).sqrt();
                let mid = [(p[0] + source[0]) / 2.0, (p[1] + source[1]) / 2.0];
                let val =
                    d * metric.gamma_at(clamp_to_radius(mid, metric.ambient_radius())).sqrt();
                let k = idx(iu, ju);
                if val < t[k] {
                    t[k] = val;
                    heap.push(Item(val, k));
                }
            }
        }
        while let Some(Item(tv, k)) = heap.pop() {
            if known[k] || tv > t[k] {
                continue;
            }
            known[k] = true;
            let (i, j) = (k % n, k / n);
            for (di, dj) in [(-1isize, 0isize), (1, 0), (0, -1), (0, 1)] {
                let (ni, nj) = (i as isize + di, j as isize + dj);
                if ni < 0 || nj < 0 || ni as usize >= n || nj as usize >= n {
                    continue;
                }
                let (niu, nju) = (ni as usize, nj as usize);
                let nk = idx(niu, nju);
                if known[nk] {
                    continue;
                }
                let tx = {
                    let a = if niu > 0 { t[idx(niu - 1, nju)] } else { f64::INFINITY };
                    let b = if niu + 1 < n { t[idx(niu + 1, nju)] } else { f64::INFINITY };
                    a.min(b)
                };
                let ty = {
                    let a = if nju > 0 { t[idx(niu, nju - 1)] } else { f64::INFINITY };
                    let b = if nju + 1 < n { t[idx(niu, nju + 1)] } else { f64::INFINITY };
                    a.min(b)
                };
                let f = slow[nk] * h;
                let (a, b) = (tx.min(ty), tx.max(ty));
                let cand = if b - a >= f || b.is_infinite() {
                    a + f
                } else {
                    0.5 * (a + b + (2.0 * f * f - (b - a) * (b - a)).sqrt())
                };
                if cand < t[nk] {
                    t[nk] = cand;
                    heap.push(Item(cand, nk));
                }
            }
        }
        FastMarchField { origin, h, n, t }
    }

    pub fn at(&self, x: [f64; 2]) -> f64 {
        let u = ((x[0] - self.origin[0]) / self.h).max(0.0);
        let v = ((x[1] - self.origin[1]) / self.h).max(0.0);
        let i = (u.floor() as usize).min(self.n - 2);
        let j = (v.floor() as usize).min(self.n - 2);
        let (a, b) = (u - i as f64, v - j as f64);
        let idx = |i: usize, j: usize| j * self.n + i;
        (1.0 - a) * (1.0 - b) * self.t[idx(i, j)]
            + a * (1.0 - b) * self.t[idx(i + 1, j)]
            + (1.0 - a) * b * self.t[idx(i, j + 1)]
            + a * b * self.t[idx(i + 1, j + 1)]
    }
}

/// Distance by fast marching (cross-check oracle route).
pub fn distance_fast_marching(metric: &ConformalMetric, x: [f64; 2], y: [f64; 2], n: usize) -> f64 {
    FastMarchField::solve(metric, x, n).at(y)
}

/// Boundary distance matrix: rows are sources on the outer circle, columns
/// targets on the disc boundary.
pub fn boundary_distance_matrix(
    metric: &ConformalMetric,
    src_angles: &[f64],
    tgt_angles: &[f64],
    n_rays: usize,
) -> Result<DMatrix<f64>> {
    let rows: Result<Vec<Vec<f64>>> = src_angles
        .par_iter()
        .map(|&ths| {
            let x0 = source_point(&metric.grid, ths);
            let fan = GeodesicFan::trace(metric, x0, n_rays)?;
            tgt_angles
                .iter()
                .map(|&tht| fan.boundary_distance(tht).map(|(d, _)| d))
                .collect()
        })
        .collect();
    let rows = rows?;
    Ok(DMatrix::from_fn(src_angles.len(), tgt_angles.len(), |i, j| {
        rows[i][j]
    }))
}

/// Standard probe/ray source placement on the outer circle |x| = 1.2 R.
pub fn source_point(grid: &SpaceTimeGrid, theta: f64) -> [f64; 2] {
    let r = source_radius(grid);
    [r * theta.cos(), r * theta.sin()]
}

pub fn source_radius(grid: &SpaceTimeGrid) -> f64 {
    1.2 * grid.radius
}

/// Writes a distance matrix as `src_theta,dst_theta,distance` rows.
pub fn dump_distance_matrix_csv(
    path: &std::path::Path,
    src_angles: &[f64],
    tgt_angles: &[f64],
    d: &DMatrix<f64>,
) -> Result<()> {
    let mut out = String::new();
    out.push_str("src_theta,dst_theta,distance\n");
    for (i, &a) in src_angles.iter().enumerate() {
        for (j, &b) in tgt_angles.iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", a, b, d[(i, j)]);
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Result of the maximal distance-gap search between two metrics that agree
/// outside the disc.
#[derive(Debug, Clone)]
pub struct DistanceGapResult {
    pub gap: f64,
    pub src_theta: f64,
    pub tgt_theta: f64,
    /// Euclidean-unit endpoint tangents: [metric index][0 = source, 1 = target].
    pub tangents: [[[f64; 2]; 2]; 2],
    pub src_tangent_mismatch: f64,
    pub tgt_tangent_mismatch: f64,
}

/// Grid search plus local refinement for sup |d1 - d2| over sources on the
/// outer circle and targets on the disc boundary; reports endpoint tangents
/// of the minimizing geodesics of both metrics at the maximizer.
pub fn max_distance_gap(
    m1: &ConformalMetric,
    m2: &ConformalMetric,
    n_src: usize,
    n_tgt: usize,
    n_rays: usize,
) -> Result<DistanceGapResult> {
    let g = &m1.grid;
    for ring in g.n_r..=g.n_r_ambient {
        for j in 0..g.n_theta {
            let r = g.ring_radius(ring);
            let th = g.theta(j);
            let p = [r * th.cos(), r * th.sin()];
            if (m1.gamma_at(p) - m2.gamma_at(p)).abs() > 1e-10 {
                return Err(Error::parameter(format!(
                    "metrics differ outside the disc at {p:?}"
                )));
            }
        }
    }
    let src: Vec<f64> = (0..n_src).map(|i| TWO_PI * i as f64 / n_src as f64).collect();
    let tgt: Vec<f64> = (0..n_tgt).map(|i| TWO_PI * i as f64 / n_tgt as f64).collect();
    let d1 = boundary_distance_matrix(m1, &src, &tgt, n_rays)?;
    let d2 = boundary_distance_matrix(m2, &src, &tgt, n_rays)?;
    let mut best = (0.0f64, 0usize, 0usize);
    for i in 0..n_src {
        for j in 0..n_tgt {
            let gap = (d1[(i, j)] - d2[(i, j)]).abs();
            if gap > best.0 {
                best = (gap, i, j);
            }
        }
    }
    let gap_of = |ths: f64, tht: f64| -> Result<f64> {
        let x0 = source_point(g, ths);
        let y0 = [g.radius * tht.cos(), g.radius * tht.sin()];
        Ok((shoot(m1, x0, y0)?.distance - shoot(m2, x0, y0)?.distance).abs())
    };
    let (mut ths, mut tht) = (src[best.1], tgt[best.2]);
    let mut step_s = TWO_PI / n_src as f64;
    let mut step_t = TWO_PI / n_tgt as f64;
    for _ in 0..3 {
        let (fa, fb, fc) = (
            gap_of(ths - step_s, tht)?,
            gap_of(ths, tht)?,
            gap_of(ths + step_s, tht)?,
        );
        ths += parabolic_shift(fa, fb, fc) * step_s;
        let (ga, gb, gc) = (
            gap_of(ths, tht - step_t)?,
            gap_of(ths, tht)?,
            gap_of(ths, tht + step_t)?,
        );
        tht += parabolic_shift(ga, gb, gc) * step_t;
        step_s *= 0.35;
        step_t *= 0.35;
    }
    let x0 = source_point(g, ths);
    let y0 = [g.radius * tht.cos(), g.radius * tht.sin()];
    let s1 = shoot(m1, x0, y0)?;
    let s2 = shoot(m2, x0, y0)?;
    let angle = |a: [f64; 2], b: [f64; 2]| -> f64 {
        (a[0] * b[0] + a[1] * b[1]).clamp(-1.0, 1.0).acos()
    };
    Ok(DistanceGapResult {
        gap: (s1.distance - s2.distance).abs(),
        src_theta: ths.rem_euclid(TWO_PI),
        tgt_theta: tht.rem_euclid(TWO_PI),
        tangents: [
            [s1.init_tangent, s1.final_tangent],
            [s2.init_tangent, s2.final_tangent],
        ],
        src_tangent_mismatch: angle(s1.init_tangent, s2.init_tangent),
        tgt_tangent_mismatch: angle(s1.final_tangent, s2.final_tangent),
    })
}

/// Peak shift of a parabola through (-1, fa), (0, fb), (1, fc), clamped.
fn parabolic_shift(fa: f64, fb: f64, fc: f64) -> f64 {
    let denom = fa - 2.0 * fb + fc;
    if denom.abs() < 1e-300 {
        return 0.0;
    }
    (0.5 * (fa - fc) / denom).clamp(-1.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid() -> Arc<SpaceTimeGrid> {
        SpaceTimeGrid::build(32, 128, 8, 1.0, 1.0, 1.5).unwrap()
    }

    fn flat(g: &Arc<SpaceTimeGrid>) -> ConformalMetric {
        ConformalMetric::new(g, Coeff::Const(1.0), 0.0).unwrap()
    }

    #[test]
    fn straight_line_in_flat_metric() {
        let g = grid();
        let m = flat(&g);
        let geo = trace_geodesic(&m, [-1.2, 0.0], [1.0, 0.0], 5.0).unwrap();
        let exit = geo.disc_exit().expect("disc exit");
        assert_relative_eq!(exit.x[0], 1.0, epsilon = 1e-8);
        assert!(exit.x[1].abs() < 1e-10);
        let entry = geo.disc_entry().expect("disc entry");
        // chord has g-length 2
        assert_relative_eq!(exit.s - entry.s, 2.0, epsilon = 1e-8);
        for p in &geo.x {
            assert!(p[1].abs() < 1e-12);
        }
    }

    #[test]
    fn constant_conformal_scaling() {
        let g = grid();
        let m = ConformalMetric::new(&g, Coeff::Const(4.0), 0.0).unwrap();
        let geo = trace_geodesic(&m, [-1.2, 0.0], [1.0, 0.0], 8.0).unwrap();
        let entry = geo.disc_entry().unwrap();
        let exit = geo.disc_exit().unwrap();
        assert_relative_eq!(exit.s - entry.s, 4.0, epsilon = 1e-8);
        // unit g-speed = Euclidean speed 1/2
        for v in &geo.v {
            assert_relative_eq!((v[0] * v[0] + v[1] * v[1]).sqrt(), 0.5, epsilon = 1e-9);
        }
    }

    #[test]
    fn radial_metric_keeps_diameter() {
        let g = grid();
        let m = ConformalMetric::new(&g, Coeff::expr("1 + 0.3*bump(r/0.9)").unwrap(), 0.0).unwrap();
        let geo = trace_geodesic(&m, [-1.2, 0.0], [1.0, 0.0], 6.0).unwrap();
        for p in &geo.x {
            assert!(p[1].abs() < 1e-10, "drifted off the diameter: {p:?}");
        }
    }

    #[test]
    fn unit_speed_invariant() {
        let g = grid();
        let m =
            ConformalMetric::new(&g, Coeff::expr("1 + 0.2*x1 + 0.1*x2^2").unwrap(), 0.0).unwrap();
        let geo = trace_geodesic(&m, [-1.1, 0.3], [0.9, -0.25], 3.0).unwrap();
        for (p, v) in geo.x.iter().zip(&geo.v) {
            let gam = m.gamma_at(*p);
            let speed2 = gam * (v[0] * v[0] + v[1] * v[1]);
            assert!((speed2 - 1.0).abs() < 1e-9, "speed^2 {speed2}");
        }
    }

    #[test]
    fn time_reversal_retraces() {
        let g = grid();
        let m = ConformalMetric::new(
            &g,
            Coeff::expr("1 + 0.15*bump(((x1-0.2)^2+x2^2)/0.16)").unwrap(),
            0.0,
        )
        .unwrap();
        let geo = trace_geodesic(&m, [-1.2, 0.1], [1.0, -0.05], 2.8).unwrap();
        let end = geo.x[geo.x.len() - 1];
        let vend = geo.v[geo.v.len() - 1];
        let back = trace_geodesic(&m, end, [-vend[0], -vend[1]], geo.length()).unwrap();
        let final_back = back.x[back.x.len() - 1];
        let step = 0.5 * g.h_r.min(g.radius * g.h_theta);
        let err = ((final_back[0] - geo.start[0]).powi(2)
            + (final_back[1] - geo.start[1]).powi(2))
        .sqrt();
        assert!(err < 2.0 * step, "reversal error {err}");
    }

    #[test]
    fn sphere_conjugate_point() {
        // stereographic round sphere: gamma = 4 / (1 + r^2)^2, curvature 1.
        // Equator points (-1, 0) and (1, 0) are antipodal: conjugate at pi.
        let g = SpaceTimeGrid::build(32, 128, 8, 1.0, 1.3, 1.9).unwrap();
        let m = ConformalMetric::new(&g, Coeff::expr("4/(1+r^2)^2").unwrap(), 0.0).unwrap();
        assert_relative_eq!(m.gauss_curvature([0.3, -0.2]), 1.0, epsilon = 1e-10);
        let geo = trace_geodesic(&m, [-1.0, 0.0], [1.0, 0.0], 4.0).unwrap();
        let sc = detect_conjugate_points(&m, &geo).expect("conjugate point");
        assert!((sc - std::f64::consts::PI).abs() < 0.02, "conjugate at {sc}");
        let gf = grid();
        let mf = flat(&gf);
        let geo = trace_geodesic(&mf, [-1.2, 0.0], [1.0, 0.0], 4.0).unwrap();
        assert!(detect_conjugate_points(&mf, &geo).is_none());
    }

    #[test]
    fn convexity_values() {
        let g = grid();
        assert_relative_eq!(boundary_convexity(&flat(&g)).unwrap(), 1.0, epsilon = 1e-3);
        let m4 = ConformalMetric::new(&g, Coeff::Const(4.0), 0.0).unwrap();
        assert_relative_eq!(boundary_convexity(&m4).unwrap(), 0.5, epsilon = 1e-3);
        // closed-form conformal-change oracle for gamma = exp(x1):
        // kappa_g = gamma^{-1/2} (kappa_e + d/dnu log sqrt(gamma))
        let me = ConformalMetric::new(&g, Coeff::expr("exp(x1)").unwrap(), 0.0).unwrap();
        let kappas = boundary_curvatures(&me).unwrap();
        for (j, kappa) in kappas.iter().enumerate() {
            let th = g.theta(j);
            let gam: f64 = th.cos().exp();
            let oracle = gam.powf(-0.5) * (1.0 + 0.5 * th.cos());
            assert!(
                (kappa - oracle).abs() < 1e-3,
                "node {j}: {kappa} vs oracle {oracle}"
            );
        }
    }

    #[test]
    fn simplicity_scan() {
        let g = grid();
        let rep = check_simplicity(&g, &Coeff::Const(1.0), &[0.0, 0.5], 16, 16).unwrap();
        assert!(rep.simple);
        assert_relative_eq!(rep.slices[0].convexity_margin, 1.0, epsilon = 1e-3);
        // small perturbation stays simple (double-resolution oracle agrees)
        let gamma = Coeff::expr("1 + 0.05*bump(r/0.8)*(1+0.2*sin(t))").unwrap();
        let rep2 = check_simplicity(&g, &gamma, &[0.0, 0.5, 1.0], 16, 16).unwrap();
        assert!(rep2.simple);
        let rep2b = check_simplicity(&g, &gamma, &[0.0, 0.5, 1.0], 32, 32).unwrap();
        assert_eq!(rep2.simple, rep2b.simple);
        // sphere patch large enough to contain antipodal pairs is not simple
        let gb = SpaceTimeGrid::build(32, 128, 8, 1.0, 1.3, 1.9).unwrap();
        let rep3 =
            check_simplicity(&gb, &Coeff::expr("4/(1+r^2)^2").unwrap(), &[0.0], 24, 24).unwrap();
        assert!(!rep3.simple);
        assert!(rep3.slices[0].conjugate.is_some());
    }

    #[test]
    fn shooting_distances() {
        let g = grid();
        let m = flat(&g);
        let d = distance(&m, [-1.2, 0.0], [1.0, 0.0]).unwrap();
        assert_relative_eq!(d, 2.2, epsilon = 1e-3);
        let m4 = ConformalMetric::new(&g, Coeff::Const(4.0), 0.0).unwrap();
        let d4 = distance(&m4, [-1.2, 0.0], [0.3, 0.4]).unwrap();
        let euclid = ((0.3f64 + 1.2).powi(2) + 0.4f64.powi(2)).sqrt();
        assert_relative_eq!(d4, 2.0 * euclid, epsilon = 2e-3 * euclid);
        // symmetry
        let mb = ConformalMetric::new(
            &g,
            Coeff::expr("1 + 0.2*bump(((x1-0.1)^2+x2^2)/0.2)").unwrap(),
            0.0,
        )
        .unwrap();
        let dab = distance(&mb, [-1.1, 0.2], [0.9, -0.3]).unwrap();
        let dba = distance(&mb, [0.9, -0.3], [-1.1, 0.2]).unwrap();
        assert!((dab - dba).abs() < 1e-6, "{dab} vs {dba}");
    }

    #[test]
    fn shooting_vs_fast_marching() {
        let g = grid();
        let m = ConformalMetric::new(
            &g,
            Coeff::expr("1 + 0.15*bump(((x1-0.2)^2+(x2-0.1)^2)/0.25)").unwrap(),
            0.0,
        )
        .unwrap();
        let tol = 2.0 * g.h_r.max(g.radius * g.h_theta);
        for (x, y) in [
            ([-1.2, 0.0], [1.0, 0.0]),
            ([-1.2, 0.0], [0.5, 0.6]),
            ([0.0, -1.2], [0.0, 1.0]),
        ] {
            let ds = distance(&m, x, y).unwrap();
            let df = distance_fast_marching(&m, x, y, 257);
            assert!((ds - df).abs() < tol, "shoot {ds} vs fmm {df}");
        }
    }

    #[test]
    fn triangle_inequality() {
        let g = grid();
        let m = ConformalMetric::new(&g, Coeff::expr("1 + 0.1*x1").unwrap(), 0.0).unwrap();
        let pts = [[-1.1, 0.0], [0.6, 0.5], [0.0, -0.8]];
        let d01 = distance(&m, pts[0], pts[1]).unwrap();
        let d12 = distance(&m, pts[1], pts[2]).unwrap();
        let d02 = distance(&m, pts[0], pts[2]).unwrap();
        assert!(d02 <= d01 + d12 + 1e-4);
    }

    #[test]
    fn boundary_matrix_flat_chords() {
        let g = grid();
        let m = flat(&g);
        let src: Vec<f64> = (0..8).map(|i| TWO_PI * i as f64 / 8.0).collect();
        let tgt: Vec<f64> = (0..16).map(|i| TWO_PI * i as f64 / 16.0).collect();
        let d = boundary_distance_matrix(&m, &src, &tgt, 1024).unwrap();
        for (i, &a) in src.iter().enumerate() {
            for (j, &b) in tgt.iter().enumerate() {
                let p = [1.2 * a.cos(), 1.2 * a.sin()];
                let q = [b.cos(), b.sin()];
                let chord = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
                assert!(
                    (d[(i, j)] - chord).abs() < 1.5e-3,
                    "src {a} tgt {b}: {} vs {chord}",
                    d[(i, j)]
                );
            }
        }
    }

    #[test]
    fn boundary_matrix_reflection_symmetry() {
        let g = grid();
        let m = ConformalMetric::new(
            &g,
            Coeff::expr("1 + 0.1*bump((x1^2+x2^2)/0.3)").unwrap(),
            0.0,
        )
        .unwrap();
        let src: Vec<f64> = (0..6).map(|i| TWO_PI * i as f64 / 6.0).collect();
        let tgt: Vec<f64> = (0..12).map(|i| TWO_PI * i as f64 / 12.0).collect();
        let d = boundary_distance_matrix(&m, &src, &tgt, 1024).unwrap();
        // gamma even in x2: reflecting both angles preserves distances
        for i in 0..6 {
            for j in 0..12 {
                let ir = (6 - i) % 6;
                let jr = (12 - j) % 12;
                assert!(
                    (d[(i, j)] - d[(ir, jr)]).abs() < 1e-6,
                    "asymmetry at {i},{j}: {} vs {}",
                    d[(i, j)],
                    d[(ir, jr)]
                );
            }
        }
    }

    #[test]
    fn boundary_matrix_vs_dijkstra() {
        let g = grid();
        let m = ConformalMetric::new(
            &g,
            Coeff::expr("1 + 0.1*bump(((x1-0.15)^2+x2^2)/0.2)").unwrap(),
            0.0,
        )
        .unwrap();
        let src = [0.7f64, 2.4];
        let tgt = [0.3f64, 1.9, 3.6, 5.1];
        let d = boundary_distance_matrix(&m, &src, &tgt, 1024).unwrap();
        for (i, &a) in src.iter().enumerate() {
            for (j, &b) in tgt.iter().enumerate() {
                let p = [1.2 * a.cos(), 1.2 * a.sin()];
                let q = [b.cos(), b.sin()];
                let oracle = dijkstra_distance(&m, p, q, 161);
                let rel = (d[(i, j)] - oracle).abs() / oracle;
                assert!(rel < 0.01, "({a},{b}): fan {} vs dijkstra {oracle}", d[(i, j)]);
            }
        }
    }

    /// Dense-graph shortest path oracle: 16-neighbor lattice with edge weights
    /// integrating sqrt(gamma) along the segment (two-panel midpoint rule).
    fn dijkstra_distance(m: &ConformalMetric, a: [f64; 2], b: [f64; 2], n: usize) -> f64 {
        use std::cmp::Ordering;
        use std::collections::BinaryHeap;
        let l = m.ambient_radius();
        let h = 2.0 * l / (n - 1) as f64;
        let pos = |i: usize, j: usize| [-l + i as f64 * h, -l + j as f64 * h];
        let idx = |i: usize, j: usize| j * n + i;
        let nearest = |p: [f64; 2]| {
            let i = ((p[0] + l) / h).round() as usize;
            let j = ((p[1] + l) / h).round() as usize;
            (i.min(n - 1), j.min(n - 1))
        };
        // all coprime offsets with entries up to 7: angular gaps at most
        // ~8 degrees, keeping the digital-distance overshoot below 0.3%
        fn gcd(a: isize, b: isize) -> isize {
            if b == 0 {
                a
            } else {
                gcd(b, a % b)
            }
        }
        let mut offsets: Vec<(isize, isize)> = Vec::new();
        for p in 1..=7isize {
            for q in 0..=p {
                if gcd(p, q.max(1)) != 1 && q != 0 || (q == 0 && p != 1) {
                    continue;
                }
                for (sp, sq) in [(1, 1), (1, -1), (-1, 1), (-1, -1)] {
                    for off in [(p * sp, q * sq), (q * sp, p * sq)] {
                        if !offsets.contains(&off) {
                            offsets.push(off);
                        }
                    }
                }
            }
        }
        let (si, sj) = nearest(a);
        let (ti, tj) = nearest(b);
        // virtual endpoint nodes avoid snap-to-lattice bias
        let src_node = n * n;
        let tgt_node = n * n + 1;
        let mut dist = vec![f64::INFINITY; n * n + 2];
        #[derive(PartialEq)]
        struct It(f64, usize);
        impl Eq for It {}
        impl Ord for It {
            fn cmp(&self, o: &Self) -> Ordering {
                o.0.partial_cmp(&self.0).unwrap()
            }
        }
        impl PartialOrd for It {
            fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
                Some(self.cmp(o))
            }
        }
        let edge_weight = |p: [f64; 2], q: [f64; 2]| {
            let seg = ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)).sqrt();
            let m1 = [0.75 * p[0] + 0.25 * q[0], 0.75 * p[1] + 0.25 * q[1]];
            let m2 = [0.25 * p[0] + 0.75 * q[0], 0.25 * p[1] + 0.75 * q[1]];
            seg * 0.5 * (m.gamma_at(m1).sqrt() + m.gamma_at(m2).sqrt())
        };
        let mut heap = BinaryHeap::new();
        dist[src_node] = 0.0;
        // connect the true source into the lattice
        for dj in -3..=3isize {
            for di in -3..=3isize {
                let (i, j) = (si as isize + di, sj as isize + dj);
                if i < 0 || j < 0 || i as usize >= n || j as usize >= n {
                    continue;
                }
                let q = pos(i as usize, j as usize);
                let w = edge_weight(a, q);
                let nk = idx(i as usize, j as usize);
                if w < dist[nk] {
                    dist[nk] = w;
                    heap.push(It(w, nk));
                }
            }
        }
        while let Some(It(dv, k)) = heap.pop() {
            if dv > dist[k] {
                continue;
            }
            if k == tgt_node {
                break;
            }
            let (i, j) = (k % n, k / n);
            let p = pos(i, j);
            // connect into the virtual target when nearby
            if (i as isize - ti as isize).abs() <= 3 && (j as isize - tj as isize).abs() <= 3 {
                let w = edge_weight(p, b);
                if dv + w < dist[tgt_node] {
                    dist[tgt_node] = dv + w;
                    heap.push(It(dv + w, tgt_node));
                }
            }
            for &(di, dj) in &offsets {
                let (ni, nj) = (i as isize + di, j as isize + dj);
                if ni < 0 || nj < 0 || ni as usize >= n || nj as usize >= n {
                    continue;
                }
                let q = pos(ni as usize, nj as usize);
                if q[0] * q[0] + q[1] * q[1] > l * l {
                    continue;
                }
                let w = edge_weight(p, q);
                let nk = idx(ni as usize, nj as usize);
                if dv + w < dist[nk] {
                    dist[nk] = dv + w;
                    heap.push(It(dv + w, nk));
                }
            }
        }
        dist[tgt_node]
    }

    #[test]
    fn monotone_metric_monotone_distances() {
        let g = grid();
        let m1 = flat(&g);
        let m2 = ConformalMetric::new(
            &g,
            Coeff::expr("1 + 0.2*bump((x1^2+x2^2)/0.25)").unwrap(),
            0.0,
        )
        .unwrap();
        let src: Vec<f64> = (0..6).map(|i| TWO_PI * i as f64 / 6.0).collect();
        let tgt: Vec<f64> = (0..8).map(|i| TWO_PI * i as f64 / 8.0).collect();
        let d1 = boundary_distance_matrix(&m1, &src, &tgt, 768).unwrap();
        let d2 = boundary_distance_matrix(&m2, &src, &tgt, 768).unwrap();
        for i in 0..6 {
            for j in 0..8 {
                assert!(d2[(i, j)] >= d1[(i, j)] - 1e-6);
            }
        }
    }

    #[test]
    fn distance_gap_zero_for_equal_metrics() {
        let g = grid();
        let m = ConformalMetric::new(&g, Coeff::expr("1 + 0.1*bump(r/0.9)").unwrap(), 0.0).unwrap();
        let res = max_distance_gap(&m, &m, 12, 16, 512).unwrap();
        assert!(res.gap < 1e-9, "gap {}", res.gap);
        assert!(res.src_tangent_mismatch < 1e-6);
        assert!(res.tgt_tangent_mismatch < 1e-6);
    }

    #[test]
    fn distance_gap_lemma_diagnostic() {
        let g = grid();
        let m1 = flat(&g);
        let m2 = ConformalMetric::new(
            &g,
            Coeff::expr("1 + 0.3*bump(((x1-0.25)^2+(x2-0.1)^2)/0.16)").unwrap(),
            0.0,
        )
        .unwrap();
        let res = max_distance_gap(&m1, &m2, 24, 32, 768).unwrap();
        assert!(res.gap > 1e-3, "expected a positive gap, got {}", res.gap);
        assert!(
            res.src_tangent_mismatch < 0.05,
            "source tangent mismatch {}",
            res.src_tangent_mismatch
        );
        assert!(
            res.tgt_tangent_mismatch < 0.05,
            "target tangent mismatch {}",
            res.tgt_tangent_mismatch
        );
        // metrics differing outside the disc are rejected
        let bad = ConformalMetric::new(&g, Coeff::expr("1 + 0.01*x1").unwrap(), 0.0).unwrap();
        assert!(max_distance_gap(&m1, &bad, 4, 4, 256).is_err());
    }

    #[test]
    fn distance_field_from_fan() {
        let g = grid();
        let m = flat(&g);
        let fan = GeodesicFan::trace(&m, [-1.2, 0.0], 1024).unwrap();
        let df = DistanceField::from_fan(&m, &fan).unwrap();
        for s in (0..g.nodes(Extent::Disc)).step_by(17) {
            let p = g.node_pos(s);
            let exact = ((p[0] + 1.2).powi(2) + p[1].powi(2)).sqrt();
            assert!(
                (df.phi[s] - exact).abs() < 1e-3,
                "node {s} at {p:?}: {} vs {exact}",
                df.phi[s]
            );
        }
        assert!(df.eikonal_residual(&m) < 5e-2);
    }
}
