//! Space-time discretization of M = [0,T] x (closed disc of radius R).
//!
//! The spatial grid is a polar tensor grid with a single shared center node,
//! `n_r` rings inside the disc and further rings with the same spacing out to
//! the ambient radius `r_ext` used for coefficient extensions. Time is a
//! uniform grid with `n_t` steps. Everything downstream (solvers, probes,
//! tomography) stores fields on this layout.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};

pub const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Which set of spatial nodes a field lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extent {
    /// Center node plus rings 1..=n_r (the closed disc).
    Disc,
    /// Center node plus rings 1..=n_r_ambient (disc plus extension collar).
    Ambient,
}

/// Polar space-time grid shared by all fields.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeGrid {
    pub n_r: usize,
    pub n_theta: usize,
    pub n_t: usize,
    /// Final time T.
    pub t_final: f64,
    /// Disc radius R.
    pub radius: f64,
    /// Ambient extension radius R_ext (> R).
    pub r_ext: f64,
    /// Radial spacing R / n_r.
    pub h_r: f64,
    /// Angular spacing 2 pi / n_theta.
    pub h_theta: f64,
    /// Time step T / n_t.
    pub dt: f64,
    /// Ring count out to the ambient radius (rings share the disc spacing).
    pub n_r_ambient: usize,
}

impl SpaceTimeGrid {
    /// Builds the grid. Counts must be at least 2, `0 < radius < r_ext`, `t_final > 0`.
    pub fn build(
        n_r: usize,
        n_theta: usize,
        n_t: usize,
        t_final: f64,
        radius: f64,
        r_ext: f64,
    ) -> Result<Arc<Self>> {
        if n_r < 2 || n_theta < 2 || n_t < 2 {
            return Err(Error::parameter(format!(
                "grid counts must be >= 2, got n_r={n_r} n_theta={n_theta} n_t={n_t}"
            )));
        }
        if !(t_final > 0.0) || !t_final.is_finite() {
            return Err(Error::parameter(format!("final time must be positive, got {t_final}")));
        }
        if !(radius > 0.0) || !(r_ext > radius) || !r_ext.is_finite() {
            return Err(Error::parameter(format!(
                "need 0 < radius < r_ext, got radius={radius} r_ext={r_ext}"
            )));
        }
        let h_r = radius / n_r as f64;
        let n_r_ambient = (r_ext / h_r - 1e-9).ceil() as usize;
        Ok(Arc::new(SpaceTimeGrid {
            n_r,
            n_theta,
            n_t,
            t_final,
            radius,
            r_ext,
            h_r,
            h_theta: TWO_PI / n_theta as f64,
            dt: t_final / n_t as f64,
            n_r_ambient,
        }))
    }

    /// Number of rings for the given extent (center node excluded).
    pub fn rings(&self, extent: Extent) -> usize {
        match extent {
            Extent::Disc => self.n_r,
            Extent::Ambient => self.n_r_ambient,
        }
    }

    /// Spatial node count for the given extent.
    pub fn nodes(&self, extent: Extent) -> usize {
        1 + self.rings(extent) * self.n_theta
    }

    /// Flat spatial index of ring `i >= 1`, angle index `j`.
    #[inline]
    pub fn idx(&self, ring: usize, j: usize) -> usize {
        debug_assert!(ring >= 1);
        1 + (ring - 1) * self.n_theta + j
    }

    /// Radius of ring `i` (ring 0 is the center node).
    #[inline]
    pub fn ring_radius(&self, ring: usize) -> f64 {
        ring as f64 * self.h_r
    }

    #[inline]
    pub fn theta(&self, j: usize) -> f64 {
        j as f64 * self.h_theta
    }

    #[inline]
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    /// Cartesian position of a spatial node.
    pub fn node_pos(&self, s: usize) -> [f64; 2] {
        if s == 0 {
            return [0.0, 0.0];
        }
        let ring = (s - 1) / self.n_theta + 1;
        let j = (s - 1) % self.n_theta;
        let r = self.ring_radius(ring);
        let th = self.theta(j);
        [r * th.cos(), r * th.sin()]
    }

    /// Trapezoid weight for time index `k`.
    #[inline]
    pub fn time_weight(&self, k: usize) -> f64 {
        if k == 0 || k == self.n_t {
            0.5 * self.dt
        } else {
            self.dt
        }
    }

    /// Quadrature weight of spatial node `s` on the disc, for integrals
    /// `\int f dx` in the polar Jacobian measure `r dr dtheta`.
    ///
    /// Radially this is composite Simpson on g(r) = f(r) r over [0, R]
    /// (with a 3/8 tail when n_r is odd), so the weight of the center node is
    /// zero and smooth integrands are integrated at fourth order.
    pub fn disc_weight(&self, s: usize) -> f64 {
        if s == 0 {
            return 0.0;
        }
        let ring = (s - 1) / self.n_theta + 1;
        simpson_weight(ring, self.n_r, self.h_r) * self.ring_radius(ring) * self.h_theta
    }
}

/// Composite Simpson weight of node `i` among nodes 0..=n at spacing h.
/// Falls back to Simpson + 3/8 tail when `n` is odd.
fn simpson_weight(i: usize, n: usize, h: f64) -> f64 {
    debug_assert!(i <= n);
    if n % 2 == 0 {
        let w = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        w * h / 3.0
    } else if n == 3 {
        // single 3/8 panel
        let w = if i == 0 || i == 3 { 1.0 } else { 3.0 };
        w * 3.0 * h / 8.0
    } else {
        // Simpson on 0..=n-3, 3/8 rule on the last three intervals
        let m = n - 3;
        let mut w = 0.0;
        if i <= m {
            w += if i == 0 || i == m {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            } * h
                / 3.0;
        }
        if i >= m {
            let l = i - m;
            w += if l == 0 || l == 3 { 1.0 } else { 3.0 } * 3.0 * h / 8.0;
        }
        w
    }
}

/// Scalar field stored at every space-time node of an extent.
#[derive(Debug, Clone)]
pub struct ScalarField {
    pub grid: Arc<SpaceTimeGrid>,
    pub extent: Extent,
    /// Interpolation order in space: 1 (bilinear) or 3 (cubic Lagrange).
    pub interp_order: u8,
    /// values[k * nodes + s] for time index k, spatial index s.
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: &Arc<SpaceTimeGrid>, extent: Extent) -> Self {
        let n = grid.nodes(extent) * (grid.n_t + 1);
        ScalarField {
            grid: grid.clone(),
            extent,
            interp_order: 3,
            values: vec![0.0; n],
        }
    }

    pub fn from_values(
        grid: &Arc<SpaceTimeGrid>,
        extent: Extent,
        values: Vec<f64>,
    ) -> Result<Self> {
        let n = grid.nodes(extent) * (grid.n_t + 1);
        if values.len() != n {
            return Err(Error::parameter(format!(
                "field length {} does not match {} nodes x {} time levels",
                values.len(),
                grid.nodes(extent),
                grid.n_t + 1
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::parameter("field contains non-finite entries"));
        }
        Ok(ScalarField {
            grid: grid.clone(),
            extent,
            interp_order: 3,
            values,
        })
    }

    /// Fills from `f(t, x)` evaluated at every node.
    pub fn from_fn(
        grid: &Arc<SpaceTimeGrid>,
        extent: Extent,
        mut f: impl FnMut(f64, [f64; 2]) -> f64,
    ) -> Self {
        let nodes = grid.nodes(extent);
        let mut values = vec![0.0; nodes * (grid.n_t + 1)];
        for k in 0..=grid.n_t {
            let t = grid.time(k);
            for s in 0..nodes {
                values[k * nodes + s] = f(t, grid.node_pos(s));
            }
        }
        ScalarField {
            grid: grid.clone(),
            extent,
            interp_order: 3,
            values,
        }
    }

    #[inline]
    pub fn nodes(&self) -> usize {
        self.grid.nodes(self.extent)
    }

    #[inline]
    pub fn at(&self, k: usize, s: usize) -> f64 {
        self.values[k * self.nodes() + s]
    }

    #[inline]
    pub fn at_mut(&mut self, k: usize, s: usize) -> &mut f64 {
        let n = self.nodes();
        &mut self.values[k * n + s]
    }

    /// Spatial slice at time index `k`.
    pub fn slice(&self, k: usize) -> &[f64] {
        let n = self.nodes();
        &self.values[k * n..(k + 1) * n]
    }

    pub fn slice_mut(&mut self, k: usize) -> &mut [f64] {
        let n = self.nodes();
        &mut self.values[k * n..(k + 1) * n]
    }

    /// Interpolates the field at time `t`, position `x`.
    ///
    /// Linear in time, spatial order per `interp_order`. Node-exact: queries
    /// landing on grid nodes return the stored value.
    pub fn sample(&self, t: f64, x: [f64; 2]) -> Result<f64> {
        let g = &self.grid;
        let r_max = g.ring_radius(g.rings(self.extent));
        let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
        if r > r_max * (1.0 + 1e-12) + 1e-14 {
            return Err(Error::domain(format!(
                "sample point at radius {r} outside extent radius {r_max}"
            )));
        }
        if t < -1e-12 * g.t_final || t > g.t_final * (1.0 + 1e-12) {
            return Err(Error::domain(format!("sample time {t} outside [0, {}]", g.t_final)));
        }
        let ut = snap((t / g.dt).clamp(0.0, g.n_t as f64), 1e-9);
        let k0 = (ut.floor() as usize).min(g.n_t - 1);
        let s = ut - k0 as f64;
        let v0 = self.sample_space(k0, r, x);
        if s <= 0.0 {
            return Ok(v0);
        }
        let v1 = self.sample_space(k0 + 1, r, x);
        Ok((1.0 - s) * v0 + s * v1)
    }

    fn sample_space(&self, k: usize, r: f64, x: [f64; 2]) -> f64 {
        let g = &self.grid;
        let n_rings = g.rings(self.extent);
        let theta = x[1].atan2(x[0]).rem_euclid(TWO_PI);
        let u = snap(r / g.h_r, 1e-9).min(n_rings as f64);
        if self.interp_order == 1 {
            let i0 = (u.floor() as usize).min(n_rings - 1);
            let sr = u - i0 as f64;
            let a = self.ring_value_at(k, i0 as isize, theta, 1);
            let b = self.ring_value_at(k, i0 as isize + 1, theta, 1);
            return (1.0 - sr) * a + sr * b;
        }
        // cubic Lagrange over four rings; stencil clamped at the outer edge,
        // continued through the center via f(-r, theta) = f(r, theta + pi)
        let mut base = u.floor() as isize - 1;
        if base + 3 > n_rings as isize {
            base = n_rings as isize - 3;
        }
        let s = u - base as f64 - 1.0;
        let w = cubic_weights(s);
        let mut acc = 0.0;
        for (m, wm) in w.iter().enumerate() {
            if *wm != 0.0 {
                acc += wm * self.ring_value_at(k, base + m as isize, theta, 3);
            }
        }
        acc
    }

    /// Angular interpolation on a (possibly mirrored) ring.
    fn ring_value_at(&self, k: usize, ring: isize, theta: f64, order: u8) -> f64 {
        let g = &self.grid;
        let (ring, theta) = if ring < 0 {
            ((-ring) as usize, theta + std::f64::consts::PI)
        } else {
            (ring as usize, theta)
        };
        if ring == 0 {
            return self.at(k, 0);
        }
        let n = g.n_theta;
        let v = snap((theta.rem_euclid(TWO_PI)) / g.h_theta, 1e-9);
        let j0 = (v.floor() as usize) % n;
        let s = v - v.floor();
        let val = |j: isize| -> f64 {
            let jj = j.rem_euclid(n as isize) as usize;
            self.at(k, g.idx(ring, jj))
        };
        if order == 1 {
            return (1.0 - s) * val(j0 as isize) + s * val(j0 as isize + 1);
        }
        if s == 0.0 {
            return val(j0 as isize);
        }
        let w = cubic_weights(s);
        w[0] * val(j0 as isize - 1)
            + w[1] * val(j0 as isize)
            + w[2] * val(j0 as isize + 1)
            + w[3] * val(j0 as isize + 2)
    }

    /// Central-difference Cartesian gradient of the interpolant.
    pub fn sample_grad(&self, t: f64, x: [f64; 2]) -> Result<[f64; 2]> {
        let g = &self.grid;
        let r_max = g.ring_radius(g.rings(self.extent));
        let s = g.h_r / 8.0;
        let mut grad = [0.0; 2];
        for d in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[d] += s;
            xm[d] -= s;
            let rp = (xp[0] * xp[0] + xp[1] * xp[1]).sqrt();
            let rm = (xm[0] * xm[0] + xm[1] * xm[1]).sqrt();
            grad[d] = if rp <= r_max && rm <= r_max {
                (self.sample(t, xp)? - self.sample(t, xm)?) / (2.0 * s)
            } else if rp <= r_max {
                (self.sample(t, xp)? - self.sample(t, x)?) / s
            } else {
                (self.sample(t, x)? - self.sample(t, xm)?) / s
            };
        }
        Ok(grad)
    }

    /// L2(M) norm with the interior quadrature.
    pub fn l2_m(&self) -> f64 {
        integrate_interior_of(|k, s| {
            let v = self.at(k, s);
            v * v
        }, &self.grid)
        .sqrt()
    }

    /// Writes `t,r,theta,value` rows, time-major then radial then angular.
    pub fn dump_csv(&self, path: &Path) -> Result<()> {
        let g = &self.grid;
        let mut out = String::with_capacity(self.values.len() * 24);
        out.push_str("t,r,theta,value\n");
        for k in 0..=g.n_t {
            let t = g.time(k);
            let _ = writeln!(out, "{},{},{},{}", t, 0.0, 0.0, self.at(k, 0));
            for ring in 1..=g.rings(self.extent) {
                let r = g.ring_radius(ring);
                for j in 0..g.n_theta {
                    let _ = writeln!(out, "{},{},{},{}", t, r, g.theta(j), self.at(k, g.idx(ring, j)));
                }
            }
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    /// Reads a field written by [`dump_csv`] back onto `grid`/`extent`.
    pub fn load_csv(grid: &Arc<SpaceTimeGrid>, extent: Extent, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines();
        match lines.next() {
            Some("t,r,theta,value") => {}
            other => {
                return Err(Error::parse(format!(
                    "expected field header 't,r,theta,value', got {other:?}"
                )))
            }
        }
        let nodes = grid.nodes(extent);
        let mut values = Vec::with_capacity(nodes * (grid.n_t + 1));
        for line in lines {
            if line.is_empty() {
                continue;
            }
            let v = line
                .rsplit(',')
                .next()
                .ok_or_else(|| Error::parse(format!("bad row: {line}")))?;
            values.push(
                v.parse::<f64>()
                    .map_err(|e| Error::parse(format!("bad value {v:?}: {e}")))?,
            );
        }
        ScalarField::from_values(grid, extent, values)
    }
}

/// Boundary trace on Sigma = (0,T) x boundary circle, indexed (time, angle).
#[derive(Debug, Clone)]
pub struct BoundaryTrace {
    pub grid: Arc<SpaceTimeGrid>,
    /// values[k * n_theta + j]
    pub values: Vec<f64>,
}

impl BoundaryTrace {
    pub fn zeros(grid: &Arc<SpaceTimeGrid>) -> Self {
        BoundaryTrace {
            grid: grid.clone(),
            values: vec![0.0; (grid.n_t + 1) * grid.n_theta],
        }
    }

    pub fn from_fn(grid: &Arc<SpaceTimeGrid>, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let mut values = vec![0.0; (grid.n_t + 1) * grid.n_theta];
        for k in 0..=grid.n_t {
            for j in 0..grid.n_theta {
                values[k * grid.n_theta + j] = f(grid.time(k), grid.theta(j));
            }
        }
        BoundaryTrace {
            grid: grid.clone(),
            values,
        }
    }

    #[inline]
    pub fn at(&self, k: usize, j: usize) -> f64 {
        self.values[k * self.grid.n_theta + j]
    }

    #[inline]
    pub fn at_mut(&mut self, k: usize, j: usize) -> &mut f64 {
        &mut self.values[k * self.grid.n_theta + j]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Relative L2(Sigma) distance to another trace.
    pub fn rel_l2_distance(&self, other: &BoundaryTrace) -> f64 {
        let d = integrate_boundary_of(&self.grid, |k, j| {
            let e = self.at(k, j) - other.at(k, j);
            e * e
        })
        .sqrt();
        let n = integrate_boundary_of(&self.grid, |k, j| {
            let v = other.at(k, j);
            v * v
        })
        .sqrt();
        d / n.max(1e-300)
    }

    pub fn l2_sigma(&self) -> f64 {
        integrate_boundary_of(&self.grid, |k, j| {
            let v = self.at(k, j);
            v * v
        })
        .sqrt()
    }
}

/// Integral over Sigma with trapezoid in time, periodic trapezoid in angle.
pub fn integrate_boundary(trace: &BoundaryTrace) -> f64 {
    integrate_boundary_of(&trace.grid, |k, j| trace.at(k, j))
}

pub fn integrate_boundary_of(grid: &SpaceTimeGrid, mut f: impl FnMut(usize, usize) -> f64) -> f64 {
    let arc = grid.radius * grid.h_theta;
    let mut total = 0.0;
    for k in 0..=grid.n_t {
        let wt = grid.time_weight(k);
        let mut ring = 0.0;
        for j in 0..grid.n_theta {
            ring += f(k, j);
        }
        total += wt * ring * arc;
    }
    total
}

/// Integral over M = [0,T] x disc with the polar-Jacobian quadrature.
pub fn integrate_interior(field: &ScalarField) -> f64 {
    integrate_interior_of(|k, s| field.at(k, s), &field.grid)
}

pub fn integrate_interior_of(
    mut f: impl FnMut(usize, usize) -> f64,
    grid: &SpaceTimeGrid,
) -> f64 {
    let nodes = grid.nodes(Extent::Disc);
    let mut total = 0.0;
    for k in 0..=grid.n_t {
        let wt = grid.time_weight(k);
        let mut acc = 0.0;
        for s in 1..nodes {
            acc += grid.disc_weight(s) * f(k, s);
        }
        total += wt * acc;
    }
    total
}

/// Lagrange cubic weights for nodes at offsets {-1, 0, 1, 2}, local coordinate s.
#[inline]
pub fn cubic_weights(s: f64) -> [f64; 4] {
    let sm = s - 1.0;
    let sp = s + 1.0;
    let s2 = s - 2.0;
    [
        -s * sm * s2 / 6.0,
        sp * sm * s2 / 2.0,
        -sp * s * s2 / 2.0,
        sp * s * sm / 6.0,
    ]
}

#[inline]
fn snap(u: f64, tol: f64) -> f64 {
    let r = u.round();
    if (u - r).abs() < tol {
        r
    } else {
        u
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn default_grid() -> Arc<SpaceTimeGrid> {
        SpaceTimeGrid::build(32, 128, 64, 1.0, 1.0, 1.5).unwrap()
    }

    #[test]
    fn node_counts() {
        let g = default_grid();
        assert_eq!(g.nodes(Extent::Disc), 32 * 128 + 1);
        assert_relative_eq!(g.dt, 1.0 / 64.0);
        let tiny = SpaceTimeGrid::build(2, 2, 2, 1.0, 1.0, 1.5).unwrap();
        assert_eq!(tiny.nodes(Extent::Disc), 5);
        assert!(SpaceTimeGrid::build(0, 128, 64, 1.0, 1.0, 1.5).is_err());
        assert!(SpaceTimeGrid::build(32, 128, 64, -1.0, 1.0, 1.5).is_err());
        assert!(SpaceTimeGrid::build(32, 128, 64, 1.0, 2.0, 1.5).is_err());
    }

    #[test]
    fn boundary_nodes_on_circle() {
        for n_r in [3usize, 7, 32] {
            let g = SpaceTimeGrid::build(n_r, 16, 4, 1.0, 0.7, 1.2).unwrap();
            let r = g.ring_radius(n_r);
            assert!((r - 0.7).abs() <= 1e-12 * 0.7);
        }
    }

    #[test]
    fn boundary_quadrature() {
        let g = default_grid();
        let one = BoundaryTrace::from_fn(&g, |_, _| 1.0);
        assert_relative_eq!(integrate_boundary(&one), TWO_PI, epsilon = 1e-10);
        let cos = BoundaryTrace::from_fn(&g, |_, th| th.cos());
        assert!(integrate_boundary(&cos).abs() < 1e-10);
        let cos2 = BoundaryTrace::from_fn(&g, |_, th| th.cos().powi(2));
        assert_relative_eq!(integrate_boundary(&cos2), std::f64::consts::PI, epsilon = 1e-6);
    }

    #[test]
    fn interior_quadrature() {
        let g = default_grid();
        let one = ScalarField::from_fn(&g, Extent::Disc, |_, _| 1.0);
        assert_relative_eq!(integrate_interior(&one), std::f64::consts::PI, epsilon = 1e-6);
        let x1 = ScalarField::from_fn(&g, Extent::Disc, |_, x| x[0]);
        assert!(integrate_interior(&x1).abs() < 1e-8);
        let r2 = ScalarField::from_fn(&g, Extent::Disc, |_, x| x[0] * x[0] + x[1] * x[1]);
        assert_relative_eq!(
            integrate_interior(&r2),
            std::f64::consts::PI / 2.0,
            epsilon = 1e-5
        );
    }

    #[test]
    fn interior_quadrature_odd_rings() {
        let g = SpaceTimeGrid::build(31, 128, 8, 1.0, 1.0, 1.5).unwrap();
        let one = ScalarField::from_fn(&g, Extent::Disc, |_, _| 1.0);
        assert_relative_eq!(integrate_interior(&one), std::f64::consts::PI, epsilon = 1e-6);
    }

    #[test]
    fn quadrature_refinement_order() {
        // halving spacings reduces the error of a smooth integrand by >= 3.5
        let integrand = |_t: f64, x: [f64; 2]| (1.5 * x[0]).exp() * (x[1] * 2.0).cos();
        let exact = {
            // reference on a very fine grid
            let g = SpaceTimeGrid::build(256, 1024, 4, 1.0, 1.0, 1.5).unwrap();
            integrate_interior(&ScalarField::from_fn(&g, Extent::Disc, integrand))
        };
        let coarse = {
            let g = SpaceTimeGrid::build(16, 64, 4, 1.0, 1.0, 1.5).unwrap();
            integrate_interior(&ScalarField::from_fn(&g, Extent::Disc, integrand))
        };
        let fine = {
            let g = SpaceTimeGrid::build(32, 128, 8, 1.0, 1.0, 1.5).unwrap();
            integrate_interior(&ScalarField::from_fn(&g, Extent::Disc, integrand))
        };
        let e0 = (coarse - exact).abs();
        let e1 = (fine - exact).abs();
        assert!(e0 / e1 >= 3.5, "ratio {} (e0={e0:.3e}, e1={e1:.3e})", e0 / e1);
    }

    #[test]
    fn sampling_node_exact_and_cubic() {
        let g = default_grid();
        let f = ScalarField::from_fn(&g, Extent::Ambient, |t, x| {
            (x[0] * 1.3).sin() + 0.5 * x[1] + t
        });
        // node-exact
        let s = g.idx(7, 19);
        let p = g.node_pos(s);
        assert_eq!(f.sample(g.time(13), p).unwrap(), f.at(13, s));
        // center node
        assert_eq!(f.sample(0.0, [0.0, 0.0]).unwrap(), f.at(0, 0));
        // out of domain
        assert!(f.sample(0.0, [2.0 * 1.5, 0.0]).is_err());
    }

    #[test]
    fn sampling_linear_reproduction() {
        // x1 is linear; a fine angular grid keeps the cubic angular error tiny
        let g = SpaceTimeGrid::build(64, 1024, 4, 1.0, 1.0, 1.5).unwrap();
        let f = ScalarField::from_fn(&g, Extent::Disc, |_, x| x[0]);
        let v = f.sample(0.3, [0.25, 0.1]).unwrap();
        assert!((v - 0.25).abs() < 1e-9, "got {v}");
    }

    #[test]
    fn sampling_across_center() {
        let g = SpaceTimeGrid::build(16, 64, 4, 1.0, 1.0, 1.5).unwrap();
        let f = ScalarField::from_fn(&g, Extent::Disc, |_, x| 2.0 * x[0] - x[1]);
        for p in [[0.01, 0.0], [0.0, 0.02], [-0.015, 0.01]] {
            let v = f.sample(0.0, p).unwrap();
            assert!((v - (2.0 * p[0] - p[1])).abs() < 1e-6, "at {p:?}: {v}");
        }
    }

    #[test]
    fn gradient_sampling() {
        let g = SpaceTimeGrid::build(64, 256, 4, 1.0, 1.0, 1.5).unwrap();
        let f = ScalarField::from_fn(&g, Extent::Ambient, |_, x| (x[0] - 0.2 * x[1]).powi(2));
        let gr = f.sample_grad(0.0, [0.3, 0.4]).unwrap();
        let u = 0.3 - 0.2 * 0.4;
        assert_relative_eq!(gr[0], 2.0 * u, epsilon = 1e-4);
        assert_relative_eq!(gr[1], -0.4 * u, epsilon = 1e-4);
    }

    #[test]
    fn csv_roundtrip_bit_exact() {
        let g = SpaceTimeGrid::build(4, 8, 3, 0.7, 0.9, 1.3).unwrap();
        let f = ScalarField::from_fn(&g, Extent::Disc, |t, x| {
            (t * 17.0).sin() * (x[0] * 3.0).cos() + x[1] / 3.0
        });
        let dir = std::env::temp_dir().join("heatdn_grid_csv_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("field.csv");
        f.dump_csv(&path).unwrap();
        let f2 = ScalarField::load_csv(&g, Extent::Disc, &path).unwrap();
        assert_eq!(f.values, f2.values);
    }

    #[test]
    fn determinism() {
        let a = SpaceTimeGrid::build(12, 36, 9, 2.0, 1.1, 1.7).unwrap();
        let b = SpaceTimeGrid::build(12, 36, 9, 2.0, 1.1, 1.7).unwrap();
        assert_eq!(*a, *b);
        let wa: Vec<f64> = (0..a.nodes(Extent::Disc)).map(|s| a.disc_weight(s)).collect();
        let wb: Vec<f64> = (0..b.nodes(Extent::Disc)).map(|s| b.disc_weight(s)).collect();
        assert_eq!(wa, wb);
    }
}
