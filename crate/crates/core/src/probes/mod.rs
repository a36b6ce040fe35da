//! Special-solution probe families.
//!
//! Two constructions feed the reconstruction pipeline: boundary-localized
//! oscillatory probes (normal-coordinate WKB jets, module [`boundary`]) and
//! exponentially weighted geodesic probes (eikonal phase from distance
//! fields plus transport amplitudes along a central geodesic, module
//! [`exp`]). Both come with semi-analytic forcings and remainder solves
//! whose measured norms are the subject of the probe acceptance checks.

pub mod boundary;
pub mod chi;
pub mod exp;
pub mod poly;

use std::fmt::Write as _;
use std::sync::Arc;

use crate::error::Result;
use crate::grid::{
    integrate_boundary_of, integrate_interior_of, Extent, ScalarField, SpaceTimeGrid,
};

/// Probe orientation: growing/forward (+) or decaying/adjoint (-).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

/// Probe family tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeFamily {
    BoundaryOscillatory(Sign),
    Exponential(Sign),
}

/// Complex space-time field as a pair of real fields.
#[derive(Debug, Clone)]
pub struct ComplexField {
    pub re: ScalarField,
    pub im: ScalarField,
}

impl ComplexField {
    pub fn zeros(grid: &Arc<SpaceTimeGrid>, extent: Extent) -> Self {
        ComplexField {
            re: ScalarField::zeros(grid, extent),
            im: ScalarField::zeros(grid, extent),
        }
    }

    pub fn l2_m(&self) -> f64 {
        let g = &self.re.grid;
        integrate_interior_of(
            |k, s| {
                let a = self.re.at(k, s);
                let b = self.im.at(k, s);
                a * a + b * b
            },
            g,
        )
        .sqrt()
    }

    /// Discrete H1-in-space seminorm over M.
    pub fn h1_seminorm(&self) -> f64 {
        let g = &self.re.grid;
        let h = g.h_r;
        let grad2 = |f: &ScalarField, k: usize, s: usize| -> f64 {
            if s == 0 {
                let n = g.n_theta as f64;
                let mut gx = 0.0;
                let mut gy = 0.0;
                for j in 0..g.n_theta {
                    let th = g.theta(j);
                    let v = f.at(k, g.idx(1, j));
                    gx += v * th.cos();
                    gy += v * th.sin();
                }
                let scale = 2.0 / (n * h);
                return (gx * scale).powi(2) + (gy * scale).powi(2);
            }
            let ring = (s - 1) / g.n_theta + 1;
            let j = (s - 1) % g.n_theta;
            let r = g.ring_radius(ring);
            let dn = if ring >= 2 {
                f.at(k, g.idx(ring - 1, j))
            } else {
                f.at(k, 0)
            };
            let dr = if ring + 1 <= g.n_r {
                (f.at(k, g.idx(ring + 1, j)) - dn) / (2.0 * h)
            } else {
                (f.at(k, s) - dn) / h
            };
            let jp = f.at(k, g.idx(ring, (j + 1) % g.n_theta));
            let jm = f.at(k, g.idx(ring, (j + g.n_theta - 1) % g.n_theta));
            let dth = (jp - jm) / (2.0 * g.h_theta * r);
            dr * dr + dth * dth
        };
        integrate_interior_of(|k, s| grad2(&self.re, k, s) + grad2(&self.im, k, s), g).sqrt()
    }

    /// L2(Sigma) norm of the one-sided normal derivative.
    pub fn flux_l2(&self) -> f64 {
        let g = &self.re.grid;
        let h = g.h_r;
        let d = |f: &ScalarField, k: usize, j: usize| -> f64 {
            (3.0 * f.at(k, g.idx(g.n_r, j)) - 4.0 * f.at(k, g.idx(g.n_r - 1, j))
                + f.at(k, g.idx(g.n_r - 2, j)))
                / (2.0 * h)
        };
        integrate_boundary_of(g, |k, j| {
            let a = d(&self.re, k, j);
            let b = d(&self.im, k, j);
            a * a + b * b
        })
        .sqrt()
    }

    pub fn norms(&self) -> ProbeNorms {
        let l2 = self.l2_m();
        let h1 = self.h1_seminorm();
        let flux = self.flux_l2();
        ProbeNorms {
            l2_m: l2,
            flux_l2: flux,
            h1_surrogate: (l2 * l2 + h1 * h1).sqrt() + flux,
        }
    }
}

/// Measured remainder norms (discrete surrogates of the paper-space norms).
#[derive(Debug, Clone, Copy)]
pub struct ProbeNorms {
    pub l2_m: f64,
    pub flux_l2: f64,
    pub h1_surrogate: f64,
}

/// Assembled probe bundle: field, forcing, solved remainder, norms.
pub struct ProbeSolution {
    pub family: ProbeFamily,
    pub tau: f64,
    pub field: ComplexField,
    pub forcing: ComplexField,
    pub remainder: Option<ComplexField>,
    pub norms: Option<ProbeNorms>,
}

/// One row of a probe sweep report.
#[derive(Debug, Clone, Copy)]
pub struct ProbeReportRow {
    pub tau: f64,
    pub norm_l2_m: f64,
    pub norm_flux_l2: f64,
    pub norm_h1_surrogate: f64,
    /// Running log-log slope against the previous row (NaN for the first).
    pub slope_running: f64,
}

/// Builds report rows with running slopes from (tau, norms) pairs.
pub fn probe_report_rows(data: &[(f64, ProbeNorms)]) -> Vec<ProbeReportRow> {
    let mut rows = Vec::with_capacity(data.len());
    for (i, (tau, n)) in data.iter().enumerate() {
        let slope = if i == 0 {
            f64::NAN
        } else {
            let (tp, np) = data[i - 1];
            (n.h1_surrogate / np.h1_surrogate).ln() / (tau / tp).ln()
        };
        rows.push(ProbeReportRow {
            tau: *tau,
            norm_l2_m: n.l2_m,
            norm_flux_l2: n.flux_l2,
            norm_h1_surrogate: n.h1_surrogate,
            slope_running: slope,
        });
    }
    rows
}

/// Writes `tau,norm_L2_M,norm_flux_L2,norm_H1_surrogate,slope_running`.
pub fn dump_probe_report_csv(path: &std::path::Path, rows: &[ProbeReportRow]) -> Result<()> {
    let mut out = String::new();
    out.push_str("tau,norm_L2_M,norm_flux_L2,norm_H1_surrogate,slope_running\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.tau, r.norm_l2_m, r.norm_flux_l2, r.norm_h1_surrogate, r.slope_running
        );
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Least-squares slope of log(norm) against log(tau).
pub fn loglog_slope(taus: &[f64], norms: &[f64]) -> f64 {
    let n = taus.len() as f64;
    let xs: Vec<f64> = taus.iter().map(|t| t.ln()).collect();
    let ys: Vec<f64> = norms.iter().map(|v| v.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    num / den
}

/// Least-squares slope of log(value) against tau (semilog decay rate).
pub fn semilog_rate(taus: &[f64], values: &[f64]) -> f64 {
    let n = taus.len() as f64;
    let ys: Vec<f64> = values.iter().map(|v| v.abs().max(1e-300).ln()).collect();
    let mx = taus.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in taus.iter().zip(&ys) {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    num / den
}

/// Least-squares fit of c0 + c1 / tau; returns (c0, c1, r-squared).
pub fn fit_inverse_tau(taus: &[f64], values: &[f64]) -> (f64, f64, f64) {
    let n = taus.len() as f64;
    let xs: Vec<f64> = taus.iter().map(|t| 1.0 / t).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = values.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(values) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let c1 = sxy / sxx;
    let c0 = my - c1 * mx;
    let r2 = if syy == 0.0 {
        1.0
    } else {
        (sxy * sxy) / (sxx * syy)
    };
    (c0, c1, r2)
}
