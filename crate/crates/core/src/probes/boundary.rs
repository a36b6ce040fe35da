//! Boundary-localized oscillatory probes.
//!
//! The probe family is e^{i tau t + tau Psi(y)} a(t, y) chi0(y1/eps) in
//! boundary normal coordinates (y1 = r - R inside-negative, w = boundary
//! arclength offset). The phase jet solves the degenerate eikonal recursion
//! order by order in y1; the amplitude levels solve the transport recursions
//! with the localization cutoff carried symbolically, so the recursion is
//! exact and the structural split of each first-order coefficient (leading
//! normal-jet dependence versus lower-order remainder) falls out directly.

use std::sync::Arc;


use crate::error::{Error, Result};
use crate::forward::{solve_batch, Coeff, CoefficientSet, Direction, ModelKind};
use crate::grid::{BoundaryTrace, Extent, SpaceTimeGrid, TWO_PI};
use crate::probes::chi::{chi0_d2, ChiDerivs};
use crate::probes::poly::{CPoly3, ChiPoly, C, VT, VW, VY};
use crate::probes::{ComplexField, ProbeNorms, Sign};
use crate::taylor::Jet3;

/// Boundary normal-coordinate chart anchored at (t0, p0).
#[derive(Debug, Clone)]
pub struct BoundaryChart {
    pub grid: Arc<SpaceTimeGrid>,
    pub t0: f64,
    pub theta0: f64,
}

impl BoundaryChart {
    /// Chart coordinates (t offset, arclength offset, signed normal offset).
    pub fn coords(&self, t: f64, x: [f64; 2]) -> (f64, f64, f64) {
        let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
        let theta = x[1].atan2(x[0]);
        let mut dth = (theta - self.theta0).rem_euclid(TWO_PI);
        if dth > std::f64::consts::PI {
            dth -= TWO_PI;
        }
        (t - self.t0, self.grid.radius * dth, r - self.grid.radius)
    }

    pub fn anchor(&self) -> [f64; 2] {
        let r = self.grid.radius;
        [r * self.theta0.cos(), r * self.theta0.sin()]
    }
}

/// Truncated expansions of the chart metric quantities in y1.
struct ChartGeom {
    /// inverse angular metric component g'^{ww} = R^2/(R+y1)^2
    g22: CPoly3,
    /// sqrt(det g') = (R + y1)/R
    sq: CPoly3,
    invsq: CPoly3,
}

impl ChartGeom {
    fn on_disc(radius: f64, ord: u8) -> ChartGeom {
        let one = CPoly3::constant(ord, C::new(1.0, 0.0));
        let u = CPoly3::var(ord, VY).scale(C::new(1.0 / radius, 0.0));
        let sq = one.add(&u);
        let invsq = sq.recip();
        let g22 = invsq.mul(&invsq);
        ChartGeom { g22, sq, invsq }
    }

    fn inner(&self, da: (&CPoly3, &CPoly3), db: (&CPoly3, &CPoly3)) -> CPoly3 {
        // <da, db>_g = da_y1 db_y1 + g22 da_w db_w
        da.0.mul(db.0).add(&self.g22.mul(&da.1.mul(db.1)))
    }

    fn laplace_poly(&self, f: &CPoly3) -> CPoly3 {
        let fy = f.deriv(VY);
        let fw = f.deriv(VW);
        let term_r = self.sq.mul(&fy).deriv(VY);
        let term_w = self.sq.mul(&self.g22).mul(&fw).deriv(VW);
        self.invsq.mul(&term_r.add(&term_w))
    }

    fn laplace_chi(&self, f: &ChiPoly) -> ChiPoly {
        let term_r = f.d_y1().mul_poly(&self.sq).d_y1();
        let term_w = f.d_w().mul_poly(&self.sq.mul(&self.g22)).d_w();
        term_r.add(&term_w).mul_poly(&self.invsq)
    }
}

/// Chart jet of a closed-form coefficient as a (real) polynomial in (t, w, y1).
fn coeff_chart_poly(
    coeff: &Coeff,
    chart: &BoundaryChart,
    ord: u8,
) -> Result<CPoly3> {
    let radius = chart.grid.radius;
    match coeff {
        Coeff::Const(v) => Ok(CPoly3::constant(ord, C::new(*v, 0.0))),
        Coeff::Analytic(e) => {
            let tj = Jet3::var(ord, 0, chart.t0);
            let wj = Jet3::var(ord, 1, 0.0);
            let yj = Jet3::var(ord, 2, 0.0);
            // theta = theta0 + w/R, radius = R + y1
            let ang = wj.scale(1.0 / radius);
            let (s0, c0) = chart.theta0.sin_cos();
            let cosj = ang.cos().scale(c0).sub(&ang.sin().scale(s0));
            let sinj = ang.sin().scale(c0).add(&ang.cos().scale(s0));
            let rad = Jet3::constant(ord, radius).add(&yj);
            let x1 = rad.mul(&cosj);
            let x2 = rad.mul(&sinj);
            let jet = e.eval_jet(&tj, &x1, &x2);
            Ok(CPoly3::from_real(ord, &jet))
        }
        Coeff::Field(_) => Err(Error::parameter(
            "boundary probes require closed-form coefficients",
        )),
    }
}

/// Phase jet Psi = i w + y1 + sum psi_l y1^l solving the eikonal recursion.
#[derive(Debug, Clone)]
pub struct BoundaryPhaseJet {
    pub chart: BoundaryChart,
    pub n_ord: usize,
    pub poly_ord: u8,
    pub psi: CPoly3,
    /// psi_l as y1-free polynomials, l = 0..=N.
    pub psi_levels: Vec<CPoly3>,
    /// max residual coefficient of the eikonal recursion per order < N.
    pub eikonal_residuals: Vec<f64>,
}

/// Builds the phase jet; `n` is the truncation order N (capped at 6).
pub fn build_boundary_phase(
    grid: &Arc<SpaceTimeGrid>,
    t0: f64,
    theta0: f64,
    n: usize,
    poly_ord: u8,
) -> Result<BoundaryPhaseJet> {
    if n < 1 || n > 6 {
        return Err(Error::parameter(format!(
            "phase truncation order must be in 1..=6, got {n}"
        )));
    }
    let chart = BoundaryChart {
        grid: grid.clone(),
        t0,
        theta0,
    };
    let geom = ChartGeom::on_disc(grid.radius, poly_ord);
    // psi_0 = i w (unit-speed in the boundary metric at y1 = 0), psi_1 = 1
    let w = CPoly3::var(poly_ord, VW);
    let y1 = CPoly3::var(poly_ord, VY);
    let mut levels: Vec<CPoly3> = vec![w.scale(C::new(0.0, 1.0)), CPoly3::constant(poly_ord, C::new(1.0, 0.0))];
    let mut psi = levels[0].add(&y1);
    for l in 2..=n {
        let e = eikonal_expr(&psi, &geom);
        let c = e.y1_coeff((l - 1) as u8);
        let psi_l = c.scale(C::new(-1.0 / (2.0 * l as f64), 0.0));
        psi = psi.add(&psi_l.mul_y1_pow(l as u8));
        levels.push(psi_l);
    }
    let e = eikonal_expr(&psi, &geom);
    // coefficients near the truncation cap only matter through their monomial
    // size on the chart ball
    let low_cap = poly_ord.saturating_sub(n as u8 + 3);
    let r_chart = 0.3 * grid.radius;
    let residuals: Vec<f64> = (0..n)
        .map(|j| e.y1_coeff(j as u8).ball_bound(low_cap, r_chart, r_chart))
        .collect();
    if residuals.iter().any(|r| *r > 1e-8) {
        return Err(Error::solver(format!(
            "eikonal recursion residuals too large: {residuals:?}"
        )));
    }
    Ok(BoundaryPhaseJet {
        chart,
        n_ord: n,
        poly_ord,
        psi,
        psi_levels: levels,
        eikonal_residuals: residuals,
    })
}

fn eikonal_expr(psi: &CPoly3, geom: &ChartGeom) -> CPoly3 {
    let py = psi.deriv(VY);
    let pw = psi.deriv(VW);
    py.mul(&py).add(&geom.g22.mul(&pw.mul(&pw)))
}

/// Amplitude levels v_k (k = 0..=N) for one sign, with the structural split
/// of the first-order coefficients.
pub struct BoundaryAmplitudeJet {
    pub sign: Sign,
    pub n_ord: usize,
    pub delta: f64,
    /// v_k as chi-carrying polynomials.
    pub v: Vec<ChiPoly>,
    /// per level k: (leading part of v_{k,1}, geometry remainder part).
    pub v1_split: Vec<(ChiPoly, ChiPoly)>,
    /// max residual coefficient of the transport recursion per level.
    pub recursion_residuals: Vec<f64>,
}

/// Builds the amplitude levels solving the transport recursions.
pub fn build_boundary_amplitudes(
    phase: &BoundaryPhaseJet,
    coeffs: &CoefficientSet,
    sign: Sign,
    delta: f64,
) -> Result<BoundaryAmplitudeJet> {
    if coeffs.kind != ModelKind::Physical {
        return Err(Error::parameter(
            "boundary probes are built for the physical model",
        ));
    }
    let ord = phase.poly_ord;
    let n = phase.n_ord;
    let chart = &phase.chart;
    let grid = &chart.grid;
    // chart support check: the delta-ball must stay inside the chart
    if delta >= 0.9 * std::f64::consts::PI * grid.radius {
        return Err(Error::parameter(format!(
            "cutoff width {delta} overflows the boundary chart"
        )));
    }
    let geom = ChartGeom::on_disc(grid.radius, ord);
    let sigma = coeff_chart_poly(coeffs.sigma(), chart, ord)?;
    let rho = coeff_chart_poly(coeffs.rho(), chart, ord)?;
    let psi = match sign {
        Sign::Plus => phase.psi.clone(),
        Sign::Minus => phase.psi.conj(),
    };
    let sigma0_inv = sigma.y1_coeff(0).recip();

    // T(v) = 2 sigma <dPsi, dv> + (<dsigma, dPsi> + sigma Lap Psi - i rho) v
    let psi_y = psi.deriv(VY);
    let psi_w = psi.deriv(VW);
    let sig_y = sigma.deriv(VY);
    let sig_w = sigma.deriv(VW);
    let zeroth = geom
        .inner((&sig_y, &sig_w), (&psi_y, &psi_w))
        .add(&sigma.mul(&geom.laplace_poly(&psi)))
        .sub(&rho.scale(C::new(0.0, 1.0)));
    let two_sigma = sigma.scale(C::new(2.0, 0.0));
    let t_op = |v: &ChiPoly| -> ChiPoly {
        let vy = v.d_y1();
        let vw = v.d_w();
        let grad = vy
            .mul_poly(&psi_y)
            .add(&vw.mul_poly(&geom.g22.mul(&psi_w)));
        grad.mul_poly(&two_sigma).add(&v.mul_poly(&zeroth))
    };
    // level source: S_+(u) = rho u_t - <dsigma, du> - sigma Lap u
    //               S_-(u) = -(rho u_t + <dsigma, du> + sigma Lap u + rho_t u)
    let rho_t = rho.deriv(VT);
    let s_op = |u: &ChiPoly| -> ChiPoly {
        let ut = u.d_t().mul_poly(&rho);
        let grad = u
            .d_y1()
            .mul_poly(&sig_y)
            .add(&u.d_w().mul_poly(&geom.g22.mul(&sig_w)));
        let lap = geom.laplace_chi(u).mul_poly(&sigma);
        match sign {
            Sign::Plus => ut.sub(&grad).sub(&lap),
            Sign::Minus => ut.add(&grad).add(&lap).add(&u.mul_poly(&rho_t)).neg(),
        }
    };

    let chi = ChiPoly::chi(ord);
    let mut v_levels: Vec<ChiPoly> = Vec::with_capacity(n + 1);
    let mut residuals = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let rhs = if k == 0 {
            ChiPoly::zero()
        } else {
            s_op(&v_levels[k - 1])
        };
        let mut v = chi.clone();
        for l in 1..=n {
            let resid = t_op(&v).sub(&rhs);
            let c = resid.y1_coeff((l - 1) as u8);
            let v_l = c
                .mul_poly(&sigma0_inv)
                .scale(C::new(-1.0 / (2.0 * l as f64), 0.0));
            v = v.add(&v_l.mul_y1_pow(l as u8));
        }
        // recursion residual over the enforced orders, bounded on the
        // delta-ball (cap-edge coefficients enter only through their
        // monomial size there)
        let resid = t_op(&v).sub(&rhs);
        let low_cap = ord.saturating_sub(n as u8 + 3);
        let mut worst = 0.0f64;
        for j in 0..n {
            worst = worst.max(resid.y1_coeff(j as u8).ball_bound(
                low_cap,
                0.5 * delta,
                0.5 * delta,
            ));
        }
        residuals.push(worst);
        v_levels.push(v);
    }

    // structural split of v_{k,1}: leading jet dependence vs chart remainder
    let mut split = Vec::with_capacity(n + 1);
    for (k, v) in v_levels.iter().enumerate() {
        let m = (k + 1) as u8;
        let fact = |p: u8| -> f64 { (1..=p as u64).map(|v| v as f64).product::<f64>().max(1.0) };
        let d_sigma = sigma.y1_coeff(m).scale(C::new(fact(m), 0.0));
        let d_rho = rho.y1_coeff(m - 1).scale(C::new(fact(m - 1), 0.0));
        let factor = (-0.5f64).powi(k as i32 + 1);
        let lead_poly = d_sigma
            .sub(&d_rho.scale(C::new(0.0, 1.0)))
            .mul(&sigma0_inv)
            .scale(C::new(factor, 0.0));
        let leading = ChiPoly::chi(ord).mul_poly(&lead_poly);
        let tilde = v.y1_coeff(1).sub(&leading);
        split.push((leading, tilde));
    }

    if residuals.iter().any(|r| *r > 1e-8) {
        return Err(Error::solver(format!(
            "transport recursion residuals too large: {residuals:?}"
        )));
    }
    Ok(BoundaryAmplitudeJet {
        sign,
        n_ord: n,
        delta,
        v: v_levels,
        v1_split: split,
        recursion_residuals: residuals,
    })
}

/// Assembled boundary probe ready for evaluation.
pub struct BoundaryProbe {
    pub phase: BoundaryPhaseJet,
    pub amp: BoundaryAmplitudeJet,
    pub tau: f64,
    pub sign: Sign,
    /// chart width of the y1 cutoff chi0(y1/epsilon).
    pub epsilon: f64,
    /// per level: (v, v_t, v_w, v_y, v_ww, v_yy)
    derivs: Vec<[ChiPoly; 6]>,
    max_chi_ord: u8,
}

/// Probe parameter defaults: delta = 8 max spacing, epsilon = 0.3 R.
pub fn default_delta(grid: &SpaceTimeGrid) -> f64 {
    8.0 * grid.h_r.max(grid.radius * grid.h_theta)
}

pub fn default_epsilon(grid: &SpaceTimeGrid) -> f64 {
    0.3 * grid.radius
}

pub fn assemble_boundary_probe(
    phase: BoundaryPhaseJet,
    amp: BoundaryAmplitudeJet,
    tau: f64,
    epsilon: f64,
) -> Result<BoundaryProbe> {
    if !(tau > 0.0) {
        return Err(Error::parameter(format!("tau must be positive, got {tau}")));
    }
    let sign = amp.sign;
    let mut derivs = Vec::with_capacity(amp.v.len());
    let mut max_ord = 0u8;
    for v in &amp.v {
        let set = [
            v.clone(),
            v.d_t(),
            v.d_w(),
            v.d_y1(),
            v.d_w().d_w(),
            v.d_y1().d_y1(),
        ];
        for s in &set {
            let (a, b) = s.max_chi_order();
            max_ord = max_ord.max(a + b);
        }
        derivs.push(set);
    }
    Ok(BoundaryProbe {
        phase,
        amp,
        tau,
        sign,
        epsilon,
        derivs,
        max_chi_ord: max_ord,
    })
}

impl BoundaryProbe {
    fn chart(&self) -> &BoundaryChart {
        &self.phase.chart
    }

    /// Complex phase exponent i tau t + tau Psi(y) (with the sign's phase).
    fn exponent(&self, t: f64, w: f64, y1: f64) -> C {
        let psi = match self.sign {
            Sign::Plus => self.phase.psi.eval(0.0, w, y1),
            Sign::Minus => self.phase.psi.conj().eval(0.0, w, y1),
        };
        let it = match self.sign {
            Sign::Plus => C::new(0.0, self.tau * t),
            Sign::Minus => C::new(0.0, -self.tau * t),
        };
        it + psi * self.tau
    }

    /// In-support test in chart coordinates.
    fn in_support(&self, th: f64, w: f64, y1: f64) -> bool {
        let rho = (th * th + w * w).sqrt();
        rho < 0.5 * self.amp.delta && y1.abs() < 0.5 * self.epsilon && y1 <= 1e-12
    }

    /// Probe value at a space-time point.
    pub fn value(&self, t: f64, x: [f64; 2]) -> C {
        let (th, w, y1) = self.chart().coords(t, x);
        if !self.in_support(th, w, y1) {
            return C::new(0.0, 0.0);
        }
        let chi = ChiDerivs::at(self.amp.delta, th, w, self.max_chi_ord);
        let get = |a: u8, b: u8| chi.get(a, b);
        let mut amp = C::new(0.0, 0.0);
        let mut tw = 1.0;
        for set in &self.derivs {
            amp += set[0].eval(th, w, y1, &get) * tw;
            tw /= self.tau;
        }
        let (c0, _, _) = chi0_d2(y1 / self.epsilon);
        self.exponent(t, w, y1).exp() * amp * c0
    }

    /// Boundary trace of the probe (coefficient-independent).
    pub fn trace(&self) -> (BoundaryTrace, BoundaryTrace) {
        let g = &self.chart().grid;
        let mut re = BoundaryTrace::zeros(g);
        let mut im = BoundaryTrace::zeros(g);
        for k in 0..=g.n_t {
            let t = g.time(k);
            for j in 0..g.n_theta {
                let x = [g.radius * g.theta(j).cos(), g.radius * g.theta(j).sin()];
                let v = self.value(t, x);
                *re.at_mut(k, j) = v.re;
                *im.at_mut(k, j) = v.im;
            }
        }
        (re, im)
    }

    /// Forcing F = -e^{phase} P(a chi0) evaluated semi-analytically at the
    /// disc nodes: the jet recursions provide the amplitude derivatives, the
    /// coefficients and chart metric enter exactly.
    pub fn forcing(&self, coeffs: &CoefficientSet) -> Result<ComplexField> {
        let g = self.chart().grid.clone();

        let mut out = ComplexField::zeros(&g, Extent::Disc);
        let tau = self.tau;
        let sgn = match self.sign {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        };
        for k in 0..=g.n_t {
            let t = g.time(k);
            for ring in 1..=g.n_r {
                for jj in 0..g.n_theta {
                    let s = g.idx(ring, jj);
                    let x = g.node_pos(s);
                    let (th, w, y1) = self.chart().coords(t, x);
                    if !self.in_support(th, w, y1) {
                        continue;
                    }
                    let f = self.forcing_at(coeffs, t, x, th, w, y1, tau, sgn)?;
                    *out.re.at_mut(k, s) = f.re;
                    *out.im.at_mut(k, s) = f.im;
                }
            }
        }
        Ok(out)
    }

    #[allow(clippy::too_many_arguments)]
    fn forcing_at(
        &self,
        coeffs: &CoefficientSet,
        t: f64,
        x: [f64; 2],
        th: f64,
        w: f64,
        y1: f64,
        tau: f64,
        sgn: f64,
    ) -> Result<C> {
        let radius = self.chart().grid.radius;
        let chi = ChiDerivs::at(self.amp.delta, th, w, self.max_chi_ord);
        let get = |a: u8, b: u8| chi.get(a, b);
        // tau-combined amplitude derivatives
        let mut a = [C::new(0.0, 0.0); 6];
        let mut tw = 1.0;
        for set in &self.derivs {
            for (i, p) in set.iter().enumerate() {
                a[i] += p.eval(th, w, y1, &get) * tw;
            }
            tw /= tau;
        }
        let (c0, c1, c2) = {
            let (v, d1, d2) = chi0_d2(y1 / self.epsilon);
            (
                v,
                d1 / self.epsilon,
                d2 / (self.epsilon * self.epsilon),
            )
        };
        // u = a c0 and its derivatives
        let u = a[0] * c0;
        let u_t = a[1] * c0;
        let u_w = a[2] * c0;
        let u_y = a[3] * c0 + a[0] * c1;
        let u_ww = a[4] * c0;
        let u_yy = a[5] * c0 + 2.0 * a[3] * c1 + a[0] * c2;

        // exact chart metric values
        let rr = radius + y1;
        let g22 = (radius / rr) * (radius / rr);
        // exact phase values (psi is an explicit polynomial)
        let psi = match self.sign {
            Sign::Plus => self.phase.psi.clone(),
            Sign::Minus => self.phase.psi.conj(),
        };
        let p_y = psi.deriv(VY).eval(0.0, w, y1);
        let p_w = psi.deriv(VW).eval(0.0, w, y1);
        let p_yy = psi.deriv(VY).deriv(VY).eval(0.0, w, y1);
        let p_ww = psi.deriv(VW).deriv(VW).eval(0.0, w, y1);
        let q = p_y * p_y + g22 * p_w * p_w; // <dPsi, dPsi>_g
        let lap_psi = p_yy + p_y / rr + g22 * p_ww;

        // exact coefficient values and chart-rotated first derivatives
        let (sig, dsig) = coeff_grad(coeffs.sigma(), t, x)?;
        let (rho, drho_t) = coeff_time(coeffs.rho(), t, x)?;
        let theta = x[1].atan2(x[0]);
        let (snt, cst) = theta.sin_cos();
        let sig_y = dsig[0] * cst + dsig[1] * snt;
        let sig_w = (-dsig[0] * snt + dsig[1] * cst) * rr / radius;

        let grad_psi_u = p_y * u_y + g22 * p_w * u_w;
        let grad_sig_psi = sig_y * p_y + g22 * sig_w * p_w;
        let grad_sig_u = sig_y * u_y + g22 * sig_w * u_w;
        let lap_u = u_yy + u_y / rr + g22 * u_ww;

        // P(u): the conjugated operator expansion; sgn flips the time terms
        let i = C::new(0.0, 1.0);
        let p_of_u = -sig * tau * tau * q * u
            - 2.0 * tau * sig * grad_psi_u
            - tau * grad_sig_psi * u
            - tau * sig * lap_psi * u
            + i * tau * rho * u
            + sgn * rho * u_t
            - grad_sig_u
            - sig * lap_u
            + if self.sign == Sign::Minus {
                -drho_t * u
            } else {
                C::new(0.0, 0.0)
            };
        Ok(-self.exponent(t, w, y1).exp() * p_of_u)
    }

    /// Samples the assembled probe on the disc grid.
    pub fn field(&self) -> ComplexField {
        let g = self.chart().grid.clone();
        let mut out = ComplexField::zeros(&g, Extent::Disc);
        for k in 0..=g.n_t {
            let t = g.time(k);
            for s in 0..g.nodes(Extent::Disc) {
                let v = self.value(t, g.node_pos(s));
                *out.re.at_mut(k, s) = v.re;
                *out.im.at_mut(k, s) = v.im;
            }
        }
        out
    }
}

fn coeff_grad(c: &Coeff, t: f64, x: [f64; 2]) -> Result<(f64, [f64; 2])> {
    match c {
        Coeff::Const(v) => Ok((*v, [0.0, 0.0])),
        Coeff::Analytic(e) => {
            let d = e.eval_dual(t, x);
            Ok((d.v, [d.d[1], d.d[2]]))
        }
        Coeff::Field(_) => Err(Error::parameter(
            "boundary probes require closed-form coefficients",
        )),
    }
}

fn coeff_time(c: &Coeff, t: f64, x: [f64; 2]) -> Result<(f64, f64)> {
    match c {
        Coeff::Const(v) => Ok((*v, 0.0)),
        Coeff::Analytic(e) => {
            let d = e.eval_dual(t, x);
            Ok((d.v, d.d[0]))
        }
        Coeff::Field(_) => Err(Error::parameter(
            "boundary probes require closed-form coefficients",
        )),
    }
}

/// Solves the remainder problem for the probe and records its norms.
pub fn compute_remainder(
    probe: &BoundaryProbe,
    coeffs: &CoefficientSet,
) -> Result<(ComplexField, ProbeNorms)> {
    let forcing = probe.forcing(coeffs)?;
    let g = &coeffs.grid;
    let zero = BoundaryTrace::zeros(g);
    let direction = match probe.sign {
        Sign::Plus => Direction::Forward,
        Sign::Minus => Direction::Adjoint,
    };
    let sols = solve_batch(
        coeffs,
        direction,
        &[
            (&zero, Some(&forcing.re), None),
            (&zero, Some(&forcing.im), None),
        ],
    )?;
    let field = ComplexField {
        re: sols[0].clone(),
        im: sols[1].clone(),
    };
    let norms = field.norms();
    Ok((field, norms))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid() -> Arc<SpaceTimeGrid> {
        SpaceTimeGrid::build(32, 128, 32, 1.0, 1.0, 1.5).unwrap()
    }

    #[test]
    fn phase_first_levels_on_unit_disc() {
        let g = grid();
        let phase = build_boundary_phase(&g, 0.5, 0.3, 4, 10).unwrap();
        // psi_1 = 1
        assert_relative_eq!(phase.psi_levels[1].eval(0.0, 0.0, 0.0).re, 1.0, epsilon = 1e-14);
        // psi_0 = i w solves the unit-speed condition on the boundary
        let p0 = &phase.psi_levels[0];
        assert_relative_eq!(p0.deriv(VW).eval(0.0, 0.0, 0.0).im, 1.0, epsilon = 1e-14);
        // psi_2 = -1/2 for the unit disc (symbolic recursion oracle: the
        // order-1 eikonal coefficient 4 psi_2 + 2 = 0 for chart metric
        // (1+y1)^2 dtheta^2)
        assert_relative_eq!(
            phase.psi_levels[2].eval(0.0, 0.0, 0.0).re,
            -0.5,
            epsilon = 1e-12
        );
        assert!(phase.psi_levels[2].eval(0.0, 0.0, 0.0).im.abs() < 1e-12);
        // residuals vanish through order N-1
        for r in &phase.eikonal_residuals {
            assert!(*r < 1e-8);
        }
        assert!(build_boundary_phase(&g, 0.5, 0.3, 7, 10).is_err());
    }

    #[test]
    fn principal_amplitude_constant_coefficients() {
        let g = grid();
        let set = CoefficientSet::physical(&g, Coeff::Const(1.0), Coeff::Const(1.0));
        let phase = build_boundary_phase(&g, 0.5, 0.0, 3, 10).unwrap();
        let amp = build_boundary_amplitudes(&phase, &set, Sign::Plus, 0.2).unwrap();
        // v_{+,0,0} = chi by construction
        let v00 = amp.v[0].y1_coeff(0);
        assert_eq!(v00.terms.len(), 1);
        assert_relative_eq!(v00.terms[&(0, 0)].c[0].re, 1.0, epsilon = 1e-14);
        // sigma = rho = 1: v_{+,0,1} = (i/2) chi + tilde with tilde holding
        // only chart-geometry terms (here -i d_w chi)
        let (leading, tilde) = &amp.v1_split[0];
        assert_relative_eq!(leading.terms[&(0, 0)].c[0].im, 0.5, epsilon = 1e-12);
        // tilde = -i d_w chi: the (0,1) chi-derivative term with coefficient -i
        let t01 = tilde.terms.get(&(0, 1)).expect("d_w chi term");
        assert_relative_eq!(t01.c[0].im, -1.0, epsilon = 1e-10);
        // no (0,0)-chi term beyond numerical dust
        if let Some(t00) = tilde.terms.get(&(0, 0)) {
            assert!(t00.max_coeff() < 1e-10, "unexpected chi term {}", t00.max_coeff());
        }
        for r in &amp.recursion_residuals {
            assert!(*r < 1e-8);
        }
    }

    #[test]
    fn amplitude_leading_split_tracks_conductivity_jet() {
        // nontrivial normal derivative of sigma shows up in the leading term
        let g = grid();
        let set = CoefficientSet::physical(
            &g,
            Coeff::Const(1.0),
            Coeff::expr("1 + 0.2*(1 - x1^2 - x2^2)").unwrap(),
        );
        let phase = build_boundary_phase(&g, 0.5, 0.0, 3, 10).unwrap();
        let amp = build_boundary_amplitudes(&phase, &set, Sign::Plus, 0.2).unwrap();
        let (leading, _) = &amp.v1_split[0];
        // d sigma / d y1 on the boundary at theta = 0 is -0.4;
        // leading coefficient = -(1/(2 sigma))(d_y1 sigma - i rho) at origin
        let c = leading.terms[&(0, 0)].c[0];
        assert_relative_eq!(c.re, 0.2, epsilon = 1e-10); // -(1/2)(-0.4)
        assert_relative_eq!(c.im, 0.5, epsilon = 1e-10); // +(1/2) rho
    }

    #[test]
    fn traces_are_coefficient_independent() {
        let g = grid();
        let set1 = CoefficientSet::physical(&g, Coeff::Const(1.0), Coeff::Const(1.0));
        let set2 = CoefficientSet::physical(
            &g,
            Coeff::expr("1 + 0.3*x2^2").unwrap(),
            Coeff::expr("2 + x1").unwrap(),
        );
        let phase = build_boundary_phase(&g, 0.5, 1.1, 2, 10).unwrap();
        let tau = 16.0;
        let delta = default_delta(&g);
        let eps = default_epsilon(&g);
        let a1 = build_boundary_amplitudes(&phase, &set1, Sign::Plus, delta).unwrap();
        let a2 = build_boundary_amplitudes(&phase, &set2, Sign::Plus, delta).unwrap();
        let p1 = assemble_boundary_probe(phase.clone(), a1, tau, eps).unwrap();
        let p2 = assemble_boundary_probe(phase, a2, tau, eps).unwrap();
        let (re1, im1) = p1.trace();
        let (re2, im2) = p2.trace();
        assert_eq!(re1.values, re2.values);
        assert_eq!(im1.values, im2.values);
        // and the trace is compactly supported away from the time endpoints
        for j in 0..g.n_theta {
            assert_eq!(re1.at(0, j), 0.0);
            assert_eq!(re1.at(g.n_t, j), 0.0);
        }
    }

    #[test]
    fn probe_decays_off_the_boundary() {
        let g = grid();
        let set = CoefficientSet::physical(&g, Coeff::Const(1.0), Coeff::Const(1.0));
        let phase = build_boundary_phase(&g, 0.5, 0.0, 2, 10).unwrap();
        let amp = build_boundary_amplitudes(&phase, &set, Sign::Plus, 0.35).unwrap();
        let tau = 96.0;
        let probe = assemble_boundary_probe(phase, amp, tau, 0.3).unwrap();
        // sup over the disc is attained on the boundary
        let field = probe.field();
        let mut best = (0.0f64, 0usize);
        for s in 0..g.nodes(Extent::Disc) {
            let v = (field.re.at(16, s).powi(2) + field.im.at(16, s).powi(2)).sqrt();
            if v > best.0 {
                best = (v, s);
            }
        }
        let p = g.node_pos(best.1);
        let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
        assert!(r > g.radius - 1e-9, "sup at radius {r}");
        // doubling tau shrinks interior values at least like exp(tau y1 / 2)
        let x = [g.radius - 3.0 * g.h_r, 0.0];
        let y1 = -3.0 * g.h_r;
        let v1 = probe.value(0.5, x).norm();
        let probe2 = {
            let phase = build_boundary_phase(&g, 0.5, 0.0, 2, 10).unwrap();
            let amp = build_boundary_amplitudes(&phase, &set, Sign::Plus, 0.35).unwrap();
            assemble_boundary_probe(phase, amp, 2.0 * tau, 0.3).unwrap()
        };
        let v2 = probe2.value(0.5, x).norm();
        assert!(
            v2 / v1 <= (tau * y1.abs() / 2.0 * -1.0).exp() * 4.0,
            "ratio {} vs bound {}",
            v2 / v1,
            (-(tau * y1.abs()) / 2.0).exp()
        );
    }

    #[test]
    fn forcing_structural_bound() {
        let g = grid();
        let set = CoefficientSet::physical(
            &g,
            Coeff::expr("1 + 0.1*x2^2").unwrap(),
            Coeff::expr("1 + 0.2*x1").unwrap(),
        );
        let n = 2;
        // |F| <= C (tau^2 |y1|^N + tau^{-N}) e^{tau y1 / 2}: the fitted
        // constant must not grow with tau (its size is set by the cutoff
        // derivative scales, not by tau)
        let mut consts = Vec::new();
        for tau in [8.0f64, 16.0, 32.0, 64.0] {
            let phase = build_boundary_phase(&g, 0.5, 0.0, n, 10).unwrap();
            let amp =
                build_boundary_amplitudes(&phase, &set, Sign::Plus, default_delta(&g)).unwrap();
            let probe = assemble_boundary_probe(phase, amp, tau, default_epsilon(&g)).unwrap();
            let f = probe.forcing(&set).unwrap();
            let mut cbound = 0.0f64;
            for k in (0..=g.n_t).step_by(4) {
                for s in 0..g.nodes(Extent::Disc) {
                    let v = (f.re.at(k, s).powi(2) + f.im.at(k, s).powi(2)).sqrt();
                    if v == 0.0 {
                        continue;
                    }
                    let p = g.node_pos(s);
                    let y1 = (p[0] * p[0] + p[1] * p[1]).sqrt() - g.radius;
                    let shape = (tau * tau * y1.abs().powi(n as i32) + tau.powi(-(n as i32)))
                        * (tau * y1 / 2.0).exp();
                    cbound = cbound.max(v / shape);
                }
            }
            assert!(cbound.is_finite() && cbound > 0.0);
            consts.push(cbound);
        }
        let cmax = consts.iter().cloned().fold(0.0f64, f64::max);
        let cmin = consts.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(
            cmax / cmin < 4.0,
            "structural-bound constants vary with tau: {consts:?}"
        );
    }
}
