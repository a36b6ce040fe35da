//! Variable-coefficient parabolic solvers and simulated DN maps.
//!
//! One implicit stepper covers the physical model `rho du/dt - div(sigma
//! grad u) = S`, the reduced model `gamma du/dt - Delta u + q u = S`, both
//! formal adjoints (solved by time reversal), and the exponentially
//! conjugated operators used by the probe machinery (which add a first-order
//! advection term). Time stepping is Crank-Nicolson with a damped
//! backward-Euler start; each step solves a block-tridiagonal system over
//! the polar rings, with batched right-hand sides so families of boundary
//! data share a factorization.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::grid::{integrate_boundary_of, BoundaryTrace, Extent, ScalarField, SpaceTimeGrid};
use crate::linalg::{BlockFactor, BlockSystem, OffBlock};
use crate::taylor::Jet3;

/// Which model a coefficient set describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// rho du/dt - div(sigma grad u) = 0, flux sigma du/dnu.
    Physical,
    /// gamma du/dt - Delta u + q u = 0, flux du/dnu.
    Reduced,
}

/// Solve direction: forward problems have zero initial state, adjoint
/// problems zero final state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Adjoint,
}

/// A coefficient: closed form, grid samples on the ambient extent, or const.
#[derive(Debug, Clone)]
pub enum Coeff {
    Const(f64),
    Analytic(Arc<Expr>),
    Field(Arc<ScalarField>),
}

impl Coeff {
    pub fn expr(src: &str) -> Result<Coeff> {
        Ok(Coeff::Analytic(Arc::new(Expr::parse(src)?)))
    }

    pub fn eval(&self, t: f64, x: [f64; 2]) -> f64 {
        match self {
            Coeff::Const(v) => *v,
            Coeff::Analytic(e) => e.eval(t, x),
            Coeff::Field(f) => f.sample(t, x).unwrap_or(f64::NAN),
        }
    }

    /// Nodal value with linear time interpolation (exact in space at nodes).
    pub fn node_value(&self, grid: &SpaceTimeGrid, t: f64, s: usize) -> f64 {
        match self {
            Coeff::Const(v) => *v,
            Coeff::Analytic(e) => e.eval(t, grid.node_pos(s)),
            Coeff::Field(f) => {
                let ut = (t / grid.dt).clamp(0.0, grid.n_t as f64);
                let k0 = (ut.floor() as usize).min(grid.n_t - 1);
                let w = ut - k0 as f64;
                (1.0 - w) * f.at(k0, s) + w * f.at(k0 + 1, s)
            }
        }
    }

    /// d/dt at a node, symbolic for closed forms, centered differences for fields.
    pub fn node_dt(&self, grid: &SpaceTimeGrid, t: f64, s: usize) -> f64 {
        match self {
            Coeff::Const(_) => 0.0,
            Coeff::Analytic(e) => {
                let j = e.jet_at(1, t, grid.node_pos(s));
                j.deriv([1, 0, 0])
            }
            Coeff::Field(_) => {
                let dt = grid.dt;
                let tp = (t + dt).min(grid.t_final);
                let tm = (t - dt).max(0.0);
                (self.node_value(grid, tp, s) - self.node_value(grid, tm, s)) / (tp - tm)
            }
        }
    }

    pub fn depends_on_time(&self) -> bool {
        fn expr_uses_t(e: &Expr) -> bool {
            match e {
                Expr::Num(_) => false,
                Expr::Var(v) => *v == crate::expr::Var::T,
                Expr::Neg(a) | Expr::Pow(a, _) | Expr::Exp(a) | Expr::Sin(a) | Expr::Cos(a)
                | Expr::Bump(a) => expr_uses_t(a),
                Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                    expr_uses_t(a) || expr_uses_t(b)
                }
            }
        }
        match self {
            Coeff::Const(_) => false,
            Coeff::Analytic(e) => expr_uses_t(e),
            Coeff::Field(f) => {
                let n = f.nodes();
                (1..=f.grid.n_t).any(|k| f.slice(k) != &f.values[..n])
            }
        }
    }

    /// Taylor jet in ambient coordinates; closed forms only.
    pub fn jet_at(&self, ord: u8, t0: f64, x0: [f64; 2]) -> Result<Jet3> {
        match self {
            Coeff::Const(v) => Ok(Jet3::constant(ord, *v)),
            Coeff::Analytic(e) => Ok(e.jet_at(ord, t0, x0)),
            Coeff::Field(_) => Err(Error::parameter(
                "coefficient jets require a closed-form coefficient",
            )),
        }
    }
}

/// Coefficients of one forward model instance on a grid.
#[derive(Debug, Clone)]
pub struct CoefficientSet {
    pub grid: Arc<SpaceTimeGrid>,
    pub kind: ModelKind,
    /// rho (physical) or gamma (reduced); positive.
    pub capacity: Coeff,
    /// sigma (physical); unused constant 1 for the reduced model.
    pub conductivity: Coeff,
    /// q (reduced); zero for the physical model.
    pub zeroth: Coeff,
}

impl CoefficientSet {
    pub fn physical(grid: &Arc<SpaceTimeGrid>, rho: Coeff, sigma: Coeff) -> Self {
        CoefficientSet {
            grid: grid.clone(),
            kind: ModelKind::Physical,
            capacity: rho,
            conductivity: sigma,
            zeroth: Coeff::Const(0.0),
        }
    }

    pub fn reduced(grid: &Arc<SpaceTimeGrid>, gamma: Coeff, q: Coeff) -> Self {
        CoefficientSet {
            grid: grid.clone(),
            kind: ModelKind::Reduced,
            capacity: gamma,
            conductivity: Coeff::Const(1.0),
            zeroth: q,
        }
    }

    pub fn rho(&self) -> &Coeff {
        &self.capacity
    }
    pub fn sigma(&self) -> &Coeff {
        &self.conductivity
    }
    pub fn gamma(&self) -> &Coeff {
        &self.capacity
    }
    pub fn q(&self) -> &Coeff {
        &self.zeroth
    }

    /// Checks positivity of the principal coefficients on all ambient nodes.
    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        for k in 0..=g.n_t {
            let t = g.time(k);
            for s in 0..g.nodes(Extent::Ambient) {
                let a = self.capacity.node_value(g, t, s);
                let b = self.conductivity.node_value(g, t, s);
                if !(a > 0.0 && a.is_finite()) || !(b > 0.0 && b.is_finite()) {
                    return Err(Error::coefficient(format!(
                        "non-positive coefficient at t={t}, node {s}: capacity={a}, conductivity={b}"
                    )));
                }
                let q = self.zeroth.node_value(g, t, s);
                if !q.is_finite() {
                    return Err(Error::coefficient(format!("non-finite q at t={t}, node {s}")));
                }
            }
        }
        Ok(())
    }

    /// True when the two sets agree on ambient-minus-disc nodes to `tol`.
    pub fn equal_outside_disc(&self, other: &CoefficientSet, tol: f64) -> bool {
        let g = &self.grid;
        for k in 0..=g.n_t {
            let t = g.time(k);
            for ring in g.n_r + 1..=g.n_r_ambient {
                for j in 0..g.n_theta {
                    let s = g.idx(ring, j);
                    if (self.capacity.node_value(g, t, s) - other.capacity.node_value(g, t, s))
                        .abs()
                        > tol
                        || (self.conductivity.node_value(g, t, s)
                            - other.conductivity.node_value(g, t, s))
                        .abs()
                            > tol
                        || (self.zeroth.node_value(g, t, s) - other.zeroth.node_value(g, t, s))
                            .abs()
                            > tol
                    {
                        return false;
                    }
                }
            }
        }
        true
    }

    pub fn time_dependent(&self) -> bool {
        self.capacity.depends_on_time()
            || self.conductivity.depends_on_time()
            || self.zeroth.depends_on_time()
    }
}

/// Solver configuration (external interface keys).
#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// "cn" (theta = 1/2 with damped start) or "be" (theta = 1).
    pub theta_scheme: String,
    /// Number of initial backward-Euler steps.
    pub damped_start_steps: usize,
    /// One-sided flux stencil width; 3 is the quadratic fit.
    pub flux_stencil: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            theta_scheme: "cn".into(),
            damped_start_steps: 2,
            flux_stencil: 3,
        }
    }
}

/// Dirichlet datum paired with its simulated flux trace.
#[derive(Debug, Clone)]
pub struct DnRecord {
    pub datum: BoundaryTrace,
    pub flux: BoundaryTrace,
    pub direction: Direction,
    pub warnings: Vec<String>,
}

impl DnRecord {
    /// Writes `t,theta,f,flux` rows.
    pub fn dump_csv(&self, path: &std::path::Path) -> Result<()> {
        use std::fmt::Write as _;
        let g = &self.datum.grid;
        let mut out = String::new();
        out.push_str("t,theta,f,flux\n");
        for k in 0..=g.n_t {
            for j in 0..g.n_theta {
                let _ = writeln!(
                    out,
                    "{},{},{},{}",
                    g.time(k),
                    g.theta(j),
                    self.datum.at(k, j),
                    self.flux.at(k, j)
                );
            }
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn load_csv(
        grid: &Arc<SpaceTimeGrid>,
        direction: Direction,
        path: &std::path::Path,
    ) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines();
        if lines.next() != Some("t,theta,f,flux") {
            return Err(Error::parse("expected DN record header 't,theta,f,flux'"));
        }
        let mut datum = BoundaryTrace::zeros(grid);
        let mut flux = BoundaryTrace::zeros(grid);
        let mut row = 0usize;
        for line in lines {
            if line.is_empty() {
                continue;
            }
            let mut cols = line.split(',');
            let _t = cols.next();
            let _th = cols.next();
            let f: f64 = cols
                .next()
                .ok_or_else(|| Error::parse(format!("short row {row}")))?
                .parse()
                .map_err(|e| Error::parse(format!("row {row}: {e}")))?;
            let fl: f64 = cols
                .next()
                .ok_or_else(|| Error::parse(format!("short row {row}")))?
                .parse()
                .map_err(|e| Error::parse(format!("row {row}: {e}")))?;
            let k = row / grid.n_theta;
            let j = row % grid.n_theta;
            if k > grid.n_t {
                return Err(Error::parse("too many DN record rows"));
            }
            *datum.at_mut(k, j) = f;
            *flux.at_mut(k, j) = fl;
            row += 1;
        }
        Ok(DnRecord {
            datum,
            flux,
            direction,
            warnings: Vec::new(),
        })
    }
}

/// Spatial-operator coefficient providers for the generic stepper:
/// `a du/dt - div(b grad u) + c u + d . grad u = S`.
pub struct OpCoeffs {
    pub a: Arc<dyn Fn(f64, usize) -> f64 + Send + Sync>,
    pub b: Arc<dyn Fn(f64, usize) -> f64 + Send + Sync>,
    pub c: Option<Arc<dyn Fn(f64, usize) -> f64 + Send + Sync>>,
    pub d: Option<Arc<dyn Fn(f64, usize) -> [f64; 2] + Send + Sync>>,
    pub time_dependent: bool,
}

impl OpCoeffs {
    /// Providers for a spec model in the given direction (adjoint problems
    /// are expressed in the reversed clock tau = T - t).
    pub fn from_set(set: &CoefficientSet, direction: Direction) -> Self {
        let t_final = set.grid.t_final;
        let t_of = move |tau: f64| match direction {
            Direction::Forward => tau,
            Direction::Adjoint => t_final - tau,
        };
        let grid = set.grid.clone();
        let cap = set.capacity.clone();
        let a = Arc::new(move |tau: f64, s: usize| cap.node_value(&grid, t_of(tau), s));
        let grid = set.grid.clone();
        let con = set.conductivity.clone();
        let b = Arc::new(move |tau: f64, s: usize| con.node_value(&grid, t_of(tau), s));
        let grid = set.grid.clone();
        let q = set.zeroth.clone();
        let cap2 = set.capacity.clone();
        let kind = set.kind;
        let c: Arc<dyn Fn(f64, usize) -> f64 + Send + Sync> =
            Arc::new(move |tau: f64, s: usize| {
                let t = t_of(tau);
                match (kind, direction) {
                    (ModelKind::Physical, Direction::Forward) => 0.0,
                    // -d/dt(rho w) - div(sigma grad w) = 0  =>  reversed clock
                    // gains the reaction term -(d rho/dt)(T - tau).
                    (ModelKind::Physical, Direction::Adjoint) => -cap2.node_dt(&grid, t, s),
                    (ModelKind::Reduced, Direction::Forward) => q.node_value(&grid, t, s),
                    (ModelKind::Reduced, Direction::Adjoint) => {
                        q.node_value(&grid, t, s) - cap2.node_dt(&grid, t, s)
                    }
                }
            });
        OpCoeffs {
            a,
            b,
            c: Some(c),
            d: None,
            time_dependent: set.time_dependent() || direction == Direction::Adjoint && set.kind == ModelKind::Physical,
        }
    }
}

/// One column of a batched solve.
pub struct BatchColumn<'a> {
    pub trace: &'a BoundaryTrace,
    /// Interior source, if any, on the disc extent.
    pub source: Option<&'a ScalarField>,
    /// Initial spatial slice (disc extent); zeros when absent.
    pub initial: Option<&'a [f64]>,
}

/// Generic implicit solver over the disc.
pub struct ParabolicStepper {
    pub grid: Arc<SpaceTimeGrid>,
    pub coeffs: OpCoeffs,
    pub config: SolverConfig,
}

impl ParabolicStepper {
    pub fn new(grid: &Arc<SpaceTimeGrid>, coeffs: OpCoeffs, config: SolverConfig) -> Self {
        ParabolicStepper {
            grid: grid.clone(),
            coeffs,
            config,
        }
    }

    fn interior_blocks(&self) -> Vec<usize> {
        let mut sizes = vec![1usize];
        sizes.extend(std::iter::repeat(self.grid.n_theta).take(self.grid.n_r - 1));
        sizes
    }

    /// Assembles the interior operator L at time `t` plus the boundary
    /// coupling weights: (block system, per-ring boundary coupling diag).
    fn assemble(&self, t: f64) -> (BlockSystem, DVector<f64>) {
        let g = &self.grid;
        let n_th = g.n_theta;
        let h = g.h_r;
        let h_th = g.h_theta;
        let b_at = |s: usize| (self.coeffs.b)(t, s);
        let c_at = |s: usize| self.coeffs.c.as_ref().map_or(0.0, |c| c(t, s));

        let sizes = self.interior_blocks();
        let n_blocks = sizes.len();
        let mut diag: Vec<DMatrix<f64>> = sizes.iter().map(|&s| DMatrix::zeros(s, s)).collect();
        let mut lower: Vec<OffBlock> = Vec::with_capacity(n_blocks - 1);
        let mut upper: Vec<OffBlock> = Vec::with_capacity(n_blocks - 1);
        // boundary coupling: contribution of the boundary ring value at angle j
        // to the last interior ring row j (same-angle radial coupling only)
        let mut bnd = DVector::zeros(n_th);

        // center node: -div(b grad u) ~ -(2 h_th / (pi h^2)) sum_j b_{1/2,j} (u_1j - u_c)
        let b_c = b_at(0);
        let mut row = 0.0;
        let mut center_upper = DMatrix::zeros(1, n_th);
        for j in 0..n_th {
            let bh = 0.5 * (b_c + b_at(g.idx(1, j)));
            let w = 2.0 * h_th / (std::f64::consts::PI * h * h) * bh;
            row += w;
            center_upper[(0, j)] = -w;
        }
        diag[0][(0, 0)] = row + c_at(0);
        // advection at the center via the ring-1 gradient fit
        if let Some(d) = &self.coeffs.d {
            let dv = d(t, 0);
            for j in 0..n_th {
                let th = g.theta(j);
                let w = 2.0 / (n_th as f64 * h) * (dv[0] * th.cos() + dv[1] * th.sin());
                center_upper[(0, j)] += w;
            }
        }
        upper.push(OffBlock::Dense(center_upper));
        let mut center_lower = DMatrix::zeros(n_th, 1);

        for ring in 1..g.n_r {
            let block = ring; // block index
            let r = g.ring_radius(ring);
            let rp = r + 0.5 * h;
            let rm = r - 0.5 * h;
            let mut dlo = DVector::zeros(n_th);
            let mut dhi = DVector::zeros(n_th);
            for j in 0..n_th {
                let s = g.idx(ring, j);
                let b0 = b_at(s);
                let b_out = if ring + 1 <= g.n_r {
                    0.5 * (b0 + b_at(g.idx(ring + 1, j)))
                } else {
                    b0
                };
                let b_in = if ring >= 2 {
                    0.5 * (b0 + b_at(g.idx(ring - 1, j)))
                } else {
                    0.5 * (b0 + b_at(0))
                };
                let jp = (j + 1) % n_th;
                let jm = (j + n_th - 1) % n_th;
                let b_jp = 0.5 * (b0 + b_at(g.idx(ring, jp)));
                let b_jm = 0.5 * (b0 + b_at(g.idx(ring, jm)));

                let w_out = rp * b_out / (r * h * h);
                let w_in = rm * b_in / (r * h * h);
                let w_ang_p = b_jp / (r * r * h_th * h_th);
                let w_ang_m = b_jm / (r * r * h_th * h_th);

                let m = &mut diag[block];
                m[(j, j)] += w_out + w_in + w_ang_p + w_ang_m + c_at(s);
                m[(j, jp)] -= w_ang_p;
                m[(j, jm)] -= w_ang_m;
                dlo[j] = -w_in;
                dhi[j] = -w_out;

                // advection d . grad u, centered differences
                if let Some(d) = &self.coeffs.d {
                    let dv = d(t, s);
                    let th = g.theta(j);
                    let dr = dv[0] * th.cos() + dv[1] * th.sin();
                    let dth = -dv[0] * th.sin() + dv[1] * th.cos();
                    let m = &mut diag[block];
                    // radial part
                    dhi[j] += dr / (2.0 * h);
                    dlo[j] -= dr / (2.0 * h);
                    // angular part
                    m[(j, jp)] += dth / (r * 2.0 * h_th);
                    m[(j, jm)] -= dth / (r * 2.0 * h_th);
                }
            }
            if ring == 1 {
                for j in 0..n_th {
                    center_lower[(j, 0)] = dlo[j];
                }
            } else {
                lower.push(OffBlock::Diag(dlo));
            }
            if ring == g.n_r - 1 {
                bnd = dhi; // couples to the Dirichlet ring
            } else {
                upper.push(OffBlock::Diag(dhi));
            }
        }
        lower.insert(0, OffBlock::Dense(center_lower));

        (BlockSystem { diag, lower, upper }, bnd)
    }

    /// Runs the batch. Columns evolve under identical operators; the
    /// factorization is shared within a step (and across steps if the
    /// coefficients are time-independent).
    pub fn run(&self, cols: &[BatchColumn<'_>]) -> Result<Vec<ScalarField>> {
        let g = &self.grid;
        let m = cols.len();
        let n_th = g.n_theta;
        let sizes = self.interior_blocks();

        // state per column: interior blocks
        let mut state: Vec<DMatrix<f64>> = sizes.iter().map(|&s| DMatrix::zeros(s, m)).collect();
        for (c, col) in cols.iter().enumerate() {
            if let Some(init) = col.initial {
                state[0][(0, c)] = init[0];
                for ring in 1..g.n_r {
                    for j in 0..n_th {
                        state[ring][(j, c)] = init[g.idx(ring, j)];
                    }
                }
            }
        }

        let mut out: Vec<ScalarField> = cols
            .iter()
            .map(|_| ScalarField::zeros(g, Extent::Disc))
            .collect();
        let store =
            |out: &mut Vec<ScalarField>, state: &Vec<DMatrix<f64>>, k: usize, cols: &[BatchColumn<'_>]| {
                for (c, field) in out.iter_mut().enumerate() {
                    let nodes = field.nodes();
                    let base = k * nodes;
                    field.values[base] = state[0][(0, c)];
                    for ring in 1..g.n_r {
                        for j in 0..n_th {
                            field.values[base + g.idx(ring, j)] = state[ring][(j, c)];
                        }
                    }
                    for j in 0..n_th {
                        field.values[base + g.idx(g.n_r, j)] = cols[c].trace.at(k, j);
                    }
                }
            };
        store(&mut out, &state, 0, cols);

        let mut assembled: Option<((BlockSystem, DVector<f64>), (BlockSystem, DVector<f64>))> =
            None;
        let mut factor: Option<(BlockFactor, f64)> = None; // factor, theta used
        let mut a_mid_cache: Vec<DVector<f64>> = Vec::new();

        for n in 0..g.n_t {
            let theta = if self.config.theta_scheme == "be" || n < self.config.damped_start_steps {
                1.0
            } else {
                0.5
            };
            let t0 = g.time(n);
            let t1 = g.time(n + 1);
            let t_mid = if theta == 1.0 { t1 } else { 0.5 * (t0 + t1) };

            let need_assemble = self.coeffs.time_dependent || assembled.is_none();
            if need_assemble {
                let op0 = self.assemble(t0);
                let op1 = self.assemble(t1);
                assembled = Some((op0, op1));
            }
            let (op0, op1) = assembled.as_ref().unwrap();

            let need_factor = need_assemble
                || factor.as_ref().map(|(_, th)| *th != theta).unwrap_or(true);
            if need_factor {
                // a at mid-time per node
                a_mid_cache = sizes
                    .iter()
                    .enumerate()
                    .map(|(blk, &sz)| {
                        DVector::from_fn(sz, |r, _| {
                            let s = if blk == 0 { 0 } else { g.idx(blk, r) };
                            (self.coeffs.a)(t_mid, s) / g.dt
                        })
                    })
                    .collect();
                let mut sys = op1.0.clone();
                for (blk, d) in sys.diag.iter_mut().enumerate() {
                    *d *= theta;
                    for r in 0..d.nrows() {
                        d[(r, r)] += a_mid_cache[blk][r];
                    }
                }
                for b in sys.lower.iter_mut().chain(sys.upper.iter_mut()) {
                    match b {
                        OffBlock::Diag(v) => *v *= theta,
                        OffBlock::Dense(mm) => *mm *= theta,
                    }
                }
                factor = Some((sys.factor()?, theta));
            }

            // rhs = (a/dt) u - (1-theta) (L^n u + bnd^n f^n) - theta bnd^{n+1} f^{n+1} + S_mid
            let mut rhs: Vec<DMatrix<f64>> = if theta < 1.0 {
                op0.0.matvec(&state)
            } else {
                sizes.iter().map(|&s| DMatrix::zeros(s, m)).collect()
            };
            for (blk, r) in rhs.iter_mut().enumerate() {
                if theta < 1.0 {
                    *r *= -(1.0 - theta);
                }
                for row in 0..r.nrows() {
                    let am = a_mid_cache[blk][row];
                    for c in 0..m {
                        r[(row, c)] += am * state[blk][(row, c)];
                    }
                }
            }
            // boundary contributions on the outermost interior ring
            let last = sizes.len() - 1;
            for c in 0..m {
                for j in 0..n_th {
                    let f0 = cols[c].trace.at(n, j);
                    let f1 = cols[c].trace.at(n + 1, j);
                    rhs[last][(j, c)] -=
                        (1.0 - theta) * op0.1[j] * f0 + theta * op1.1[j] * f1;
                }
            }
            // sources at mid time (linear interpolation of the stored levels)
            for (c, col) in cols.iter().enumerate() {
                if let Some(src) = col.source {
                    let w1 = if theta == 1.0 { 1.0 } else { 0.5 };
                    let w0 = 1.0 - w1;
                    rhs[0][(0, c)] += w0 * src.at(n, 0) + w1 * src.at(n + 1, 0);
                    for ring in 1..g.n_r {
                        for j in 0..n_th {
                            let s = g.idx(ring, j);
                            rhs[ring][(j, c)] += w0 * src.at(n, s) + w1 * src.at(n + 1, s);
                        }
                    }
                }
            }

            factor.as_ref().unwrap().0.solve_in_place(&mut rhs);
            state = rhs;
            store(&mut out, &state, n + 1, cols);
        }
        Ok(out)
    }
}

fn compatibility_warnings(
    f: &BoundaryTrace,
    direction: Direction,
    initial: Option<&[f64]>,
) -> Result<Vec<String>> {
    let g = &f.grid;
    let k0 = match direction {
        Direction::Forward => 0,
        Direction::Adjoint => g.n_t,
    };
    let scale = f.values.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-30);
    let mut worst = 0.0f64;
    for j in 0..g.n_theta {
        let mut v = f.at(k0, j);
        if let Some(init) = initial {
            v -= init[g.idx(g.n_r, j)];
        }
        worst = worst.max(v.abs());
    }
    if worst > 1e-9 * scale {
        return Err(Error::parameter(format!(
            "boundary datum does not vanish at the {} time endpoint (max {worst:.3e})",
            if k0 == 0 { "initial" } else { "final" }
        )));
    }
    let mut warnings = Vec::new();
    let k1 = if k0 == 0 { 1 } else { g.n_t - 1 };
    let mut dworst = 0.0f64;
    for j in 0..g.n_theta {
        dworst = dworst.max((f.at(k1, j) - f.at(k0, j)).abs() / g.dt);
    }
    if dworst > 1e-6 * scale {
        warnings.push(format!(
            "time derivative of the boundary datum is nonzero at the compatibility corner ({dworst:.3e})"
        ));
    }
    Ok(warnings)
}

/// Solves the model equation for one Dirichlet datum.
pub fn solve(
    coeffs: &CoefficientSet,
    direction: Direction,
    f: &BoundaryTrace,
    source: Option<&ScalarField>,
    initial: Option<&[f64]>,
) -> Result<ScalarField> {
    Ok(solve_batch(coeffs, direction, &[(f, source, initial)])?.pop().unwrap())
}

/// Batched solve; all columns share the factorization.
pub fn solve_batch(
    coeffs: &CoefficientSet,
    direction: Direction,
    cols: &[(&BoundaryTrace, Option<&ScalarField>, Option<&[f64]>)],
) -> Result<Vec<ScalarField>> {
    let g = &coeffs.grid;
    let op = OpCoeffs::from_set(coeffs, direction);
    let stepper = ParabolicStepper::new(g, op, SolverConfig::default());
    // adjoint problems run in the reversed clock
    let reversed: Vec<(BoundaryTrace, Option<ScalarField>)> = match direction {
        Direction::Forward => Vec::new(),
        Direction::Adjoint => cols
            .iter()
            .map(|(f, src, _)| (reverse_trace(f), src.map(reverse_field)))
            .collect(),
    };
    let batch: Vec<BatchColumn<'_>> = match direction {
        Direction::Forward => cols
            .iter()
            .map(|(f, src, init)| BatchColumn {
                trace: f,
                source: *src,
                initial: *init,
            })
            .collect(),
        Direction::Adjoint => reversed
            .iter()
            .zip(cols.iter())
            .map(|((f, src), (_, _, init))| BatchColumn {
                trace: f,
                source: src.as_ref(),
                initial: *init,
            })
            .collect(),
    };
    let mut fields = stepper.run(&batch)?;
    if direction == Direction::Adjoint {
        for f in fields.iter_mut() {
            *f = reverse_field(f);
        }
    }
    Ok(fields)
}

pub fn reverse_trace(f: &BoundaryTrace) -> BoundaryTrace {
    let g = &f.grid;
    let mut out = BoundaryTrace::zeros(g);
    for k in 0..=g.n_t {
        for j in 0..g.n_theta {
            *out.at_mut(k, j) = f.at(g.n_t - k, j);
        }
    }
    out
}

pub fn reverse_field(f: &ScalarField) -> ScalarField {
    let g = &f.grid;
    let mut out = ScalarField::zeros(g, f.extent);
    let n = f.nodes();
    for k in 0..=g.n_t {
        out.slice_mut(k).copy_from_slice(&f.values[(g.n_t - k) * n..(g.n_t - k + 1) * n]);
    }
    out
}

/// Extracts the (sigma-weighted) normal flux by the one-sided quadratic fit
/// over the three outermost radial nodes.
pub fn extract_flux(coeffs: &CoefficientSet, u: &ScalarField) -> BoundaryTrace {
    let g = &coeffs.grid;
    let h = g.h_r;
    let mut flux = BoundaryTrace::zeros(g);
    for k in 0..=g.n_t {
        let t = g.time(k);
        for j in 0..g.n_theta {
            let ub = u.at(k, g.idx(g.n_r, j));
            let u1 = u.at(k, g.idx(g.n_r - 1, j));
            let u2 = u.at(k, g.idx(g.n_r - 2, j));
            let dudr = (3.0 * ub - 4.0 * u1 + u2) / (2.0 * h);
            let w = match coeffs.kind {
                ModelKind::Physical => coeffs.conductivity.node_value(g, t, g.idx(g.n_r, j)),
                ModelKind::Reduced => 1.0,
            };
            *flux.at_mut(k, j) = w * dudr;
        }
    }
    flux
}

/// Simulates the DN map on one datum.
pub fn dn_map(coeffs: &CoefficientSet, direction: Direction, f: &BoundaryTrace) -> Result<DnRecord> {
    Ok(dn_map_batch(coeffs, direction, &[f])?.pop().unwrap())
}

/// Batched DN map; shares the factorization across data.
pub fn dn_map_batch(
    coeffs: &CoefficientSet,
    direction: Direction,
    fs: &[&BoundaryTrace],
) -> Result<Vec<DnRecord>> {
    let mut warnings = Vec::with_capacity(fs.len());
    for f in fs {
        warnings.push(compatibility_warnings(f, direction, None)?);
    }
    let cols: Vec<(&BoundaryTrace, Option<&ScalarField>, Option<&[f64]>)> =
        fs.iter().map(|f| (*f, None, None)).collect();
    let sols = solve_batch(coeffs, direction, &cols)?;
    Ok(sols
        .into_iter()
        .zip(fs.iter())
        .zip(warnings)
        .map(|((u, f), warnings)| DnRecord {
            datum: (*f).clone(),
            flux: extract_flux(coeffs, &u),
            direction,
            warnings,
        })
        .collect())
}

/// Relative defect of the duality pairing
/// `int Lambda(f) h = int f Lambda*(h)` over Sigma.
pub fn pairing_defect(coeffs: &CoefficientSet, f: &BoundaryTrace, h: &BoundaryTrace) -> Result<f64> {
    let fwd = dn_map(coeffs, Direction::Forward, f)?;
    let adj = dn_map(coeffs, Direction::Adjoint, h)?;
    let g = &coeffs.grid;
    let lhs = integrate_boundary_of(g, |k, j| fwd.flux.at(k, j) * h.at(k, j));
    let rhs = integrate_boundary_of(g, |k, j| f.at(k, j) * adj.flux.at(k, j));
    Ok((lhs - rhs).abs() / (lhs.abs() + rhs.abs() + f64::EPSILON))
}

/// Discrete application of the spatial operator at one time level on
/// interior nodes: `(L u)(t_k, s)` with L = -div(b grad) + c + d.grad.
/// Used by consistency diagnostics.
pub fn apply_spatial_operator(
    stepper: &ParabolicStepper,
    t: f64,
    u: &[f64],
    boundary: impl Fn(usize) -> f64,
) -> Vec<f64> {
    let g = &stepper.grid;
    let (sys, bnd) = stepper.assemble(t);
    let sizes = stepper.interior_blocks();
    let mut blocks: Vec<DMatrix<f64>> = Vec::with_capacity(sizes.len());
    blocks.push(DMatrix::from_element(1, 1, u[0]));
    for ring in 1..g.n_r {
        blocks.push(DMatrix::from_fn(g.n_theta, 1, |j, _| u[g.idx(ring, j)]));
    }
    let mut y = sys.matvec(&blocks);
    for j in 0..g.n_theta {
        y[sizes.len() - 1][(j, 0)] += bnd[j] * boundary(j);
    }
    let mut out = vec![0.0; g.nodes(Extent::Disc)];
    out[0] = y[0][(0, 0)];
    for ring in 1..g.n_r {
        for j in 0..g.n_theta {
            out[g.idx(ring, j)] = y[ring][(j, 0)];
        }
    }
    out
}
