//! Block-tridiagonal direct solver.
//!
//! The polar tensor grid couples each ring only to its radial neighbors, so
//! every implicit step is a block-tridiagonal system: one 1x1 block for the
//! center node, then one dense angular block per interior ring. Off-diagonal
//! (radial) couplings are diagonal in the angle index except for the center
//! row/column. Factorization is block Thomas with dense partial-pivot LU per
//! Schur complement; solves take many right-hand sides at once so parameter
//! sweeps share one factorization.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Off-diagonal radial coupling block.
#[derive(Debug, Clone)]
pub enum OffBlock {
    /// Same-angle coupling between rings of equal size.
    Diag(DVector<f64>),
    /// General coupling (used for the center row and column).
    Dense(DMatrix<f64>),
}

impl OffBlock {
    fn nrows(&self) -> usize {
        match self {
            OffBlock::Diag(d) => d.len(),
            OffBlock::Dense(m) => m.nrows(),
        }
    }

    fn ncols(&self) -> usize {
        match self {
            OffBlock::Diag(d) => d.len(),
            OffBlock::Dense(m) => m.ncols(),
        }
    }

    /// out -= self * x
    fn sub_mul_into(&self, x: &DMatrix<f64>, out: &mut DMatrix<f64>) {
        match self {
            OffBlock::Diag(d) => {
                for c in 0..x.ncols() {
                    for r in 0..d.len() {
                        out[(r, c)] -= d[r] * x[(r, c)];
                    }
                }
            }
            OffBlock::Dense(m) => {
                out.gemm(-1.0, m, x, 1.0);
            }
        }
    }
}

/// Assembled block-tridiagonal system `A x = b`.
#[derive(Debug, Clone)]
pub struct BlockSystem {
    pub diag: Vec<DMatrix<f64>>,
    /// lower[i] couples block row i+1 to block column i.
    pub lower: Vec<OffBlock>,
    /// upper[i] couples block row i to block column i+1.
    pub upper: Vec<OffBlock>,
}

impl BlockSystem {
    pub fn n_blocks(&self) -> usize {
        self.diag.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.diag.len();
        if self.lower.len() != n - 1 || self.upper.len() != n - 1 {
            return Err(Error::parameter("block count mismatch"));
        }
        for i in 0..n - 1 {
            if self.lower[i].nrows() != self.diag[i + 1].nrows()
                || self.lower[i].ncols() != self.diag[i].nrows()
                || self.upper[i].nrows() != self.diag[i].nrows()
                || self.upper[i].ncols() != self.diag[i + 1].nrows()
            {
                return Err(Error::parameter(format!("block size mismatch at ring {i}")));
            }
        }
        Ok(())
    }

    /// y = A x, block layout matching `solve`.
    pub fn matvec(&self, x: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
        let n = self.n_blocks();
        let mut y: Vec<DMatrix<f64>> = Vec::with_capacity(n);
        for i in 0..n {
            let mut yi = &self.diag[i] * &x[i];
            if i > 0 {
                match &self.lower[i - 1] {
                    OffBlock::Diag(d) => {
                        for c in 0..yi.ncols() {
                            for r in 0..d.len() {
                                yi[(r, c)] += d[r] * x[i - 1][(r, c)];
                            }
                        }
                    }
                    OffBlock::Dense(m) => yi.gemm(1.0, m, &x[i - 1], 1.0),
                }
            }
            if i + 1 < n {
                match &self.upper[i] {
                    OffBlock::Diag(d) => {
                        for c in 0..yi.ncols() {
                            for r in 0..d.len() {
                                yi[(r, c)] += d[r] * x[i + 1][(r, c)];
                            }
                        }
                    }
                    OffBlock::Dense(m) => yi.gemm(1.0, m, &x[i + 1], 1.0),
                }
            }
            y.push(yi);
        }
        y
    }

    pub fn factor(self) -> Result<BlockFactor> {
        self.validate()?;
        let n = self.n_blocks();
        let mut lus = Vec::with_capacity(n);
        let mut xs: Vec<DMatrix<f64>> = Vec::with_capacity(n - 1);
        let mut t = self.diag[0].clone();
        for i in 0..n {
            if i > 0 {
                t = self.diag[i].clone();
                // t -= lower[i-1] * xs[i-1]
                self.lower[i - 1].sub_mul_into(&xs[i - 1], &mut t);
            }
            let lu = t.clone().lu();
            if lu.determinant().abs() == 0.0 {
                return Err(Error::solver(format!("singular Schur block at ring {i}")));
            }
            if i + 1 < n {
                let full = match &self.upper[i] {
                    OffBlock::Diag(d) => DMatrix::from_fn(d.len(), d.len(), |r, c| {
                        if r == c {
                            d[r]
                        } else {
                            0.0
                        }
                    }),
                    OffBlock::Dense(m) => m.clone(),
                };
                let x = lu
                    .solve(&full)
                    .ok_or_else(|| Error::solver(format!("singular block at ring {i}")))?;
                xs.push(x);
            }
            lus.push(lu);
        }
        Ok(BlockFactor {
            lus,
            xs,
            lower: self.lower,
        })
    }
}

/// Block Thomas factorization ready for repeated multi-column solves.
pub struct BlockFactor {
    lus: Vec<nalgebra::linalg::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
    xs: Vec<DMatrix<f64>>,
    lower: Vec<OffBlock>,
}

impl BlockFactor {
    /// Solves in place; `rhs[i]` is the s_i x m block of right-hand sides.
    pub fn solve_in_place(&self, rhs: &mut [DMatrix<f64>]) {
        let n = self.lus.len();
        debug_assert_eq!(rhs.len(), n);
        // forward sweep: z_i = T_i^{-1} (b_i - lower_{i-1} z_{i-1})
        for i in 0..n {
            if i > 0 {
                let (before, after) = rhs.split_at_mut(i);
                let zi_prev = &before[i - 1];
                self.lower[i - 1].sub_mul_into(zi_prev, &mut after[0]);
            }
            self.lus[i].solve_mut(&mut rhs[i]);
        }
        // back substitution: x_i = z_i - X_i x_{i+1}
        for i in (0..n - 1).rev() {
            let (before, after) = rhs.split_at_mut(i + 1);
            before[i].gemm(-1.0, &self.xs[i], &after[0], 1.0);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_system(sizes: &[usize], seed: &mut u64) -> BlockSystem {
        let mut next = || {
            *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((*seed >> 33) as f64 / (1u64 << 31) as f64) - 0.5
        };
        let n = sizes.len();
        let mut diag = Vec::new();
        for &s in sizes {
            let mut m = DMatrix::from_fn(s, s, |_, _| 0.3 * next());
            for k in 0..s {
                m[(k, k)] += 4.0; // diagonally dominant
            }
            diag.push(m);
        }
        let mut lower = Vec::new();
        let mut upper = Vec::new();
        for i in 0..n - 1 {
            if sizes[i] == sizes[i + 1] {
                lower.push(OffBlock::Diag(DVector::from_fn(sizes[i], |_, _| next())));
                upper.push(OffBlock::Diag(DVector::from_fn(sizes[i], |_, _| next())));
            } else {
                lower.push(OffBlock::Dense(DMatrix::from_fn(sizes[i + 1], sizes[i], |_, _| next())));
                upper.push(OffBlock::Dense(DMatrix::from_fn(sizes[i], sizes[i + 1], |_, _| next())));
            }
        }
        BlockSystem { diag, lower, upper }
    }

    #[test]
    fn factor_solve_matches_matvec() {
        let mut seed = 42u64;
        let sizes = [1usize, 8, 8, 8, 8];
        let sys = random_system(&sizes, &mut seed);
        let m = 3;
        let x_true: Vec<DMatrix<f64>> = sizes
            .iter()
            .map(|&s| DMatrix::from_fn(s, m, |r, c| ((r * 7 + c * 3) % 5) as f64 - 2.0))
            .collect();
        let mut b = sys.matvec(&x_true);
        let factor = sys.factor().unwrap();
        factor.solve_in_place(&mut b);
        for (xa, xb) in b.iter().zip(&x_true) {
            assert!((xa - xb).amax() < 1e-10, "max err {}", (xa - xb).amax());
        }
    }

    #[test]
    fn center_block_coupling() {
        let mut seed = 7u64;
        let sizes = [1usize, 6, 6];
        let sys = random_system(&sizes, &mut seed);
        let x_true: Vec<DMatrix<f64>> = sizes
            .iter()
            .map(|&s| DMatrix::from_fn(s, 1, |r, _| r as f64 + 0.5))
            .collect();
        let mut b = sys.matvec(&x_true);
        sys.factor().unwrap().solve_in_place(&mut b);
        for (xa, xb) in b.iter().zip(&x_true) {
            assert!((xa - xb).amax() < 1e-10);
        }
    }
}
