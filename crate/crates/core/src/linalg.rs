//! Dense lower Cholesky factor with rank-one update/downdate, used to keep
//! the weight-posterior precision `P = ZᵀZ + I/σ_B²` factored while rows of
//! `Z` are removed and re-added.

#![allow(clippy::needless_range_loop)]

use nalgebra::DMatrix;

use crate::error::{GlfmError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyFactor {
    l: DMatrix<f64>,
}

impl CholeskyFactor {
    pub fn factor(p: &DMatrix<f64>) -> Result<Self> {
        let k = p.nrows();
        let mut l = DMatrix::zeros(k, k);
        for j in 0..k {
            let mut diag = p[(j, j)];
            for c in 0..j {
                diag -= l[(j, c)] * l[(j, c)];
            }
            if !(diag > 0.0) {
                return Err(GlfmError::Numerical(format!(
                    "matrix not positive definite at pivot {j} ({diag})"
                )));
            }
            let ljj = diag.sqrt();
            l[(j, j)] = ljj;
            for i in j + 1..k {
                let mut s = p[(i, j)];
                for c in 0..j {
                    s -= l[(i, c)] * l[(j, c)];
                }
                l[(i, j)] = s / ljj;
            }
        }
        Ok(CholeskyFactor { l })
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.l
    }

    /// `L Lᵀ ← L Lᵀ + v vᵀ`.
    pub fn update(&mut self, v: &[f64]) {
        let mut w = v.to_vec();
        let k = self.dim();
        for j in 0..k {
            if w[j] == 0.0 {
                continue;
            }
            let ljj = self.l[(j, j)];
            let r = ljj.hypot(w[j]);
            let c = r / ljj;
            let s = w[j] / ljj;
            self.l[(j, j)] = r;
            for i in j + 1..k {
                let lij = (self.l[(i, j)] + s * w[i]) / c;
                w[i] = c * w[i] - s * lij;
                self.l[(i, j)] = lij;
            }
        }
    }

    /// `L Lᵀ ← L Lᵀ - v vᵀ`; fails if the result would not be positive
    /// definite.
    pub fn downdate(&mut self, v: &[f64]) -> Result<()> {
        let mut w = v.to_vec();
        let k = self.dim();
        let backup = self.l.clone();
        for j in 0..k {
            if w[j] == 0.0 {
                continue;
            }
            let ljj = self.l[(j, j)];
            let arg = ljj * ljj - w[j] * w[j];
            if !(arg > 0.0) {
                self.l = backup;
                return Err(GlfmError::Numerical(format!(
                    "rank-one downdate lost definiteness at pivot {j}"
                )));
            }
            let r = arg.sqrt();
            let c = r / ljj;
            let s = w[j] / ljj;
            self.l[(j, j)] = r;
            for i in j + 1..k {
                let lij = (self.l[(i, j)] - s * w[i]) / c;
                w[i] = c * w[i] - s * lij;
                self.l[(i, j)] = lij;
            }
        }
        Ok(())
    }

    /// Solve `L x = b` in place.
    pub fn solve_lower_in_place(&self, b: &mut [f64]) {
        self.solve_lower_from(b, 0);
    }

    /// Forward substitution for a right-hand side whose first `start`
    /// entries are zero.
    pub fn solve_lower_from(&self, b: &mut [f64], start: usize) {
        let k = self.dim();
        for i in start..k {
            let mut s = b[i];
            for c in start..i {
                s -= self.l[(i, c)] * b[c];
            }
            b[i] = s / self.l[(i, i)];
        }
    }

    /// Solve `Lᵀ x = b` in place.
    pub fn solve_upper_in_place(&self, b: &mut [f64]) {
        let k = self.dim();
        for i in (0..k).rev() {
            let mut s = b[i];
            for r in i + 1..k {
                s -= self.l[(r, i)] * b[r];
            }
            b[i] = s / self.l[(i, i)];
        }
    }

    /// Solve `L Lᵀ x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_lower_in_place(&mut x);
        self.solve_upper_in_place(&mut x);
        x
    }

    /// Append an uncoupled coordinate with precision `value`.
    pub fn push_diagonal(&mut self, value: f64) {
        let k = self.dim();
        let mut l = DMatrix::zeros(k + 1, k + 1);
        l.view_mut((0, 0), (k, k)).copy_from(&self.l);
        l[(k, k)] = value.sqrt();
        self.l = l;
    }

    /// Drop coordinate `k`. Exact when row and column `k` of the factored
    /// matrix are zero off the diagonal.
    pub fn remove_uncoupled(&mut self, k: usize) {
        let l = std::mem::replace(&mut self.l, DMatrix::zeros(0, 0));
        self.l = l.remove_row(k).remove_column(k);
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.l * self.l.transpose()
    }
}
