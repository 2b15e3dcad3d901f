//! Latent state of the sampler and its initialization.

use nalgebra::DMatrix;

use super::Hyperparams;
use crate::data::{AttributeKind, AttributeSpec, DataMatrix};
use crate::error::{GlfmError, Result};
use crate::likelihoods::{count_interval, map_inverse, Thresholds};
use crate::linalg::CholeskyFactor;
use crate::rng::GlfmRng;

/// Binary `N × K` matrix stored row-major, one byte per entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureMatrix {
    n_rows: usize,
    n_cols: usize,
    bits: Vec<u8>,
}

impl FeatureMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        FeatureMatrix {
            n_rows,
            n_cols,
            bits: vec![0; n_rows * n_cols],
        }
    }

    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(GlfmError::InvalidArgument(
                "feature rows have different lengths".into(),
            ));
        }
        if rows.iter().flatten().any(|&b| b > 1) {
            return Err(GlfmError::InvalidArgument(
                "feature matrix entries must be 0 or 1".into(),
            ));
        }
        Ok(FeatureMatrix {
            n_rows: rows.len(),
            n_cols,
            bits: rows.concat(),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn get(&self, n: usize, k: usize) -> u8 {
        self.bits[n * self.n_cols + k]
    }

    pub fn set(&mut self, n: usize, k: usize, value: u8) {
        self.bits[n * self.n_cols + k] = value;
    }

    pub fn row(&self, n: usize) -> &[u8] {
        &self.bits[n * self.n_cols..(n + 1) * self.n_cols]
    }

    pub fn row_f64(&self, n: usize) -> Vec<f64> {
        self.row(n).iter().map(|&b| f64::from(b)).collect()
    }

    pub fn column_sum(&self, k: usize) -> usize {
        (0..self.n_rows).map(|n| usize::from(self.get(n, k))).sum()
    }

    /// Append a column that is zero except at the listed rows.
    pub fn push_column(&mut self, ones: &[usize]) {
        let k = self.n_cols;
        let mut bits = Vec::with_capacity(self.n_rows * (k + 1));
        for n in 0..self.n_rows {
            bits.extend_from_slice(self.row(n));
            bits.push(0);
        }
        self.bits = bits;
        self.n_cols += 1;
        for &n in ones {
            self.set(n, k, 1);
        }
    }

    /// Drop the columns for which `keep` is false.
    pub fn retain_columns(&mut self, keep: &[bool]) {
        let n_new = keep.iter().filter(|&&k| k).count();
        let mut bits = Vec::with_capacity(self.n_rows * n_new);
        for n in 0..self.n_rows {
            for (k, &b) in self.row(n).iter().enumerate() {
                if keep[k] {
                    bits.push(b);
                }
            }
        }
        self.bits = bits;
        self.n_cols = n_new;
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_rows, self.n_cols, |n, k| f64::from(self.get(n, k)))
    }
}

/// Everything the sampler updates.
///
/// The weights and pseudo-observations of all attributes are stored side by
/// side: attribute `d` owns columns `offsets[d]..offsets[d] + widths[d]` of
/// `b` (`K × S`), `lambda` (`K × S`) and `y` (`N × S`), where a categorical
/// attribute with `R` categories has width `R` and every other kind width 1.
#[derive(Debug, Clone)]
pub struct LatentState {
    pub specs: Vec<AttributeSpec>,
    pub hyper: Hyperparams,
    pub z: FeatureMatrix,
    /// Column sums of `z`.
    pub counts: Vec<usize>,
    pub b: DMatrix<f64>,
    pub y: DMatrix<f64>,
    /// Ordinal thresholds, `Some` exactly for ordinal attributes.
    pub theta: Vec<Option<Thresholds>>,
    /// Pseudo-observation variance per attribute.
    pub sigma2: Vec<f64>,
    /// `ZᵀZ + I/σ_B²`.
    pub p: DMatrix<f64>,
    /// `ZᵀY`.
    pub lambda: DMatrix<f64>,
    pub chol: CholeskyFactor,
    /// Rows whose non-bias features are held at zero.
    pub pinned: Vec<bool>,
    pub offsets: Vec<usize>,
    pub widths: Vec<usize>,
    pub sweeps: usize,
}

impl LatentState {
    pub fn n_rows(&self) -> usize {
        self.z.n_rows()
    }

    pub fn n_dims(&self) -> usize {
        self.specs.len()
    }

    /// Number of feature columns, the bias column included.
    pub fn k_plus(&self) -> usize {
        self.z.n_cols()
    }

    /// Number of non-bias features.
    pub fn n_features(&self) -> usize {
        self.k_plus() - self.first_free()
    }

    /// Index of the first column the sampler may flip.
    pub fn first_free(&self) -> usize {
        usize::from(self.hyper.bias)
    }

    pub fn total_width(&self) -> usize {
        self.offsets.last().copied().unwrap_or(0) + self.widths.last().copied().unwrap_or(0)
    }

    /// Columns of attribute `d` whose weights are free. The last category
    /// of a categorical attribute has its weights fixed at zero.
    pub fn free_columns(&self, d: usize) -> std::ops::Range<usize> {
        let start = self.offsets[d];
        let width = match self.specs[d].kind {
            AttributeKind::Categorical => self.widths[d] - 1,
            _ => self.widths[d],
        };
        start..start + width
    }

    /// Predictor `z · b_c` for an arbitrary feature row.
    pub fn predictor(&self, z: &[u8], c: usize) -> f64 {
        z.iter()
            .enumerate()
            .filter(|&(_, &bit)| bit == 1)
            .map(|(k, _)| self.b[(k, c)])
            .sum()
    }

    /// Predictors of row `n` for every column of attribute `d`.
    pub fn row_predictors(&self, n: usize, d: usize) -> Vec<f64> {
        let z = self.z.row(n);
        (self.offsets[d]..self.offsets[d] + self.widths[d])
            .map(|c| self.predictor(z, c))
            .collect()
    }

    /// Fresh `(P, λ)` computed from `Z` and `Y`.
    pub fn natural_params(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let z = self.z.to_dense();
        let k = z.ncols();
        let p = z.transpose() * &z + DMatrix::identity(k, k) / self.hyper.sigma_b2;
        let lambda = z.transpose() * &self.y;
        (p, lambda)
    }

    /// Recompute `P`, `λ`, the Cholesky factor and the column sums from
    /// scratch.
    pub fn refresh(&mut self) -> Result<()> {
        let (p, lambda) = self.natural_params();
        self.chol = CholeskyFactor::factor(&p)?;
        self.p = p;
        self.lambda = lambda;
        self.counts = (0..self.z.n_cols()).map(|k| self.z.column_sum(k)).collect();
        Ok(())
    }

    /// Largest absolute deviation of the maintained `P`, `λ` and factor from
    /// a fresh computation.
    pub fn drift(&self) -> f64 {
        let (p, lambda) = self.natural_params();
        let max_abs = |m: DMatrix<f64>| m.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        max_abs(&self.p - &p)
            .max(max_abs(&self.lambda - &lambda))
            .max(max_abs(self.chol.reconstruct() - &p))
    }

    /// Hold the non-bias features of the selected rows at zero for the rest
    /// of the chain.
    pub fn pin_rows(&mut self, rows: &[bool]) -> Result<()> {
        if rows.len() != self.n_rows() {
            return Err(GlfmError::InvalidArgument(format!(
                "pin mask has {} entries, expected {}",
                rows.len(),
                self.n_rows()
            )));
        }
        let first = self.first_free();
        for (n, &pin) in rows.iter().enumerate() {
            if pin {
                self.pinned[n] = true;
                for k in first..self.k_plus() {
                    self.z.set(n, k, 0);
                }
            }
        }
        self.counts = (0..self.z.n_cols()).map(|k| self.z.column_sum(k)).collect();
        super::sampler::prune_features(self)?;
        self.refresh()
    }
}

/// Random initial state: `K_init` features (plus the bias column) drawn with
/// probability ½, zero weights, thresholds on a grid, and pseudo-observations
/// placed inside their admissible intervals.
pub fn init_state(
    rng: &mut GlfmRng,
    data: &DataMatrix,
    hyper: &Hyperparams,
) -> Result<LatentState> {
    hyper.validate()?;
    let n = data.n_rows();
    let specs = data.specs().to_vec();
    let mut offsets = Vec::with_capacity(specs.len());
    let mut widths = Vec::with_capacity(specs.len());
    let mut total = 0;
    for spec in &specs {
        offsets.push(total);
        widths.push(spec.width());
        total += spec.width();
    }

    let k = usize::from(hyper.bias) + hyper.k_init;
    let mut z = FeatureMatrix::zeros(n, k);
    for row in 0..n {
        for col in 0..k {
            let on = if hyper.bias && col == 0 {
                true
            } else {
                rng.bernoulli(0.5)
            };
            z.set(row, col, u8::from(on));
        }
    }

    let spacing = hyper.sigma_theta2.sqrt() / 2.0;
    let theta: Vec<Option<Thresholds>> = specs
        .iter()
        .map(|s| {
            (s.kind == AttributeKind::Ordinal).then(|| Thresholds::grid(s.n_categories(), spacing))
        })
        .collect();

    let mut y = DMatrix::zeros(n, total);
    let sigma_y = hyper.sigma_y2.sqrt();
    for (d, spec) in specs.iter().enumerate() {
        let off = offsets[d];
        for row in 0..n {
            let Some(x) = data.get(row, d) else {
                for c in off..off + widths[d] {
                    y[(row, c)] = rng.normal(0.0, sigma_y);
                }
                continue;
            };
            match spec.kind {
                AttributeKind::Real | AttributeKind::PositiveReal => {
                    y[(row, off)] = map_inverse(x, spec.transform, spec.kind)?;
                }
                AttributeKind::Count => {
                    let (lo, hi) = count_interval(x, spec.transform)?;
                    y[(row, off)] = if lo.is_finite() {
                        0.5 * (lo + hi)
                    } else {
                        hi - 0.5
                    };
                }
                AttributeKind::Ordinal => {
                    let th = theta[d].as_ref().expect("ordinal thresholds");
                    let (lo, hi) = th.interval(x as usize);
                    y[(row, off)] = match (lo.is_finite(), hi.is_finite()) {
                        (true, true) => 0.5 * (lo + hi),
                        (false, true) => hi - spacing / 2.0,
                        (true, false) => lo + spacing / 2.0,
                        (false, false) => 0.0,
                    };
                }
                AttributeKind::Categorical => {
                    let obs = off + x as usize - 1;
                    for c in off..off + widths[d] {
                        y[(row, c)] = if c == obs { 0.5 } else { -0.5 };
                    }
                }
            }
        }
    }

    let b = DMatrix::zeros(k, total);
    let p = DMatrix::identity(k, k);
    let mut state = LatentState {
        sigma2: vec![hyper.sigma_y2; specs.len()],
        specs,
        hyper: hyper.clone(),
        counts: Vec::new(),
        z,
        b,
        y,
        theta,
        chol: CholeskyFactor::factor(&p)?,
        p,
        lambda: DMatrix::zeros(k, total),
        pinned: vec![false; n],
        offsets,
        widths,
        sweeps: 0,
    };
    state.refresh()?;
    Ok(state)
}
