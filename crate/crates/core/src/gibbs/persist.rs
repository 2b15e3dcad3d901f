//! JSON form of a sampler state.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::state::{FeatureMatrix, LatentState};
use super::Hyperparams;
use crate::data::{AttributeKind, AttributeSpec};
use crate::error::{GlfmError, Result};
use crate::likelihoods::Thresholds;
use crate::linalg::CholeskyFactor;
use crate::rng::GlfmRng;

const FORMAT_VERSION: u32 = 1;

/// Serialized state. `z` holds one string of `0`/`1` per row; weights and
/// pseudo-observations are split per attribute (`weights[d]` is
/// `K × width_d`, `pseudo_obs[d]` is `N × width_d`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateDocument {
    pub format: u32,
    pub specs: Vec<AttributeSpec>,
    pub hyper: Hyperparams,
    pub z: Vec<String>,
    pub weights: Vec<Vec<Vec<f64>>>,
    pub pseudo_obs: Vec<Vec<Vec<f64>>>,
    pub theta: Vec<Option<Thresholds>>,
    pub sigma2: Vec<f64>,
    #[serde(default)]
    pub pinned: Vec<usize>,
    pub sweeps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rng: Option<GlfmRng>,
}

fn block(m: &DMatrix<f64>, off: usize, width: usize) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (off..off + width).map(|c| m[(i, c)]).collect())
        .collect()
}

impl StateDocument {
    pub fn from_state(state: &LatentState, rng: Option<&GlfmRng>) -> Self {
        let z = (0..state.n_rows())
            .map(|n| {
                state
                    .z
                    .row(n)
                    .iter()
                    .map(|&b| if b == 1 { '1' } else { '0' })
                    .collect()
            })
            .collect();
        let dims = 0..state.n_dims();
        StateDocument {
            format: FORMAT_VERSION,
            specs: state.specs.clone(),
            hyper: state.hyper.clone(),
            z,
            weights: dims
                .clone()
                .map(|d| block(&state.b, state.offsets[d], state.widths[d]))
                .collect(),
            pseudo_obs: dims
                .map(|d| block(&state.y, state.offsets[d], state.widths[d]))
                .collect(),
            theta: state.theta.clone(),
            sigma2: state.sigma2.clone(),
            pinned: (0..state.n_rows()).filter(|&n| state.pinned[n]).collect(),
            sweeps: state.sweeps,
            rng: rng.cloned(),
        }
    }

    pub fn into_state(self) -> Result<(LatentState, Option<GlfmRng>)> {
        let bad = |msg: String| GlfmError::InvalidArgument(format!("state file: {msg}"));
        if self.format != FORMAT_VERSION {
            return Err(bad(format!("unsupported format {}", self.format)));
        }
        let n_dims = self.specs.len();
        if self.weights.len() != n_dims
            || self.pseudo_obs.len() != n_dims
            || self.theta.len() != n_dims
            || self.sigma2.len() != n_dims
        {
            return Err(bad("per-attribute arrays disagree in length".into()));
        }
        let rows: Vec<Vec<u8>> = self
            .z
            .iter()
            .map(|s| {
                s.chars()
                    .map(|ch| match ch {
                        '0' => Ok(0),
                        '1' => Ok(1),
                        other => Err(bad(format!("feature row holds '{other}'"))),
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        let z = FeatureMatrix::from_rows(&rows)?;
        let (n, k) = (z.n_rows(), z.n_cols());

        let mut offsets = Vec::with_capacity(n_dims);
        let mut widths = Vec::with_capacity(n_dims);
        let mut total = 0;
        for spec in &self.specs {
            offsets.push(total);
            widths.push(spec.width());
            total += spec.width();
        }
        let mut b = DMatrix::zeros(k, total);
        let mut y = DMatrix::zeros(n, total);
        for d in 0..n_dims {
            let (off, w) = (offsets[d], widths[d]);
            let wd = &self.weights[d];
            if wd.len() != k || wd.iter().any(|r| r.len() != w) {
                return Err(bad(format!(
                    "weights of attribute {d} have the wrong shape"
                )));
            }
            let yd = &self.pseudo_obs[d];
            if yd.len() != n || yd.iter().any(|r| r.len() != w) {
                return Err(bad(format!(
                    "pseudo-observations of attribute {d} have the wrong shape"
                )));
            }
            for i in 0..k {
                for j in 0..w {
                    b[(i, off + j)] = wd[i][j];
                }
            }
            for i in 0..n {
                for j in 0..w {
                    y[(i, off + j)] = yd[i][j];
                }
            }
            let is_ordinal = self.specs[d].kind == AttributeKind::Ordinal;
            if is_ordinal != self.theta[d].is_some() {
                return Err(bad(format!(
                    "thresholds of attribute {d} do not match its kind"
                )));
            }
        }
        let mut pinned = vec![false; n];
        for &row in &self.pinned {
            *pinned
                .get_mut(row)
                .ok_or_else(|| bad(format!("pinned row {row} out of range")))? = true;
        }
        let mut state = LatentState {
            specs: self.specs,
            hyper: self.hyper,
            counts: Vec::new(),
            z,
            b,
            y,
            theta: self.theta,
            sigma2: self.sigma2,
            p: DMatrix::identity(k, k),
            lambda: DMatrix::zeros(k, total),
            chol: CholeskyFactor::factor(&DMatrix::identity(k, k))?,
            pinned,
            offsets,
            widths,
            sweeps: self.sweeps,
        };
        state.refresh()?;
        Ok((state, self.rng))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
