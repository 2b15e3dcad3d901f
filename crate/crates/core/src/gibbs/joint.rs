//! Complete-data log joint density, used as a convergence diagnostic.

use std::collections::HashMap;

use libm::lgamma;

use super::state::{FeatureMatrix, LatentState};
use crate::data::{AttributeKind, DataMatrix};
use crate::error::{GlfmError, Result};
use crate::likelihoods::{count_interval, ln_normal_pdf, loglik_continuous};

/// Log probability of the equivalence class of `z` under the IBP, counting
/// only columns `first..`. Rows are exchangeable; columns are compared
/// through their histories.
pub fn ibp_log_prior(z: &FeatureMatrix, first: usize, alpha: f64) -> f64 {
    let n = z.n_rows();
    let k = z.n_cols().saturating_sub(first);
    let harmonic: f64 = (1..=n).map(|j| 1.0 / j as f64).sum();
    if k == 0 {
        return -alpha * harmonic;
    }
    if alpha == 0.0 {
        return f64::NEG_INFINITY;
    }
    let mut histories: HashMap<Vec<u8>, usize> = HashMap::new();
    let mut total = k as f64 * alpha.ln() - alpha * harmonic;
    let ln_n_fact = lgamma(n as f64 + 1.0);
    for col in first..z.n_cols() {
        let history: Vec<u8> = (0..n).map(|row| z.get(row, col)).collect();
        let m = history.iter().filter(|&&b| b == 1).count();
        if m == 0 {
            return f64::NEG_INFINITY;
        }
        *histories.entry(history).or_default() += 1;
        total += lgamma((n - m) as f64 + 1.0) + lgamma(m as f64) - ln_n_fact;
    }
    for &count in histories.values() {
        total -= lgamma(count as f64 + 1.0);
    }
    total
}

/// `ln p(X_obs, Y, Z, B, θ, σ²)` for the current state.
///
/// Pieces: the IBP prior on the non-bias columns of `Z`; Gaussian priors on
/// the free weights and on the free thresholds; the Gaussian
/// pseudo-observation model; for continuous cells the density of the
/// inverse-mapped observation around its pseudo-observation (with the
/// Jacobian of the mapping); for discrete cells zero when the
/// pseudo-observations are consistent with the observation; and the
/// inverse-gamma prior on `σ²` when it is sampled.
pub fn log_joint(state: &LatentState, data: &DataMatrix) -> Result<f64> {
    if data.n_rows() != state.n_rows() || data.n_cols() != state.n_dims() {
        return Err(GlfmError::InvalidArgument(
            "state and data have different shapes".into(),
        ));
    }
    let hp = &state.hyper;
    let mut total = ibp_log_prior(&state.z, state.first_free(), hp.alpha);

    for d in 0..state.n_dims() {
        for c in state.free_columns(d) {
            for k in 0..state.k_plus() {
                total += ln_normal_pdf(state.b[(k, c)], 0.0, hp.sigma_b2);
            }
        }
    }

    for n in 0..state.n_rows() {
        let z = state.z.row(n);
        for d in 0..state.n_dims() {
            let s2 = state.sigma2[d];
            let off = state.offsets[d];
            for c in off..off + state.widths[d] {
                total += ln_normal_pdf(state.y[(n, c)], state.predictor(z, c), s2);
            }
            let Some(x) = data.get(n, d) else {
                continue;
            };
            let spec = &state.specs[d];
            let y = state.y[(n, off)];
            let consistent = match spec.kind {
                AttributeKind::Real | AttributeKind::PositiveReal => {
                    total += loglik_continuous(x, y, hp.sigma_u2, spec.transform, spec.kind)?;
                    true
                }
                AttributeKind::Count => {
                    let (lo, hi) = count_interval(x, spec.transform)?;
                    lo <= y && y <= hi
                }
                AttributeKind::Ordinal => {
                    let theta = state.theta[d].as_ref().expect("ordinal thresholds");
                    let (lo, hi) = theta.interval(x as usize);
                    lo <= y && y <= hi
                }
                AttributeKind::Categorical => {
                    let obs = off + x as usize - 1;
                    (off..off + state.widths[d])
                        .all(|c| c == obs || state.y[(n, c)] <= state.y[(n, obs)])
                }
            };
            if !consistent {
                return Ok(f64::NEG_INFINITY);
            }
        }
    }

    for theta in state.theta.iter().flatten() {
        for &t in &theta.as_slice()[1..] {
            total += ln_normal_pdf(t, 0.0, hp.sigma_theta2);
        }
    }

    if hp.sample_variance {
        let (a, b) = (hp.beta1, hp.beta2);
        for &s2 in &state.sigma2 {
            total += a * b.ln() - lgamma(a) - (a + 1.0) * s2.ln() - b / s2;
        }
    }
    Ok(total)
}
