//! Mapping functions from the real line to each observation space, their
//! inverses, and the per-type likelihood of an observation given the latent
//! linear predictor `m = z·b`.

use serde::{Deserialize, Serialize};

use crate::data::AttributeKind;
use crate::error::{GlfmError, Result};
use crate::special::{ln_norm_cdf_diff, norm_cdf, norm_cdf_diff, GaussHermite, LN_SQRT_2PI};

/// Shift and scale of a continuous or count mapping: `x = f(w·y + mu)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformParams {
    pub w: f64,
    pub mu: f64,
}

impl TransformParams {
    pub fn new(w: f64, mu: f64) -> Result<Self> {
        if !(w > 0.0) || !w.is_finite() || !mu.is_finite() {
            return Err(GlfmError::InvalidArgument(format!(
                "transform needs w > 0 and finite mu, got w={w}, mu={mu}"
            )));
        }
        Ok(TransformParams { w, mu })
    }

    pub fn identity() -> Self {
        TransformParams { w: 1.0, mu: 0.0 }
    }
}

impl Default for TransformParams {
    fn default() -> Self {
        Self::identity()
    }
}

/// Ordinal cut points `θ_1 < … < θ_{R-1}` with `θ_1 = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Thresholds(Vec<f64>);

impl Thresholds {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(GlfmError::InvalidArgument("no thresholds".into()));
        }
        if values[0] != 0.0 {
            return Err(GlfmError::InvalidArgument(format!(
                "first threshold must be 0, got {}",
                values[0]
            )));
        }
        if values.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(GlfmError::InvalidArgument(format!(
                "thresholds not strictly increasing: {values:?}"
            )));
        }
        Ok(Thresholds(values))
    }

    /// Equally spaced grid `θ_r = (r-1)·spacing`.
    pub fn grid(n_categories: usize, spacing: f64) -> Self {
        Thresholds(
            (0..n_categories.saturating_sub(1))
                .map(|r| r as f64 * spacing)
                .collect(),
        )
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub(crate) fn set(&mut self, idx: usize, value: f64) {
        self.0[idx] = value;
    }

    pub fn n_categories(&self) -> usize {
        self.0.len() + 1
    }

    /// Interval `(θ_{r-1}, θ_r]` of category `r` (1-based), with infinite
    /// outer bounds.
    pub fn interval(&self, r: usize) -> (f64, f64) {
        let lo = if r <= 1 {
            f64::NEG_INFINITY
        } else {
            self.0[r - 2]
        };
        let hi = if r > self.0.len() {
            f64::INFINITY
        } else {
            self.0[r - 1]
        };
        (lo, hi)
    }

    pub fn is_strictly_increasing(&self) -> bool {
        self.0.windows(2).all(|w| w[0] < w[1])
    }
}

/// `ln(1 + e^a)` without overflow.
pub fn softplus(a: f64) -> f64 {
    a.max(0.0) + (-a.abs()).exp().ln_1p()
}

/// Inverse of [`softplus`] for `x > 0`: `ln(e^x - 1)`.
pub fn softplus_inv(x: f64) -> f64 {
    x + (-(-x).exp_m1()).ln()
}

/// Forward mapping of a pseudo-observation to the observation space.
///
/// Categorical data is not a function of a single pseudo-observation and is
/// rejected here.
pub fn map_forward(
    y: f64,
    params: TransformParams,
    kind: AttributeKind,
    theta: Option<&Thresholds>,
) -> Result<f64> {
    let a = params.w * y + params.mu;
    match kind {
        AttributeKind::Real => Ok(a),
        AttributeKind::PositiveReal => Ok(softplus(a)),
        AttributeKind::Count => Ok(softplus(a).floor()),
        AttributeKind::Ordinal => {
            let theta = theta.ok_or_else(|| {
                GlfmError::InvalidArgument("ordinal mapping needs thresholds".into())
            })?;
            let r = theta.as_slice().iter().take_while(|&&t| y > t).count() + 1;
            Ok(r as f64)
        }
        AttributeKind::Categorical => Err(GlfmError::InvalidArgument(
            "categorical mapping takes one pseudo-observation per category".into(),
        )),
    }
}

/// Inverse mapping `f⁻¹(x)`. For counts, `x = 0` maps to `-∞`.
pub fn map_inverse(x: f64, params: TransformParams, kind: AttributeKind) -> Result<f64> {
    match kind {
        AttributeKind::Real => Ok((x - params.mu) / params.w),
        AttributeKind::PositiveReal => {
            if !(x > 0.0) {
                return Err(GlfmError::Domain {
                    what: "the positive-real inverse mapping",
                    value: x,
                });
            }
            Ok((softplus_inv(x) - params.mu) / params.w)
        }
        AttributeKind::Count => {
            if !(x >= 0.0) {
                return Err(GlfmError::Domain {
                    what: "the count inverse mapping",
                    value: x,
                });
            }
            if x == 0.0 {
                return Ok(f64::NEG_INFINITY);
            }
            Ok((softplus_inv(x) - params.mu) / params.w)
        }
        AttributeKind::Categorical | AttributeKind::Ordinal => Err(GlfmError::InvalidArgument(
            format!("{kind} columns have no inverse mapping"),
        )),
    }
}

/// `ln |d f⁻¹/dx|` for continuous kinds.
pub fn ln_inverse_jacobian(x: f64, params: TransformParams, kind: AttributeKind) -> Result<f64> {
    match kind {
        AttributeKind::Real => Ok(-params.w.ln()),
        AttributeKind::PositiveReal => {
            if !(x > 0.0) {
                return Err(GlfmError::Domain {
                    what: "the positive-real Jacobian",
                    value: x,
                });
            }
            // e^x/(e^x - 1) = 1/(1 - e^{-x})
            Ok(-params.w.ln() - (-(-x).exp_m1()).ln())
        }
        _ => Err(GlfmError::InvalidArgument(format!(
            "{kind} columns have no density Jacobian"
        ))),
    }
}

/// `ln N(x | mean, var)`.
pub fn ln_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * d * d / var - 0.5 * var.ln() - LN_SQRT_2PI
}

/// Log density of a continuous observation: Gaussian in the inverse-mapped
/// space with variance `σ_y² + σ_u²`, plus the log-Jacobian.
pub fn loglik_continuous(
    x: f64,
    m: f64,
    total_var: f64,
    params: TransformParams,
    kind: AttributeKind,
) -> Result<f64> {
    if !(total_var > 0.0) {
        return Err(GlfmError::InvalidArgument(format!(
            "variance must be positive, got {total_var}"
        )));
    }
    let y = map_inverse(x, params, kind)?;
    Ok(ln_normal_pdf(y, m, total_var) + ln_inverse_jacobian(x, params, kind)?)
}

/// Probability of category `r` (1-based) under the multinomial probit link,
/// given the per-category predictors `m_j = z·b_j`:
/// `E_u[∏_{j≠r} Φ(u + m_r - m_j)]` with `u ~ N(0, σ_y²)`.
pub fn prob_categorical(r: usize, predictors: &[f64], sigma_y: f64) -> Result<f64> {
    prob_categorical_with(r, predictors, sigma_y, GaussHermite::default_rule())
}

pub fn prob_categorical_with(
    r: usize,
    predictors: &[f64],
    sigma_y: f64,
    rule: &GaussHermite,
) -> Result<f64> {
    if r == 0 || r > predictors.len() {
        return Err(GlfmError::InvalidArgument(format!(
            "category {r} outside 1..={}",
            predictors.len()
        )));
    }
    let mr = predictors[r - 1];
    let p = rule.expect_normal(sigma_y, |u| {
        predictors
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != r - 1)
            .map(|(_, &mj)| norm_cdf(u + mr - mj))
            .product()
    });
    Ok(p.clamp(0.0, 1.0))
}

/// All category probabilities at once.
pub fn categorical_probs(predictors: &[f64], sigma_y: f64) -> Vec<f64> {
    (1..=predictors.len())
        .map(|r| prob_categorical(r, predictors, sigma_y).expect("r in range"))
        .collect()
}

/// Ordered-probit probability of category `r` (1-based).
pub fn prob_ordinal(r: usize, m: f64, theta: &Thresholds, sigma_y: f64) -> Result<f64> {
    let (lo, hi) = ordinal_standardized(r, m, theta, sigma_y)?;
    Ok(norm_cdf_diff(lo, hi))
}

pub fn ln_prob_ordinal(r: usize, m: f64, theta: &Thresholds, sigma_y: f64) -> Result<f64> {
    let (lo, hi) = ordinal_standardized(r, m, theta, sigma_y)?;
    Ok(ln_norm_cdf_diff(lo, hi))
}

fn ordinal_standardized(r: usize, m: f64, theta: &Thresholds, sigma_y: f64) -> Result<(f64, f64)> {
    if r == 0 || r > theta.n_categories() {
        return Err(GlfmError::InvalidArgument(format!(
            "category {r} outside 1..={}",
            theta.n_categories()
        )));
    }
    let (lo, hi) = theta.interval(r);
    Ok(((lo - m) / sigma_y, (hi - m) / sigma_y))
}

/// Pseudo-observation interval `[f⁻¹(x), f⁻¹(x+1))` of a count.
pub fn count_interval(x: f64, params: TransformParams) -> Result<(f64, f64)> {
    if !(x >= 0.0) || x.fract() != 0.0 {
        return Err(GlfmError::Domain {
            what: "count support",
            value: x,
        });
    }
    Ok((
        map_inverse(x, params, AttributeKind::Count)?,
        map_inverse(x + 1.0, params, AttributeKind::Count)?,
    ))
}

/// Probability of count `x` given predictor `m`.
pub fn prob_count(x: f64, m: f64, params: TransformParams, sigma_y: f64) -> Result<f64> {
    let (lo, hi) = count_interval(x, params)?;
    Ok(norm_cdf_diff((lo - m) / sigma_y, (hi - m) / sigma_y))
}

pub fn ln_prob_count(x: f64, m: f64, params: TransformParams, sigma_y: f64) -> Result<f64> {
    let (lo, hi) = count_interval(x, params)?;
    Ok(ln_norm_cdf_diff((lo - m) / sigma_y, (hi - m) / sigma_y))
}
