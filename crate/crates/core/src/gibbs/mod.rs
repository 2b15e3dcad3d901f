//! Accelerated collapsed Gibbs sampler.
//!
//! One sweep resamples every row of the binary feature matrix `Z` with the
//! weights integrated out (using the maintained natural parameters `P` and
//! `λ`), proposes new features per row, and then for each attribute draws
//! the weights, the Gaussian pseudo-observations, and the auxiliary
//! variables (ordinal thresholds, pseudo-observation variance).

mod chain;
mod joint;
mod persist;
mod sampler;
mod state;

pub use chain::{
    continue_chain, run_chain, run_chain_with, run_chains, ChainOptions, ChainOutput, Trace,
    TraceRecord,
};
pub use joint::{ibp_log_prior, log_joint};
pub use persist::StateDocument;
pub use sampler::{
    birth_features, prune_features, run_iteration, sample_noise_variance, sample_pseudo_obs,
    sample_thresholds, sample_weights, sample_z_row, z_conditional, z_conditional_uninverted,
};
pub use state::{init_state, FeatureMatrix, LatentState};

use serde::{Deserialize, Serialize};

use crate::error::{GlfmError, Result};

/// How the number of new features for a row is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BirthMode {
    /// Poisson(α/N) prior times the collapsed likelihood of the row,
    /// truncated to at most `max_births` new features.
    #[default]
    Posterior,
    /// Plain Poisson(α/N) draw.
    Prior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub alpha: f64,
    pub sigma_b2: f64,
    pub sigma_y2: f64,
    pub sigma_u2: f64,
    pub sigma_theta2: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub k_max: usize,
    pub k_init: usize,
    pub bias: bool,
    pub sample_variance: bool,
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub birth: BirthMode,
    pub max_births: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            alpha: 5.0,
            sigma_b2: 1.0,
            sigma_y2: 1.0,
            sigma_u2: 0.01,
            sigma_theta2: 1.0,
            beta1: 1.0,
            beta2: 1.0,
            k_max: 50,
            k_init: 2,
            bias: false,
            sample_variance: false,
            iterations: 1000,
            burn_in: 200,
            seed: 0,
            birth: BirthMode::Posterior,
            max_births: 3,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(GlfmError::Hyperparam(msg));
        let positive = [
            ("sigma_b2", self.sigma_b2),
            ("sigma_y2", self.sigma_y2),
            ("sigma_u2", self.sigma_u2),
            ("sigma_theta2", self.sigma_theta2),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return bad(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return bad(format!("alpha must be non-negative, got {}", self.alpha));
        }
        if self.k_max < 1 {
            return bad("k_max must be at least 1".into());
        }
        if self.k_init + usize::from(self.bias) > self.k_max {
            return bad(format!(
                "k_init ({}) plus bias exceeds k_max ({})",
                self.k_init, self.k_max
            ));
        }
        if self.iterations > 0 && self.burn_in >= self.iterations {
            return bad(format!(
                "burn_in ({}) must be below iterations ({})",
                self.burn_in, self.iterations
            ));
        }
        Ok(())
    }
}
