//! Sampler settings assembled from flags, an optional TOML file, and the
//! library defaults, in that order of precedence.

use std::path::Path;

use anyhow::{Context, Result};
use glfm_core::gibbs::{BirthMode, Hyperparams};
use serde::Deserialize;

use crate::args::{BirthArg, HyperArgs};
use crate::UsageError;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub alpha: Option<f64>,
    pub sigma_b2: Option<f64>,
    pub sigma_y2: Option<f64>,
    pub sigma_u2: Option<f64>,
    pub sigma_theta2: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub k_max: Option<usize>,
    pub k_init: Option<usize>,
    pub bias: Option<bool>,
    pub sample_variance: Option<bool>,
    pub iterations: Option<usize>,
    pub burn_in: Option<usize>,
    pub seed: Option<u64>,
    pub birth: Option<BirthMode>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text)
            .map_err(|e| UsageError(format!("config {}: {e}", path.display())).into())
    }
}

pub fn resolve(args: &HyperArgs) -> Result<Hyperparams> {
    let file = match &args.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let d = Hyperparams::default();
    let iterations = args.iterations.or(file.iterations).unwrap_or(d.iterations);
    let hp = Hyperparams {
        alpha: args.alpha.or(file.alpha).unwrap_or(d.alpha),
        sigma_b2: args.sigma_b2.or(file.sigma_b2).unwrap_or(d.sigma_b2),
        sigma_y2: args.sigma_y2.or(file.sigma_y2).unwrap_or(d.sigma_y2),
        sigma_u2: args.sigma_u2.or(file.sigma_u2).unwrap_or(d.sigma_u2),
        sigma_theta2: args
            .sigma_theta2
            .or(file.sigma_theta2)
            .unwrap_or(d.sigma_theta2),
        beta1: args.beta1.or(file.beta1).unwrap_or(d.beta1),
        beta2: args.beta2.or(file.beta2).unwrap_or(d.beta2),
        k_max: args.k_max.or(file.k_max).unwrap_or(d.k_max),
        k_init: args.k_init.or(file.k_init).unwrap_or(d.k_init),
        bias: args.bias || file.bias.unwrap_or(d.bias),
        sample_variance: args.sample_variance || file.sample_variance.unwrap_or(d.sample_variance),
        iterations,
        burn_in: args.burn_in.or(file.burn_in).unwrap_or(iterations / 5),
        seed: args.seed.or(file.seed).unwrap_or(d.seed),
        birth: args
            .birth
            .map(|b| match b {
                BirthArg::Posterior => BirthMode::Posterior,
                BirthArg::Prior => BirthMode::Prior,
            })
            .or(file.birth)
            .unwrap_or(d.birth),
        max_births: d.max_births,
    };
    hp.validate().map_err(|e| UsageError(e.to_string()))?;
    if args.chains == 0 {
        return Err(UsageError("--chains must be at least 1".into()).into());
    }
    Ok(hp)
}
