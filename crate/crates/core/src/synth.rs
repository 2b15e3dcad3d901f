//! Draw tables from the generative model itself, for testing and
//! benchmarking.

use nalgebra::DMatrix;

use crate::data::{AttributeKind, AttributeSpec, DataMatrix};
use crate::error::{GlfmError, Result};
use crate::gibbs::FeatureMatrix;
use crate::likelihoods::{softplus, Thresholds};
use crate::rng::GlfmRng;

const POSITIVE_CENTRE: f64 = 2.0;

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub n_rows: usize,
    /// Kind of each attribute and, for categorical/ordinal kinds, the
    /// number of categories.
    pub attributes: Vec<(AttributeKind, usize)>,
    /// Latent features besides the bias.
    pub k_true: usize,
    pub bias: bool,
    /// Probability that a non-bias feature is active in a row.
    pub activation: f64,
    /// Standard deviation of the true weights.
    pub weight_std: f64,
    /// Standard deviation of the pseudo-observation noise.
    pub noise_std: f64,
    /// Spacing of the ordinal thresholds (`θ_1 = 0`).
    pub threshold_step: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_rows: 200,
            attributes: vec![(AttributeKind::Real, 0)],
            k_true: 3,
            bias: true,
            activation: 0.3,
            weight_std: 2.0,
            noise_std: 0.5,
            threshold_step: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Synthetic {
    pub data: DataMatrix,
    pub z: FeatureMatrix,
    /// True weights, one matrix per attribute (`K × width`).
    pub weights: Vec<DMatrix<f64>>,
}

/// Generate a fully observed table. Observations are produced with unit
/// shift/scale mappings; the returned table carries freshly fitted
/// transforms.
pub fn generate(config: &SynthConfig, rng: &mut GlfmRng) -> Result<Synthetic> {
    if config.n_rows == 0 || config.attributes.is_empty() {
        return Err(GlfmError::InvalidArgument(
            "synthetic table needs rows and attributes".into(),
        ));
    }
    let n = config.n_rows;
    let k = config.k_true + usize::from(config.bias);
    let mut z = FeatureMatrix::zeros(n, k);
    for row in 0..n {
        for col in 0..k {
            let on = (config.bias && col == 0) || rng.bernoulli(config.activation);
            z.set(row, col, u8::from(on));
        }
    }

    let d_total = config.attributes.len();
    let mut specs = Vec::with_capacity(d_total);
    let mut weights = Vec::with_capacity(d_total);
    let mut cells = vec![0.0; n * d_total];
    for (d, &(kind, r)) in config.attributes.iter().enumerate() {
        let name = format!("{}{}", kind.tag(), d);
        let mut spec = AttributeSpec::new(name, kind);
        if kind.is_finite_discrete() {
            if r < 2 {
                return Err(GlfmError::InvalidArgument(format!(
                    "attribute {d} needs at least two categories"
                )));
            }
            spec = spec.with_categories(r);
        }
        let width = if kind == AttributeKind::Categorical {
            r
        } else {
            1
        };
        let mut b = DMatrix::from_fn(k, width, |_, _| rng.normal(0.0, config.weight_std));
        if kind == AttributeKind::Categorical {
            b.column_mut(width - 1).fill(0.0);
        }
        let theta =
            (kind == AttributeKind::Ordinal).then(|| Thresholds::grid(r, config.threshold_step));
        let y: Vec<Vec<f64>> = (0..n)
            .map(|row| {
                (0..width)
                    .map(|c| {
                        let mean: f64 = (0..k)
                            .filter(|&j| z.get(row, j) == 1)
                            .map(|j| b[(j, c)])
                            .sum();
                        mean + rng.normal(0.0, config.noise_std)
                    })
                    .collect()
            })
            .collect();
        // Positive and count columns are centred so that softplus sees a
        // useful range; the shift is absorbed by the bias weight.
        let shift = if matches!(kind, AttributeKind::PositiveReal | AttributeKind::Count) {
            POSITIVE_CENTRE - y.iter().map(|v| v[0]).sum::<f64>() / n as f64
        } else {
            0.0
        };
        for (row, y) in y.iter().enumerate() {
            cells[row * d_total + d] = match kind {
                AttributeKind::Real => y[0],
                AttributeKind::PositiveReal => softplus(y[0] + shift).max(f64::MIN_POSITIVE),
                AttributeKind::Count => softplus(y[0] + shift).floor(),
                AttributeKind::Ordinal => {
                    let t = theta.as_ref().expect("ordinal thresholds");
                    (t.as_slice().iter().take_while(|&&v| y[0] > v).count() + 1) as f64
                }
                AttributeKind::Categorical => {
                    let mut best = 0;
                    for (c, &v) in y.iter().enumerate() {
                        if v > y[best] {
                            best = c;
                        }
                    }
                    (best + 1) as f64
                }
            };
        }
        specs.push(spec);
        weights.push(b);
    }
    let mut data = DataMatrix::from_encoded(specs, cells, vec![false; n * d_total])?;
    data.fit_transforms();
    Ok(Synthetic { data, z, weights })
}
