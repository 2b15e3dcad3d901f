#![allow(dead_code)]

use glfm_core::data::{AttributeKind, AttributeSpec, DataMatrix};
use glfm_core::gibbs::{init_state, FeatureMatrix, Hyperparams, LatentState};
use glfm_core::rng::GlfmRng;
use nalgebra::DMatrix;

/// Table with one attribute of `kind`, encoded values, identity transforms.
pub fn column(
    kind: AttributeKind,
    categories: Option<usize>,
    values: &[Option<f64>],
) -> DataMatrix {
    let mut spec = AttributeSpec::new("x", kind);
    if let Some(r) = categories {
        spec = spec.with_categories(r);
    }
    let cells = values.iter().map(|v| v.unwrap_or(f64::NAN)).collect();
    let missing = values.iter().map(Option::is_none).collect();
    DataMatrix::from_encoded(vec![spec], cells, missing).unwrap()
}

pub fn state_for(data: &DataMatrix, hyper: &Hyperparams, seed: u64) -> LatentState {
    init_state(&mut GlfmRng::new(seed), data, hyper).unwrap()
}

/// Replace `Z` (and resize `B` to match, zero-filled) and rebuild `P`, `λ`.
pub fn with_z(state: &mut LatentState, rows: &[Vec<u8>]) {
    state.z = FeatureMatrix::from_rows(rows).unwrap();
    state.b = DMatrix::zeros(state.z.n_cols(), state.total_width());
    state.refresh().unwrap();
}

pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}
