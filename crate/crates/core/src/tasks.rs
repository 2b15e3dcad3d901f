//! Applications of a learned state: MAP completion of missing cells,
//! held-out scoring, per-pattern attribute distributions, and feature-pattern
//! summaries.

use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::{AttributeKind, AttributeSpec, DataMatrix, Preprocess};
use crate::error::{GlfmError, Result};
use crate::gibbs::{run_chain, Hyperparams, LatentState, Trace};
use crate::likelihoods::{
    categorical_probs, ln_prob_count, ln_prob_ordinal, loglik_continuous, map_forward, map_inverse,
    prob_categorical, prob_count, prob_ordinal,
};
use crate::rng::GlfmRng;
use crate::special::ln_norm_cdf_diff;

/// Floor applied to probabilities before taking logs.
const MIN_PROB: f64 = 1e-300;

fn check_dim(state: &LatentState, d: usize) -> Result<()> {
    if d >= state.n_dims() {
        return Err(GlfmError::InvalidArgument(format!(
            "attribute {d} out of range for {} attributes",
            state.n_dims()
        )));
    }
    Ok(())
}

fn check_pattern(state: &LatentState, z: &[u8]) -> Result<()> {
    if z.len() != state.k_plus() {
        return Err(GlfmError::InvalidArgument(format!(
            "feature vector has length {}, state has {} features",
            z.len(),
            state.k_plus()
        )));
    }
    Ok(())
}

fn predictors(state: &LatentState, z: &[u8], d: usize) -> Vec<f64> {
    let off = state.offsets[d];
    (off..off + state.widths[d])
        .map(|c| state.predictor(z, c))
        .collect()
}

/// Index (1-based) of the largest probability, ties going to the lowest.
fn argmax(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    best + 1
}

/// Category probabilities of attribute `d` for a feature vector.
pub fn category_probs(state: &LatentState, z: &[u8], d: usize) -> Result<Vec<f64>> {
    check_dim(state, d)?;
    check_pattern(state, z)?;
    let spec = &state.specs[d];
    let sd = state.sigma2[d].sqrt();
    let preds = predictors(state, z, d);
    match spec.kind {
        AttributeKind::Categorical => Ok(categorical_probs(&preds, sd)),
        AttributeKind::Ordinal => {
            let theta = state.theta[d].as_ref().expect("ordinal thresholds");
            (1..=theta.n_categories())
                .map(|r| prob_ordinal(r, preds[0], theta, sd))
                .collect()
        }
        kind => Err(GlfmError::InvalidArgument(format!(
            "{kind} attributes have no finite category set"
        ))),
    }
}

/// Point estimate of attribute `d` for feature vector `z`, in raw units
/// (category codes for categorical and ordinal attributes).
///
/// Continuous kinds use the transformed latent mean `f(z·b)`; finite
/// discrete kinds take the most probable category; counts take the most
/// probable of the three integers around `floor(f(z·b))`.
pub fn compute_map(z: &[u8], state: &LatentState, d: usize) -> Result<f64> {
    check_dim(state, d)?;
    check_pattern(state, z)?;
    let spec = &state.specs[d];
    let m = predictors(state, z, d)[0];
    match spec.kind {
        AttributeKind::Real | AttributeKind::PositiveReal => {
            let v = map_forward(m, spec.transform, spec.kind, None)?;
            Ok(spec.preprocess.invert(v))
        }
        AttributeKind::Count => {
            let sd = state.sigma2[d].sqrt();
            let center = map_forward(m, spec.transform, AttributeKind::Count, None)?;
            let mut best = (f64::NEG_INFINITY, 0.0);
            for x in [center - 1.0, center, center + 1.0] {
                if x < 0.0 {
                    continue;
                }
                let p = prob_count(x, m, spec.transform, sd)?;
                if p > best.0 {
                    best = (p, x);
                }
            }
            Ok(best.1)
        }
        AttributeKind::Categorical | AttributeKind::Ordinal => {
            Ok(argmax(&category_probs(state, z, d)?) as f64)
        }
    }
}

/// Render a raw-unit value the way the input table would hold it.
pub fn render_value(spec: &AttributeSpec, raw: f64) -> String {
    match spec.kind {
        AttributeKind::Categorical | AttributeKind::Ordinal => spec.label(raw.round() as usize),
        AttributeKind::Count => format!("{}", raw.round() as i64),
        AttributeKind::Real | AttributeKind::PositiveReal => format!("{raw}"),
    }
}

#[derive(Debug, Clone)]
pub struct CompletionResult {
    pub header: Vec<String>,
    /// Row-major `N × D` cells; observed cells carry their input text.
    pub cells: Vec<String>,
    pub hidden: LatentState,
    pub trace: Trace,
}

impl CompletionResult {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_table(out, &self.header, &self.cells)
    }
}

pub(crate) fn write_table<W: Write>(out: W, header: &[String], cells: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for row in cells.chunks(header.len().max(1)) {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Fill every missing cell of `data` with its MAP value under `state`.
pub fn impute(state: &LatentState, data: &DataMatrix) -> Result<Vec<String>> {
    if data.n_rows() != state.n_rows() || data.n_cols() != state.n_dims() {
        return Err(GlfmError::InvalidArgument(
            "state and data have different shapes".into(),
        ));
    }
    let mut cells = Vec::with_capacity(data.n_rows() * data.n_cols());
    for n in 0..data.n_rows() {
        let z = state.z.row(n);
        for d in 0..data.n_cols() {
            if data.is_missing(n, d) {
                let raw = compute_map(z, state, d)?;
                cells.push(render_value(&state.specs[d], raw));
            } else {
                cells.push(data.raw(n, d).to_string());
            }
        }
    }
    Ok(cells)
}

/// Run a chain on `data` and impute its missing cells from the final state.
pub fn complete(data: &DataMatrix, hyper: &Hyperparams) -> Result<CompletionResult> {
    let out = run_chain(data, hyper)?;
    let cells = impute(&out.state, data)?;
    Ok(CompletionResult {
        header: data.specs().iter().map(|s| s.name.clone()).collect(),
        cells,
        hidden: out.state,
        trace: out.trace,
    })
}

/// Log-likelihood of observation `x` (encoded units) in cell `(n, d)`,
/// expressed per raw unit for continuous kinds.
pub fn cell_loglik(state: &LatentState, n: usize, d: usize, x: f64) -> Result<f64> {
    check_dim(state, d)?;
    let spec = &state.specs[d];
    let z = state.z.row(n);
    let preds = predictors(state, z, d);
    let s2 = state.sigma2[d];
    let sd = s2.sqrt();
    match spec.kind {
        AttributeKind::Real | AttributeKind::PositiveReal => {
            let total = s2 + state.hyper.sigma_u2;
            let ll = loglik_continuous(x, preds[0], total, spec.transform, spec.kind)?;
            Ok(ll + spec.preprocess.ln_abs_derivative(spec.preprocess.invert(x)))
        }
        AttributeKind::Categorical => {
            let p = prob_categorical(x as usize, &preds, sd)?;
            Ok(p.max(MIN_PROB).ln())
        }
        AttributeKind::Ordinal => {
            let theta = state.theta[d].as_ref().expect("ordinal thresholds");
            ln_prob_ordinal(x as usize, preds[0], theta, sd)
        }
        AttributeKind::Count => ln_prob_count(x, preds[0], spec.transform, sd),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeldoutScore {
    /// Average log-likelihood per held-out cell.
    pub mean: f64,
    pub count: usize,
    /// Per-attribute averages; `None` where no cell of the attribute was
    /// held out.
    pub per_dimension: Vec<Option<f64>>,
}

fn heldout_cells(data: &DataMatrix, heldout: &[bool]) -> Result<Vec<(usize, usize, f64)>> {
    let d_total = data.n_cols();
    if heldout.len() != data.n_rows() * d_total {
        return Err(GlfmError::InvalidArgument(format!(
            "held-out mask has {} entries, table has {}",
            heldout.len(),
            data.n_rows() * d_total
        )));
    }
    let mut cells = Vec::new();
    for (idx, &h) in heldout.iter().enumerate() {
        if !h {
            continue;
        }
        let (n, d) = (idx / d_total, idx % d_total);
        let x = data.get(n, d).ok_or_else(|| {
            GlfmError::InvalidArgument(format!(
                "held-out cell ({n}, {d}) is missing in the reference table"
            ))
        })?;
        cells.push((n, d, x));
    }
    if cells.is_empty() {
        return Err(GlfmError::InvalidArgument("held-out mask is empty".into()));
    }
    Ok(cells)
}

fn summarize(n_dims: usize, scored: impl Iterator<Item = (usize, f64)>) -> HeldoutScore {
    let mut sums = vec![0.0; n_dims];
    let mut counts = vec![0usize; n_dims];
    for (d, ll) in scored {
        sums[d] += ll;
        counts[d] += 1;
    }
    let count: usize = counts.iter().sum();
    HeldoutScore {
        mean: sums.iter().sum::<f64>() / count as f64,
        count,
        per_dimension: sums
            .iter()
            .zip(&counts)
            .map(|(&s, &c)| (c > 0).then(|| s / c as f64))
            .collect(),
    }
}

/// Average predictive log-likelihood of the held-out cells. `data` holds
/// the true values; `state` was learned with those cells hidden.
pub fn predictive_loglik(
    state: &LatentState,
    data: &DataMatrix,
    heldout: &[bool],
) -> Result<HeldoutScore> {
    predictive_loglik_averaged(std::slice::from_ref(state), data, heldout)
}

/// As [`predictive_loglik`], with each cell's likelihood averaged over
/// several posterior states before taking the log.
pub fn predictive_loglik_averaged(
    states: &[LatentState],
    data: &DataMatrix,
    heldout: &[bool],
) -> Result<HeldoutScore> {
    if states.is_empty() {
        return Err(GlfmError::InvalidArgument("no states to score".into()));
    }
    let cells = heldout_cells(data, heldout)?;
    let mut scored = Vec::with_capacity(cells.len());
    for &(n, d, x) in &cells {
        let lls = states
            .iter()
            .map(|s| cell_loglik(s, n, d, x))
            .collect::<Result<Vec<_>>>()?;
        scored.push((d, log_mean_exp(&lls)));
    }
    Ok(summarize(data.n_cols(), scored.into_iter()))
}

fn log_mean_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + (sum / values.len() as f64).ln()
}

/// The same table with every attribute declared real-valued, holding raw
/// values (category codes for categorical and ordinal attributes). Shift and
/// scale are refitted.
pub fn all_real(data: &DataMatrix) -> Result<DataMatrix> {
    let specs: Vec<AttributeSpec> = data
        .specs()
        .iter()
        .map(|s| AttributeSpec::new(s.name.clone(), AttributeKind::Real))
        .collect();
    let mut cells = Vec::with_capacity(data.n_rows() * data.n_cols());
    for n in 0..data.n_rows() {
        for (d, spec) in data.specs().iter().enumerate() {
            cells.push(match data.get(n, d) {
                Some(v) if spec.kind.is_continuous() => spec.preprocess.invert(v),
                Some(v) => v,
                None => f64::NAN,
            });
        }
    }
    let mut out = DataMatrix::from_encoded(specs, cells, data.missing_mask().to_vec())?;
    out.fit_transforms();
    Ok(out)
}

/// Held-out score of a model fitted to [`all_real`] data, averaged over
/// `states` like [`predictive_loglik_averaged`]. Cells of attributes whose
/// true kind is discrete are scored by the Gaussian mass of the unit
/// interval around the value; continuous cells by density.
pub fn baseline_loglik(
    states: &[LatentState],
    real_data: &DataMatrix,
    heldout: &[bool],
    true_kinds: &[AttributeKind],
) -> Result<HeldoutScore> {
    if states.is_empty() {
        return Err(GlfmError::InvalidArgument("no states to score".into()));
    }
    if true_kinds.len() != real_data.n_cols() {
        return Err(GlfmError::InvalidArgument(
            "one kind per attribute is required".into(),
        ));
    }
    let cells = heldout_cells(real_data, heldout)?;
    let mut scored = Vec::with_capacity(cells.len());
    for &(n, d, x) in &cells {
        let lls = states
            .iter()
            .map(|state| {
                if !true_kinds[d].is_discrete() {
                    return cell_loglik(state, n, d, x);
                }
                let spec = &state.specs[d];
                let m = state.predictor(state.z.row(n), state.offsets[d]);
                let sd = (state.sigma2[d] + state.hyper.sigma_u2).sqrt();
                let lo = map_inverse(x - 0.5, spec.transform, AttributeKind::Real)?;
                let hi = map_inverse(x + 0.5, spec.transform, AttributeKind::Real)?;
                Ok(ln_norm_cdf_diff((lo - m) / sd, (hi - m) / sd))
            })
            .collect::<Result<Vec<_>>>()?;
        scored.push((d, log_mean_exp(&lls)));
    }
    Ok(summarize(real_data.n_cols(), scored.into_iter()))
}

/// Hide a fraction `p` of the observed cells, chosen uniformly at random.
pub fn mcar_mask(data: &DataMatrix, p: f64, rng: &mut GlfmRng) -> Result<Vec<bool>> {
    if !(0.0..1.0).contains(&p) {
        return Err(GlfmError::InvalidArgument(format!(
            "held-out fraction must lie in [0, 1), got {p}"
        )));
    }
    let mut observed: Vec<usize> = (0..data.missing_mask().len())
        .filter(|&i| !data.missing_mask()[i])
        .collect();
    let take = (p * observed.len() as f64).round() as usize;
    if take >= observed.len() && !observed.is_empty() {
        return Err(GlfmError::InvalidArgument(
            "held-out fraction leaves no training cells".into(),
        ));
    }
    for i in 0..take {
        let j = i + rng.index(observed.len() - i);
        observed.swap(i, j);
    }
    let mut mask = vec![false; data.missing_mask().len()];
    for &idx in &observed[..take] {
        mask[idx] = true;
    }
    Ok(mask)
}

/// Evenly spaced grid over the observed range of a continuous attribute,
/// padded by a tenth of the span on each side.
pub fn default_grid(spec: &AttributeSpec, points: usize) -> Vec<f64> {
    let (lo, hi) = spec.observed_range.unwrap_or((0.0, 1.0));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut a = lo - 0.1 * span;
    let b = hi + 0.1 * span;
    if spec.kind == AttributeKind::PositiveReal {
        a = a.max(0.0);
    }
    if spec.preprocess == Preprocess::Log1p {
        a = a.max(-1.0 + 1e-9);
    }
    let points = points.max(2);
    (0..points)
        .map(|i| a + (b - a) * i as f64 / (points - 1) as f64)
        .collect()
}

/// Distribution of attribute `d` under feature vector `pattern`: a density
/// on `grid` (raw units) for continuous kinds, otherwise the probability of
/// every value in the support (counts up to the attribute's support limit).
pub fn compute_pdf(
    pattern: &[u8],
    d: usize,
    state: &LatentState,
    grid: &[f64],
) -> Result<Vec<(f64, f64)>> {
    check_dim(state, d)?;
    check_pattern(state, pattern)?;
    let spec = &state.specs[d];
    let s2 = state.sigma2[d];
    let m = predictors(state, pattern, d)[0];
    match spec.kind {
        AttributeKind::Real | AttributeKind::PositiveReal => {
            if grid.is_empty() {
                return Err(GlfmError::InvalidArgument("empty evaluation grid".into()));
            }
            let total = s2 + state.hyper.sigma_u2;
            grid.iter()
                .map(|&raw| {
                    let Some(x) = spec.preprocess.apply(raw) else {
                        return Ok((raw, 0.0));
                    };
                    if spec.kind == AttributeKind::PositiveReal && !(x > 0.0) {
                        return Ok((raw, 0.0));
                    }
                    let ll = loglik_continuous(x, m, total, spec.transform, spec.kind)?
                        + spec.preprocess.ln_abs_derivative(raw);
                    Ok((raw, ll.exp()))
                })
                .collect()
        }
        AttributeKind::Categorical | AttributeKind::Ordinal => {
            Ok(category_probs(state, pattern, d)?
                .into_iter()
                .enumerate()
                .map(|(i, p)| ((i + 1) as f64, p))
                .collect())
        }
        AttributeKind::Count => {
            let sd = s2.sqrt();
            (0..=spec.count_support_max())
                .map(|x| {
                    let x = x as f64;
                    Ok((x, prob_count(x, m, spec.transform, sd)?))
                })
                .collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pattern {
    pub bits: Vec<u8>,
    pub count: usize,
    pub empirical_prob: f64,
}

impl Pattern {
    /// `(0101)`-style label; the bias bit is left out when `bias` is set.
    pub fn label(&self, bias: bool) -> String {
        let bits = if bias {
            &self.bits[1.min(self.bits.len())..]
        } else {
            &self.bits[..]
        };
        let body: String = bits
            .iter()
            .map(|&b| if b == 1 { '1' } else { '0' })
            .collect();
        format!("({body})")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternSummary {
    /// Most frequent patterns first.
    pub patterns: Vec<Pattern>,
    /// Number of distinct patterns before truncation.
    pub distinct: usize,
    /// Activation frequency of each non-bias feature.
    pub feature_probs: Vec<f64>,
    /// Fraction of rows with at least one non-bias feature active.
    pub any_feature: f64,
}

/// Distinct rows of `Z` ranked by frequency (ties in bit order), keeping
/// `top_k`.
pub fn extract_patterns(state: &LatentState, top_k: usize) -> PatternSummary {
    let n = state.n_rows();
    let mut counts: HashMap<&[u8], usize> = HashMap::new();
    for row in 0..n {
        *counts.entry(state.z.row(row)).or_default() += 1;
    }
    let mut patterns: Vec<Pattern> = counts
        .into_iter()
        .map(|(bits, count)| Pattern {
            bits: bits.to_vec(),
            count,
            empirical_prob: count as f64 / n as f64,
        })
        .collect();
    patterns.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.bits.cmp(&b.bits)));
    let distinct = patterns.len();
    patterns.truncate(top_k);
    let first = state.first_free();
    let feature_probs = (first..state.k_plus())
        .map(|k| state.counts[k] as f64 / n as f64)
        .collect();
    let any = (0..n)
        .filter(|&row| state.z.row(row)[first..].contains(&1))
        .count();
    PatternSummary {
        patterns,
        distinct,
        feature_probs,
        any_feature: any as f64 / n as f64,
    }
}
