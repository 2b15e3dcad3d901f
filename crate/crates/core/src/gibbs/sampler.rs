//! The individual Gibbs updates.

use nalgebra::DMatrix;

use super::state::LatentState;
use super::BirthMode;
use crate::data::{AttributeKind, DataMatrix};
use crate::error::{GlfmError, Result};
use crate::likelihoods::{count_interval, ln_normal_pdf, map_inverse};
use crate::linalg::CholeskyFactor;
use crate::rng::GlfmRng;

/// Collapsed predictive quantities for one row, computed with that row
/// removed from `P` and `λ`.
///
/// With `L Lᵀ = P`, `W = L⁻¹λ` and `v = L⁻¹zᵀ`, the predictive mean of the
/// pseudo-observations in column `c` is `vᵀW_c` and the variance is
/// `‖v‖² + σ_d²`.
struct RowContext {
    w: DMatrix<f64>,
    targets: Vec<f64>,
    noise: Vec<f64>,
    v: Vec<f64>,
    means: Vec<f64>,
    var_base: f64,
}

impl RowContext {
    fn new(state: &LatentState, n: usize) -> Self {
        let k = state.k_plus();
        let mut cols = Vec::new();
        let mut noise = Vec::new();
        for d in 0..state.n_dims() {
            for c in state.free_columns(d) {
                cols.push(c);
                noise.push(state.sigma2[d]);
            }
        }
        let mut w = DMatrix::zeros(k, cols.len());
        let mut buf = vec![0.0; k];
        for (j, &c) in cols.iter().enumerate() {
            for (i, b) in buf.iter_mut().enumerate() {
                *b = state.lambda[(i, c)];
            }
            state.chol.solve_lower_in_place(&mut buf);
            for (i, &b) in buf.iter().enumerate() {
                w[(i, j)] = b;
            }
        }
        let targets = cols.iter().map(|&c| state.y[(n, c)]).collect();
        let mut v = state.z.row_f64(n);
        state.chol.solve_lower_in_place(&mut v);
        let means = (0..cols.len())
            .map(|j| (0..k).map(|i| v[i] * w[(i, j)]).sum())
            .collect();
        let var_base = v.iter().map(|x| x * x).sum();
        RowContext {
            w,
            targets,
            noise,
            v,
            means,
            var_base,
        }
    }

    fn loglik(&self, means: &[f64], var_base: f64) -> f64 {
        self.targets
            .iter()
            .zip(means)
            .zip(&self.noise)
            .map(|((&t, &m), &s2)| ln_normal_pdf(t, m, var_base + s2))
            .sum()
    }

    /// Effect of adding `L⁻¹e_k` to `v`: the shift of every mean, `v·u` and
    /// `‖u‖²`.
    fn direction(&self, chol: &CholeskyFactor, k: usize) -> (Vec<f64>, Vec<f64>, f64, f64) {
        let dim = self.v.len();
        let mut u = vec![0.0; dim];
        u[k] = 1.0;
        chol.solve_lower_from(&mut u, k);
        let shift = (0..self.w.ncols())
            .map(|j| (k..dim).map(|i| u[i] * self.w[(i, j)]).sum())
            .collect();
        let vu = (k..dim).map(|i| self.v[i] * u[i]).sum();
        let uu = (k..dim).map(|i| u[i] * u[i]).sum();
        (u, shift, vu, uu)
    }

    /// Log-likelihood of the row with `z_k` set to 0 and to 1, given its
    /// current value.
    fn flip_logliks(&self, chol: &CholeskyFactor, k: usize, current: u8) -> (f64, f64, Step) {
        let (u, shift, vu, uu) = self.direction(chol, k);
        let delta = if current == 1 { -1.0 } else { 1.0 };
        let alt_means: Vec<f64> = self
            .means
            .iter()
            .zip(&shift)
            .map(|(m, s)| m + delta * s)
            .collect();
        let alt_var = self.var_base + 2.0 * delta * vu + uu;
        let ll_cur = self.loglik(&self.means, self.var_base);
        let ll_alt = self.loglik(&alt_means, alt_var);
        let step = Step {
            u,
            delta,
            means: alt_means,
            var_base: alt_var,
        };
        if current == 1 {
            (ll_alt, ll_cur, step)
        } else {
            (ll_cur, ll_alt, step)
        }
    }

    fn apply(&mut self, step: Step) {
        for (vi, ui) in self.v.iter_mut().zip(&step.u) {
            *vi += step.delta * ui;
        }
        self.means = step.means;
        self.var_base = step.var_base;
    }
}

struct Step {
    u: Vec<f64>,
    delta: f64,
    means: Vec<f64>,
    var_base: f64,
}

/// Subtract row `n` from `P`, its factor, and `λ`.
fn remove_row(state: &mut LatentState, n: usize) -> Result<()> {
    let ones = active(state, n);
    for &i in &ones {
        for &j in &ones {
            state.p[(i, j)] -= 1.0;
        }
    }
    if state.chol.downdate(&state.z.row_f64(n)).is_err() {
        state.chol = CholeskyFactor::factor(&state.p)?;
    }
    for &k in &ones {
        for c in 0..state.y.ncols() {
            state.lambda[(k, c)] -= state.y[(n, c)];
        }
    }
    Ok(())
}

fn add_row(state: &mut LatentState, n: usize) {
    let ones = active(state, n);
    for &i in &ones {
        for &j in &ones {
            state.p[(i, j)] += 1.0;
        }
    }
    state.chol.update(&state.z.row_f64(n));
    for &k in &ones {
        for c in 0..state.y.ncols() {
            state.lambda[(k, c)] += state.y[(n, c)];
        }
    }
}

fn active(state: &LatentState, n: usize) -> Vec<usize> {
    state
        .z
        .row(n)
        .iter()
        .enumerate()
        .filter(|&(_, &b)| b == 1)
        .map(|(k, _)| k)
        .collect()
}

fn set_bit(state: &mut LatentState, n: usize, k: usize, value: u8) {
    let old = state.z.get(n, k);
    if old != value {
        state.z.set(n, k, value);
        if value == 1 {
            state.counts[k] += 1;
        } else {
            state.counts[k] -= 1;
        }
    }
}

/// Resample every non-bias feature of row `n` (row already removed).
fn flip_features(
    rng: &mut GlfmRng,
    state: &mut LatentState,
    ctx: &mut RowContext,
    n: usize,
) -> Result<()> {
    let n_rows = state.n_rows() as f64;
    for k in state.first_free()..state.k_plus() {
        let current = state.z.get(n, k);
        let m = state.counts[k] - usize::from(current);
        if m == 0 && current == 0 {
            continue;
        }
        let (ll0, ll1, step) = ctx.flip_logliks(&state.chol, k, current);
        let target = if m == 0 {
            0
        } else {
            let prior1 = m as f64 / n_rows;
            let lp1 = prior1.ln() + ll1;
            let lp0 = (-prior1).ln_1p() + ll0;
            let p1 = 1.0 / (1.0 + (lp0 - lp1).exp());
            u8::from(rng.bernoulli(p1))
        };
        if target != current {
            ctx.apply(step);
            set_bit(state, n, k, target);
        }
    }
    Ok(())
}

/// Number of new features for row `n` (row removed), at most `cap`.
fn draw_births(
    rng: &mut GlfmRng,
    state: &LatentState,
    ctx: &RowContext,
    cap: usize,
) -> Result<usize> {
    let hp = &state.hyper;
    let limit = hp.max_births.min(cap);
    if hp.alpha == 0.0 || limit == 0 {
        return Ok(0);
    }
    let rate = hp.alpha / state.n_rows() as f64;
    match hp.birth {
        BirthMode::Prior => Ok((rng.poisson(rate)? as usize).min(limit)),
        BirthMode::Posterior => {
            let mut lw = Vec::with_capacity(limit + 1);
            let mut ln_fact = 0.0;
            for j in 0..=limit {
                if j > 0 {
                    ln_fact += (j as f64).ln();
                }
                let prior = j as f64 * rate.ln() - rate - ln_fact;
                lw.push(prior + ctx.loglik(&ctx.means, ctx.var_base + j as f64 * hp.sigma_b2));
            }
            Ok(sample_log_weights(rng, &lw))
        }
    }
}

fn sample_log_weights(rng: &mut GlfmRng, lw: &[f64]) -> usize {
    let max = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = lw.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    let mut u = rng.uniform() * total;
    for (i, wi) in w.iter().enumerate() {
        if u < *wi {
            return i;
        }
        u -= wi;
    }
    w.len() - 1
}

/// Append `count` features owned by row `n` alone (row removed).
fn append_features(state: &mut LatentState, n: usize, count: usize) {
    if count == 0 {
        return;
    }
    let k = state.k_plus();
    let width = state.b.ncols();
    let prec = 1.0 / state.hyper.sigma_b2;
    for _ in 0..count {
        state.z.push_column(&[n]);
        state.counts.push(1);
        state.chol.push_diagonal(prec);
    }
    let b = std::mem::replace(&mut state.b, DMatrix::zeros(0, 0));
    state.b = b.insert_rows(k, count, 0.0);
    let lambda = std::mem::replace(&mut state.lambda, DMatrix::zeros(0, 0));
    state.lambda = lambda.insert_rows(k, count, 0.0);
    let p = std::mem::replace(&mut state.p, DMatrix::zeros(0, 0));
    let mut p = p.insert_rows(k, count, 0.0).insert_columns(k, count, 0.0);
    for i in k..k + count {
        p[(i, i)] = prec;
    }
    state.p = p;
    debug_assert_eq!(width, state.b.ncols());
}

/// Drop every non-bias feature no row uses. Valid with or without a row
/// removed, since an unused feature is uncoupled in `P`.
pub fn prune_features(state: &mut LatentState) -> Result<usize> {
    let first = state.first_free();
    let dead: Vec<usize> = (first..state.k_plus())
        .filter(|&k| state.counts[k] == 0)
        .collect();
    if dead.is_empty() {
        return Ok(0);
    }
    let keep: Vec<bool> = (0..state.k_plus()).map(|k| !dead.contains(&k)).collect();
    state.z.retain_columns(&keep);
    for &k in dead.iter().rev() {
        state.counts.remove(k);
        state.chol.remove_uncoupled(k);
        let b = std::mem::replace(&mut state.b, DMatrix::zeros(0, 0));
        state.b = b.remove_row(k);
        let lambda = std::mem::replace(&mut state.lambda, DMatrix::zeros(0, 0));
        state.lambda = lambda.remove_row(k);
        let p = std::mem::replace(&mut state.p, DMatrix::zeros(0, 0));
        state.p = p.remove_row(k).remove_column(k);
    }
    Ok(dead.len())
}

/// Full update of row `n`: resample existing features, prune the ones that
/// became unused, then propose new features.
fn update_row(rng: &mut GlfmRng, state: &mut LatentState, n: usize) -> Result<()> {
    remove_row(state, n)?;
    let mut ctx = RowContext::new(state, n);
    flip_features(rng, state, &mut ctx, n)?;
    prune_features(state)?;
    let cap = state.hyper.k_max.saturating_sub(state.k_plus());
    let births = draw_births(rng, state, &ctx, cap)?;
    append_features(state, n, births);
    add_row(state, n);
    Ok(())
}

/// Resample the existing non-bias features of row `n` with the weights
/// integrated out. Features left unused are pruned.
pub fn sample_z_row(rng: &mut GlfmRng, state: &mut LatentState, n: usize) -> Result<()> {
    check_row(state, n)?;
    if state.pinned[n] {
        return Ok(());
    }
    remove_row(state, n)?;
    let mut ctx = RowContext::new(state, n);
    flip_features(rng, state, &mut ctx, n)?;
    prune_features(state)?;
    add_row(state, n);
    Ok(())
}

/// Propose new features for row `n`; returns how many were added.
pub fn birth_features(rng: &mut GlfmRng, state: &mut LatentState, n: usize) -> Result<usize> {
    check_row(state, n)?;
    if state.pinned[n] {
        return Ok(0);
    }
    remove_row(state, n)?;
    let ctx = RowContext::new(state, n);
    let cap = state.hyper.k_max.saturating_sub(state.k_plus());
    let births = draw_births(rng, state, &ctx, cap)?;
    append_features(state, n, births);
    add_row(state, n);
    Ok(births)
}

/// `p(z_nk = 1 | Z_¬nk, Y)` under the collapsed model, the value
/// [`sample_z_row`] draws from.
pub fn z_conditional(state: &LatentState, n: usize, k: usize) -> Result<f64> {
    check_row(state, n)?;
    if k < state.first_free() || k >= state.k_plus() {
        return Err(GlfmError::InvalidArgument(format!(
            "feature {k} is not a free feature"
        )));
    }
    let mut s = state.clone();
    remove_row(&mut s, n)?;
    let current = s.z.get(n, k);
    let m = s.counts[k] - usize::from(current);
    if m == 0 {
        return Ok(0.0);
    }
    let ctx = RowContext::new(&s, n);
    let (ll0, ll1, _) = ctx.flip_logliks(&s.chol, k, current);
    let prior1 = m as f64 / s.n_rows() as f64;
    let lp1 = prior1.ln() + ll1;
    let lp0 = (-prior1).ln_1p() + ll0;
    Ok(1.0 / (1.0 + (lp0 - lp1).exp()))
}

/// The same conditional with `P` in place of `P⁻¹` in the predictive mean
/// and variance. Only a diagnostic for comparing against
/// [`z_conditional`]; the sampler never uses it.
pub fn z_conditional_uninverted(state: &LatentState, n: usize, k: usize) -> Result<f64> {
    check_row(state, n)?;
    if k < state.first_free() || k >= state.k_plus() {
        return Err(GlfmError::InvalidArgument(format!(
            "feature {k} is not a free feature"
        )));
    }
    let mut s = state.clone();
    remove_row(&mut s, n)?;
    let m = s.counts[k] - usize::from(s.z.get(n, k));
    if m == 0 {
        return Ok(0.0);
    }
    let loglik = |bit: f64| {
        let mut z = nalgebra::DVector::from_vec(s.z.row_f64(n));
        z[k] = bit;
        let pz = &s.p * &z;
        let var = z.dot(&pz);
        let mut total = 0.0;
        for d in 0..s.n_dims() {
            for c in s.free_columns(d) {
                let mean = pz.dot(&s.lambda.column(c));
                total += ln_normal_pdf(s.y[(n, c)], mean, var + s.sigma2[d]);
            }
        }
        total
    };
    let prior1 = m as f64 / s.n_rows() as f64;
    let lp1 = prior1.ln() + loglik(1.0);
    let lp0 = (-prior1).ln_1p() + loglik(0.0);
    Ok(1.0 / (1.0 + (lp0 - lp1).exp()))
}

fn check_row(state: &LatentState, n: usize) -> Result<()> {
    if n >= state.n_rows() {
        return Err(GlfmError::InvalidArgument(format!(
            "row {n} out of range for {} rows",
            state.n_rows()
        )));
    }
    Ok(())
}

/// Draw the weights of attribute `d` from `N(P⁻¹λ, P⁻¹)`. Uses the
/// maintained factor of `P`.
pub fn sample_weights(rng: &mut GlfmRng, state: &mut LatentState, d: usize) -> Result<()> {
    let k = state.k_plus();
    for c in state.free_columns(d) {
        let rhs: Vec<f64> = (0..k).map(|i| state.lambda[(i, c)]).collect();
        let mean = state.chol.solve(&rhs);
        let mut noise: Vec<f64> = (0..k).map(|_| rng.std_normal()).collect();
        state.chol.solve_upper_in_place(&mut noise);
        for i in 0..k {
            state.b[(i, c)] = mean[i] + noise[i];
        }
    }
    if state.specs[d].kind == AttributeKind::Categorical {
        let last = state.offsets[d] + state.widths[d] - 1;
        state.b.column_mut(last).fill(0.0);
    }
    Ok(())
}

fn set_pseudo(state: &mut LatentState, n: usize, c: usize, value: f64) {
    let delta = value - state.y[(n, c)];
    state.y[(n, c)] = value;
    for k in 0..state.k_plus() {
        if state.z.get(n, k) == 1 {
            state.lambda[(k, c)] += delta;
        }
    }
}

/// Resample the pseudo-observations of cell `(n, d)` given `Z`, `B` and the
/// observation, keeping `λ` in sync.
pub fn sample_pseudo_obs(
    rng: &mut GlfmRng,
    state: &mut LatentState,
    data: &DataMatrix,
    n: usize,
    d: usize,
) -> Result<()> {
    let off = state.offsets[d];
    let width = state.widths[d];
    let s2 = state.sigma2[d];
    let sd = s2.sqrt();
    let preds = state.row_predictors(n, d);
    let spec = &state.specs[d];
    let Some(x) = data.get(n, d) else {
        for (r, &m) in preds.iter().enumerate() {
            let v = rng.normal(m, sd);
            set_pseudo(state, n, off + r, v);
        }
        return Ok(());
    };
    let value = match spec.kind {
        AttributeKind::Real | AttributeKind::PositiveReal => {
            let target = map_inverse(x, spec.transform, spec.kind)?;
            let su2 = state.hyper.sigma_u2;
            let prec = 1.0 / s2 + 1.0 / su2;
            let mean = (preds[0] / s2 + target / su2) / prec;
            rng.normal(mean, prec.recip().sqrt())
        }
        AttributeKind::Count => {
            let (lo, hi) = count_interval(x, spec.transform)?;
            rng.trunc_normal(preds[0], sd, lo, hi)?
        }
        AttributeKind::Ordinal => {
            let theta = state.theta[d].as_ref().expect("ordinal thresholds");
            let (lo, hi) = theta.interval(x as usize);
            rng.trunc_normal(preds[0], sd, lo, hi)?
        }
        AttributeKind::Categorical => {
            let obs = x as usize - 1;
            #[allow(clippy::needless_range_loop)]
            for r in 0..width {
                let lo;
                let hi;
                if r == obs {
                    lo = (0..width)
                        .filter(|&j| j != obs)
                        .map(|j| state.y[(n, off + j)])
                        .fold(f64::NEG_INFINITY, f64::max);
                    hi = f64::INFINITY;
                } else {
                    lo = f64::NEG_INFINITY;
                    hi = state.y[(n, off + obs)];
                }
                let v = rng.trunc_normal(preds[r], sd, lo, hi)?;
                set_pseudo(state, n, off + r, v);
            }
            return Ok(());
        }
    };
    set_pseudo(state, n, off, value);
    Ok(())
}

/// Resample the free thresholds `θ_2..θ_{R-1}` of ordinal attribute `d`
/// from their truncated-normal conditionals.
pub fn sample_thresholds(
    rng: &mut GlfmRng,
    state: &mut LatentState,
    data: &DataMatrix,
    d: usize,
) -> Result<()> {
    let Some(theta) = state.theta[d].clone() else {
        return Err(GlfmError::InvalidArgument(format!(
            "attribute {d} is not ordinal"
        )));
    };
    let r_total = theta.n_categories();
    let mut max_y = vec![f64::NEG_INFINITY; r_total + 1];
    let mut min_y = vec![f64::INFINITY; r_total + 1];
    let c = state.offsets[d];
    for n in 0..state.n_rows() {
        if let Some(x) = data.get(n, d) {
            let r = x as usize;
            let y = state.y[(n, c)];
            max_y[r] = max_y[r].max(y);
            min_y[r] = min_y[r].min(y);
        }
    }
    let sd = state.hyper.sigma_theta2.sqrt();
    let mut theta = theta;
    // θ at slice index i separates categories i+1 and i+2.
    for i in 1..theta.as_slice().len() {
        let t = theta.as_slice();
        let lo = t[i - 1].max(max_y[i + 1]);
        let upper_neighbour = t.get(i + 1).copied().unwrap_or(f64::INFINITY);
        let hi = upper_neighbour.min(min_y[i + 2]);
        if !(lo < hi) {
            return Err(GlfmError::Numerical(format!(
                "threshold {} of attribute {} has an empty interval ({lo}, {hi})",
                i + 1,
                state.specs[d].name
            )));
        }
        let v = rng.trunc_normal(0.0, sd, lo, hi)?;
        theta.set(i, v);
    }
    state.theta[d] = Some(theta);
    Ok(())
}

/// Resample `σ_d²` from its inverse-gamma conditional.
pub fn sample_noise_variance(rng: &mut GlfmRng, state: &mut LatentState, d: usize) -> Result<()> {
    let hp = &state.hyper;
    let off = state.offsets[d];
    let width = state.widths[d];
    let mut ss = 0.0;
    for n in 0..state.n_rows() {
        let z = state.z.row(n);
        for c in off..off + width {
            let r = state.y[(n, c)] - state.predictor(z, c);
            ss += r * r;
        }
    }
    let shape = hp.beta1 + (state.n_rows() * width) as f64 / 2.0;
    let rate = hp.beta2 + ss / 2.0;
    state.sigma2[d] = rng.inverse_gamma(shape, rate)?;
    Ok(())
}

/// One full sweep over `Z` (with births) followed by the weight,
/// pseudo-observation and auxiliary-variable updates of every attribute.
pub fn run_iteration(rng: &mut GlfmRng, state: &mut LatentState, data: &DataMatrix) -> Result<()> {
    if data.n_rows() != state.n_rows() || data.n_cols() != state.n_dims() {
        return Err(GlfmError::InvalidArgument(
            "state and data have different shapes".into(),
        ));
    }
    for n in 0..state.n_rows() {
        if !state.pinned[n] {
            update_row(rng, state, n)?;
        }
    }
    state.refresh()?;
    for d in 0..state.n_dims() {
        sample_weights(rng, state, d)?;
        for n in 0..state.n_rows() {
            sample_pseudo_obs(rng, state, data, n, d)?;
        }
        if state.specs[d].kind == AttributeKind::Ordinal {
            sample_thresholds(rng, state, data, d)?;
        }
        if state.hyper.sample_variance {
            sample_noise_variance(rng, state, d)?;
        }
    }
    state.sweeps += 1;
    Ok(())
}
