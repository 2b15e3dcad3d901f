use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use glfm_core::data::{load_dataset, parse_attribute_spec, DataMatrix, MissingSentinel};
use glfm_core::error::GlfmError;
use glfm_core::gibbs::{
    log_joint, run_chains, ChainOptions, ChainOutput, Hyperparams, LatentState, StateDocument,
    Trace,
};
use glfm_core::rng::GlfmRng;
use glfm_core::tasks::{
    all_real, baseline_loglik, compute_pdf, default_grid, extract_patterns, impute, mcar_mask,
    predictive_loglik_averaged, render_value, HeldoutScore,
};
use serde::Serialize;

use crate::args::{CompleteArgs, ExploreArgs, HyperArgs, InferArgs, InputArgs};
use crate::config;
use crate::UsageError;

fn load_input(input: &InputArgs) -> Result<DataMatrix> {
    let spec_text = fs::read_to_string(&input.spec)
        .with_context(|| format!("reading spec {}", input.spec.display()))?;
    let specs = parse_attribute_spec(&spec_text).map_err(|e| match e {
        GlfmError::Spec { .. } => {
            anyhow::Error::new(UsageError(format!("{}: {e}", input.spec.display())))
        }
        other => other.into(),
    })?;
    let csv_text = fs::read_to_string(&input.data)
        .with_context(|| format!("reading data {}", input.data.display()))?;
    let sentinel = MissingSentinel::new(input.missing.as_deref());
    let mut data = load_dataset(&csv_text, &specs, &sentinel)
        .with_context(|| format!("loading {}", input.data.display()))?;
    data.fit_transforms();
    Ok(data)
}

fn prepare_output(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn pin_mask(data: &DataMatrix, hyper: &HyperArgs) -> Result<Option<Vec<bool>>> {
    if hyper.pin_columns.is_empty() {
        if hyper.pin_label.is_some() {
            bail!(UsageError("--pin-label needs --pin-columns".into()));
        }
        return Ok(None);
    }
    let Some(label) = &hyper.pin_label else {
        bail!(UsageError("--pin-columns needs --pin-label".into()));
    };
    let cols = hyper
        .pin_columns
        .iter()
        .map(|name| {
            data.specs()
                .iter()
                .position(|s| &s.name == name)
                .ok_or_else(|| UsageError(format!("unknown column `{name}` in --pin-columns")))
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(Some(
        (0..data.n_rows())
            .map(|n| cols.iter().all(|&d| data.raw(n, d) == label))
            .collect(),
    ))
}

/// Run the configured number of chains and keep the one with the highest
/// final log joint. The returned trace holds every chain's records.
fn sample(
    data: &DataMatrix,
    hp: &Hyperparams,
    chains: usize,
    options: &ChainOptions,
) -> Result<(ChainOutput, Trace)> {
    let outputs = run_chains(data, hp, options, chains)?;
    let mut best = 0;
    let mut best_lj = f64::NEG_INFINITY;
    for (i, out) in outputs.iter().enumerate() {
        let lj = match out.trace.records.last() {
            Some(r) if !r.log_joint.is_nan() => r.log_joint,
            _ => log_joint(&out.state, data)?,
        };
        if lj > best_lj || i == 0 {
            best = i;
            best_lj = lj;
        }
    }
    let mut trace = Trace::default();
    for out in &outputs {
        trace.records.extend(out.trace.records.iter().cloned());
    }
    let chosen = outputs.into_iter().nth(best).expect("at least one chain");
    Ok((chosen, trace))
}

fn write_state(dir: &Path, state: &LatentState, rng: &GlfmRng) -> Result<()> {
    let doc = StateDocument::from_state(state, Some(rng));
    let mut out = create(&dir.join("state.json"))?;
    out.write_all(doc.to_json()?.as_bytes())?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

fn write_trace(dir: &Path, trace: &Trace) -> Result<()> {
    let mut out = create(&dir.join("trace.ndjson"))?;
    trace.write_ndjson(&mut out)?;
    out.flush()?;
    Ok(())
}

fn run_and_save(
    data: &DataMatrix,
    hp: &Hyperparams,
    hyper: &HyperArgs,
    dir: &Path,
) -> Result<ChainOutput> {
    let options = ChainOptions {
        pinned: pin_mask(data, hyper)?,
        ..ChainOptions::default()
    };
    let (out, trace) = sample(data, hp, hyper.chains, &options)?;
    write_state(dir, &out.state, &out.rng)?;
    write_trace(dir, &trace)?;
    Ok(out)
}

pub fn infer(args: InferArgs) -> Result<()> {
    let hp = config::resolve(&args.hyper)?;
    let data = load_input(&args.input)?;
    prepare_output(&args.input.output)?;
    let out = run_and_save(&data, &hp, &args.hyper, &args.input.output)?;
    let lj = log_joint(&out.state, &data)?;
    println!("features: {}", out.state.k_plus());
    println!("log joint: {lj:.6}");
    Ok(())
}

pub fn complete(args: CompleteArgs) -> Result<()> {
    let hp = config::resolve(&args.hyper)?;
    if let Some(p) = args.heldout {
        if !(p > 0.0 && p < 1.0) {
            bail!(UsageError(format!(
                "--heldout must lie strictly between 0 and 1, got {p}"
            )));
        }
        if args.splits == 0 {
            bail!(UsageError("--splits must be at least 1".into()));
        }
        if args.average == 0 {
            bail!(UsageError("--average must be at least 1".into()));
        }
        let data = load_input(&args.input)?;
        prepare_output(&args.input.output)?;
        return benchmark(&data, &hp, &args, p);
    }
    let data = load_input(&args.input)?;
    if data.missing_count() == 0 {
        eprintln!("warning: the table has no missing cells; output equals input");
    }
    prepare_output(&args.input.output)?;
    let out = run_and_save(&data, &hp, &args.hyper, &args.input.output)?;
    let cells = impute(&out.state, &data)?;
    let header: Vec<String> = data.specs().iter().map(|s| s.name.clone()).collect();
    let mut w = csv::Writer::from_writer(create(&args.input.output.join("completed.csv"))?);
    w.write_record(&header)?;
    for row in cells.chunks(header.len()) {
        w.write_record(row)?;
    }
    w.flush()?;
    println!("imputed cells: {}", data.missing_count());
    Ok(())
}

#[derive(Serialize)]
struct SplitScore {
    split: usize,
    cells: usize,
    loglik: f64,
    per_attribute: BTreeMap<String, Option<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    baseline_loglik: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    baseline_per_attribute: Option<BTreeMap<String, Option<f64>>>,
}

#[derive(Serialize)]
struct Scores {
    heldout_fraction: f64,
    splits: Vec<SplitScore>,
    mean: f64,
    per_attribute_mean: BTreeMap<String, Option<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    baseline_mean: Option<f64>,
}

fn scoring_states(out: &ChainOutput) -> Vec<LatentState> {
    if out.samples.is_empty() {
        vec![out.state.clone()]
    } else {
        out.samples.clone()
    }
}

fn named(data: &DataMatrix, score: &HeldoutScore) -> BTreeMap<String, Option<f64>> {
    data.specs()
        .iter()
        .zip(&score.per_dimension)
        .map(|(s, v)| (s.name.clone(), *v))
        .collect()
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Held-out scoring: per split, hide a random fraction of the observed
/// cells, fit on the rest, and score the hidden cells. Only scores are
/// written, so hidden values never reach the output directory.
fn benchmark(data: &DataMatrix, hp: &Hyperparams, args: &CompleteArgs, p: f64) -> Result<()> {
    let base = GlfmRng::new(hp.seed);
    let options = ChainOptions {
        keep_last: args.average,
        pinned: pin_mask(data, &args.hyper)?,
        skip_log_joint: args.hyper.chains == 1,
    };
    let kinds: Vec<_> = data.specs().iter().map(|s| s.kind).collect();
    let mut splits = Vec::with_capacity(args.splits);
    for s in 0..args.splits {
        let mut mask_rng = base.fork(s as u64);
        let mask = mcar_mask(data, p, &mut mask_rng)?;
        if !mask.iter().any(|&m| m) {
            bail!(UsageError(format!(
                "--heldout {p} hides no cells of this table"
            )));
        }
        let train = data.with_extra_missing(&mask)?;
        let split_hp = Hyperparams {
            seed: hp.seed.wrapping_add(1 + s as u64),
            ..hp.clone()
        };
        let (out, _) = sample(&train, &split_hp, args.hyper.chains, &options)?;
        let states = scoring_states(&out);
        let score = predictive_loglik_averaged(&states, data, &mask)?;
        let (baseline_loglik, baseline_per_attribute) = if args.baseline {
            let real = all_real(data)?;
            let real_train = real.with_extra_missing(&mask)?;
            let (bout, _) = sample(&real_train, &split_hp, args.hyper.chains, &options)?;
            let bscore = baseline_loglik(&scoring_states(&bout), &real, &mask, &kinds)?;
            (Some(bscore.mean), Some(named(data, &bscore)))
        } else {
            (None, None)
        };
        println!("split {s}: held-out log-likelihood {:.6}", score.mean);
        splits.push(SplitScore {
            split: s,
            cells: score.count,
            loglik: score.mean,
            per_attribute: named(data, &score),
            baseline_loglik,
            baseline_per_attribute,
        });
    }
    let mean = splits.iter().map(|s| s.loglik).sum::<f64>() / splits.len() as f64;
    let per_attribute_mean = data
        .specs()
        .iter()
        .map(|spec| {
            let v = mean_of(splits.iter().map(|s| s.per_attribute[&spec.name]));
            (spec.name.clone(), v)
        })
        .collect();
    let baseline_mean = mean_of(splits.iter().map(|s| s.baseline_loglik));
    let scores = Scores {
        heldout_fraction: p,
        splits,
        mean,
        per_attribute_mean,
        baseline_mean,
    };
    let mut out = create(&args.input.output.join("scores.json"))?;
    serde_json::to_writer_pretty(&mut out, &scores)?;
    out.write_all(b"\n")?;
    out.flush()?;
    println!("mean held-out log-likelihood: {mean:.6}");
    Ok(())
}

pub fn explore(args: ExploreArgs) -> Result<()> {
    let data = load_input(&args.input)?;
    prepare_output(&args.input.output)?;
    let dir = &args.input.output;
    let state = match &args.state {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading state {}", path.display()))?;
            let (state, _) = StateDocument::from_json(&text)?.into_state()?;
            let names: Vec<&str> = state.specs.iter().map(|s| s.name.as_str()).collect();
            let expected: Vec<&str> = data.specs().iter().map(|s| s.name.as_str()).collect();
            if names != expected || state.n_rows() != data.n_rows() {
                bail!(UsageError(format!(
                    "state {} does not match the table's shape or columns",
                    path.display()
                )));
            }
            state
        }
        None => {
            let hp = config::resolve(&args.hyper)?;
            run_and_save(&data, &hp, &args.hyper, dir)?.state
        }
    };

    let summary = extract_patterns(&state, args.top);
    let bias = state.hyper.bias;
    let mut w = csv::Writer::from_writer(create(&dir.join("patterns.csv"))?);
    w.write_record(["rank", "pattern", "count", "probability"])?;
    for (i, p) in summary.patterns.iter().enumerate() {
        w.write_record([
            (i + 1).to_string(),
            p.label(bias),
            p.count.to_string(),
            format!("{:.4}", p.empirical_prob),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_writer(create(&dir.join("feature_probs.csv"))?);
    w.write_record(["feature", "probability"])?;
    for (k, prob) in summary.feature_probs.iter().enumerate() {
        w.write_record([(k + 1).to_string(), format!("{prob:.4}")])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_writer(create(&dir.join("pdfs.csv"))?);
    w.write_record(["pattern", "attribute", "value", "density"])?;
    for p in &summary.patterns {
        let label = p.label(bias);
        for (d, spec) in state.specs.iter().enumerate() {
            let grid = if spec.kind.is_continuous() {
                default_grid(spec, args.grid_points)
            } else {
                Vec::new()
            };
            for (value, density) in compute_pdf(&p.bits, d, &state, &grid)? {
                let shown = if spec.kind.is_continuous() {
                    format!("{value}")
                } else {
                    render_value(spec, value)
                };
                w.write_record([
                    label.clone(),
                    spec.name.clone(),
                    shown,
                    format!("{density}"),
                ])?;
            }
        }
    }
    w.flush()?;

    println!(
        "patterns: {} distinct, {} reported; rows with any feature: {:.4}",
        summary.distinct,
        summary.patterns.len(),
        summary.any_feature
    );
    Ok(())
}
