//! Running chains and recording their traces.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::joint::log_joint;
use super::sampler::run_iteration;
use super::state::{init_state, LatentState};
use super::Hyperparams;
use crate::data::DataMatrix;
use crate::error::{GlfmError, Result};
use crate::rng::GlfmRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub chain: usize,
    pub iteration: usize,
    /// Feature columns, bias included.
    pub k_plus: usize,
    pub log_joint: f64,
    pub sigma2: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
}

impl Trace {
    pub fn write_ndjson<W: Write>(&self, mut out: W) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn k_plus(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.k_plus).collect()
    }
}

#[derive(Debug, Clone, Default)]
pub struct ChainOptions {
    /// Keep copies of the states after the last `keep_last` sweeps (all
    /// after burn-in at most).
    pub keep_last: usize,
    /// Rows to pin before sampling starts.
    pub pinned: Option<Vec<bool>>,
    /// Skip the log-joint evaluation in the trace (recorded as NaN).
    pub skip_log_joint: bool,
}

#[derive(Debug, Clone)]
pub struct ChainOutput {
    pub state: LatentState,
    pub trace: Trace,
    /// Retained post-burn-in states, oldest first.
    pub samples: Vec<LatentState>,
    pub rng: GlfmRng,
}

pub fn run_chain(data: &DataMatrix, hyper: &Hyperparams) -> Result<ChainOutput> {
    run_chain_with(data, hyper, &ChainOptions::default())
}

pub fn run_chain_with(
    data: &DataMatrix,
    hyper: &Hyperparams,
    options: &ChainOptions,
) -> Result<ChainOutput> {
    run_seeded(GlfmRng::new(hyper.seed), 0, data, hyper, options)
}

/// Run `chains` independent chains on separate threads. Chain 0 uses the
/// seed's own stream; chain `i > 0` uses its `(i-1)`-th fork.
pub fn run_chains(
    data: &DataMatrix,
    hyper: &Hyperparams,
    options: &ChainOptions,
    chains: usize,
) -> Result<Vec<ChainOutput>> {
    if chains == 0 {
        return Err(GlfmError::InvalidArgument(
            "at least one chain is required".into(),
        ));
    }
    let base = GlfmRng::new(hyper.seed);
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..chains)
            .map(|i| {
                let rng = if i == 0 {
                    base.clone()
                } else {
                    base.fork(i as u64 - 1)
                };
                scope.spawn(move || run_seeded(rng, i, data, hyper, options))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| {
                h.join()
                    .map_err(|_| GlfmError::Numerical("sampler thread panicked".into()))?
            })
            .collect()
    })
}

fn run_seeded(
    mut rng: GlfmRng,
    chain: usize,
    data: &DataMatrix,
    hyper: &Hyperparams,
    options: &ChainOptions,
) -> Result<ChainOutput> {
    let mut state = init_state(&mut rng, data, hyper)?;
    if let Some(pins) = &options.pinned {
        state.pin_rows(pins)?;
    }
    continue_chain(&mut rng, state, data, hyper.iterations, chain, options)
}

/// Run `iterations` further sweeps from an existing state.
pub fn continue_chain(
    rng: &mut GlfmRng,
    mut state: LatentState,
    data: &DataMatrix,
    iterations: usize,
    chain: usize,
    options: &ChainOptions,
) -> Result<ChainOutput> {
    let burn_in = state.hyper.burn_in.min(iterations);
    let keep_from = iterations - options.keep_last.min(iterations - burn_in);
    let mut trace = Trace::default();
    let mut samples = Vec::new();
    for it in 0..iterations {
        run_iteration(rng, &mut state, data)?;
        let lj = if options.skip_log_joint {
            f64::NAN
        } else {
            log_joint(&state, data)?
        };
        trace.records.push(TraceRecord {
            chain,
            iteration: state.sweeps,
            k_plus: state.k_plus(),
            log_joint: lj,
            sigma2: state.sigma2.clone(),
        });
        if it >= keep_from {
            samples.push(state.clone());
        }
    }
    Ok(ChainOutput {
        state,
        trace,
        samples,
        rng: rng.clone(),
    })
}
