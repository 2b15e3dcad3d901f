//! Latent feature modelling for mixed-type tables: data handling, observation models,
//! a collapsed Gibbs sampler and downstream tasks.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod gibbs;
pub mod likelihoods;
pub mod linalg;
pub mod rng;
pub mod special;
pub mod synth;
pub mod tasks;
