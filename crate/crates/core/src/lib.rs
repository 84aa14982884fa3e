//! Probabilistic digital twins of survey populations.
//!
//! This crate models users of an opinion platform from two views of their
//! behaviour: a dense embedding aggregated from their text, and a response
//! pattern (counts over five agreement categories). It provides:
//!
//! - a Gaussian latent-variable model trained by amortized variational
//!   inference ([`vae`]), in standard and two-level hierarchical variants,
//! - linear baselines (PCA, factor analysis) over the same embeddings
//!   ([`baselines`]),
//! - a statistically validated pipeline that interprets latent dimensions by
//!   contrasting response patterns of extreme-scoring user groups
//!   ([`analysis`]),
//! - dataset ingestion, preprocessing, and a synthetic generator with planted
//!   traits for end-to-end validation ([`data`]).
//!
//! All floating point work is `f64`, reductions run in fixed index order, and
//! every source of randomness is a named substream of one master seed
//! ([`rng`]), so identical inputs produce bit-identical outputs.

pub mod analysis;
pub mod baselines;
pub mod data;
pub mod matrix;
pub mod nn;
pub mod rng;
pub mod vae;

pub use matrix::Matrix;
