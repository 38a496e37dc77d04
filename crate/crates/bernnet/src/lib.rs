//! Deep networks with constrained Bernstein-polynomial activations.
//!
//! The crate provides:
//! - `numcore`: deterministic matrices and a seeded RNG
//! - `bernstein`: basis math, the monotone coefficient re-parameterization,
//!   and analytic derivative bounds
//! - `network`: layer stack with hand-rolled reverse-mode backprop
//! - `optim`: AdamW, LR schedulers, early stopping
//! - `data`: MNIST IDX and HIGGS CSV ingestion, synthetic targets
//! - `diagnostics`: gradient-health metrics (minimum |sigma'|, dead-neuron
//!   ratios, first-layer mean absolute gradient) and CSV exports
//! - `config` / `train` / `experiments` / `verify`: the experiment runner
//!   behind the `bernnet` binary

pub mod bernstein;
pub mod config;
pub mod network;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod gradcheck;
pub mod numcore;
pub mod optim;
pub mod train;

pub use error::{Error, Result};
