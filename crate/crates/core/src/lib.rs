//! Adversarial training on synthetic Gaussian mixtures.
//!
//! The crate carries its own small tensor/autodiff substrate ([`ndtape`]),
//! fully-connected networks and optimizers ([`nn`]), the mixture benchmarks
//! ([`synth`]), the adversarial objectives ([`losses`]), four trainers
//! ([`train`]), mode-collapse metrics ([`metrics`]), a closed-form check of
//! the entropy bound on a linear-Gaussian family ([`bound`]), and experiment
//! orchestration ([`exp`]).

pub mod bound;
pub mod error;
pub mod exp;
pub mod losses;
pub mod metrics;
pub mod ndtape;
pub mod nn;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
pub use ndtape::{Rng, Tape, Tensor, Var};
