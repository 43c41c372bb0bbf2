//! Sum-rate and distortion analysis for delayed sequential coding systems.
//!
//! A sequence of `T` correlated frames is coded by per-frame encoders whose
//! access to future frames is limited by an encoding delay, and reproduced by
//! decoders limited by a decoding delay. This crate covers the architectures
//! C–C (causal encoders and decoders), C–NC (delayed decoders), NC–C (delayed
//! encoders), NC–NC (both) and JC (joint coding), and provides:
//!
//! - [`model`]: source models, covariance construction, distortion regions and
//!   the Markov-chain constraints each architecture imposes.
//! - [`closed_forms`]: closed-form sum-rates for Gauss–Markov sources, idealized
//!   DPCM stage rates and the structural rate-tuple transforms.
//! - [`info`]: entropy, (conditional) mutual information and (k-)directed
//!   information on discrete joint distributions, and Gaussian mutual information.
//! - [`gauss_opt`]: numerical minimization of `I(X^T; X̂^T)` over jointly Gaussian
//!   reproductions under MSE and Markov-chain constraints.
//! - [`discrete_rd`]: Blahut–Arimoto style solvers for small-alphabet sources
//!   under Hamming distortion.
//! - [`mc_sim`]: Monte Carlo simulation of idealized DPCM and of the joint-coding
//!   test channel.
//!
//! All rates are in bits.

pub mod closed_forms;
pub mod discrete_rd;
mod error;
pub mod gauss_opt;
pub mod info;
mod lbfgs;
pub mod linalg;
pub mod mc_sim;
pub mod model;

pub use error::{Error, Result};
pub use model::{
    ChainConstraint, CovMatrix, DistortionTuple, SourceKind, SourceSpec, SystemKind, Var,
};
