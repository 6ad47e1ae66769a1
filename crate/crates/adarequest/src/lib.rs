//! Adaptive request insertion for waterfall recommendation streams.
//!
//! The pipeline decides, per user-behavior trigger, whether an extra
//! edge-to-cloud refresh request is worth its resource cost:
//!
//! - [`nn`] — minimal differentiable core (tensors, GRU, attention, Adam).
//! - [`features`] — case records, bucketization, padding, dataset files.
//! - [`cube`] — behavior-sequence encoders and candidate matching.
//! - [`crest`] — counterfactual purchase-uplift estimation and training.
//! - [`drp`] — budgeted greedy admission with a previous-period threshold.
//! - [`baselines`] — non-adaptive and model-based comparison strategies.
//! - [`sim`] — synthetic session environment with known treatment effects.
//! - [`metrics`] — Qini, AUUC, transformed-outcome MSE, AUC, PR-in-N.
//! - [`cli`] — experiment configuration, checkpoints, commands, reports.

pub mod baselines;
pub mod cli;
pub mod crest;
pub mod cube;
pub mod drp;
pub mod error;
pub mod features;
pub mod metrics;
pub mod nn;
pub mod seeding;
pub mod sim;

pub use error::Error;

pub type Result<T> = std::result::Result<T, Error>;
