//! Empirical local differential privacy auditing for federated learning.
//!
//! A malicious client (the *crafter*) produces two candidate gradients, honestly
//! randomizes one of them with the LDP-SGD client randomizer, and a
//! *distinguisher* guesses which one was sent. Tallying false positives and
//! false negatives over many trials yields a lower bound on the privacy
//! parameter actually achieved against that adversary.
//!
//! Module map:
//!
//! - [`nn`]: a small multilayer perceptron with analytic gradients.
//! - [`mechanism`]: the LDP-SGD client randomizer and debiased server update.
//! - [`adversary`]: crafters, distinguishers and the worst-case oracle.
//! - [`audit`]: the black-box and white-box hypothesis-testing games.
//! - [`data`]: synthetic blobs, IDX parsing and label filtering.
//! - [`seeding`]: deterministic per-measurement / per-trial RNG streams.

// `!(x > 0.0)` deliberately rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adversary;
pub mod audit;
pub mod data;
mod error;
pub mod mechanism;
pub mod nn;
pub mod seeding;
pub mod special;

pub use error::{Error, Result};
