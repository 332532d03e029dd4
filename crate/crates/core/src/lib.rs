//! Verifiable gated rewards for entity translation, critic-free group policy
//! optimization, and the estimators used to evaluate them.
//!
//! - [`textnorm`]: normalization and alias matching.
//! - [`reward`]: response parsing, structural gates and the terminal reward.
//! - [`optim`]: group advantages, sequence-level ratios, the clipped surrogate
//!   and its gradient.
//! - [`toytask`]: a synthetic entity-translation task with a tabular policy.
//! - [`evalkit`]: entity accuracy, chrF and pass@k.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod evalkit;
pub mod optim;
pub mod reward;
pub mod textnorm;
pub mod toytask;

pub use error::{Error, Result};
