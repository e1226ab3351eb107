//! Label learning flows: weakly supervised classification and regression with
//! conditional normalizing flows trained in the generative (latent-to-label)
//! direction under penalized weak-signal constraints.

// Validation is written as `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod diff;
pub mod experiment;
pub mod flows;
pub mod objectives;
pub mod theory;
pub mod trainer;
pub mod weaksig;
