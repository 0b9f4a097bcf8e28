//! Predictive-multiplicity auditing for pools of group-fair classifiers.
//!
//! The crate trains seeded model pools, post-processes them for group
//! fairness, measures how much their individual predictions disagree, builds
//! worst-case pools that are perfectly fair yet maximally ambiguous, and
//! ensembles competing models to collapse that disagreement.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
mod decimal;
pub mod ensemble;
pub mod error;
pub mod fairness;
pub mod interventions;
pub mod models;
pub mod multiplicity;
pub mod pipeline;
pub mod rng;
pub mod worstcase;

pub use error::{Error, Result};
