//! Tabular reinforcement-learning solvers built around swappable Bellman-style
//! operators.
//!
//! Every operator is a pure map on value tables. The [`fixed_point`] engine
//! drives any such map to its fixed point under the sup-norm, which is how the
//! model-based solvers in [`dp`] are expressed. [`model_free`] holds the
//! sample-based learners, [`envs`] the classic-control tasks used to compare
//! operators, and [`experiment`] the seeded benchmark harness.

pub mod analysis;
pub mod dp;
pub mod envs;
mod error;
pub mod experiment;
pub mod fixed_point;
pub mod mdp;
pub mod model_free;
pub mod operators;
pub mod picard;
pub mod plot;
pub mod rng;

pub use error::{Error, Result};
