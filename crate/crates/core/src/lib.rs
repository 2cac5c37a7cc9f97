//! Synthetic difference-in-differences and companion estimators for panels
//! with a single block of treated cells, plus block-bootstrap inference,
//! fixed-effects selection regressions and a counterfactual margin simulator.

pub mod error;
pub mod estimators;
pub mod inference;
pub mod panel;
pub mod regression;
pub mod rng;
pub mod simulation;
pub mod weights;

pub use error::{Error, Result};
