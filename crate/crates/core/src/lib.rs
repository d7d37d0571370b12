//! Distributed SGD under simultaneous differential privacy and Byzantine attack.
//!
//! The crate bundles the building blocks of a parameter-server simulation
//! (gradient aggregation rules, the Gaussian mechanism, the two collusion
//! attacks, a logistic-regression task) together with calculators for the
//! variance-to-norm feasibility conditions and the convergence-rate bounds of
//! noisy Byzantine-resilient SGD.

pub mod analyzer;
pub mod attack;
pub mod config;
pub mod dataset;
mod error;
pub mod gar;
pub mod model;
pub mod numerics;
pub mod privacy;
pub mod report;
pub mod simulator;

pub use error::{Error, ErrorKind, Result};
pub use numerics::{GradientVector, RandomStream};
