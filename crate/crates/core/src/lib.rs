//! Distributionally adaptive meta-RL laboratory.
//!
//! Robust meta-policy populations over task distributions, adversarial task
//! distributions under divergence constraints, and bandit selection of the
//! robustness level at meta-test time. Every numerical component has a
//! closed-form or brute-force counterpart to check it against.

pub mod analytic;
pub mod error;
pub mod exec;
pub mod harness;
pub mod models;
pub mod rng;
pub mod selector;
pub mod task;
pub mod trainer;

pub use error::{Error, Result};
pub use exec::Execution;
