//! Per-point data scaling laws.
//!
//! Measures how much a single training point lowers a model's loss as the
//! preceding dataset grows, fits `ψ_k(z) ≈ c(z) / k^α(z)` per point, and
//! uses the fits for valuation and size-aware selection.

pub mod amortized;
pub mod data;
pub mod error;
pub mod fitting;
pub mod models;
pub mod optim;
pub mod rng;
pub mod sampler;
pub mod stats;
pub mod theory;
pub mod valuation;

pub use error::{Error, Result};

/// Linear-algebra types used in the public API.
pub use nalgebra;
