//! Overlapping stochastic block models for directed graphs: sampling,
//! identifiability, variational EM inference and a simulation benchmark.

pub mod cli;
pub mod error;
pub mod eval;
pub mod graph;
pub mod identifiability;
pub mod inference;
pub mod model;

pub use error::{OsbmError, Result};
pub use graph::Graph;
pub use inference::{fit, FitConfig, FitResult, VariationalState};
pub use model::{LatentMatrix, OsbmParams};
