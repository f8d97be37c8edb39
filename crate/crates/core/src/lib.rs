//! Attentive-sampling two-stage neural architecture search at desk scale.
//!
//! The crate covers the full pipeline: a stage-wise mobile search space with
//! a FLOPs model, empirical FLOPs-constrained samplers, best/worst Pareto
//! machinery, a simulated weight-sharing supernet trained with attentive
//! sampling, a random-forest accuracy predictor, and a resource-constrained
//! evolutionary search.

pub mod error;
pub mod estimators;
pub mod evolution;
pub mod flops;
pub mod pareto;
pub mod pipeline;
pub mod rng;
pub mod sampler;
pub mod space;
pub mod supernet;

pub use error::{Error, Result};
pub use flops::Mflops;
pub use space::{ArchitectureConfig, SearchSpace};
