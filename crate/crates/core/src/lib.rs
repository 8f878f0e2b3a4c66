//! Mixed quantum gates: build process-matrix representations of noisy gate
//! ensembles, solve convex programs for mixing weights that cancel coherent
//! error, generate candidate implementations by optimal control, and
//! validate with channel metrics and a randomized-benchmarking simulator.

pub mod channel;
pub mod control;
pub mod error;
pub mod linalg;
pub mod pauli;
pub mod rb;
pub mod synthesis;

pub use error::{MixError, Result};
