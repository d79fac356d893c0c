//! Conditionally coupled contextual (C3) Thompson sampling.
//!
//! Context-arm pairs are embedded by a small MLP; an importance-weighted
//! kernel regression over stored embeddings estimates the mean reward of a
//! new pair, and the kernel mass around it sets the confidence of a Beta
//! posterior that Thompson sampling draws from. Learning online is just
//! appending to (and evicting from) the store.

pub mod agents;
pub mod data;
pub mod embedding;
pub mod env;
pub mod error;
pub mod kernel;
pub mod posterior;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use kernel::{KernelConfig, ReferenceStore};
pub use posterior::BetaParams;
pub use data::LoggedSample;
