//! Surrogate perception error models for testing driving planners in a 2D
//! micro-simulator, together with the metrics used to compare them.

pub mod association;
pub mod detector;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod metrics;
pub mod planners;
pub mod raycast;
pub mod scene;
pub mod surrogates;

pub use error::{Error, Result};
