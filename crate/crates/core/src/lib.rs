//! Ride-state classification from IMU streams using Hankel-window subspace
//! dictionaries.

pub mod classifiers;
mod codec;
pub mod error;
pub mod hankel_embedding;
pub mod ingest;
pub mod signal_fusion;
pub mod stream_pipeline;
pub mod subspace_trainer;

pub use error::{Error, Result};
