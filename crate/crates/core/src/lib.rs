//! Temporal pattern learning with adaptive-threshold spiking networks.
//!
//! The crate covers the whole pipeline: event data ingestion, the filter-based
//! LIF model and its hard-reset baseline, surrogate-gradient BPTT, spike-train
//! distance losses, AdamW training, and behavioral models of the analog
//! neuron circuit and of crossbar non-idealities.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at the
//! crate root pin the common choices. Training runs in double precision.

pub mod bptt;
pub mod cli;
pub mod data;
pub mod error;
pub mod hardware;
pub mod losses;
pub mod matrix;
pub mod network;
pub mod neuron;
pub mod scalar;
pub mod synthetic;
pub mod train;

pub use error::{Error, ErrorKind, Result};
pub use matrix::Matrix;
pub use scalar::Scalar;

pub type Network64 = network::Network<f64>;
pub type Network32 = network::Network<f32>;
pub type Trace64 = network::Trace<f64>;
pub type Gradients64 = bptt::Gradients<f64>;
pub type Matrix64 = Matrix<f64>;
