//! Channel-agnostic RF fingerprinting with blind MIMO channel estimation.
//!
//! The pipeline runs from transmitter impairments through a Rayleigh or AWGN
//! channel, blind subspace channel estimation for space-time block coded
//! links, to a small CNN that identifies the transmitting device.

// `!(x > 0.0)` is how validation rejects NaN along with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod blind;
pub mod channel;
pub mod classifier;
pub mod error;
pub mod harness;
pub mod impairments;
pub mod numerics;
pub mod rng;
pub mod stbc;
pub mod waveform;

pub use error::{Error, Result};
