//! Simulation and cancellation of cross-link interference between
//! full-duplex MIMO base stations.

pub mod channel;
pub mod container;
pub mod error;
pub mod fnn;
pub mod harness;
pub mod poly;
pub mod rf_chain;
pub mod scenario;
pub mod seed;
pub mod signal;
pub mod waveform;

pub use error::{Error, FormatError, Result};
pub use num_complex::Complex64;
