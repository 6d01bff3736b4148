//! Deep MIMO receivers adapted by modular hypernetworks.
//!
//! The crate simulates an uplink block-fading MIMO link, detects it with a
//! DeepSIC receiver (one small MLP per user, iterated soft interference
//! cancellation) and compares three ways of obtaining the receiver weights:
//!
//! - **joint**: trained offline once per user count and then frozen;
//! - **online**: retrained on every block's pilots;
//! - **hyper**: generated per block by a hypernetwork from a least-squares
//!   channel estimate, with no training at run time.
//!
//! Work on each block is tallied in a [`harness::ComplexityLedger`] so
//! training and inference costs can be compared analytically.

pub mod adaptation;
pub mod autodiff;
pub mod channel;
pub mod checkpoint;
pub mod deepsic;
mod error;
pub mod exec;
pub mod harness;
pub mod rng;

pub use error::{Error, Result};
pub use exec::Exec;
