//! Information bottleneck with side information at the decoder.
//!
//! - [`prob`]: dense joint pmfs, encoders and information measures.
//! - [`solver`]: the alternating-maximization solver with its `F`/`I`
//!   brackets and optimality diagnostics.
//! - [`region`]: relevance-rate region sweeps, hulls and oracles.
//! - [`regularizer`]: excess risk versus rate on synthetic multi-task
//!   sources.
//! - [`textcat`]: two-stage hierarchical text categorization.
//! - [`io`]: CSV and JSON file formats.

pub mod error;
pub mod io;
pub mod prob;
pub mod region;
pub mod regularizer;
pub mod solver;
pub mod textcat;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
pub use prob::{AuxiliaryDecoders, Decoder, Encoder, JointXYZ};
pub use solver::{solve, SolverConfig, SolverResult};
