//! Sparse-lattice D3Q19 lattice Boltzmann kernels together with analytic
//! performance, power and scaling models for memory-bound LBM codes.

// NaN-rejecting `!(x > 0.0)` checks and index loops over lattice directions are deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bench;
pub mod d3q19;
pub mod ecm;
pub mod error;
pub mod geometry;
pub mod power;
pub mod propagation;
pub mod scaling;
pub mod table;
pub mod verify;

pub use error::{Error, Result};
