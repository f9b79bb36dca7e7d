//! Exact Kernel K-means expressed as GEMM, SpMM and SpMV, with four
//! distributed schedules (1D, Hybrid-1D, 1.5D, 2D) executed over a simulated
//! multi-rank fabric that keeps an exact ledger of every message and word.
//!
//! Layout of the crate:
//!
//! - [`linalg`]: single-rank dense and sparse kernels.
//! - [`oracle`]: the sequential reference (full kernel matrix and sliding window).
//! - [`fabric`]: virtual ranks, process grids, collectives and the communication ledger.
//! - [`distributed`]: the distributed clustering algorithms as rank programs.
//! - [`cost`]: closed-form alpha-beta communication predictions.

pub mod cost;
pub mod distributed;
pub mod error;
pub mod fabric;
pub mod linalg;
pub mod oracle;
mod scalar;

pub use error::KkmError;
pub use scalar::Scalar;
