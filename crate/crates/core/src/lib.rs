//! Stable autoencoders for low-rank matrix estimation.
//!
//! The estimators denoise a matrix `X = μ + ε` by learning a linear
//! autoencoder that is stable under bootstrap perturbations of `X`. See the
//! crate README for an overview.

pub mod ca;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod noise;
pub mod shrinkers;

pub use error::{Result, SaeError};
pub use linalg::{DenseMatrix, PenaltyDiagonal};
