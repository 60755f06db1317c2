//! Direction-aware node classification on directed graphs.
//!
//! The pipeline normalizes the asymmetric adjacency of a directed graph,
//! factors it with an SVD, encodes the singular values sinusoidally, refines
//! the encodings with multi-head self-attention and uses the refined columns
//! as learnable spectral filters `U diag(e_j) Vᵀ` for feature propagation.
//!
//! Modules:
//! - [`graph`]: directed graphs, adjacency normalization, synthetic data, splits and file formats.
//! - [`numerics`]: dense/sparse kernels, full and randomized truncated SVD.
//! - [`autodiff`]: a small reverse-mode tape, Adam and a finite-difference checker.
//! - [`model`]: the network itself plus checkpoints.
//! - [`training`]: the epoch loop, early stopping, evaluation and multi-seed aggregation.

pub mod autodiff;
pub mod error;
pub mod graph;
pub mod model;
pub mod numerics;
pub mod training;

pub use error::{Error, Result};
pub use numerics::{CsrMatrix, Matrix, SpectralBasis};
