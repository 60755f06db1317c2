//! Dense and sparse linear algebra plus the SVD kernels behind the spectral basis.

mod matrix;
mod sparse;
mod svd;

pub use matrix::Matrix;
pub use sparse::CsrMatrix;
pub use svd::{full_svd, orthonormalize, truncated_svd, LinearOperator, SpectralBasis, TruncatedSvdParams};
