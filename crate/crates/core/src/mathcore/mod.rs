//! Deterministic numerical primitives shared by the estimators, learners and
//! simulation code.

pub mod bins;
pub mod matrix;
pub mod moments;
pub mod mvn;
pub mod normal;
pub mod ols;
pub mod quadrature;
pub mod rng;

pub use bins::ecdf_bins;
pub use matrix::{cholesky, DenseMatrix};
pub use moments::{cov, mean, weighted_cov, weighted_mean};
pub use mvn::{mvn_sample, mvn_sample_with, MvnFactor};
pub use normal::{std_normal_cdf, std_normal_pdf, std_normal_quantile};
pub use ols::{ols_fit, OlsFit, QrFactor};
pub use quadrature::integrate;
pub use rng::{RngStream, StreamRng};
