//! Dense linear algebra, reproducible random streams and distribution helpers.

mod linalg;
mod normal;
mod rng;
mod stats;

pub use linalg::{
    check_finite, check_symmetric, cholesky, equicorrelation, gram, mat_vec, toeplitz,
};
pub use normal::{std_normal_cdf, std_normal_pdf, std_normal_quantile, std_normal_sf, two_sided_pvalue};
pub use rng::{sample_gaussian_vector, sample_scaled_t5, RngStream};
pub use stats::{kolmogorov_critical_value, kolmogorov_pvalue, ks_statistic};

/// Dense real matrix, row-major.
pub type Matrix = ndarray::Array2<f64>;
/// Dense real vector.
pub type Vector = ndarray::Array1<f64>;
