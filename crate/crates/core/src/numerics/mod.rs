//! Deterministic statistical and linear-algebra kernels.
//!
//! Everything here is a pure function of its inputs and runs in `f64`.

mod matrix;
mod ridge;
mod similarity;
mod stats;

pub use matrix::RealMatrix;
pub use ridge::{ridge_fit, RidgeFit, RidgeOptions, RidgeProblem};
pub use similarity::{correlation_distance_rdm, linear_cka, rdm_similarity, upper_triangle};
pub use stats::{
    fisher_z, mean, pearson_r, sample_variance, std_dev, welch_t, zscore_in_place, WelchResult,
};
