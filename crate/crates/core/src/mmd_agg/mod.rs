//! Kernel two-sample distances between subject domains and their aggregation
//! into superdomains.
//!
//! Distances are unbiased squared MMD estimates under a Gaussian kernel;
//! aggregation runs k-medoids directly on that matrix, seeded k-means++ style.

mod aggregate;
mod mmd;

pub use aggregate::{
    aggregate, medoid_cost, partition_objective, AggregateOn, SuperdomainAssignment, MAX_ROUNDS,
};
pub use mmd::{
    gaussian_kernel, median_heuristic, mmd2_unbiased, mmd_matrix, vector_distance_matrix, Bandwidth,
    KernelConfig, MmdMatrix,
};

use rand::Rng;

use crate::error::Result;
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Builds the distance matrix from per-domain features and aggregates it.
pub fn aggregate_domains<T: Scalar, R: Rng + ?Sized>(
    domains: &[Matrix<T>],
    k: usize,
    kernel: &KernelConfig,
    on: AggregateOn,
    rng: &mut R,
) -> Result<(MmdMatrix<T>, SuperdomainAssignment)> {
    let m = mmd_matrix(domains, kernel)?;
    let assignment = match on {
        AggregateOn::Mmd => aggregate(&m, k, rng)?,
        AggregateOn::Vectors => aggregate(&vector_distance_matrix(&m), k, rng)?,
    };
    Ok((m, assignment))
}
