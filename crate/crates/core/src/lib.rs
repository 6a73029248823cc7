//! Multi-source transfer learning with decoupled domain/class features,
//! MMD-based domain aggregation and prototype-based pairwise learning.
//!
//! Every numeric type is generic over [`scalar::Scalar`] (`f32` or `f64`);
//! the aliases below fix it to `f64`, which the trainer and CLI use.

pub mod dataio;
pub mod decouple;
pub mod error;
pub mod infer;
pub mod linalg;
pub mod mmd_agg;
pub mod nn;
pub mod proto;
pub mod scalar;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Scalar type behind the aliases.
pub type Real = f64;

pub type Matrix = linalg::Matrix<Real>;
pub type Dataset = dataio::Dataset<Real>;
pub type Sample = dataio::Sample<Real>;
pub type Network = nn::Network<Real>;
pub type Networks = decouple::Networks<Real>;
pub type PrototypeBank = proto::PrototypeBank<Real>;
pub type MmdMatrix = mmd_agg::MmdMatrix<Real>;
pub type Prediction = infer::Prediction<Real>;
pub type Model = trainer::Model<Real>;
pub type TrainedState = trainer::TrainedState<Real>;
pub type Checkpoint = trainer::Checkpoint<Real>;
