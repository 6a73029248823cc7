//! Training loop, evaluation, leave-one-subject-out runs and sweeps.

mod audit;
mod checkpoint;
mod config;
mod fold;
mod metrics;
mod objective;
mod protocol;

pub use audit::{AuditedDataset, Rows};
pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT};
pub use config::{Ablation, Provenance, TrainConfig, CONFIG_KEYS};
pub use fold::{evaluate, train_fold, EpochLog, Evaluation, SourceData, TrainOptions, TrainedState};
pub use metrics::{ConfusionMatrix, Summary};
pub use objective::{apply_step, objective, LossParts, MiniBatch, Model, ModelGrads, OpTrace, TermMask};
pub use protocol::{
    fit_fold, k_csv, k_sweep, noise_csv, noise_sweep, run_fold, run_protocol, FoldReport, KRow, NoiseRow, RunOptions,
    RunReport, REPORT_FORMAT,
};

/// Tag embedded in every artifact.
pub const VERSION: &str = concat!("matldc ", env!("CARGO_PKG_VERSION"));

/// Independent random streams derived from one seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Fold = 1,
    Init = 2,
    Shuffle = 3,
    Dropout = 4,
    Aggregate = 5,
    Noise = 6,
}

/// SplitMix64 finalizer over `(seed, stream, index)`.
pub fn derive_seed(seed: u64, stream: Stream, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add((stream as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
