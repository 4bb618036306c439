//! Supervised binary hashing with a discrete code solver.
//!
//! Labels are turned into a low-rank similarity factorization, codes are
//! learned column by column with a clustering-based coordinate descent, and
//! kernel hash functions are fit to those codes by regression. Retrieval
//! metrics and brute-force reference implementations are included.
//!
//! The numeric core is generic over [`Real`] (`f32`, `f64`); label
//! factorization also accepts exact scalars such as integers and rationals.
//! The aliases below fix the scalar to `f64`.

// `!(x > 0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cbcd;
pub mod codes;
pub mod dataio;
pub mod error;
pub mod eval;
pub mod kernel;
pub mod oracle;
pub mod scalar;
pub mod similarity;
pub mod trainer;
pub mod verify;

pub use codes::{CodeMatrix, PackedCodes};
pub use dataio::{Dataset, FeatureFormat, FeatureMatrix, SyntheticConfig};
pub use error::{Error, ErrorClass, Result};
pub use eval::{GroundTruth, MetricReport};
pub use kernel::Bandwidth;
pub use scalar::{Exact, Real};
pub use similarity::LabelVector;
pub use trainer::{TrainReport, TrainerConfig};

pub type LowRankPair = similarity::LowRankPair<f64>;
pub type KernelModel = kernel::KernelModel<f64>;
pub type KernelMap = kernel::KernelMap<f64>;
pub type TrainOutput = trainer::TrainOutput<f64>;
pub type CbcdWorkspace<'a> = cbcd::CbcdWorkspace<'a, f64>;
pub type DenseInstance = oracle::DenseInstance<f64>;

pub type LowRankPairF32 = similarity::LowRankPair<f32>;
pub type KernelModelF32 = kernel::KernelModel<f32>;
