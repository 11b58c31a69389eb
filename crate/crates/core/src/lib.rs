//! Exact data valuation: Shapley values per training example and Owen values
//! per contributor coalition, for frequency-based (binned) decision rules and
//! k-nearest-neighbor classifiers.
//!
//! Both values are averages over exponentially many join orders. The modules
//! here evaluate them in polynomial time; [`oracle`] evaluates the defining
//! averages by brute force and is the reference for every equivalence test.

pub mod coalition;
pub mod combinatorics;
pub mod error;
pub mod freq_owen;
pub mod freq_shapley;
pub mod knn_owen;
pub mod knn_shapley;
pub mod model;
pub mod oracle;
pub mod report;

pub use coalition::CoalitionStructure;
pub use combinatorics::{ExactRational, NumericMode, Scalar};
pub use error::{Error, Result};
pub use model::{
    BinTally, Dataset, Euclidean, Example, FrequencyQuery, FrequencyValueFunction, KnnQuery, Label, Metric,
    OutcomeValues, RankedNeighborhood,
};
pub use report::{ReportOptions, ValueReport};
