//! LSH-blockable regime: blocking, per-block clustering, SSC selection.

pub mod blocking;
pub mod config;
pub mod estimate;
pub mod kmeans;
pub mod ssc;

pub use blocking::{lsh_partition, Blocking, BlockingReport};
pub use config::{choose_bands_rows, HashFamily, LshConfig};
pub use estimate::{estimate_probs_lsh, BlockOutcome, BudgetSplit, KRanges, LshEstimate, LshOptions};
pub use kmeans::{regularized_kmeans, Clustering, KMeansOptions};
pub use ssc::{
    plan_lsh_budget, plan_pair_budget, ssc_select, LabelOracle, OnExhaustion, PairSampling,
    SameClusterOracle, SscInstance, SscOutcome,
};
