//! Approximately uniform sampling over the distinct entities of a dataset
//! that contains duplicate records.
//!
//! Each estimator produces a [`ProbabilityMap`] with an estimated selection
//! probability per record; [`sample_clean`] then rejects draws so that every
//! entity is equally likely regardless of how many copies it has.

pub mod balanced;
pub mod error;
pub mod gmm;
pub mod harness;
pub mod ingest;
pub mod lsh;
pub mod model;
pub mod rng;
pub mod sampler;

pub use error::{Error, Result};
pub use model::{
    empirical_distribution, relative_error, tv_distance, Dataset, DiscreteDistribution,
    EntityLabels, EntityTable, Features,
};
pub use sampler::{
    exact_induced_distribution, expected_trials_per_accept, induced_tv_to_uniform, sample_clean,
    ProbabilityMap, SampleResult, Sampler,
};
