//! Evaluation protocol: duplicate injection, error sweeps, report files.

pub mod acceptance;
pub mod bounds;
pub mod experiment;
pub mod inject;
pub mod loaders;
pub mod report;
pub mod stats;
pub mod synthetic;

pub use experiment::{
    run_experiment, run_experiment_on, CellReport, DataSource, ExperimentSpec, Method, MethodParams,
    RowTrend, SampleReport,
};
pub use inject::{inject_duplicates, DupProfile};
pub use loaders::RealDataset;
pub use report::emit_report;
