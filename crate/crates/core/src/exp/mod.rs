//! Experiment orchestration: config files, seeded multi-run execution,
//! result and manifest files, density grids and the gradient-check suite.

mod config;
mod density;
mod gradsuite;
mod run;

pub use config::{run_seed, DatasetConfig, DatasetKind, ExperimentConfig, ExperimentSection};
pub use density::{export_density_grid, Bounds, DensityGrid};
pub use gradsuite::{run_suite, GradCheckResult};
pub use run::{
    default_out_dir, eval_seed, output_root, results_csv, run_experiment, train_run, ExperimentOutcome, RunOptions,
    RunRecord, CSV_HEADER, CSV_SCHEMA_VERSION, OUT_ENV,
};
