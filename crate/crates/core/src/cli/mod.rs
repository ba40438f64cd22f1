//! Experiment harness: run configuration, seeded multi-run training with
//! CSV output, the regression surprise demo, eta sweeps and visitation grids.

mod config;
mod demo;
mod experiment;
mod visitation;

pub use config::RunConfig;
pub use demo::{bnn_demo, demo_target, quartic_features, DemoConfig, DemoOutcome};
pub use experiment::{
    aggregate, all_iteration_median, read_curve, run_experiment, run_seed, sweep_eta, visited_path, CurvePoint,
    EpochRecord, ExperimentOutcome, SeedRun, SweepCell, CURVE_SCHEMA,
};
pub use visitation::{export_visitation, load_visited};
