//! Multi-seed experiments, ablation sweeps and their file artifacts.

mod ablation;
mod config;
mod output;
mod result;

pub use ablation::{ablation_csv, run_ablation, AblationAxis, AblationRow, BETA_GRID, EPSILON_GRID};
pub use config::{sibling_test_dir, RunConfig, SehParams, StrategyName};
pub use output::{
    read_result, rounds_csv, selections_csv, write_outputs, PROBE_RELIABILITY_CSV, RELIABILITY_CSV, RESULT_JSON,
    ROUNDS_CSV, SELECTIONS_CSV,
};
pub use result::{
    aggregate, recompute_calibration, recompute_probe_calibration, run_experiment, run_experiment_on,
    ExperimentResult, MeanStd, RoundAggregate,
};
