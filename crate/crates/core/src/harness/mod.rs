//! Experiment orchestration: configuration, Monte Carlo runs, sweeps, and
//! CSV output.

mod banana;
mod config;
mod lorenz;
mod output;
mod step;
mod sweep;
mod tools;

pub use banana::{banana_replicate, run_banana, run_banana_with, BananaReplicate, BananaSetup, F_DIVERGENCE};
pub use config::{Experiment, ExperimentConfig, FilterKind};
pub use lorenz::{
    lorenz96_observation, lorenz_replicate, run_lorenz96, run_lorenz96_with, twin_truth, LorenzReplicate, LorenzSetup,
    TwinTruth, RMSE,
};
pub use output::{
    aggregate_rows, emit_csv, mean_and_se, metadata_path, read_csv, replicate_values, write_metadata, MetricValue,
    ResultRow, ROW_HEADER,
};
pub use step::{analysis_step, Forecast};
pub use sweep::{run_sweep, sweep_points, SweepBest, SweepReport};
pub use tools::{make_truth, train_rom, training_rows, write_rom};
