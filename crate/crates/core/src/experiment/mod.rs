//! Experiment harness: configuration, training and evaluation runs,
//! baseline and sweep grids, CSV results and SVG plots.

pub mod config;
pub mod csv;
pub mod run;
pub mod svg;

pub use config::{Axis, ExperimentConfig, Point};
pub use csv::{ResultRow, Scheme};
pub use run::{cmd_baseline, cmd_eval, cmd_plot, cmd_sweep, cmd_train, replica_mean, run_unit, TrainSummary, UnitResult};
