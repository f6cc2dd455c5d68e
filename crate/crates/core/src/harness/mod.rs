//! The command-line harness: configuration, experiments and the commands
//! behind the `glasspose` binary.

pub mod commands;
pub mod config;
pub mod experiment;

pub use commands::{
    cmd_evaluate, cmd_generate, cmd_gradcheck, cmd_predict, cmd_train_ref, EvaluateOptions, PredictOptions,
};
pub use config::{DepthSource, EstimatorConfig, GridConfig, HarnessConfig, MetricsConfig, NormalSource, ReportFormat};
pub use experiment::{run_grid, Condition, Featurized, GridReport, TrendCheck, GRID};
