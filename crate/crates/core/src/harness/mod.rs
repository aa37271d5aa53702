//! Experiment configuration, the staged pipeline, baselines and reporting.

mod config;
mod report;
mod run;
pub mod svg;

pub use config::{BaselineSpec, DatasetSpec, ExperimentConfig, KernelSpec, ModelSpec, ShrinkageSpec};
pub use report::{aggregate_accuracy, report, AccuracyPoint, ReportSummary};
pub use run::{
    cells, load_data, load_trajectory, metrics_csv, read_metrics, resolve_jobs, run_baseline, run_experiment,
    run_stage, stage_data, stage_kernels, stage_svm, stage_train, BaselineArtifacts, Cell, CellFailure, MetricRow,
    PsdRow, RunArtifacts, RunContext, Stage, TrajectoryMeta, JOBS_ENV, METRICS_HEADER,
};
