//! Experiment orchestration: configs, seeded runs, and report generation.

pub mod config;
pub mod report;
pub mod run;

pub use config::{
    content_hash, default_seeds, ExperimentConfig, Method, ResultRecord, TrainOverrides,
    TransferConfig,
};
pub use report::{aggregate, collect_records, csv_report, svg_report, write_csv, ReportRow};
pub use run::{
    adapt, build_model, default_arch, panels_for, persist_run, pretrain_base, run_experiment,
    run_single, sweep_threads, AdaptOutcome, Panel, Provenance, SingleRun,
};
