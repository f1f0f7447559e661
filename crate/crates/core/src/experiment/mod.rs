//! Reproducible end-to-end experiments: configuration, truth recipes, study
//! orchestration, and report emission.

pub mod config;
pub mod report;
pub mod run;
pub mod truth;

pub use config::{parse_config, parse_config_str, ExperimentConfig};
pub use report::{emit_report, rows_to_csv, summary_to_csv, ExperimentReport, ReportFormat, ReportRow, SummaryRow};
pub use run::{run_convergence_table, run_mise_study, run_single_cell, CellArtifacts};
