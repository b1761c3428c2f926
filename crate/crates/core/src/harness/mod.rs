//! Scenario configuration, end-to-end runs, metrics, method comparison and
//! report export.

mod compare;
mod config;
mod export;
mod metrics;
mod run;

pub use compare::{compare_methods, Comparison, MethodSummary, SeedRun};
pub use config::{CameraConfig, Method, ScenarioConfig, WorldConfig};
pub use export::{
    export_report, keyframe_rows, load_report, load_report_csv, report_to_csv, report_to_json, KeyframeRow,
    ReportFormat,
};
pub use metrics::{match_rate, rmse, umeyama_align, Similarity, Summary};
pub use run::{
    compute_metrics, run_prepared, run_scenario, KeyframeRecord, RegistrationStatus, RunMetrics, RunReport,
    Scenario, StageTimings,
};
