use std::path::Path;

use serde::{Deserialize, Serialize};

use super::run::{RegistrationStatus, RunReport};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            _ => Err(Error::config("format", format!("unknown format `{s}` (csv, json)"))),
        }
    }
}

/// One CSV row per keyframe. Columns, in order:
///
/// `keyframe, timestamp, distance, truth_{x,y,z}, vio_{x,y,z},
/// vio_aligned_{x,y,z}, vio_anchored_{x,y,z}, status, stage, inliers,
/// registered_{x,y,z}, reprojection_rmse, true_match, horizontal_error,
/// fused_{x,y,z}`
///
/// `status` is one of `not_attempted`, `skipped`, `failed`, `success`;
/// `stage` names the failing stage of a failed registration. Cells that do not
/// apply are empty. Floats are written in shortest round-trip form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyframeRow {
    pub keyframe: usize,
    pub timestamp: f64,
    pub distance: f64,
    pub truth_x: f64,
    pub truth_y: f64,
    pub truth_z: f64,
    pub vio_x: f64,
    pub vio_y: f64,
    pub vio_z: f64,
    pub vio_aligned_x: Option<f64>,
    pub vio_aligned_y: Option<f64>,
    pub vio_aligned_z: Option<f64>,
    pub vio_anchored_x: f64,
    pub vio_anchored_y: f64,
    pub vio_anchored_z: f64,
    pub status: String,
    pub stage: Option<String>,
    pub inliers: Option<usize>,
    pub registered_x: Option<f64>,
    pub registered_y: Option<f64>,
    pub registered_z: Option<f64>,
    pub reprojection_rmse: Option<f64>,
    pub true_match: Option<bool>,
    pub horizontal_error: Option<f64>,
    pub fused_x: Option<f64>,
    pub fused_y: Option<f64>,
    pub fused_z: Option<f64>,
}

/// The CSV view of a report.
pub fn keyframe_rows(report: &RunReport) -> Vec<KeyframeRow> {
    report
        .keyframes
        .iter()
        .map(|k| {
            let (stage, result, true_match, horizontal_error) = match &k.registration {
                RegistrationStatus::Failed { stage, .. } => (Some(stage.to_string()), None, None, None),
                RegistrationStatus::Success {
                    result,
                    true_match,
                    horizontal_error,
                    ..
                } => (None, Some(result), Some(*true_match), Some(*horizontal_error)),
                _ => (None, None, None, None),
            };
            KeyframeRow {
                keyframe: k.keyframe,
                timestamp: k.timestamp,
                distance: k.distance,
                truth_x: k.truth.x,
                truth_y: k.truth.y,
                truth_z: k.truth.z,
                vio_x: k.vio.x,
                vio_y: k.vio.y,
                vio_z: k.vio.z,
                vio_aligned_x: k.vio_aligned.map(|v| v.x),
                vio_aligned_y: k.vio_aligned.map(|v| v.y),
                vio_aligned_z: k.vio_aligned.map(|v| v.z),
                vio_anchored_x: k.vio_anchored.x,
                vio_anchored_y: k.vio_anchored.y,
                vio_anchored_z: k.vio_anchored.z,
                status: k.registration.label().to_string(),
                stage,
                inliers: result.map(|r| r.inlier_count),
                registered_x: result.map(|r| r.body_position.x),
                registered_y: result.map(|r| r.body_position.y),
                registered_z: result.map(|r| r.body_position.z),
                reprojection_rmse: result.and_then(|r| r.reprojection_rmse),
                true_match,
                horizontal_error,
                fused_x: k.fused.map(|f| f.x),
                fused_y: k.fused.map(|f| f.y),
                fused_z: k.fused.map(|f| f.z),
            }
        })
        .collect()
}

pub fn report_to_json(report: &RunReport) -> Result<String> {
    serde_json::to_string_pretty(report).map_err(|e| Error::invalid("report", e.to_string()))
}

pub fn report_to_csv(report: &RunReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in keyframe_rows(report) {
        w.serialize(row).map_err(|e| Error::invalid("report", e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid("report", e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::invalid("report", e.to_string()))
}

pub fn export_report(report: &RunReport, path: &Path, format: ReportFormat) -> Result<()> {
    let text = match format {
        ReportFormat::Json => report_to_json(report)?,
        ReportFormat::Csv => report_to_csv(report)?,
    };
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Loads a report written in the JSON format.
pub fn load_report(path: &Path) -> Result<RunReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.into(),
        reason: e.to_string(),
    })
}

/// Loads the rows of a report written in the CSV format.
pub fn load_report_csv(path: &Path) -> Result<Vec<KeyframeRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            path: path.into(),
            reason: format!("{other:?}"),
        },
    })?;
    r.deserialize()
        .map(|row| {
            row.map_err(|e| Error::Parse {
                path: path.into(),
                reason: e.to_string(),
            })
        })
        .collect()
}
