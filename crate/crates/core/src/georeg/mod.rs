//! Keyframe georegistration: reconstructed 3D points are heading-aligned with
//! the compass, registered to the map by translation voting, and the camera is
//! then relocalized by PnP against the aligned points. The image-level
//! baseline (warped 2D pixels voted against the map) lives here as well.

mod pnp;
mod register;
mod vote;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::{rotate_world_to_geo, Pose};
use crate::sim::VioOutput;

pub use pnp::{pnp_jacobian, pnp_residuals, pnp_retract, pnp_solve, PnpFailure, PnpOptions, PnpSolution};
pub use register::{baseline_image_register, register_keyframe, RegistrationFailure, Stage};
pub use vote::{translation_vote, Vote, VoteFailure};

/// Thresholds of the registration stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegistrationParams {
    /// Map grid stride, map pixels.
    pub stride: u32,
    /// Largest reprojection error of a usable reconstructed point, pixels.
    pub reproj_threshold: f64,
    /// Fewest gated points for a keyframe to be attempted.
    pub min_points: usize,
    /// Translation agreement radius of the vote, meters.
    pub inlier_radius: f64,
    /// Fewest vote inliers of a successful registration.
    pub min_inliers: usize,
    /// Descriptor ratio test; 1 disables it.
    pub ratio: f64,
    pub pnp: PnpOptions,
}

impl Default for RegistrationParams {
    fn default() -> Self {
        Self {
            stride: 10,
            reproj_threshold: 8.0,
            min_points: 20,
            inlier_radius: 9.0,
            min_inliers: 15,
            ratio: 0.8,
            pnp: PnpOptions::default(),
        }
    }
}

impl RegistrationParams {
    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 {
            return Err(Error::config("registration.stride", "must be at least 1"));
        }
        if !(self.reproj_threshold > 0.0) {
            return Err(Error::config("registration.reproj_threshold", "must be positive"));
        }
        if self.min_points == 0 {
            return Err(Error::config("registration.min_points", "must be positive"));
        }
        if !(self.inlier_radius > 0.0 && self.inlier_radius.is_finite()) {
            return Err(Error::config("registration.inlier_radius", "must be positive"));
        }
        if self.min_inliers == 0 {
            return Err(Error::config("registration.min_inliers", "must be positive"));
        }
        if !(self.ratio > 0.0 && self.ratio <= 1.0) {
            return Err(Error::config("registration.ratio", "must lie in (0, 1]"));
        }
        self.pnp.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryFeature {
    pub landmark_id: u32,
    pub descriptor: Vec<f64>,
    /// `P^W_i`, meters.
    pub point_world: Vector3<f64>,
    /// Observation at this keyframe, pixels.
    pub pixel: Vector2<f64>,
}

/// Query point set `Q_k` of one keyframe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryPointSet {
    pub keyframe: usize,
    pub features: Vec<QueryFeature>,
    /// Compass heading at this keyframe, radians.
    pub heading: f64,
    /// Odometry altitude, meters.
    pub altitude: f64,
    /// Odometry body pose in `W`, used to seed PnP.
    pub vio_pose: Pose,
}

impl QueryPointSet {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum QueryOutcome {
    Ready(QueryPointSet),
    /// Too few features passed the gate; the keyframe is not attempted.
    Skipped { retained: usize },
}

/// Keeps features with reprojection error `≤ reproj_threshold` and skips the
/// keyframe when fewer than `min_points` remain.
pub fn build_query_set(vio: &VioOutput, reproj_threshold: f64, min_points: usize) -> QueryOutcome {
    let features: Vec<QueryFeature> = vio
        .features
        .iter()
        .filter(|f| f.reprojection_error <= reproj_threshold)
        .map(|f| QueryFeature {
            landmark_id: f.landmark_id,
            descriptor: f.descriptor.clone(),
            point_world: f.point_world,
            pixel: f.pixel,
        })
        .collect();
    if features.len() < min_points {
        return QueryOutcome::Skipped {
            retained: features.len(),
        };
    }
    QueryOutcome::Ready(QueryPointSet {
        keyframe: vio.keyframe,
        features,
        heading: vio.compass_heading,
        altitude: vio.altitude,
        vio_pose: vio.pose,
    })
}

/// `P^G_i = R(θ_mag, 0, 0) P^W_i` for every query point.
pub fn heading_align(q: &QueryPointSet, first_kf_heading: f64) -> Vec<Vector3<f64>> {
    q.features
        .iter()
        .map(|f| rotate_world_to_geo(&f.point_world, first_kf_heading))
        .collect()
}

/// `P̄^G_i = P^G_i + (t_x, t_y, 0)`.
pub fn apply_translation(points_geo: &[Vector3<f64>], t: &Vector2<f64>) -> Vec<Vector3<f64>> {
    points_geo.iter().map(|p| p + Vector3::new(t.x, t.y, 0.0)).collect()
}

/// A successful registration of one keyframe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationResult {
    pub keyframe: usize,
    /// Voted translation; the third component is always zero.
    pub translation: Vector3<f64>,
    /// `(query index, map index)` of every vote inlier.
    pub inliers: Vec<(usize, usize)>,
    pub inlier_count: usize,
    /// Camera pose in `G`.
    pub camera_pose: Pose,
    /// `p^G_B`, meters.
    pub body_position: Vector3<f64>,
    /// PnP reprojection RMSE over inliers, pixels; absent for the baseline.
    pub reprojection_rmse: Option<f64>,
}

/// Fewest inliers and largest horizontal error of a true match.
pub const TRUE_MATCH_MIN_INLIERS: usize = 8;
pub const TRUE_MATCH_MAX_ERROR: f64 = 30.0;

/// At least eight inliers and within 30 m of the truth horizontally.
pub fn is_true_match(result: &RegistrationResult, truth_position: &Vector3<f64>) -> bool {
    let horizontal = (result.body_position.xy() - truth_position.xy()).norm();
    result.inlier_count >= TRUE_MATCH_MIN_INLIERS && horizontal <= TRUE_MATCH_MAX_ERROR
}
