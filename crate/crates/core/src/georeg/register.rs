use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::pnp::{pnp_solve, PnpFailure};
use super::vote::{translation_vote, VoteFailure};
use super::{apply_translation, heading_align, QueryPointSet, RegistrationParams, RegistrationResult};
use crate::error::Result;
use crate::frames::{
    body_position_from_camera, camera_pose_from_body, map_offset_to_geodetic, warp_image_point, yaw_quat, CameraRig,
    Pose,
};
use crate::map_index::{match_descriptors, MapFeatureDB};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Matching,
    Voting,
    Pnp,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stage::Matching => "matching",
            Stage::Voting => "voting",
            Stage::Pnp => "pnp",
        })
    }
}

/// A registration that did not produce a pose, with the stage that stopped it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationFailure {
    pub keyframe: usize,
    pub stage: Stage,
    pub detail: String,
}

impl RegistrationFailure {
    fn new(q: &QueryPointSet, stage: Stage, detail: impl Into<String>) -> Self {
        Self {
            keyframe: q.keyframe,
            stage,
            detail: detail.into(),
        }
    }

    fn voting(q: &QueryPointSet, f: VoteFailure) -> Self {
        Self::new(
            q,
            Stage::Voting,
            format!("best hypothesis has {} inliers among {} matches", f.best_inliers, f.matches),
        )
    }
}

/// Registers the reconstructed points of one keyframe against the map and
/// relocalizes the camera.
///
/// Pipeline: heading alignment with the first keyframe's compass reading,
/// descriptor matching, translation voting, translation of the inlier points,
/// and PnP between the inlier pixels and the aligned points. PnP starts from
/// the odometry camera pose carried through the same heading rotation and
/// voted translation.
pub fn register_keyframe(
    q: &QueryPointSet,
    db: &MapFeatureDB,
    params: &RegistrationParams,
    rig: &CameraRig,
    first_kf_heading: f64,
) -> Result<std::result::Result<RegistrationResult, RegistrationFailure>> {
    let points_geo = heading_align(q, first_kf_heading);
    let matches = match_descriptors(&descriptors(q), db, params.ratio)?;
    if matches.is_empty() {
        return Ok(Err(RegistrationFailure::new(q, Stage::Matching, "no descriptor matches")));
    }
    let vote = match translation_vote(&points_geo, &matches, db, params.inlier_radius, params.min_inliers)? {
        Ok(v) => v,
        Err(f) => return Ok(Err(RegistrationFailure::voting(q, f))),
    };

    let inlier_points: Vec<Vector3<f64>> = vote.inliers.iter().map(|m| points_geo[m.query]).collect();
    let aligned = apply_translation(&inlier_points, &vote.translation);
    let pixels: Vec<Vector2<f64>> = vote.inliers.iter().map(|m| q.features[m.query].pixel).collect();

    let heading = yaw_quat(first_kf_heading);
    let cam_w = camera_pose_from_body(&q.vio_pose, &rig.extrinsics);
    let guess = Pose::new(
        heading * cam_w.position + Vector3::new(vote.translation.x, vote.translation.y, 0.0),
        heading * cam_w.orientation,
    );
    let solution = match pnp_solve(&pixels, &aligned, &rig.intrinsics, &guess, &params.pnp)? {
        Ok(s) => s,
        Err(PnpFailure::NotConverged { iterations, rmse }) => {
            return Ok(Err(RegistrationFailure::new(
                q,
                Stage::Pnp,
                format!("not converged after {iterations} iterations (rmse {rmse:.3} px)"),
            )))
        }
        Err(PnpFailure::InvalidInitialGuess) => {
            return Ok(Err(RegistrationFailure::new(q, Stage::Pnp, "initial pose sees points behind the camera")))
        }
    };

    Ok(Ok(RegistrationResult {
        keyframe: q.keyframe,
        translation: Vector3::new(vote.translation.x, vote.translation.y, 0.0),
        inlier_count: vote.inliers.len(),
        inliers: vote.inliers.iter().map(|m| (m.query, m.map)).collect(),
        camera_pose: solution.pose,
        body_position: body_position_from_camera(&solution.pose, &rig.extrinsics),
        reprojection_rmse: Some(solution.rmse),
    }))
}

/// Image-level baseline: every pixel is rotated by this keyframe's compass
/// heading and scaled by the odometry altitude onto the map, the warped 2D
/// points are voted against the map, and the voted translation is the ground
/// point below the camera. The camera is assumed to look straight down and the
/// body altitude is copied from the odometry.
pub fn baseline_image_register(
    q: &QueryPointSet,
    db: &MapFeatureDB,
    params: &RegistrationParams,
    rig: &CameraRig,
) -> Result<std::result::Result<RegistrationResult, RegistrationFailure>> {
    let heading = yaw_quat(q.heading);
    let lever = rig.extrinsics.position_cam_in_body;
    let camera_height = q.altitude + lever.z;
    let points_geo = q
        .features
        .iter()
        .map(|f| {
            let offset = warp_image_point(&f.pixel, q.heading, camera_height, &rig.intrinsics, &db.geom)?;
            let p = map_offset_to_geodetic(&offset, &db.geom);
            Ok(Vector3::new(p.x, p.y, 0.0))
        })
        .collect::<Result<Vec<_>>>()?;
    let matches = match_descriptors(&descriptors(q), db, params.ratio)?;
    if matches.is_empty() {
        return Ok(Err(RegistrationFailure::new(q, Stage::Matching, "no descriptor matches")));
    }
    let vote = match translation_vote(&points_geo, &matches, db, params.inlier_radius, params.min_inliers)? {
        Ok(v) => v,
        Err(f) => return Ok(Err(RegistrationFailure::voting(q, f))),
    };
    let lever_xy = (heading * Vector3::new(lever.x, lever.y, 0.0)).xy();
    let body_xy = vote.translation - lever_xy;
    let body_pose = Pose::new(Vector3::new(body_xy.x, body_xy.y, q.altitude), heading);
    let camera_pose = camera_pose_from_body(&body_pose, &rig.extrinsics);
    Ok(Ok(RegistrationResult {
        keyframe: q.keyframe,
        translation: Vector3::new(vote.translation.x, vote.translation.y, 0.0),
        inlier_count: vote.inliers.len(),
        inliers: vote.inliers.iter().map(|m| (m.query, m.map)).collect(),
        camera_pose,
        body_position: body_position_from_camera(&camera_pose, &rig.extrinsics),
        reprojection_rmse: None,
    }))
}

fn descriptors(q: &QueryPointSet) -> Vec<&[f64]> {
    q.features.iter().map(|f| f.descriptor.as_slice()).collect()
}
