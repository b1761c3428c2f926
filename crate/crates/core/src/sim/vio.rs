use std::collections::HashMap;
use std::f64::consts::TAU;

use nalgebra::{UnitQuaternion, Vector2, Vector3};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::world::{random_unit_vector, synthesize_descriptor, WorldModel};
use super::{stream_rng, streams, TrueTrajectory};
use crate::error::{Error, Result};
use crate::frames::{
    back_project, camera_pose_from_body, project, yaw_quat, CameraIntrinsics, CameraRig,
    Extrinsics, Pose,
};

/// Every stochastic knob of the simulated sensors and front-end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Gaussian pixel noise on every observation, pixels.
    pub pixel_sigma: f64,
    /// Relative Gaussian noise on the inverse depth of a well-tracked feature.
    pub inverse_depth_sigma: f64,
    /// Fraction of tracks whose depth is grossly wrong (scaled by 0.5–0.75 or
    /// 1.33–2); these are what the reprojection gate is meant to reject.
    pub bad_depth_fraction: f64,
    /// Per-component Gaussian noise on camera and map descriptors.
    pub descriptor_sigma: f64,
    /// Constant compass bias, radians.
    pub compass_bias: f64,
    /// Per-reading compass noise, radians.
    pub compass_sigma: f64,
    /// Horizontal drift, meters per meter traveled.
    pub drift_rate: f64,
    /// Random-walk intensity of the drift direction, radians per √meter.
    pub drift_wander: f64,
    /// Yaw drift, radians per meter traveled.
    pub yaw_drift_rate: f64,
    /// Bound on the per-keyframe roll and pitch error, radians.
    pub attitude_noise_bound: f64,
    /// Gaussian noise on the estimated height, meters.
    pub altitude_sigma: f64,
    /// Gaussian spread of the yaw of the odometry frame at start-up, radians.
    pub initial_yaw_sigma: f64,
    /// Fraction of tracked features whose appearance no longer matches the map.
    pub outlier_fraction: f64,
    /// Number of map features that correspond to no landmark.
    pub distractor_count: usize,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            pixel_sigma: 0.5,
            inverse_depth_sigma: 0.01,
            bad_depth_fraction: 0.1,
            descriptor_sigma: 0.05,
            compass_bias: 0.01,
            compass_sigma: 0.02,
            drift_rate: 0.06,
            drift_wander: 0.02,
            yaw_drift_rate: 2e-5,
            attitude_noise_bound: 0.002,
            altitude_sigma: 0.5,
            initial_yaw_sigma: 0.01,
            outlier_fraction: 0.3,
            distractor_count: 2000,
        }
    }
}

impl NoiseConfig {
    /// No noise, no drift, no outliers, no distractors.
    pub fn zero() -> Self {
        Self {
            pixel_sigma: 0.0,
            inverse_depth_sigma: 0.0,
            bad_depth_fraction: 0.0,
            descriptor_sigma: 0.0,
            compass_bias: 0.0,
            compass_sigma: 0.0,
            drift_rate: 0.0,
            drift_wander: 0.0,
            yaw_drift_rate: 0.0,
            attitude_noise_bound: 0.0,
            altitude_sigma: 0.0,
            initial_yaw_sigma: 0.0,
            outlier_fraction: 0.0,
            distractor_count: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let non_negative = [
            ("noise.pixel_sigma", self.pixel_sigma),
            ("noise.inverse_depth_sigma", self.inverse_depth_sigma),
            ("noise.descriptor_sigma", self.descriptor_sigma),
            ("noise.compass_sigma", self.compass_sigma),
            ("noise.drift_rate", self.drift_rate),
            ("noise.drift_wander", self.drift_wander),
            ("noise.yaw_drift_rate", self.yaw_drift_rate),
            ("noise.attitude_noise_bound", self.attitude_noise_bound),
            ("noise.altitude_sigma", self.altitude_sigma),
            ("noise.initial_yaw_sigma", self.initial_yaw_sigma),
        ];
        for (field, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(field, format!("{v} must be a finite non-negative number")));
            }
        }
        for (field, v) in [
            ("noise.bad_depth_fraction", self.bad_depth_fraction),
            ("noise.outlier_fraction", self.outlier_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(field, format!("{v} outside [0, 1]")));
            }
        }
        if !self.compass_bias.is_finite() {
            return Err(Error::config("noise.compass_bias", "must be finite"));
        }
        Ok(())
    }
}

/// A landmark seen by the camera at one keyframe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub landmark_id: u32,
    pub pixel: Vector2<f64>,
    /// True range from the optical center, meters (the inverse of `λ`).
    pub depth: f64,
}

/// A feature tracked by the odometry at a keyframe.
///
/// The 3D point is reconstructed from the feature's host observation (the
/// previous keyframe, or the next one for keyframe 0) and the reprojection
/// error is measured against the observation at this keyframe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackedFeature {
    pub landmark_id: u32,
    /// Observation at this keyframe.
    pub pixel: Vector2<f64>,
    pub host_keyframe: usize,
    pub host_pixel: Vector2<f64>,
    /// Inverse range along the host ray, 1/m.
    pub inverse_depth: f64,
    /// Reconstructed point in the odometry world frame.
    pub point_world: Vector3<f64>,
    /// Pixels.
    pub reprojection_error: f64,
    pub descriptor: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VioOutput {
    pub keyframe: usize,
    pub timestamp: f64,
    /// Estimated body pose in the odometry world frame `W`.
    pub pose: Pose,
    pub features: Vec<TrackedFeature>,
    /// Estimated height above the terrain, meters.
    pub altitude: f64,
    /// Compass heading, radians counterclockwise from East.
    pub compass_heading: f64,
}

/// Landmarks whose noiseless projection lands in the image with positive
/// depth, with Gaussian pixel noise added afterwards.
pub fn simulate_keyframe<R: Rng + ?Sized>(
    pose: &Pose,
    world: &WorldModel,
    rig: &CameraRig,
    noise: &NoiseConfig,
    rng: &mut R,
) -> Result<Vec<Observation>> {
    if pose.position.z <= world.terrain_height {
        return Err(Error::invalid("pose", "camera must be above the terrain"));
    }
    let cam = camera_pose_from_body(pose, &rig.extrinsics);
    let mut out = Vec::new();
    for lm in &world.landmarks {
        let pc = cam.inverse_transform_point(&lm.position);
        let Ok(px) = project(&pc, &rig.intrinsics) else {
            continue;
        };
        if !rig.intrinsics.contains(&px) {
            continue;
        }
        let jitter = if noise.pixel_sigma > 0.0 {
            Vector2::new(rng.sample::<f64, _>(StandardNormal), rng.sample(StandardNormal)) * noise.pixel_sigma
        } else {
            Vector2::zeros()
        };
        out.push(Observation {
            landmark_id: lm.id,
            pixel: px + jitter,
            depth: pc.norm(),
        });
    }
    Ok(out)
}

/// `P^W = R^W_B (R^B_C (1/λ) π⁻¹(u, v) + p^B_C) + p^W_B`.
pub fn reconstruct_point(
    vio_pose: &Pose,
    pixel: &Vector2<f64>,
    inverse_depth: f64,
    intr: &CameraIntrinsics,
    ext: &Extrinsics,
) -> Result<Vector3<f64>> {
    if !(inverse_depth > 0.0) {
        return Err(Error::invalid("inverse_depth", format!("{inverse_depth} is not positive")));
    }
    let ray = back_project(pixel, intr);
    let in_body = ext.rotation_cam_in_body * (ray / inverse_depth) + ext.position_cam_in_body;
    Ok(vio_pose.orientation * in_body + vio_pose.position)
}

/// Per-keyframe drift state of the simulated odometry.
///
/// With `Δs_k` the distance flown since the previous keyframe:
///
/// ```text
/// φ_k = φ_{k-1} + drift_wander · √Δs_k · N(0, 1)        (φ_0 ~ U[0, 2π))
/// d_k = d_{k-1} + drift_rate · Δs_k · (cos φ_k, sin φ_k)
/// ψ_k = ψ_{k-1} + σ_ψ · yaw_drift_rate · Δs_k              (σ_ψ = ±1 per flight)
/// ```
///
/// `d_k` is the horizontal position error and `ψ_k` the yaw error, both
/// expressed in the geodetic frame; `|d_k| ≤ drift_rate · s_k` with equality
/// when the direction does not wander.
#[derive(Debug, Clone, Copy)]
struct DriftState {
    direction: f64,
    offset: Vector2<f64>,
    yaw: f64,
    yaw_sign: f64,
}

impl DriftState {
    fn new<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            direction: rng.random_range(0.0..TAU),
            offset: Vector2::zeros(),
            yaw: 0.0,
            yaw_sign: if rng.random_bool(0.5) { 1.0 } else { -1.0 },
        }
    }

    fn advance<R: Rng + ?Sized>(&mut self, distance: f64, noise: &NoiseConfig, rng: &mut R) {
        let n: f64 = rng.sample(StandardNormal);
        self.direction += noise.drift_wander * distance.sqrt() * n;
        self.offset += noise.drift_rate * distance * Vector2::new(self.direction.cos(), self.direction.sin());
        self.yaw += self.yaw_sign * noise.yaw_drift_rate * distance;
    }
}

fn symmetric<R: Rng + ?Sized>(bound: f64, rng: &mut R) -> f64 {
    if bound > 0.0 {
        rng.random_range(-bound..=bound)
    } else {
        0.0
    }
}

fn gaussian<R: Rng + ?Sized>(sigma: f64, rng: &mut R) -> f64 {
    if sigma > 0.0 {
        sigma * rng.sample::<f64, _>(StandardNormal)
    } else {
        0.0
    }
}

/// Produces the odometry output for every keyframe of a flight.
///
/// The odometry frame `W` is gravity aligned, has its origin on the terrain
/// below the first keyframe and its yaw equal to the first true heading plus
/// a random start-up offset; that transform is unknown to the consumer.
pub fn simulate_vio(
    truth: &TrueTrajectory,
    world: &WorldModel,
    rig: &CameraRig,
    noise: &NoiseConfig,
    max_features: usize,
    seed: u64,
) -> Result<Vec<VioOutput>> {
    if truth.is_empty() {
        return Err(Error::invalid("truth", "trajectory is empty"));
    }
    noise.validate()?;
    let intr = &rig.intrinsics;
    let ext = &rig.extrinsics;

    let mut drift_rng = stream_rng(seed, streams::DRIFT);
    let first = &truth.keyframes[0];
    let start_yaw = first.heading + gaussian(noise.initial_yaw_sigma, &mut drift_rng);
    let geo_from_world = Pose::new(
        Vector3::new(first.pose.position.x, first.pose.position.y, world.terrain_height),
        yaw_quat(start_yaw),
    );
    let world_from_geo = geo_from_world.inverse();

    let mut drift = DriftState::new(&mut drift_rng);
    let mut estimates = Vec::with_capacity(truth.len());
    for (k, kf) in truth.keyframes.iter().enumerate() {
        if k > 0 {
            let step = (kf.pose.position - truth.keyframes[k - 1].pose.position).norm();
            drift.advance(step, noise, &mut drift_rng);
        }
        let roll = symmetric(noise.attitude_noise_bound, &mut drift_rng);
        let pitch = symmetric(noise.attitude_noise_bound, &mut drift_rng);
        let dz = gaussian(noise.altitude_sigma, &mut drift_rng);
        let attitude_error = UnitQuaternion::from_euler_angles(roll, pitch, 0.0);
        let perturbed = Pose::new(
            kf.pose.position + Vector3::new(drift.offset.x, drift.offset.y, dz),
            yaw_quat(drift.yaw) * kf.pose.orientation * attitude_error,
        );
        estimates.push(world_from_geo.compose(&perturbed));
    }

    let mut obs_rng = stream_rng(seed, streams::OBSERVATION);
    let observations = truth
        .keyframes
        .iter()
        .map(|kf| simulate_keyframe(&kf.pose, world, rig, noise, &mut obs_rng))
        .collect::<Result<Vec<_>>>()?;
    let lookup: Vec<HashMap<u32, Observation>> = observations
        .iter()
        .map(|obs| obs.iter().map(|o| (o.landmark_id, *o)).collect())
        .collect();

    let mut track_rng = stream_rng(seed, streams::TRACKING);
    let mut compass_rng = stream_rng(seed, streams::COMPASS);
    let n = truth.len();
    let mut outputs = Vec::with_capacity(n);
    for k in 0..n {
        let host = match k {
            0 if n > 1 => 1,
            0 => 0,
            _ => k - 1,
        };
        let mut candidates: Vec<(Observation, Observation)> = observations[k]
            .iter()
            .filter_map(|o| lookup[host].get(&o.landmark_id).map(|h| (*o, *h)))
            .collect();
        candidates.shuffle(&mut track_rng);
        candidates.truncate(max_features);
        candidates.sort_by_key(|(o, _)| o.landmark_id);

        let cam_k = camera_pose_from_body(&estimates[k], ext);
        let mut features = Vec::with_capacity(candidates.len());
        for (obs, host_obs) in candidates {
            let true_inverse = 1.0 / host_obs.depth;
            let inverse_depth = if track_rng.random_bool(noise.bad_depth_fraction) {
                let factor = if track_rng.random_bool(0.5) {
                    track_rng.random_range(0.5..0.75)
                } else {
                    track_rng.random_range(1.33..2.0)
                };
                true_inverse / factor
            } else {
                let rel = gaussian(noise.inverse_depth_sigma, &mut track_rng);
                true_inverse * (1.0 + rel).max(0.05)
            };
            let lm = &world.landmarks[obs.landmark_id as usize];
            let descriptor = if track_rng.random_bool(noise.outlier_fraction) {
                random_unit_vector(world.descriptor_dim, &mut track_rng)
            } else {
                synthesize_descriptor(&lm.descriptor, noise.descriptor_sigma, &mut track_rng)
            };
            let point_world =
                reconstruct_point(&estimates[host], &host_obs.pixel, inverse_depth, intr, ext)?;
            let Ok(reprojected) = project(&cam_k.inverse_transform_point(&point_world), intr) else {
                continue;
            };
            features.push(TrackedFeature {
                landmark_id: obs.landmark_id,
                pixel: obs.pixel,
                host_keyframe: host,
                host_pixel: host_obs.pixel,
                inverse_depth,
                point_world,
                reprojection_error: (reprojected - obs.pixel).norm(),
                descriptor,
            });
        }

        let kf = &truth.keyframes[k];
        outputs.push(VioOutput {
            keyframe: k,
            timestamp: kf.timestamp,
            pose: estimates[k],
            features,
            altitude: estimates[k].position.z,
            compass_heading: kf.heading + noise.compass_bias + gaussian(noise.compass_sigma, &mut compass_rng),
        });
    }
    Ok(outputs)
}
