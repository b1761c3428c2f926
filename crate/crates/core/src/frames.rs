//! Coordinate frames, rotations, the pinhole camera and the small geometric
//! transforms shared by the rest of the crate.
//!
//! Conventions used throughout:
//!
//! * The geodetic frame `G` is East-North-Up with its origin at the map's
//!   left-up corner. The ground is the plane `z = 0`.
//! * The body frame is x forward, y left, z up. A heading `θ` is the yaw of the
//!   body x axis, counterclockwise from East about Up, so `Rz(θ)` is the
//!   standard z-axis rotation matrix.
//! * The camera frame is x right, y down, z along the optical axis.
//! * Map pixels have u to the right (East) and v downward (South).

use nalgebra::{Matrix2, Matrix3, Unit, UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Unit quaternion (`w`, `i`, `j`, `k`).
pub type Quat = UnitQuaternion<f64>;

/// Renormalizes a quaternion that may have accumulated rounding drift.
pub fn renormalize(q: &Quat) -> Quat {
    Unit::new_normalize(q.into_inner())
}

/// Yaw-only rotation about the Up axis.
pub fn yaw_quat(heading: f64) -> Quat {
    UnitQuaternion::from_axis_angle(&Vector3::z_axis(), heading)
}

/// Rigid transform mapping points from a child frame into a parent frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub orientation: Quat,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn new(position: Vector3<f64>, orientation: Quat) -> Self {
        Self {
            position,
            orientation: renormalize(&orientation),
        }
    }

    pub fn identity() -> Self {
        Self {
            position: Vector3::zeros(),
            orientation: Quat::identity(),
        }
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.orientation.to_rotation_matrix().into_inner()
    }

    /// `self ∘ other`: first apply `other`, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            position: self.position + self.orientation * other.position,
            orientation: renormalize(&(self.orientation * other.orientation)),
        }
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.orientation.inverse();
        Pose {
            position: -(inv * self.position),
            orientation: inv,
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.orientation * p + self.position
    }

    pub fn inverse_transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.orientation.inverse() * (p - self.position)
    }
}

/// Pinhole intrinsics; the model has no distortion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        let intr = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        intr.validate()?;
        Ok(intr)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::invalid("intrinsics.focal", "fx and fy must be positive"));
        }
        if !(self.cx > 0.0 && self.cx < self.width as f64) {
            return Err(Error::invalid("intrinsics.cx", "principal point outside image"));
        }
        if !(self.cy > 0.0 && self.cy < self.height as f64) {
            return Err(Error::invalid("intrinsics.cy", "principal point outside image"));
        }
        Ok(())
    }

    /// Whether a pixel lies inside the image rectangle `[0, w) × [0, h)`.
    pub fn contains(&self, pixel: &Vector2<f64>) -> bool {
        pixel.x >= 0.0
            && pixel.y >= 0.0
            && pixel.x < self.width as f64
            && pixel.y < self.height as f64
    }
}

/// Camera mounting in the body frame (`R^B_C`, `p^B_C`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extrinsics {
    pub rotation_cam_in_body: Quat,
    pub position_cam_in_body: Vector3<f64>,
}

impl Extrinsics {
    pub fn identity() -> Self {
        Self {
            rotation_cam_in_body: Quat::identity(),
            position_cam_in_body: Vector3::zeros(),
        }
    }

    /// Rigidly mounted downward-looking camera: the optical axis points along
    /// body −z and the image u axis points along body +x (forward).
    pub fn nadir(lever_arm: Vector3<f64>) -> Self {
        Self {
            rotation_cam_in_body: nadir_mount(),
            position_cam_in_body: lever_arm,
        }
    }

    pub fn as_pose(&self) -> Pose {
        Pose {
            position: self.position_cam_in_body,
            orientation: self.rotation_cam_in_body,
        }
    }
}

/// `R^B_C` of the nadir mounting, a half turn about body x: camera x = body x,
/// camera y = −body y, camera z = −body z.
pub fn nadir_mount() -> Quat {
    UnitQuaternion::from_axis_angle(&Vector3::x_axis(), std::f64::consts::PI)
}

/// Intrinsics and extrinsics of the single camera on the vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraRig {
    pub intrinsics: CameraIntrinsics,
    pub extrinsics: Extrinsics,
}

/// Raster geometry of the georeferenced map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapGeometry {
    /// Meters per map pixel.
    pub resolution: f64,
    pub width_px: u32,
    pub height_px: u32,
}

impl MapGeometry {
    pub fn new(resolution: f64, width_px: u32, height_px: u32) -> Result<Self> {
        let geom = Self {
            resolution,
            width_px,
            height_px,
        };
        geom.validate()?;
        Ok(geom)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.resolution > 0.0 && self.resolution.is_finite()) {
            return Err(Error::invalid("map.resolution", "must be positive"));
        }
        if self.width_px == 0 || self.height_px == 0 {
            return Err(Error::invalid("map.size", "map extent must be non-empty"));
        }
        Ok(())
    }

    pub fn width_m(&self) -> f64 {
        self.width_px as f64 * self.resolution
    }

    pub fn height_m(&self) -> f64 {
        self.height_px as f64 * self.resolution
    }

    /// Whether a geodetic horizontal position lies over the map.
    pub fn contains_geodetic(&self, p: &Vector2<f64>) -> bool {
        p.x >= 0.0 && p.x <= self.width_m() && p.y <= 0.0 && p.y >= -self.height_m()
    }
}

/// Map pixel to East-North meters relative to the map's left-up corner.
pub fn map_pixel_to_geodetic(u_px: f64, v_px: f64, geom: &MapGeometry) -> Result<Vector2<f64>> {
    if !(0.0..=geom.width_px as f64).contains(&u_px) {
        return Err(Error::invalid("u_px", format!("{u_px} outside [0, {}]", geom.width_px)));
    }
    if !(0.0..=geom.height_px as f64).contains(&v_px) {
        return Err(Error::invalid("v_px", format!("{v_px} outside [0, {}]", geom.height_px)));
    }
    Ok(map_offset_to_geodetic(&Vector2::new(u_px, v_px), geom))
}

/// Snaps a map pixel to the nearest node of a `stride`-pixel grid, clamped to
/// the last grid node inside the map.
pub fn snap_pixel_to_grid(px: &Vector2<f64>, stride: u32, geom: &MapGeometry) -> Vector2<f64> {
    let s = stride.max(1) as f64;
    let snap = |x: f64, extent: u32| {
        let last = (extent / stride.max(1)) as f64 * s;
        ((x / s).round() * s).clamp(0.0, last)
    };
    Vector2::new(snap(px.x, geom.width_px), snap(px.y, geom.height_px))
}

/// Unbounded linear part of [`map_pixel_to_geodetic`], valid for pixel offsets.
pub fn map_offset_to_geodetic(offset_px: &Vector2<f64>, geom: &MapGeometry) -> Vector2<f64> {
    Vector2::new(offset_px.x * geom.resolution, -offset_px.y * geom.resolution)
}

/// Inverse of [`map_offset_to_geodetic`] (no bounds check).
pub fn geodetic_to_map_pixel(p: &Vector2<f64>, geom: &MapGeometry) -> Vector2<f64> {
    Vector2::new(p.x / geom.resolution, -p.y / geom.resolution)
}

pub fn project(point_cam: &Vector3<f64>, intr: &CameraIntrinsics) -> Result<Vector2<f64>> {
    if point_cam.z <= 0.0 {
        return Err(Error::BehindCamera { z: point_cam.z });
    }
    Ok(Vector2::new(
        intr.fx * point_cam.x / point_cam.z + intr.cx,
        intr.fy * point_cam.y / point_cam.z + intr.cy,
    ))
}

/// Unit-norm viewing ray through a pixel.
pub fn back_project(pixel: &Vector2<f64>, intr: &CameraIntrinsics) -> Vector3<f64> {
    Vector3::new(
        (pixel.x - intr.cx) / intr.fx,
        (pixel.y - intr.cy) / intr.fy,
        1.0,
    )
    .normalize()
}

/// `R_2D(θ)`: takes image axes (u along the body's forward axis, v down) into
/// map-pixel axes for a nadir camera whose vehicle heads `θ`.
///
/// `R_2D(θ) = [[cos θ, sin θ], [−sin θ, cos θ]]`. With v pointing down this
/// turns the image counterclockwise on screen by `θ`, so `R_2D(0)` is the
/// identity (forward = East = map u).
pub fn image_to_map_rotation(heading: f64) -> Matrix2<f64> {
    let (s, c) = heading.sin_cos();
    Matrix2::new(c, s, -s, c)
}

/// Rotates and rescales a camera pixel onto the map raster.
///
/// The pixel is taken relative to the principal point and the result is a
/// map-pixel offset from the point directly below the camera. The scale is
/// `(H / f) / σ^m`, which converts camera pixels into map pixels.
pub fn warp_image_point(
    pixel: &Vector2<f64>,
    heading: f64,
    altitude: f64,
    intr: &CameraIntrinsics,
    geom: &MapGeometry,
) -> Result<Vector2<f64>> {
    if !(altitude > 0.0) {
        return Err(Error::invalid("altitude", format!("{altitude} is not positive")));
    }
    let metric = Vector2::new(
        (pixel.x - intr.cx) * altitude / intr.fx,
        (pixel.y - intr.cy) * altitude / intr.fy,
    );
    Ok(image_to_map_rotation(heading) * metric / geom.resolution)
}

/// Yaw-only rotation `R^G_W(θ, 0, 0)` of a local-world point.
pub fn rotate_world_to_geo(point_w: &Vector3<f64>, heading: f64) -> Vector3<f64> {
    yaw_quat(heading) * point_w
}

/// Body position from a camera pose: `p^G_B = p^G_C − R^G_C R^C_B p^B_C`.
pub fn body_position_from_camera(cam_pose_geo: &Pose, ext: &Extrinsics) -> Vector3<f64> {
    let r_c_b = ext.rotation_cam_in_body.inverse();
    cam_pose_geo.position - cam_pose_geo.orientation * (r_c_b * ext.position_cam_in_body)
}

pub fn body_pose_from_camera(cam_pose_geo: &Pose, ext: &Extrinsics) -> Pose {
    cam_pose_geo.compose(&ext.as_pose().inverse())
}

pub fn camera_pose_from_body(body_pose: &Pose, ext: &Extrinsics) -> Pose {
    body_pose.compose(&ext.as_pose())
}

/// Roll, pitch and yaw (intrinsic z-y-x) of an orientation.
pub fn euler_angles(q: &Quat) -> (f64, f64, f64) {
    q.euler_angles()
}

/// Angle between the body up axis and the vertical.
pub fn tilt_angle(q: &Quat) -> f64 {
    let up = q * Vector3::z();
    up.z.clamp(-1.0, 1.0).acos()
}
