use std::f64::consts::TAU;

use nalgebra::{Unit, UnitQuaternion, Vector2, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{stream_rng, streams};
use crate::error::{Error, Result};
use crate::frames::{yaw_quat, Pose};

/// Description of a flight: a piecewise-linear horizontal path flown at
/// constant speed and altitude, with an oscillating tilt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathSpec {
    /// Horizontal waypoints in the geodetic frame, meters (East, North).
    pub waypoints: Vec<[f64; 2]>,
    /// m/s
    pub speed: f64,
    /// Height above the terrain, meters.
    pub altitude: f64,
    /// Seconds between keyframes.
    pub keyframe_interval: f64,
    /// Peak tilt of the body away from level, radians.
    pub roll_pitch_amplitude: f64,
    /// Period of the tilt oscillation, seconds.
    #[serde(default = "default_tilt_period")]
    pub tilt_period: f64,
    /// Half-width of the along-track window used to smooth the heading, meters.
    #[serde(default = "default_heading_smoothing")]
    pub heading_smoothing: f64,
}

fn default_tilt_period() -> f64 {
    17.3
}

fn default_heading_smoothing() -> f64 {
    15.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrueKeyframe {
    pub timestamp: f64,
    /// Body pose in the geodetic frame.
    pub pose: Pose,
    /// Yaw of the body, radians counterclockwise from East.
    pub heading: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueTrajectory {
    pub keyframes: Vec<TrueKeyframe>,
}

impl TrueTrajectory {
    pub fn len(&self) -> usize {
        self.keyframes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keyframes.is_empty()
    }

    pub fn positions(&self) -> Vec<Vector3<f64>> {
        self.keyframes.iter().map(|k| k.pose.position).collect()
    }
}

struct Polyline {
    points: Vec<Vector2<f64>>,
    /// Cumulative length at each point.
    stations: Vec<f64>,
}

impl Polyline {
    fn new(waypoints: &[[f64; 2]]) -> Self {
        let points: Vec<_> = waypoints.iter().map(|w| Vector2::new(w[0], w[1])).collect();
        let mut stations = vec![0.0];
        for w in points.windows(2) {
            let last = *stations.last().unwrap();
            stations.push(last + (w[1] - w[0]).norm());
        }
        Self { points, stations }
    }

    fn length(&self) -> f64 {
        *self.stations.last().unwrap()
    }

    fn at(&self, s: f64) -> Vector2<f64> {
        let s = s.clamp(0.0, self.length());
        let seg = self
            .stations
            .windows(2)
            .position(|w| s <= w[1] && w[1] > w[0])
            .unwrap_or(self.points.len() - 2);
        let (s0, s1) = (self.stations[seg], self.stations[seg + 1]);
        let f = if s1 > s0 { (s - s0) / (s1 - s0) } else { 0.0 };
        self.points[seg] + (self.points[seg + 1] - self.points[seg]) * f
    }

    fn heading(&self, s: f64, half_window: f64) -> f64 {
        let d = self.at(s + half_window) - self.at(s - half_window);
        if d.norm() > 1e-9 {
            return d.y.atan2(d.x);
        }
        // Window collapsed (e.g. a full reversal): fall back to the local segment.
        let d = self.at(s + 1e-3) - self.at(s - 1e-3);
        d.y.atan2(d.x)
    }
}

/// Samples keyframes along the path at fixed time intervals.
///
/// Attitude is `Rz(heading) · Rot(a(t), α(t))`: the body tilts by
/// `α(t) = A sin(2πt/T + φ)` about a horizontal body axis `a(t)` that itself
/// turns slowly, so the horizontal angle is `|α(t)|` with mean `2A/π`.
pub fn generate_trajectory(seed: u64, spec: &PathSpec) -> Result<TrueTrajectory> {
    if spec.waypoints.len() < 2 {
        return Err(Error::invalid("waypoints", "need at least two waypoints"));
    }
    if !(spec.speed > 0.0) {
        return Err(Error::invalid("speed", "must be positive"));
    }
    if !(spec.altitude > 0.0) {
        return Err(Error::invalid("altitude", "must be positive"));
    }
    if !(spec.keyframe_interval > 0.0) {
        return Err(Error::invalid("keyframe_interval", "must be positive"));
    }
    if !(spec.roll_pitch_amplitude >= 0.0) || !(spec.tilt_period > 0.0) {
        return Err(Error::invalid("roll_pitch_amplitude", "amplitude and period must be non-negative / positive"));
    }
    let path = Polyline::new(&spec.waypoints);
    let length = path.length();
    if length <= 1e-9 {
        return Err(Error::invalid("waypoints", "path has zero length"));
    }

    let mut rng = stream_rng(seed, streams::TRAJECTORY);
    let tilt_phase = rng.random_range(0.0..TAU);
    let axis_phase = rng.random_range(0.0..TAU);
    // Incommensurate with the tilt period so the tilt axis sweeps all directions.
    let axis_period = spec.tilt_period * 4.27;

    let step = spec.speed * spec.keyframe_interval;
    let count = (length / step + 1e-9).floor() as usize + 1;
    let keyframes = (0..count)
        .map(|k| {
            let t = k as f64 * spec.keyframe_interval;
            let s = k as f64 * step;
            let xy = path.at(s);
            let heading = path.heading(s, spec.heading_smoothing);
            let alpha = spec.roll_pitch_amplitude * (TAU * t / spec.tilt_period + tilt_phase).sin();
            let nu = TAU * t / axis_period + axis_phase;
            let axis = Unit::new_normalize(Vector3::new(nu.cos(), nu.sin(), 0.0));
            let orientation = yaw_quat(heading) * UnitQuaternion::from_axis_angle(&axis, alpha);
            TrueKeyframe {
                timestamp: t,
                pose: Pose::new(Vector3::new(xy.x, xy.y, spec.altitude), orientation),
                heading,
            }
        })
        .collect();
    Ok(TrueTrajectory { keyframes })
}
