use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::{CameraIntrinsics, CameraRig, Extrinsics, MapGeometry};
use crate::georeg::RegistrationParams;
use crate::pose_graph::{GraphNoiseModel, OptimizeOptions};
use crate::sim::{NoiseConfig, PathSpec};

/// Registration strategy of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Reconstructed 3D points voted against the map, then PnP.
    Proposed,
    /// Image-level registration: compass-rotated, altitude-scaled pixels.
    BaselineM1,
    /// No registration; the odometry alone.
    VioOnly,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Proposed, Method::BaselineM1, Method::VioOnly];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::BaselineM1 => "baseline-m1",
            Method::VioOnly => "vio-only",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::config("method", format!("unknown method `{s}` (proposed, baseline-m1, vio-only)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldConfig {
    pub landmark_count: usize,
    /// Map resolution, meters per map pixel.
    pub resolution: f64,
    pub width_px: u32,
    pub height_px: u32,
    pub descriptor_dim: usize,
    /// Put every landmark on a map grid node so that the map database holds
    /// exact positions.
    #[serde(default)]
    pub grid_aligned: bool,
}

impl WorldConfig {
    pub fn geometry(&self) -> Result<MapGeometry> {
        MapGeometry::new(self.resolution, self.width_px, self.height_px)
            .map_err(|e| Error::config("world", e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraConfig {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    /// Camera center in the body frame, meters.
    #[serde(default)]
    pub lever_arm: [f64; 3],
}

impl CameraConfig {
    pub fn rig(&self) -> Result<CameraRig> {
        let intrinsics = CameraIntrinsics::new(self.fx, self.fy, self.cx, self.cy, self.width, self.height)
            .map_err(|e| Error::config("camera", e.to_string()))?;
        if self.lever_arm.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("camera.lever_arm", "must be finite"));
        }
        Ok(CameraRig {
            intrinsics,
            extrinsics: Extrinsics::nadir(Vector3::from(self.lever_arm)),
        })
    }
}

/// Everything a run depends on. Together with the seed it fixes every byte of
/// the run's report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub method: Method,
    /// Most features tracked per keyframe.
    pub max_features: usize,
    pub world: WorldConfig,
    pub camera: CameraConfig,
    pub trajectory: PathSpec,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub registration: RegistrationParams,
    #[serde(default)]
    pub graph: GraphNoiseModel,
    #[serde(default)]
    pub optimizer: OptimizeOptions,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::rural_like()
    }
}

impl ScenarioConfig {
    pub const PRESETS: [&'static str; 3] = ["rural-like", "zone-like", "noiseless"];

    /// Low, nearly level flight over a 600 m square map: a 1.18 km loop at
    /// 110 m with 5.63° of tilt.
    pub fn rural_like() -> Self {
        Self {
            seed: 0,
            method: Method::Proposed,
            max_features: 80,
            world: WorldConfig {
                landmark_count: 5600,
                resolution: 0.3,
                width_px: 2000,
                height_px: 2000,
                descriptor_dim: 64,
                grid_aligned: false,
            },
            camera: CameraConfig {
                fx: 850.0,
                fy: 850.0,
                cx: 320.0,
                cy: 240.0,
                width: 640,
                height: 480,
                lever_arm: [0.1, 0.0, -0.05],
            },
            trajectory: PathSpec {
                waypoints: vec![[150.0, -130.0], [490.0, -130.0], [490.0, -380.0], [150.0, -380.0], [150.0, -130.0]],
                speed: 2.6,
                altitude: 110.0,
                keyframe_interval: 4.0,
                roll_pitch_amplitude: 5.63f64.to_radians(),
                tilt_period: 17.3,
                heading_smoothing: 15.0,
            },
            noise: NoiseConfig::default(),
            registration: RegistrationParams::default(),
            graph: GraphNoiseModel::default(),
            optimizer: OptimizeOptions::default(),
        }
    }

    /// High, strongly tilted flight over a 1.2 km square map: a 2.45 km loop
    /// at 285 m with 7.8° of tilt and a wide-angle camera.
    pub fn zone_like() -> Self {
        let base = Self::rural_like();
        Self {
            max_features: 100,
            world: WorldConfig {
                landmark_count: 1900,
                width_px: 4000,
                height_px: 4000,
                ..base.world
            },
            camera: CameraConfig {
                fx: 483.0,
                fy: 481.0,
                cx: 320.0,
                cy: 256.0,
                width: 640,
                height: 512,
                ..base.camera
            },
            trajectory: PathSpec {
                waypoints: vec![[250.0, -337.0], [950.0, -337.0], [950.0, -862.0], [250.0, -862.0], [250.0, -337.0]],
                speed: 6.0,
                altitude: 285.0,
                roll_pitch_amplitude: 7.8f64.to_radians(),
                ..base.trajectory
            },
            noise: NoiseConfig {
                distractor_count: 3000,
                ..base.noise
            },
            ..base
        }
    }

    /// The rural-like flight with every noise source switched off, landmarks
    /// on the map grid and 100 keyframes.
    pub fn noiseless() -> Self {
        let base = Self::rural_like();
        Self {
            world: WorldConfig {
                landmark_count: 5000,
                grid_aligned: true,
                ..base.world
            },
            trajectory: PathSpec {
                // 1180 m loop flown in 99 steps of 11.9 m.
                speed: 2.975,
                ..base.trajectory
            },
            noise: NoiseConfig::zero(),
            ..base
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "rural-like" => Ok(Self::rural_like()),
            "zone-like" => Ok(Self::zone_like()),
            "noiseless" => Ok(Self::noiseless()),
            _ => Err(Error::config(
                "preset",
                format!("unknown preset `{name}` ({})", Self::PRESETS.join(", ")),
            )),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse {
            path: "<config>".into(),
            reason: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.into(),
            reason: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("config", e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_features == 0 {
            return Err(Error::config("max_features", "must be positive"));
        }
        let w = &self.world;
        if w.landmark_count == 0 {
            return Err(Error::config("world.landmark_count", "must be positive"));
        }
        if !(w.resolution > 0.0 && w.resolution.is_finite()) {
            return Err(Error::config("world.resolution", "must be positive"));
        }
        if w.width_px == 0 || w.height_px == 0 {
            return Err(Error::config("world.width_px", "map must have positive size"));
        }
        if w.descriptor_dim < 8 {
            return Err(Error::config("world.descriptor_dim", "must be at least 8"));
        }
        self.camera.rig()?;
        let t = &self.trajectory;
        if t.waypoints.len() < 2 {
            return Err(Error::config("trajectory.waypoints", "need at least two waypoints"));
        }
        for (field, v) in [
            ("trajectory.speed", t.speed),
            ("trajectory.altitude", t.altitude),
            ("trajectory.keyframe_interval", t.keyframe_interval),
            ("trajectory.tilt_period", t.tilt_period),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(field, format!("{v} must be positive")));
            }
        }
        if !(t.roll_pitch_amplitude >= 0.0 && t.roll_pitch_amplitude < std::f64::consts::FRAC_PI_4) {
            return Err(Error::config("trajectory.roll_pitch_amplitude", "must lie in [0, π/4)"));
        }
        if !(t.heading_smoothing >= 0.0 && t.heading_smoothing.is_finite()) {
            return Err(Error::config("trajectory.heading_smoothing", "must be non-negative"));
        }
        let geom = w.geometry()?;
        if let Some(p) = t.waypoints.iter().find(|p| !geom.contains_geodetic(&nalgebra::Vector2::new(p[0], p[1]))) {
            return Err(Error::config(
                "trajectory.waypoints",
                format!("waypoint ({}, {}) lies outside the map", p[0], p[1]),
            ));
        }
        self.noise.validate()?;
        self.registration.validate()?;
        self.graph.validate()?;
        if self.optimizer.max_iterations == 0 {
            return Err(Error::config("optimizer.max_iterations", "must be positive"));
        }
        if !(self.optimizer.initial_damping > 0.0) {
            return Err(Error::config("optimizer.initial_damping", "must be positive"));
        }
        if !(self.optimizer.tolerance >= 0.0) {
            return Err(Error::config("optimizer.tolerance", "must be non-negative"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for name in ScenarioConfig::PRESETS {
            ScenarioConfig::preset(name).unwrap().validate().unwrap();
        }
        assert!(ScenarioConfig::preset("nope").is_err());
    }

    #[test]
    fn defaults_carry_registration_thresholds() {
        let r = ScenarioConfig::default().registration;
        assert_eq!((r.stride, r.reproj_threshold, r.min_points), (10, 8.0, 20));
        assert_eq!((r.inlier_radius, r.min_inliers), (9.0, 15));
    }

    #[test]
    fn toml_round_trip() {
        for name in ScenarioConfig::PRESETS {
            let cfg = ScenarioConfig::preset(name).unwrap();
            let text = cfg.to_toml_string().unwrap();
            assert_eq!(ScenarioConfig::from_toml_str(&text).unwrap(), cfg);
        }
    }

    #[test]
    fn sections_default_when_omitted() {
        let full = ScenarioConfig::rural_like();
        let mut value: toml::Table = toml::from_str(&full.to_toml_string().unwrap()).unwrap();
        for k in ["noise", "registration", "graph", "optimizer"] {
            value.remove(k);
        }
        let cfg = ScenarioConfig::from_toml_str(&toml::to_string(&value).unwrap()).unwrap();
        assert_eq!(cfg, full);
    }

    #[test]
    fn unknown_keys_rejected() {
        let mut text = ScenarioConfig::rural_like().to_toml_string().unwrap();
        text = text.replace("[registration]", "[registration]\nradius_typo = 3.0");
        assert!(matches!(ScenarioConfig::from_toml_str(&text), Err(Error::Parse { .. })));
    }

    #[test]
    fn invalid_values_name_the_field() {
        let field = |cfg: ScenarioConfig| match cfg.validate() {
            Err(Error::Config { field, .. }) => field,
            other => panic!("{other:?}"),
        };
        let mut c = ScenarioConfig::rural_like();
        c.registration.min_inliers = 0;
        assert_eq!(field(c), "registration.min_inliers");
        let mut c = ScenarioConfig::rural_like();
        c.registration.inlier_radius = -1.0;
        assert_eq!(field(c), "registration.inlier_radius");
        let mut c = ScenarioConfig::rural_like();
        c.noise.pixel_sigma = -0.1;
        assert_eq!(field(c), "noise.pixel_sigma");
        let mut c = ScenarioConfig::rural_like();
        c.trajectory.speed = 0.0;
        assert_eq!(field(c), "trajectory.speed");
        let mut c = ScenarioConfig::rural_like();
        c.trajectory.waypoints.push([5000.0, -10.0]);
        assert_eq!(field(c), "trajectory.waypoints");
        let mut c = ScenarioConfig::rural_like();
        c.graph.huber_delta = 0.0;
        assert_eq!(field(c), "graph.huber_delta");
    }

    #[test]
    fn method_names() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{m}\""));
        }
        assert!("m1".parse::<Method>().is_err());
    }
}
