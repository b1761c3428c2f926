use std::time::Instant;

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::config::{Method, ScenarioConfig};
use super::metrics::{rmse, umeyama_align, Similarity};
use crate::error::{Error, Result};
use crate::frames::{euler_angles, CameraRig};
use crate::georeg::{
    baseline_image_register, build_query_set, is_true_match, register_keyframe, QueryOutcome, RegistrationResult,
    Stage,
};
use crate::map_index::{build_map_db, MapFeatureDB};
use crate::pose_graph::{build_graph_from_run, optimize, OptimizeOptions, OptimizeReport, PoseGraph};
use crate::sim::{
    generate_trajectory, generate_world, simulate_vio, stream_rng, streams, TrueTrajectory, VioOutput, WorldModel,
};

/// Outcome of the registration stage at one keyframe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RegistrationStatus {
    /// The method does not register (odometry only).
    NotAttempted,
    /// Too few usable points; the keyframe is not counted as an attempt.
    Skipped { retained: usize },
    Failed { stage: Stage, detail: String },
    Success {
        result: RegistrationResult,
        true_match: bool,
        /// Horizontal distance of the registered body position to the truth, meters.
        horizontal_error: f64,
        /// 3D distance to the truth, meters.
        error: f64,
    },
}

impl RegistrationStatus {
    pub fn result(&self) -> Option<&RegistrationResult> {
        match self {
            RegistrationStatus::Success { result, .. } => Some(result),
            _ => None,
        }
    }

    pub fn is_attempt(&self) -> bool {
        matches!(self, RegistrationStatus::Failed { .. } | RegistrationStatus::Success { .. })
    }

    pub fn is_true_match(&self) -> bool {
        matches!(self, RegistrationStatus::Success { true_match: true, .. })
    }

    pub fn label(&self) -> &'static str {
        match self {
            RegistrationStatus::NotAttempted => "not_attempted",
            RegistrationStatus::Skipped { .. } => "skipped",
            RegistrationStatus::Failed { .. } => "failed",
            RegistrationStatus::Success { .. } => "success",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyframeRecord {
    pub keyframe: usize,
    pub timestamp: f64,
    /// Horizontal path length flown up to this keyframe, meters.
    pub distance: f64,
    pub truth: Vector3<f64>,
    /// Odometry position in its own frame.
    pub vio: Vector3<f64>,
    /// Odometry after the least-squares similarity alignment to the truth;
    /// absent when the flight is a straight line.
    pub vio_aligned: Option<Vector3<f64>>,
    /// Odometry placed in the geodetic frame by the true first pose (position
    /// and yaw); its error is the accumulated drift.
    pub vio_anchored: Vector3<f64>,
    pub registration: RegistrationStatus,
    /// Fused estimate; absent before the first successful registration.
    pub fused: Option<Vector3<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub keyframes: usize,
    /// Keyframes with a registration attempt (not skipped).
    pub attempted: usize,
    pub skipped: usize,
    pub successes: usize,
    pub true_matches: usize,
    /// True matches over attempted keyframes.
    pub match_rate: Option<f64>,
    /// True matches over all keyframes.
    pub match_rate_all: Option<f64>,
    /// 3D RMSE of the registered body positions over true matches, meters.
    pub registration_rmse: Option<f64>,
    /// Similarity-aligned odometry RMSE, meters.
    pub vio_rmse: Option<f64>,
    pub vio_alignment: Option<Similarity>,
    /// 3D RMSE of the fused trajectory from the first success onward, meters.
    pub fused_rmse: Option<f64>,
    pub first_success: Option<usize>,
}

/// Wall-clock seconds per stage. Excluded from serialization and equality so
/// that reports stay reproducible.
#[derive(Debug, Clone, Copy, Default)]
pub struct StageTimings {
    pub world: f64,
    pub trajectory: f64,
    pub vio: f64,
    pub map: f64,
    pub registration: f64,
    pub fusion: f64,
}

impl StageTimings {
    pub fn total(&self) -> f64 {
        self.world + self.trajectory + self.vio + self.map + self.registration + self.fusion
    }
}

impl PartialEq for StageTimings {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub method: Method,
    pub config: ScenarioConfig,
    pub keyframes: Vec<KeyframeRecord>,
    pub metrics: RunMetrics,
    pub graph: Option<OptimizeReport>,
    #[serde(skip)]
    pub timings: StageTimings,
}

/// The simulated inputs of a run: world, truth, odometry and map database.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub rig: CameraRig,
    pub world: WorldModel,
    pub truth: TrueTrajectory,
    pub vio: Vec<VioOutput>,
    pub db: MapFeatureDB,
    pub timings: StageTimings,
}

impl Scenario {
    pub fn prepare(cfg: &ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let mut timings = StageTimings::default();
        let seed = cfg.seed;
        let rig = cfg.camera.rig()?;
        let geom = cfg.world.geometry()?;

        let t = Instant::now();
        let mut world = generate_world(seed, cfg.world.landmark_count, &geom, cfg.world.descriptor_dim)?;
        if cfg.world.grid_aligned {
            world.snap_to_grid(cfg.registration.stride);
        }
        timings.world = t.elapsed().as_secs_f64();

        let t = Instant::now();
        let truth = generate_trajectory(seed, &cfg.trajectory)?;
        timings.trajectory = t.elapsed().as_secs_f64();

        let t = Instant::now();
        let vio = simulate_vio(&truth, &world, &rig, &cfg.noise, cfg.max_features, seed)?;
        timings.vio = t.elapsed().as_secs_f64();

        let t = Instant::now();
        let db = build_map_db(&world, cfg.registration.stride, &cfg.noise, &mut stream_rng(seed, streams::MAP))?;
        timings.map = t.elapsed().as_secs_f64();

        Ok(Self {
            config: cfg.clone(),
            rig,
            world,
            truth,
            vio,
            db,
            timings,
        })
    }

    /// Registers every keyframe with `method`.
    pub fn register(&self, method: Method) -> Result<Vec<RegistrationStatus>> {
        let params = &self.config.registration;
        let first_heading = self.vio[0].compass_heading;
        let gate = match method {
            Method::Proposed => params.reproj_threshold,
            // The image-level method uses pixels only, so depth quality is
            // irrelevant to it.
            Method::BaselineM1 => f64::INFINITY,
            Method::VioOnly => return Ok(vec![RegistrationStatus::NotAttempted; self.vio.len()]),
        };
        self.vio
            .iter()
            .zip(&self.truth.keyframes)
            .map(|(v, kf)| {
                let q = match build_query_set(v, gate, params.min_points) {
                    QueryOutcome::Ready(q) => q,
                    QueryOutcome::Skipped { retained } => return Ok(RegistrationStatus::Skipped { retained }),
                };
                let outcome = match method {
                    Method::Proposed => register_keyframe(&q, &self.db, params, &self.rig, first_heading)?,
                    _ => baseline_image_register(&q, &self.db, params, &self.rig)?,
                };
                Ok(match outcome {
                    Ok(result) => {
                        let truth = kf.pose.position;
                        RegistrationStatus::Success {
                            true_match: is_true_match(&result, &truth),
                            horizontal_error: (result.body_position.xy() - truth.xy()).norm(),
                            error: (result.body_position - truth).norm(),
                            result,
                        }
                    }
                    Err(f) => RegistrationStatus::Failed {
                        stage: f.stage,
                        detail: f.detail,
                    },
                })
            })
            .collect()
    }

    /// Builds the pose graph from the odometry and `registrations` and
    /// optimizes it. `None` when there is nothing to anchor the graph.
    pub fn fuse(
        &self,
        registrations: &[RegistrationResult],
        options: &OptimizeOptions,
    ) -> Result<Option<(PoseGraph, OptimizeReport)>> {
        if registrations.is_empty() {
            return Ok(None);
        }
        let mut graph = build_graph_from_run(&self.vio, registrations, &self.config.graph)?;
        let report = optimize(&mut graph, options)?;
        Ok(Some((graph, report)))
    }

    /// Fused 3D RMSE from the first registered keyframe onward.
    pub fn fused_rmse(&self, graph: &PoseGraph, first: usize) -> Result<f64> {
        let errs: Vec<Vector3<f64>> = graph.nodes[first..]
            .iter()
            .zip(&self.truth.keyframes[first..])
            .map(|(n, kf)| n.pose.position - kf.pose.position)
            .collect();
        rmse(&errs)
    }
}

/// Runs one scenario end to end with the configured method and seed.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunReport> {
    run_prepared(&Scenario::prepare(cfg)?, cfg.method)
}

/// Runs `method` on already simulated inputs; the report's configuration
/// carries `method`.
pub fn run_prepared(scenario: &Scenario, method: Method) -> Result<RunReport> {
    let mut cfg = scenario.config.clone();
    cfg.method = method;
    let mut timings = scenario.timings;

    let t = Instant::now();
    let statuses = scenario.register(method)?;
    timings.registration = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let successes: Vec<RegistrationResult> = statuses.iter().filter_map(|s| s.result().cloned()).collect();
    let fused = scenario.fuse(&successes, &cfg.optimizer)?;
    timings.fusion = t.elapsed().as_secs_f64();

    let truth_positions = scenario.truth.positions();
    let vio_positions: Vec<Vector3<f64>> = scenario.vio.iter().map(|v| v.pose.position).collect();
    let alignment = match umeyama_align(&vio_positions, &truth_positions) {
        Ok(a) => Some(a),
        Err(Error::Degenerate(_)) => None,
        Err(e) => return Err(e),
    };
    let anchor = anchor_transform(scenario);
    let first_success = successes.first().map(|r| r.keyframe);

    let mut distance = 0.0;
    let mut keyframes = Vec::with_capacity(statuses.len());
    for (k, status) in statuses.into_iter().enumerate() {
        if k > 0 {
            distance += (truth_positions[k].xy() - truth_positions[k - 1].xy()).norm();
        }
        let fused_position = match (&fused, first_success) {
            (Some((graph, _)), Some(first)) if k >= first => Some(graph.nodes[k].pose.position),
            _ => None,
        };
        keyframes.push(KeyframeRecord {
            keyframe: k,
            timestamp: scenario.truth.keyframes[k].timestamp,
            distance,
            truth: truth_positions[k],
            vio: vio_positions[k],
            vio_aligned: alignment.as_ref().map(|a| a.apply(&vio_positions[k])),
            vio_anchored: anchor.0 * vio_positions[k] + anchor.1,
            registration: status,
            fused: fused_position,
        });
    }

    let metrics = compute_metrics(&keyframes, alignment)?;
    Ok(RunReport {
        seed: cfg.seed,
        method: cfg.method,
        config: cfg,
        keyframes,
        metrics,
        graph: fused.map(|(_, r)| r),
        timings,
    })
}

/// Rigid transform that puts the first odometry pose on the first true pose
/// (position and yaw).
fn anchor_transform(s: &Scenario) -> (UnitQuaternion<f64>, Vector3<f64>) {
    let (v0, t0) = (&s.vio[0].pose, &s.truth.keyframes[0].pose);
    let yaw = euler_angles(&t0.orientation).2 - euler_angles(&v0.orientation).2;
    let rot = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw);
    (rot, t0.position - rot * v0.position)
}

/// Aggregates computed from the per-keyframe records alone.
pub fn compute_metrics(records: &[KeyframeRecord], vio_alignment: Option<Similarity>) -> Result<RunMetrics> {
    let attempted = records.iter().filter(|r| r.registration.is_attempt()).count();
    let skipped = records
        .iter()
        .filter(|r| matches!(r.registration, RegistrationStatus::Skipped { .. }))
        .count();
    let successes = records.iter().filter(|r| r.registration.result().is_some()).count();
    let true_errors: Vec<Vector3<f64>> = records
        .iter()
        .filter(|r| r.registration.is_true_match())
        .map(|r| r.registration.result().unwrap().body_position - r.truth)
        .collect();
    let fused_errors: Vec<Vector3<f64>> = records.iter().filter_map(|r| r.fused.map(|f| f - r.truth)).collect();
    let rate = |den: usize| (den > 0).then(|| true_errors.len() as f64 / den as f64);
    Ok(RunMetrics {
        keyframes: records.len(),
        attempted,
        skipped,
        successes,
        true_matches: true_errors.len(),
        match_rate: rate(attempted),
        match_rate_all: rate(records.len()),
        registration_rmse: rmse(&true_errors).ok(),
        vio_rmse: vio_alignment.as_ref().map(|a| a.rmse),
        vio_alignment,
        fused_rmse: rmse(&fused_errors).ok(),
        first_success: records.iter().find(|r| r.registration.result().is_some()).map(|r| r.keyframe),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::metrics::match_rate;

    fn small(method: Method) -> ScenarioConfig {
        let mut cfg = ScenarioConfig::rural_like();
        cfg.method = method;
        cfg.seed = 11;
        cfg.trajectory.waypoints = vec![[150.0, -130.0], [490.0, -130.0], [490.0, -250.0]];
        cfg
    }

    #[test]
    fn straight_flight_has_no_alignment() {
        let mut cfg = small(Method::Proposed);
        cfg.trajectory.waypoints.pop();
        let r = run_scenario(&cfg).unwrap();
        assert!(r.metrics.vio_rmse.is_none());
        assert!(r.keyframes.iter().all(|k| k.vio_aligned.is_none()));
        assert!(r.metrics.fused_rmse.is_some());
    }

    #[test]
    fn proposed_run_is_consistent() {
        let r = run_scenario(&small(Method::Proposed)).unwrap();
        assert_eq!(r.keyframes.len(), r.metrics.keyframes);
        assert!(r.metrics.successes > 0);
        let first = r.metrics.first_success.unwrap();
        for rec in &r.keyframes {
            assert_eq!(rec.fused.is_some(), rec.keyframe >= first);
        }
        let again = compute_metrics(&r.keyframes, r.metrics.vio_alignment.clone()).unwrap();
        assert_eq!(again, r.metrics);
        assert_eq!(match_rate(&r).ok(), r.metrics.match_rate);
    }

    #[test]
    fn vio_only_has_no_fusion() {
        let r = run_scenario(&small(Method::VioOnly)).unwrap();
        assert!(r.keyframes.iter().all(|k| k.registration == RegistrationStatus::NotAttempted && k.fused.is_none()));
        assert_eq!(r.metrics.attempted, 0);
        assert!(r.graph.is_none());
        assert!(match_rate(&r).is_err());
        assert!(r.metrics.vio_rmse.unwrap() > 0.0);
    }

    #[test]
    fn anchored_odometry_starts_on_the_truth() {
        let r = run_scenario(&small(Method::VioOnly)).unwrap();
        let k0 = &r.keyframes[0];
        assert!((k0.vio_anchored - k0.truth).norm() < 1e-9);
    }

    #[test]
    fn timings_do_not_affect_equality() {
        let cfg = small(Method::BaselineM1);
        let a = run_scenario(&cfg).unwrap();
        let mut b = a.clone();
        b.timings.registration += 1.0;
        assert_eq!(a, b);
        assert!(a.timings.total() > 0.0);
    }
}
