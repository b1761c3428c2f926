//! Pose graph fusing odometry (relative edges) with georegistrations
//! (absolute edges) under a Huber loss.

mod residuals;
mod solver;

use nalgebra::{Matrix3, Matrix6, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::{yaw_quat, Pose, Quat};
use crate::georeg::RegistrationResult;
use crate::sim::VioOutput;

pub use residuals::{
    absolute_jacobian, absolute_residual, huber_cost, huber_weight, relative_edge_from_vio, relative_jacobians,
    relative_residual, retract,
};
pub use solver::{optimize, total_cost, OptimizeOptions, OptimizeReport};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub index: usize,
    /// Body pose in `G`.
    pub pose: Pose,
    /// Held constant by the optimizer.
    pub fixed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeEdge {
    pub i: usize,
    pub j: usize,
    /// `p̂^{B_i}_{ij}`, meters.
    pub measured_position: Vector3<f64>,
    /// `q̂_{ij}`.
    pub measured_rotation: Quat,
    /// Inverse covariance over `(position, rotation)`.
    pub information: Matrix6<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbsoluteEdge {
    pub i: usize,
    /// `p̂^G_{B_i}`, meters.
    pub measured_position: Vector3<f64>,
    pub information: Matrix3<f64>,
    /// Huber threshold on the whitened residual norm.
    pub huber_delta: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PoseGraph {
    pub nodes: Vec<GraphNode>,
    pub relative: Vec<RelativeEdge>,
    pub absolute: Vec<AbsoluteEdge>,
}

fn is_spd<const D: usize>(m: &nalgebra::SMatrix<f64, D, D>) -> bool {
    let symmetric = (m - m.transpose()).abs().max() <= 1e-9 * m.abs().max().max(1.0);
    symmetric && m.iter().all(|x| x.is_finite()) && m.cholesky().is_some()
}

impl PoseGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a node and returns its index.
    pub fn add_node(&mut self, pose: Pose, fixed: bool) -> usize {
        let index = self.nodes.len();
        self.nodes.push(GraphNode { index, pose, fixed });
        index
    }

    pub fn add_relative_edge(
        &mut self,
        i: usize,
        j: usize,
        measured_position: Vector3<f64>,
        measured_rotation: Quat,
        information: Matrix6<f64>,
    ) -> Result<()> {
        if i == j {
            return Err(Error::invalid("relative_edge", "endpoints must differ"));
        }
        if i >= self.nodes.len() || j >= self.nodes.len() {
            return Err(Error::invalid("relative_edge", format!("node index out of range ({i}, {j})")));
        }
        if !is_spd(&information) {
            return Err(Error::invalid("information", "must be symmetric positive-definite"));
        }
        self.relative.push(RelativeEdge {
            i,
            j,
            measured_position,
            measured_rotation,
            information,
        });
        Ok(())
    }

    pub fn add_absolute_edge(
        &mut self,
        i: usize,
        measured_position: Vector3<f64>,
        information: Matrix3<f64>,
        huber_delta: f64,
    ) -> Result<()> {
        if i >= self.nodes.len() {
            return Err(Error::invalid("absolute_edge", format!("node index {i} out of range")));
        }
        if !is_spd(&information) {
            return Err(Error::invalid("information", "must be symmetric positive-definite"));
        }
        if !(huber_delta > 0.0) {
            return Err(Error::invalid("huber_delta", "must be positive"));
        }
        self.absolute.push(AbsoluteEdge {
            i,
            measured_position,
            information,
            huber_delta,
        });
        Ok(())
    }

    /// True when nothing ties the graph to the geodetic frame.
    pub fn is_gauge_free(&self) -> bool {
        self.absolute.is_empty() && self.nodes.iter().all(|n| !n.fixed)
    }

    pub fn positions(&self) -> Vec<Vector3<f64>> {
        self.nodes.iter().map(|n| n.pose.position).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::invalid("graph", e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::invalid("graph", e.to_string()))
    }
}

/// Edge uncertainties used when building a graph from a run.
///
/// Relative edges: position σ = `max(drift_rate · edge length, position floor)`,
/// rotation σ = `max(yaw_drift_rate · edge length, rotation floor)`. Absolute
/// edges: σ = `max(stride · resolution / √inliers, absolute floor)` on each
/// axis. All information matrices are multiplied by `information_scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphNoiseModel {
    pub drift_rate: f64,
    pub yaw_drift_rate: f64,
    pub relative_position_floor: f64,
    pub relative_rotation_floor: f64,
    /// Map grid spacing, meters.
    pub grid_spacing: f64,
    pub absolute_floor: f64,
    pub information_scale: f64,
    pub huber_delta: f64,
}

impl Default for GraphNoiseModel {
    fn default() -> Self {
        Self {
            drift_rate: 0.06,
            yaw_drift_rate: 2e-5,
            relative_position_floor: 0.05,
            relative_rotation_floor: 0.002,
            grid_spacing: 3.0,
            absolute_floor: 0.1,
            information_scale: 1.0,
            huber_delta: 1.0,
        }
    }
}

impl GraphNoiseModel {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("graph.relative_position_floor", self.relative_position_floor),
            ("graph.relative_rotation_floor", self.relative_rotation_floor),
            ("graph.absolute_floor", self.absolute_floor),
            ("graph.information_scale", self.information_scale),
            ("graph.huber_delta", self.huber_delta),
            ("graph.grid_spacing", self.grid_spacing),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(field, format!("{v} must be positive")));
            }
        }
        for (field, v) in [("graph.drift_rate", self.drift_rate), ("graph.yaw_drift_rate", self.yaw_drift_rate)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(field, format!("{v} must be non-negative")));
            }
        }
        Ok(())
    }

    pub fn relative_information(&self, length: f64) -> Matrix6<f64> {
        let sp = (self.drift_rate * length).max(self.relative_position_floor);
        let sr = (self.yaw_drift_rate * length).max(self.relative_rotation_floor);
        let (wp, wr) = (1.0 / (sp * sp), 1.0 / (sr * sr));
        Matrix6::from_diagonal(&nalgebra::Vector6::new(wp, wp, wp, wr, wr, wr)) * self.information_scale
    }

    pub fn absolute_information(&self, inliers: usize) -> Matrix3<f64> {
        let s = (self.grid_spacing / (inliers.max(1) as f64).sqrt()).max(self.absolute_floor);
        Matrix3::identity() * (self.information_scale / (s * s))
    }
}

/// One node per keyframe, a chain of odometry edges, and one absolute edge per
/// successful registration.
///
/// Nodes start at the odometry poses carried into `G` by the yaw of the first
/// compass reading and the translation that puts the first registered
/// keyframe on its registered position. Without registrations the odometry
/// poses are used unchanged and the graph is gauge-free.
pub fn build_graph_from_run(
    vio: &[VioOutput],
    registrations: &[RegistrationResult],
    model: &GraphNoiseModel,
) -> Result<PoseGraph> {
    model.validate()?;
    for r in registrations {
        if r.keyframe >= vio.len() {
            return Err(Error::invalid("registrations", format!("keyframe {} out of range", r.keyframe)));
        }
    }
    let geo_from_world = match registrations.iter().min_by_key(|r| r.keyframe) {
        Some(first) => {
            let rot = yaw_quat(vio.first().map_or(0.0, |v| v.compass_heading));
            Pose::new(first.body_position - rot * vio[first.keyframe].pose.position, rot)
        }
        None => Pose::identity(),
    };
    let mut graph = PoseGraph::new();
    for v in vio {
        graph.add_node(geo_from_world.compose(&v.pose), false);
    }
    for (k, w) in vio.windows(2).enumerate() {
        let (p, q) = relative_edge_from_vio(&w[0].pose, &w[1].pose);
        graph.add_relative_edge(k, k + 1, p, q, model.relative_information(p.norm()))?;
    }
    for r in registrations {
        graph.add_absolute_edge(
            r.keyframe,
            r.body_position,
            model.absolute_information(r.inlier_count),
            model.huber_delta,
        )?;
    }
    Ok(graph)
}
