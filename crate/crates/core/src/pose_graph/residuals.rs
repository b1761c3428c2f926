use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};

use super::{AbsoluteEdge, GraphNode, RelativeEdge};
use crate::frames::{Pose, Quat};

/// Relative motion measured by the odometry between two of its poses:
/// `p̂ = R_iᵀ (p_j − p_i)` and `q̂ = q_i⁻¹ ⊗ q_j`.
pub fn relative_edge_from_vio(pose_i: &Pose, pose_j: &Pose) -> (Vector3<f64>, Quat) {
    (
        pose_i.orientation.inverse() * (pose_j.position - pose_i.position),
        pose_i.orientation.inverse() * pose_j.orientation,
    )
}

/// Rotation error quaternion `q_i⁻¹ ⊗ q_j ⊗ q̂⁻¹` in the hemisphere `w ≥ 0`.
fn rotation_error(qi: &Quat, qj: &Quat, measured: &Quat) -> nalgebra::Quaternion<f64> {
    let e = (qi.inverse() * qj * measured.inverse()).into_inner();
    if e.w < 0.0 {
        -e
    } else {
        e
    }
}

/// `[R_iᵀ (p_j − p_i) − p̂ ; 2·vec(q_i⁻¹ ⊗ q_j ⊗ q̂⁻¹)]`.
///
/// The factor 2 makes the rotation part approximately the rotation vector of
/// the error for small errors. The error quaternion is taken with `w ≥ 0` so
/// the residual is continuous around zero.
pub fn relative_residual(node_i: &GraphNode, node_j: &GraphNode, edge: &RelativeEdge) -> Vector6<f64> {
    relative_residual_poses(&node_i.pose, &node_j.pose, &edge.measured_position, &edge.measured_rotation)
}

pub(crate) fn relative_residual_poses(pi: &Pose, pj: &Pose, p_hat: &Vector3<f64>, q_hat: &Quat) -> Vector6<f64> {
    let dp = pi.orientation.inverse() * (pj.position - pi.position) - p_hat;
    let e = rotation_error(&pi.orientation, &pj.orientation, q_hat);
    let mut r = Vector6::zeros();
    r.fixed_rows_mut::<3>(0).copy_from(&dp);
    r.fixed_rows_mut::<3>(3).copy_from(&(2.0 * e.imag()));
    r
}

/// Jacobians of [`relative_residual`] with respect to the updates of node `i`
/// and node `j`. Each update is `(δp, δθ)` with `p ← p + δp` and
/// `q ← q ⊗ Exp(δθ)`. With `e = (w, v)` the canonical error quaternion, the
/// rotation rows are `−(wI − [v]×)` for node `i` and `(wI + [v]×) R̂` for `j`.
pub fn relative_jacobians(node_i: &GraphNode, node_j: &GraphNode, edge: &RelativeEdge) -> (Matrix6<f64>, Matrix6<f64>) {
    let (pi, pj) = (&node_i.pose, &node_j.pose);
    let rit = pi.rotation_matrix().transpose();
    let v = rit * (pj.position - pi.position);
    let e = rotation_error(&pi.orientation, &pj.orientation, &edge.measured_rotation);
    let (w, ev) = (e.w, e.imag());
    let r_hat = edge.measured_rotation.to_rotation_matrix().into_inner();

    let mut ji = Matrix6::zeros();
    ji.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-rit));
    ji.fixed_view_mut::<3, 3>(0, 3).copy_from(&v.cross_matrix());
    ji.fixed_view_mut::<3, 3>(3, 3)
        .copy_from(&(-(Matrix3::identity() * w - ev.cross_matrix())));

    let mut jj = Matrix6::zeros();
    jj.fixed_view_mut::<3, 3>(0, 0).copy_from(&rit);
    jj.fixed_view_mut::<3, 3>(3, 3)
        .copy_from(&((Matrix3::identity() * w + ev.cross_matrix()) * r_hat));
    (ji, jj)
}

/// `p_i − p̂_i`.
pub fn absolute_residual(node: &GraphNode, edge: &AbsoluteEdge) -> Vector3<f64> {
    node.pose.position - edge.measured_position
}

/// Jacobian of [`absolute_residual`] with respect to `(δp, δθ)`: `[I 0]`.
pub fn absolute_jacobian() -> nalgebra::Matrix3x6<f64> {
    let mut j = nalgebra::Matrix3x6::zeros();
    j.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::identity());
    j
}

/// Huber loss on a squared whitened norm `a`: `a` when `a ≤ δ²`, else
/// `2δ√a − δ²`.
pub fn huber_cost(a: f64, delta: f64) -> f64 {
    if a <= delta * delta {
        a
    } else {
        2.0 * delta * a.sqrt() - delta * delta
    }
}

/// `dρ/da`, the iteratively reweighted least-squares weight.
pub fn huber_weight(a: f64, delta: f64) -> f64 {
    if a <= delta * delta {
        1.0
    } else {
        delta / a.sqrt()
    }
}

/// Applies a node update `(δp, δθ)`.
pub fn retract(pose: &Pose, delta: &Vector6<f64>) -> Pose {
    let dp = Vector3::new(delta[0], delta[1], delta[2]);
    let dtheta = Vector3::new(delta[3], delta[4], delta[5]);
    Pose::new(
        pose.position + dp,
        crate::frames::renormalize(&(pose.orientation * Quat::from_scaled_axis(dtheta))),
    )
}
