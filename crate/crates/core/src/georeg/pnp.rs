use nalgebra::{DMatrix, DVector, Matrix2x3, Matrix3, Matrix6, Vector2, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::{project, renormalize, CameraIntrinsics, Pose, Quat};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PnpOptions {
    pub max_iterations: usize,
    pub initial_damping: f64,
    /// Stop when the relative cost decrease of an accepted step falls below this.
    pub cost_tolerance: f64,
    /// Stop when the update norm falls below this.
    pub step_tolerance: f64,
}

impl Default for PnpOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            initial_damping: 1e-3,
            cost_tolerance: 1e-14,
            step_tolerance: 1e-12,
        }
    }
}

impl PnpOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::config("registration.pnp.max_iterations", "must be positive"));
        }
        if !(self.initial_damping > 0.0) {
            return Err(Error::config("registration.pnp.initial_damping", "must be positive"));
        }
        if !(self.cost_tolerance >= 0.0 && self.step_tolerance >= 0.0) {
            return Err(Error::config("registration.pnp", "tolerances must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PnpSolution {
    /// Camera pose in the frame of the 3D points.
    pub pose: Pose,
    /// `√(Σ r² / 2N)` over both pixel components, pixels.
    pub rmse: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PnpFailure {
    /// Iteration cap reached before the convergence tests passed.
    NotConverged { iterations: usize, rmse: f64 },
    /// The starting pose sees a point behind the camera.
    InvalidInitialGuess,
}

/// Applies the update `δ = (ω, δc)`: `R ← R·Exp(ω)`, `c ← c + δc`.
pub fn pnp_retract(pose: &Pose, delta: &Vector6<f64>) -> Pose {
    let omega = Vector3::new(delta[0], delta[1], delta[2]);
    Pose::new(
        pose.position + Vector3::new(delta[3], delta[4], delta[5]),
        renormalize(&(pose.orientation * Quat::from_scaled_axis(omega))),
    )
}

/// Stacked residuals `π(Rᵀ(X_i − c)) − u_i`, two per correspondence.
pub fn pnp_residuals(
    pose: &Pose,
    pixels: &[Vector2<f64>],
    points: &[Vector3<f64>],
    intr: &CameraIntrinsics,
) -> Result<DVector<f64>> {
    let mut r = DVector::zeros(2 * pixels.len());
    for (i, (u, x)) in pixels.iter().zip(points).enumerate() {
        let e = project(&pose.inverse_transform_point(x), intr)? - u;
        r[2 * i] = e.x;
        r[2 * i + 1] = e.y;
    }
    Ok(r)
}

/// Jacobian of [`pnp_residuals`] with respect to the update of
/// [`pnp_retract`]: `∂p_c/∂ω = [p_c]×`, `∂p_c/∂c = −Rᵀ`.
pub fn pnp_jacobian(
    pose: &Pose,
    points: &[Vector3<f64>],
    intr: &CameraIntrinsics,
) -> Result<DMatrix<f64>> {
    let rt = pose.rotation_matrix().transpose();
    let mut j = DMatrix::zeros(2 * points.len(), 6);
    for (i, x) in points.iter().enumerate() {
        let pc = rt * (x - pose.position);
        if pc.z <= 0.0 {
            return Err(Error::BehindCamera { z: pc.z });
        }
        let jp = projection_jacobian(&pc, intr);
        let j_rot = jp * pc.cross_matrix();
        let j_pos = -jp * rt;
        j.view_mut((2 * i, 0), (2, 3)).copy_from(&j_rot);
        j.view_mut((2 * i, 3), (2, 3)).copy_from(&j_pos);
    }
    Ok(j)
}

fn projection_jacobian(pc: &Vector3<f64>, intr: &CameraIntrinsics) -> Matrix2x3<f64> {
    let iz = 1.0 / pc.z;
    Matrix2x3::new(
        intr.fx * iz,
        0.0,
        -intr.fx * pc.x * iz * iz,
        0.0,
        intr.fy * iz,
        -intr.fy * pc.y * iz * iz,
    )
}

/// Normal equations `(JᵀJ, Jᵀr)` and the cost `Σ r²`, or `None` when a point
/// is behind the camera.
fn linearize(
    pose: &Pose,
    pixels: &[Vector2<f64>],
    points: &[Vector3<f64>],
    intr: &CameraIntrinsics,
) -> Option<(Matrix6<f64>, Vector6<f64>, f64)> {
    let rt: Matrix3<f64> = pose.rotation_matrix().transpose();
    let mut h = Matrix6::zeros();
    let mut g = Vector6::zeros();
    let mut cost = 0.0;
    for (u, x) in pixels.iter().zip(points) {
        let pc = rt * (x - pose.position);
        if pc.z <= 0.0 {
            return None;
        }
        let r = Vector2::new(intr.fx * pc.x / pc.z + intr.cx, intr.fy * pc.y / pc.z + intr.cy) - u;
        let jp = projection_jacobian(&pc, intr);
        let mut ji = nalgebra::Matrix2x6::zeros();
        ji.fixed_view_mut::<2, 3>(0, 0).copy_from(&(jp * pc.cross_matrix()));
        ji.fixed_view_mut::<2, 3>(0, 3).copy_from(&(-jp * rt));
        h += ji.transpose() * ji;
        g += ji.transpose() * r;
        cost += r.norm_squared();
    }
    Some((h, g, cost))
}

fn cost_at(pose: &Pose, pixels: &[Vector2<f64>], points: &[Vector3<f64>], intr: &CameraIntrinsics) -> Option<f64> {
    let rt = pose.rotation_matrix().transpose();
    let mut cost = 0.0;
    for (u, x) in pixels.iter().zip(points) {
        let pc = rt * (x - pose.position);
        if pc.z <= 0.0 {
            return None;
        }
        let r = Vector2::new(intr.fx * pc.x / pc.z + intr.cx, intr.fy * pc.y / pc.z + intr.cy) - u;
        cost += r.norm_squared();
    }
    Some(cost)
}

/// Camera pose minimizing the total squared reprojection error, refined by
/// Levenberg-Marquardt from `initial_guess`.
///
/// Returns an error for fewer than six correspondences or mismatched inputs,
/// and a [`PnpFailure`] when the refinement does not converge.
pub fn pnp_solve(
    pixels: &[Vector2<f64>],
    points_geo: &[Vector3<f64>],
    intr: &CameraIntrinsics,
    initial_guess: &Pose,
    options: &PnpOptions,
) -> Result<std::result::Result<PnpSolution, PnpFailure>> {
    if pixels.len() != points_geo.len() {
        return Err(Error::invalid("points_geo", "length differs from pixels"));
    }
    if pixels.len() < 6 {
        return Err(Error::invalid("pixels", format!("{} correspondences, need at least 6", pixels.len())));
    }
    let n = pixels.len() as f64;
    let mut pose = *initial_guess;
    let Some((mut h, mut g, mut cost)) = linearize(&pose, pixels, points_geo, intr) else {
        return Ok(Err(PnpFailure::InvalidInitialGuess));
    };
    let mut mu = options.initial_damping;
    for it in 1..=options.max_iterations {
        let mut a = h;
        for k in 0..6 {
            a[(k, k)] += mu * h[(k, k)].max(1e-12);
        }
        let Some(chol) = a.cholesky() else {
            mu *= 10.0;
            continue;
        };
        let delta = -chol.solve(&g);
        let candidate = pnp_retract(&pose, &delta);
        match cost_at(&candidate, pixels, points_geo, intr) {
            Some(new_cost) if new_cost < cost => {
                let decrease = (cost - new_cost) / cost.max(f64::MIN_POSITIVE);
                pose = candidate;
                cost = new_cost;
                (h, g, _) = linearize(&pose, pixels, points_geo, intr).expect("accepted pose is valid");
                mu = (mu * 0.1).max(1e-12);
                if decrease < options.cost_tolerance || delta.norm() < options.step_tolerance || cost == 0.0 {
                    return Ok(Ok(PnpSolution {
                        pose,
                        rmse: (cost / (2.0 * n)).sqrt(),
                        iterations: it,
                    }));
                }
            }
            _ => {
                // A rejected step that is already negligible means we sit at
                // the minimum up to rounding.
                if delta.norm() < options.step_tolerance {
                    return Ok(Ok(PnpSolution {
                        pose,
                        rmse: (cost / (2.0 * n)).sqrt(),
                        iterations: it,
                    }));
                }
                mu *= 10.0;
                if mu > 1e16 {
                    break;
                }
            }
        }
    }
    Ok(Err(PnpFailure::NotConverged {
        iterations: options.max_iterations,
        rmse: (cost / (2.0 * n)).sqrt(),
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::stream_rng;
    use nalgebra::UnitQuaternion;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn intr() -> CameraIntrinsics {
        CameraIntrinsics::new(800.0, 800.0, 320.0, 240.0, 640, 480).unwrap()
    }

    /// Nadir-ish camera 100 m above ground points spread across the view.
    fn scene<R: Rng>(rng: &mut R, n: usize) -> (Pose, Vec<Vector3<f64>>, Vec<Vector2<f64>>) {
        let k = intr();
        let pose = Pose::new(
            Vector3::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0), 100.0),
            UnitQuaternion::from_euler_angles(
                std::f64::consts::PI + rng.random_range(-0.15..0.15),
                rng.random_range(-0.15..0.15),
                rng.random_range(-3.1..3.1),
            ),
        );
        let mut points = Vec::new();
        let mut pixels = Vec::new();
        while points.len() < n {
            let px = Vector2::new(rng.random_range(0.0..640.0), rng.random_range(0.0..480.0));
            let ray = pose.orientation * crate::frames::back_project(&px, &k);
            let s = -pose.position.z / ray.z;
            let mut p = pose.position + ray * s;
            p.z = rng.random_range(-5.0..5.0);
            let pc = pose.inverse_transform_point(&p);
            if let Ok(u) = project(&pc, &k) {
                points.push(p);
                pixels.push(u);
            }
        }
        (pose, points, pixels)
    }

    fn perturb<R: Rng>(pose: &Pose, rng: &mut R, meters: f64, degrees: f64) -> Pose {
        let dir = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)).normalize();
        let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)).normalize();
        Pose::new(
            pose.position + dir * meters,
            pose.orientation * Quat::from_scaled_axis(axis * degrees.to_radians()),
        )
    }

    #[test]
    fn noiseless_recovery() {
        let mut rng = stream_rng(1, 0);
        for n in [6, 10, 50] {
            for _ in 0..20 {
                let (truth, points, pixels) = scene(&mut rng, n);
                let guess = perturb(&truth, &mut rng, 1.0, 2.0);
                let sol = pnp_solve(&pixels, &points, &intr(), &guess, &PnpOptions::default())
                    .unwrap()
                    .unwrap();
                assert!((sol.pose.position - truth.position).norm() < 1e-6);
                assert!(sol.pose.orientation.angle_to(&truth.orientation) < 1e-6);
                assert!(sol.rmse < 1e-6);
            }
        }
    }

    #[test]
    fn noisy_accuracy() {
        let mut rng = stream_rng(2, 0);
        let mut errors = Vec::new();
        for _ in 0..100 {
            let (truth, points, mut pixels) = scene(&mut rng, 100);
            for u in &mut pixels {
                *u += Vector2::new(rng.sample::<f64, _>(StandardNormal), rng.sample(StandardNormal)) * 0.5;
            }
            let guess = perturb(&truth, &mut rng, 1.0, 2.0);
            let sol = pnp_solve(&pixels, &points, &intr(), &guess, &PnpOptions::default())
                .unwrap()
                .unwrap();
            assert!(sol.rmse <= 0.6, "{}", sol.rmse);
            errors.push((sol.pose.position - truth.position).norm());
        }
        errors.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(errors[50] < 0.2, "median {}", errors[50]);
    }

    #[test]
    fn too_few_points() {
        let mut rng = stream_rng(3, 0);
        let (truth, points, pixels) = scene(&mut rng, 5);
        assert!(pnp_solve(&pixels, &points, &intr(), &truth, &PnpOptions::default()).is_err());
        assert!(pnp_solve(&pixels[..4], &points, &intr(), &truth, &PnpOptions::default()).is_err());
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let mut rng = stream_rng(4, 0);
        for _ in 0..100 {
            let (truth, points, pixels) = scene(&mut rng, 8);
            let pose = perturb(&truth, &mut rng, 2.0, 3.0);
            let j = pnp_jacobian(&pose, &points, &intr()).unwrap();
            let h = 1e-6;
            for k in 0..6 {
                let mut d = Vector6::zeros();
                d[k] = h;
                let plus = pnp_residuals(&pnp_retract(&pose, &d), &pixels, &points, &intr()).unwrap();
                let minus = pnp_residuals(&pnp_retract(&pose, &(-d)), &pixels, &points, &intr()).unwrap();
                let fd = (plus - minus) / (2.0 * h);
                let col = j.column(k);
                let rel = (fd - col).norm() / col.norm().max(1e-8);
                assert!(rel < 1e-5, "column {k}: {rel}");
            }
        }
    }

    #[test]
    fn behind_camera_guess_reported() {
        let mut rng = stream_rng(5, 0);
        let (truth, points, pixels) = scene(&mut rng, 10);
        let flipped = Pose::new(truth.position, truth.orientation * Quat::from_scaled_axis(Vector3::x() * std::f64::consts::PI));
        assert_eq!(
            pnp_solve(&pixels, &points, &intr(), &flipped, &PnpOptions::default()).unwrap(),
            Err(PnpFailure::InvalidInitialGuess)
        );
    }
}
