use nalgebra::{Matrix3, SVector, Vector3};
use serde::{Deserialize, Serialize};

use super::run::{RegistrationStatus, RunReport};
use crate::error::{Error, Result};

/// `√(mean ‖e‖²)`.
pub fn rmse<const D: usize>(errors: &[SVector<f64, D>]) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::Undefined("rmse of an empty error list"));
    }
    let sum: f64 = errors.iter().map(|e| e.norm_squared()).sum();
    Ok((sum / errors.len() as f64).sqrt())
}

/// Similarity transform `p ↦ s·R·p + t` from an estimate to the truth, with
/// the RMSE left after applying it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Similarity {
    pub scale: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    pub rmse: f64,
}

impl Similarity {
    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.scale * (self.rotation * p) + self.translation
    }
}

/// Closed-form least-squares similarity alignment of `estimate` onto `truth`.
///
/// With centered sets and cross-covariance `Σ = U D Vᵀ`, the rotation is
/// `U S Vᵀ` where `S = diag(1, 1, det(U)·det(V))` rules out reflections, the
/// scale is `tr(D S) / σ²_est` and the translation closes the centroids.
pub fn umeyama_align(estimate: &[Vector3<f64>], truth: &[Vector3<f64>]) -> Result<Similarity> {
    if estimate.len() != truth.len() {
        return Err(Error::invalid("truth", "trajectories differ in length"));
    }
    let n = estimate.len();
    if n < 3 {
        return Err(Error::Degenerate(format!("{n} points; at least 3 are needed")));
    }
    let nf = n as f64;
    let mu_x = estimate.iter().sum::<Vector3<f64>>() / nf;
    let mu_y = truth.iter().sum::<Vector3<f64>>() / nf;
    let var_x = estimate.iter().map(|x| (x - mu_x).norm_squared()).sum::<f64>() / nf;
    let mut sigma = Matrix3::zeros();
    for (x, y) in estimate.iter().zip(truth) {
        sigma += (y - mu_y) * (x - mu_x).transpose();
    }
    sigma /= nf;

    let svd = sigma.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    // Singular values come unsorted from nalgebra.
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    if var_x <= 0.0 || sv[0] <= 0.0 || sv[1] <= 1e-12 * sv[0] {
        return Err(Error::Degenerate("points are collinear or coincident".into()));
    }

    let mut s = Matrix3::identity();
    if u.determinant() * v_t.determinant() < 0.0 {
        // Flip the direction of the smallest singular value.
        let k = svd.singular_values.imin();
        s[(k, k)] = -1.0;
    }
    let rotation = u * s * v_t;
    let scale = (Matrix3::from_diagonal(&svd.singular_values) * s).trace() / var_x;
    let translation = mu_y - scale * rotation * mu_x;

    let mut out = Similarity {
        scale,
        rotation,
        translation,
        rmse: 0.0,
    };
    let errs: Vec<Vector3<f64>> = estimate.iter().zip(truth).map(|(x, y)| out.apply(x) - y).collect();
    out.rmse = rmse(&errs)?;
    Ok(out)
}

/// True matches over attempted (non-skipped) keyframes.
pub fn match_rate(report: &RunReport) -> Result<f64> {
    let mut attempted = 0usize;
    let mut true_matches = 0usize;
    for r in &report.keyframes {
        match &r.registration {
            RegistrationStatus::Failed { .. } => attempted += 1,
            RegistrationStatus::Success { true_match, .. } => {
                attempted += 1;
                true_matches += usize::from(*true_match);
            }
            RegistrationStatus::Skipped { .. } | RegistrationStatus::NotAttempted => {}
        }
    }
    if attempted == 0 {
        return Err(Error::Undefined("match rate with no attempted registration"));
    }
    Ok(true_matches as f64 / attempted as f64)
}

/// Mean and sample standard deviation of the finite values, with the count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: Option<f64>,
    pub std: Option<f64>,
}

impl Summary {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
        let n = v.len();
        if n == 0 {
            return Self { n, mean: None, std: None };
        }
        let mean = v.iter().sum::<f64>() / n as f64;
        let std = (n > 1).then(|| (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt());
        Self {
            n,
            mean: Some(mean),
            std,
        }
    }
}
