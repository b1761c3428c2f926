use nalgebra::{Vector2, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{stream_rng, streams};
use crate::error::{Error, Result};
use crate::frames::{geodetic_to_map_pixel, map_offset_to_geodetic, snap_pixel_to_grid, MapGeometry};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Landmark {
    pub id: u32,
    /// Geodetic position, meters.
    pub position: Vector3<f64>,
    /// True appearance, unit norm.
    pub descriptor: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldModel {
    pub landmarks: Vec<Landmark>,
    pub geom: MapGeometry,
    pub terrain_height: f64,
    pub descriptor_dim: usize,
}

impl WorldModel {
    /// Moves every landmark onto the nearest node of a map-pixel grid. Used
    /// for noiseless scenarios where map quantization must vanish.
    pub fn snap_to_grid(&mut self, stride: u32) {
        for lm in &mut self.landmarks {
            let px = geodetic_to_map_pixel(&lm.position.xy(), &self.geom);
            let snapped = map_offset_to_geodetic(&snap_pixel_to_grid(&px, stride, &self.geom), &self.geom);
            lm.position.x = snapped.x;
            lm.position.y = snapped.y;
        }
    }
}

/// Uniformly distributed direction on the unit sphere in `dim` dimensions.
pub fn random_unit_vector<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Perturbs a descriptor with per-component Gaussian noise and renormalizes.
pub fn synthesize_descriptor<R: Rng + ?Sized>(true_desc: &[f64], sigma: f64, rng: &mut R) -> Vec<f64> {
    if sigma == 0.0 {
        return true_desc.to_vec();
    }
    let noisy: Vec<f64> = true_desc
        .iter()
        .map(|x| x + sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let n = noisy.iter().map(|x| x * x).sum::<f64>().sqrt();
    noisy.into_iter().map(|x| x / n).collect()
}

/// Landmarks uniformly spread over the map on a flat ground plane at height 0.
pub fn generate_world(
    seed: u64,
    landmark_count: usize,
    geom: &MapGeometry,
    descriptor_dim: usize,
) -> Result<WorldModel> {
    if landmark_count == 0 {
        return Err(Error::invalid("landmark_count", "must be positive"));
    }
    if descriptor_dim < 8 {
        return Err(Error::invalid("descriptor_dim", "must be at least 8"));
    }
    geom.validate()?;
    let mut rng = stream_rng(seed, streams::WORLD);
    let (w, h) = (geom.width_m(), geom.height_m());
    let landmarks = (0..landmark_count)
        .map(|i| {
            let p = Vector2::new(rng.random_range(0.0..=w), -rng.random_range(0.0..=h));
            Landmark {
                id: i as u32,
                position: Vector3::new(p.x, p.y, 0.0),
                descriptor: random_unit_vector(descriptor_dim, &mut rng),
            }
        })
        .collect();
    Ok(WorldModel {
        landmarks,
        geom: *geom,
        terrain_height: 0.0,
        descriptor_dim,
    })
}
