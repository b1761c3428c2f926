//! The georeferenced feature database: grid extraction from the map, exact
//! descriptor matching, and a fixed-layout binary file format.

mod io;
mod matching;

use nalgebra::Vector2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::{geodetic_to_map_pixel, map_offset_to_geodetic, snap_pixel_to_grid, MapGeometry};
use crate::sim::{random_unit_vector, synthesize_descriptor, NoiseConfig, WorldModel};

pub use io::{load_db, read_db, save_db, write_db};
pub use matching::{match_descriptors, DescriptorMatch, MatchSet};

/// Feature database `D = {(f^m_j, l^m_j)}`.
///
/// Descriptors are stored contiguously, `descriptor_dim` values per entry.
/// When built from a world, entry `j < landmark_count` belongs to landmark
/// `j` and the remaining entries are distractors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapFeatureDB {
    descriptors: Vec<f64>,
    positions: Vec<Vector2<f64>>,
    pub geom: MapGeometry,
    /// Grid stride in map pixels.
    pub stride: u32,
    pub descriptor_dim: usize,
}

impl MapFeatureDB {
    /// An empty database; entries are added with [`MapFeatureDB::push`].
    pub fn new(geom: MapGeometry, stride: u32, descriptor_dim: usize) -> Result<Self> {
        geom.validate()?;
        if stride == 0 {
            return Err(Error::invalid("stride", "must be at least 1"));
        }
        if descriptor_dim == 0 {
            return Err(Error::invalid("descriptor_dim", "must be positive"));
        }
        Ok(Self {
            descriptors: Vec::new(),
            positions: Vec::new(),
            geom,
            stride,
            descriptor_dim,
        })
    }

    pub fn push(&mut self, descriptor: &[f64], position: Vector2<f64>) -> Result<()> {
        if descriptor.len() != self.descriptor_dim {
            return Err(Error::invalid(
                "descriptor",
                format!("length {} != {}", descriptor.len(), self.descriptor_dim),
            ));
        }
        self.descriptors.extend_from_slice(descriptor);
        self.positions.push(position);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn descriptor(&self, j: usize) -> &[f64] {
        let d = self.descriptor_dim;
        &self.descriptors[j * d..(j + 1) * d]
    }

    /// `l^m_j`, geodetic meters.
    pub fn position(&self, j: usize) -> Vector2<f64> {
        self.positions[j]
    }

    pub fn positions(&self) -> &[Vector2<f64>] {
        &self.positions
    }

    pub(crate) fn flat_descriptors(&self) -> &[f64] {
        &self.descriptors
    }

    /// Same entries in a different order: entry `j` of the result is entry
    /// `order[j]` of `self`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let mut out = Self {
            descriptors: Vec::with_capacity(self.descriptors.len()),
            positions: Vec::with_capacity(self.positions.len()),
            ..self.clone()
        };
        for &j in order {
            out.descriptors.extend_from_slice(self.descriptor(j));
            out.positions.push(self.positions[j]);
        }
        out
    }
}

/// Grid-snapped geodetic position of a point, i.e. where the map's constant
/// stride extraction would have placed it.
pub fn snap_geodetic(p: &Vector2<f64>, stride: u32, geom: &MapGeometry) -> Vector2<f64> {
    let px = geodetic_to_map_pixel(p, geom);
    map_offset_to_geodetic(&snap_pixel_to_grid(&px, stride, geom), geom)
}

/// One entry per landmark at its grid-snapped position with a map-side noisy
/// descriptor, followed by `noise.distractor_count` entries with random
/// descriptors at random grid nodes.
pub fn build_map_db<R: Rng + ?Sized>(
    world: &WorldModel,
    stride: u32,
    noise: &NoiseConfig,
    rng: &mut R,
) -> Result<MapFeatureDB> {
    if world.landmarks.is_empty() {
        return Err(Error::invalid("world", "has no landmarks"));
    }
    let mut db = MapFeatureDB::new(world.geom, stride, world.descriptor_dim)?;
    for lm in &world.landmarks {
        let desc = synthesize_descriptor(&lm.descriptor, noise.descriptor_sigma, rng);
        db.push(&desc, snap_geodetic(&lm.position.xy(), stride, &world.geom))?;
    }
    let nodes_u = world.geom.width_px / stride + 1;
    let nodes_v = world.geom.height_px / stride + 1;
    for _ in 0..noise.distractor_count {
        let u = rng.random_range(0..nodes_u) as f64 * stride as f64;
        let v = rng.random_range(0..nodes_v) as f64 * stride as f64;
        let desc = random_unit_vector(world.descriptor_dim, rng);
        db.push(&desc, map_offset_to_geodetic(&Vector2::new(u, v), &world.geom))?;
    }
    Ok(db)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{generate_world, stream_rng, Landmark};
    use nalgebra::Vector3;

    fn world() -> WorldModel {
        generate_world(3, 500, &MapGeometry::new(0.3, 2000, 2000).unwrap(), 32).unwrap()
    }

    #[test]
    fn positions_on_grid() {
        let w = world();
        let db = build_map_db(&w, 10, &NoiseConfig::default(), &mut stream_rng(1, 7)).unwrap();
        assert_eq!(db.len(), 500 + NoiseConfig::default().distractor_count);
        for p in db.positions() {
            for c in [p.x, p.y] {
                let k = c / 3.0;
                assert!((k - k.round()).abs() < 1e-9, "{c}");
            }
            assert!(w.geom.contains_geodetic(p));
        }
    }

    #[test]
    fn noiseless_build_copies_descriptors() {
        let w = world();
        let db = build_map_db(&w, 10, &NoiseConfig::zero(), &mut stream_rng(1, 7)).unwrap();
        assert_eq!(db.len(), w.landmarks.len());
        for (j, lm) in w.landmarks.iter().enumerate() {
            assert_eq!(db.descriptor(j), lm.descriptor.as_slice());
        }
    }

    #[test]
    fn snapping_example() {
        let geom = MapGeometry::new(0.3, 2000, 2000).unwrap();
        let mut w = world();
        w.landmarks = vec![Landmark {
            id: 0,
            position: Vector3::new(104.0 * 0.3, -57.0 * 0.3, 0.0),
            descriptor: w.landmarks[0].descriptor.clone(),
        }];
        w.geom = geom;
        let db = build_map_db(&w, 10, &NoiseConfig::zero(), &mut stream_rng(1, 7)).unwrap();
        let p = db.position(0);
        assert!((p.x - 30.0).abs() < 1e-12 && (p.y + 18.0).abs() < 1e-12, "{p}");
    }

    #[test]
    fn snapping_bound() {
        let w = world();
        let db = build_map_db(&w, 10, &NoiseConfig::zero(), &mut stream_rng(1, 7)).unwrap();
        let bound = 10.0 * 0.3 * std::f64::consts::SQRT_2 / 2.0 + 1e-9;
        for (j, lm) in w.landmarks.iter().enumerate() {
            assert!((db.position(j) - lm.position.xy()).norm() <= bound);
        }
    }

    #[test]
    fn empty_world_rejected() {
        let mut w = world();
        w.landmarks.clear();
        assert!(build_map_db(&w, 10, &NoiseConfig::zero(), &mut stream_rng(1, 7)).is_err());
        let w = world();
        assert!(build_map_db(&w, 0, &NoiseConfig::zero(), &mut stream_rng(1, 7)).is_err());
    }
}
