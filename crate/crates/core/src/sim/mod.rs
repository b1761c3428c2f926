//! Synthetic stand-in for the sensors and the visual-inertial front-end: a
//! flat textured world, a true flight, and a drifting odometry estimate that
//! publishes keyframe poses, tracked features and reconstructed points.

mod trajectory;
mod vio;
mod world;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use trajectory::{generate_trajectory, PathSpec, TrueKeyframe, TrueTrajectory};
pub use vio::{
    reconstruct_point, simulate_keyframe, simulate_vio, NoiseConfig, Observation, TrackedFeature,
    VioOutput,
};
pub use world::{
    generate_world, random_unit_vector, synthesize_descriptor, Landmark, WorldModel,
};

pub type SimRng = ChaCha8Rng;

/// Independent, reproducible random stream `stream` derived from `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream identifiers, one per consumer, so that adding draws to one stage
/// never perturbs another.
pub mod streams {
    pub const WORLD: u64 = 1;
    pub const TRAJECTORY: u64 = 2;
    pub const DRIFT: u64 = 3;
    pub const OBSERVATION: u64 = 4;
    pub const TRACKING: u64 = 5;
    pub const COMPASS: u64 = 6;
    pub const MAP: u64 = 7;
}
