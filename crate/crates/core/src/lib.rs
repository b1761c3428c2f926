//! Map-aided geolocalization of a UAV: odometry keyframes are registered
//! against a georeferenced feature map and the registrations are fused with
//! the odometry in a pose graph.

pub mod error;
pub mod frames;
pub mod georeg;
pub mod harness;
pub mod map_index;
pub mod pose_graph;
pub mod sim;

pub use error::{Error, Result};
