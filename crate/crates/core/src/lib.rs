//! Spray-paint color-effect prediction toolkit.
//!
//! The crate covers the whole chain from a colored point cloud and a spray-gun
//! path to a predicted post-spray color per point:
//!
//! - [`pointcloud`]: colored clouds, ASCII PLY I/O, nearest-neighbor queries, normals.
//! - [`trajectory`]: gun paths, arc-length discretization, control-vector modulation.
//! - [`deposition`]: beta-distribution deposition rate and film-thickness accumulation.
//! - [`kmoracle`]: Kubelka-Munk reflectance and synthetic labeled data generation.
//! - [`dataset`]: training records, normalization, class encoding, seeded splits.
//! - [`network`]: the gated residual perceptron, its baselines, training and metrics.
//! - [`optimizer`]: NSGA-II search over gun heights, speeds and spray confidences.

pub mod dataset;
pub mod deposition;
pub mod error;
pub mod kmoracle;
pub mod network;
pub mod optimizer;
pub mod pointcloud;
pub mod seed;
pub mod trajectory;

pub use error::{Error, Result};

/// Position or direction in centimeters.
pub type Vec3 = nalgebra::Vector3<f64>;
