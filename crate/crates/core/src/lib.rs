//! Radiance fields for scenes with refractive objects.
//!
//! The pipeline carves a refractive-index grid from silhouettes
//! ([`refindex`]), tracks curved rays through it ([`eikonal`]), draws
//! coarse and hierarchical samples along those curved paths ([`sampling`]),
//! evaluates coarse/fine/boundary networks ([`fields`]) and composites them
//! with a skybox term ([`render`]). [`train`] ties these together into an
//! optimizer loop; [`scene`] handles datasets and analytic reference scenes.

pub mod camera;
pub mod cli;
pub mod eikonal;
pub mod error;
pub mod fields;
pub mod metrics;
pub mod refindex;
pub mod render;
pub mod sampling;
pub mod scene;
pub mod train;

pub use error::{Error, Result};

/// Scene-space 3-vector.
pub type Vec3 = nalgebra::Vector3<f64>;
