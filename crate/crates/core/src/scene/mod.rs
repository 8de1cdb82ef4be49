//! Scenes: analytic refractive scenes with a ray-marched reference renderer,
//! and posed-image datasets on disk.

pub mod analytic;
pub mod dataset;

pub use analytic::{synthesize_views, AnalyticScene, Emitter, IndexProfile, Skybox, SyntheticView};
pub use dataset::{load_dataset, load_dataset_with, write_dataset, Frame, LoadOptions, SceneDataset, ViewRecord};
