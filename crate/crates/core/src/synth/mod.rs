//! Synthetic worlds with known ground truth: a marked satellite map, ground
//! camera renders, a drift-corrupted reconstruction and the true transform.

mod presets;
mod render;
mod scene;
mod spec;

pub use presets::{
    cross_patch_scene, cut_patch, default_scene, drift_scene, flat_patch_scene, line_patch_scene, pentagon,
    periodic_cross_scene, perturb_alpha, recovery_scene, PatchCase,
};
pub use render::{camera_center, camera_rotation, noise_texture, render_satellite, render_view, scene_intrinsics};
pub use scene::{
    render_ground_views, scene_rois, view_name, write_scene, FrameTransform, GroundTruth, SyntheticScene,
    TruthCentroid, DEFAULT_ROI,
};
pub use spec::{CameraSpec, DriftSpec, IntrinsicsSpec, Marking, SceneRoi, SceneSpec};

use thiserror::Error;

use crate::geometry::GeometryError;
use crate::raster::RasterError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid scene:\n  - {}", .0.join("\n  - "))]
    Invalid(Vec<String>),
    #[error("i/o: {0}")]
    Io(String),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}
