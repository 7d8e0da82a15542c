//! In-memory structure-from-motion reconstruction (frame C).

mod camera;
mod colmap;

pub use camera::{CameraError, CameraIntrinsics, CameraModel};
pub use colmap::{
    parse_model, read_model_dir, write_model, write_model_dir, ModelError, ModelText, ParseReport,
};

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// A 2D feature observation; `point_id` is `None` when the feature is not
/// attached to any scene point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub xy: [f64; 2],
    pub point_id: Option<u64>,
}

/// World-to-camera pose of one registered image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImagePose {
    pub image_id: u32,
    pub camera_id: u32,
    pub name: String,
    /// `[w, x, y, z]`, unit norm.
    pub rotation: [f64; 4],
    pub translation: [f64; 3],
    pub observations: Vec<Observation>,
}

impl ImagePose {
    pub fn quaternion(&self) -> UnitQuaternion<f64> {
        let [w, x, y, z] = self.rotation;
        UnitQuaternion::new_unchecked(Quaternion::new(w, x, y, z))
    }

    /// World-to-camera rotation matrix.
    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.quaternion().to_rotation_matrix().into_inner()
    }

    pub fn translation_vector(&self) -> Vector3<f64> {
        Vector3::from(self.translation)
    }

    /// Camera center in the reconstruction frame: `-R^T t`.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation_matrix().transpose() * self.translation_vector())
    }

    /// Optical axis (+z of the camera) expressed in the reconstruction frame.
    pub fn optical_axis(&self) -> Vector3<f64> {
        self.rotation_matrix().row(2).transpose()
    }

    /// Build a pose from a world-to-camera rotation matrix and camera center.
    pub fn from_center(
        image_id: u32,
        camera_id: u32,
        name: impl Into<String>,
        rotation: &Matrix3<f64>,
        center: &Vector3<f64>,
    ) -> Self {
        let q = UnitQuaternion::from_matrix(rotation);
        let q = if q.w < 0.0 { UnitQuaternion::new_unchecked(-q.into_inner()) } else { q };
        let t = -(rotation * center);
        Self {
            image_id,
            camera_id,
            name: name.into(),
            rotation: [q.w, q.i, q.j, q.k],
            translation: [t.x, t.y, t.z],
            observations: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackEntry {
    pub image_id: u32,
    pub point2d_index: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenePoint {
    pub point_id: u64,
    pub position: [f64; 3],
    pub color: [u8; 3],
    pub error: f64,
    pub track: Vec<TrackEntry>,
}

impl ScenePoint {
    pub fn position_vector(&self) -> Vector3<f64> {
        Vector3::from(self.position)
    }
}

/// Parsed reconstruction. Maps are ordered so iteration is deterministic.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionModel {
    pub cameras: BTreeMap<u32, CameraIntrinsics>,
    pub images: BTreeMap<u32, ImagePose>,
    pub points: BTreeMap<u64, ScenePoint>,
}

impl ReconstructionModel {
    pub fn image_by_name(&self, name: &str) -> Option<&ImagePose> {
        self.images.values().find(|im| im.name == name)
    }

    pub fn camera_for(&self, image: &ImagePose) -> Option<&CameraIntrinsics> {
        self.cameras.get(&image.camera_id)
    }
}
