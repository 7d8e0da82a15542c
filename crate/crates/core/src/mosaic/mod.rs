//! Ground-image patches projected onto the ground plane (frame G) and
//! resampled on a grid matched to the satellite map.

mod export;
mod roi;

pub use export::{load_patch, mask_runs, save_patch, PatchSidecar};
pub use roi::{parse_roi_config, polygon_area, polygon_contains, validate_rois, RoiConfig, RoiSpec};

use nalgebra::{Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

use crate::geometry::GroundPlane;
use crate::model::{CameraIntrinsics, ImagePose, ReconstructionModel};
use crate::raster::{Raster, RasterError};

/// Luma weights applied to (R, G, B).
pub const GRAY_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// Rays closer than this to the plane direction (relative to their length)
/// count as parallel.
pub const PARALLEL_TOLERANCE: f64 = 1e-9;

/// Upper bound on patch grid cells, guarding against runaway grids from
/// grazing views.
pub const MAX_PATCH_CELLS: usize = 1 << 22;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MosaicError {
    #[error("expected a 3-channel raster, got {0} channel(s)")]
    Channels(usize),
    #[error("ray is parallel to the ground plane")]
    Parallel,
    #[error("ground intersection lies behind the camera")]
    BehindCamera,
    #[error("pixel ({0}, {1}) cannot be undistorted")]
    Undistort(f64, f64),
    #[error("roi is degenerate (area {0} px)")]
    DegenerateRoi(f64),
    #[error("roi vertex ({0}, {1}) lies outside the image")]
    RoiOutsideImage(f64, f64),
    #[error("roi crosses the horizon: {0}")]
    Horizon(Box<MosaicError>),
    #[error("patch grid of {0} cells exceeds the limit")]
    GridTooLarge(usize),
    #[error("patch has no valid samples")]
    EmptyPatch,
    #[error("grid step must be positive and finite, got {0}")]
    Step(f64),
    #[error("patch layout is inconsistent: {0}")]
    Layout(String),
    #[error("image '{0}' is missing from the model or raster set")]
    MissingImage(String),
    #[error("image '{0}' references an unknown camera")]
    MissingCamera(String),
    #[error("roi configuration: {0}")]
    RoiConfig(String),
    #[error("patch '{label}': {source}")]
    Patch {
        label: String,
        #[source]
        source: Box<MosaicError>,
    },
    #[error(transparent)]
    Raster(#[from] RasterError),
}

/// Convert an RGB raster to real-valued luma. Single-channel input is an
/// error; callers that accept either should check `channels()` first.
pub fn to_grayscale(raster: &Raster) -> Result<Raster, MosaicError> {
    if raster.channels() != 3 {
        return Err(MosaicError::Channels(raster.channels()));
    }
    let [wr, wg, wb] = GRAY_WEIGHTS;
    let samples = raster
        .samples()
        .chunks_exact(3)
        // The weights sum to one up to rounding; keep the result in range.
        .map(|c| (wr * c[0] + wg * c[1] + wb * c[2]).min(255.0))
        .collect();
    let gray = Raster::new(raster.width(), raster.height(), 1, samples)?;
    Ok(match raster.pixel_pitch() {
        Some(p) => gray.with_pixel_pitch(p)?,
        None => gray,
    })
}

fn gray_view(raster: &Raster) -> Result<std::borrow::Cow<'_, Raster>, MosaicError> {
    if raster.channels() == 1 {
        Ok(std::borrow::Cow::Borrowed(raster))
    } else {
        Ok(std::borrow::Cow::Owned(to_grayscale(raster)?))
    }
}

/// Intersect the viewing ray through `pixel` with the ground plane and
/// return the hit in G coordinates.
pub fn pixel_ray_to_ground(
    pixel: &Vector2<f64>,
    pose: &ImagePose,
    intrinsics: &CameraIntrinsics,
    plane: &GroundPlane,
) -> Result<Vector2<f64>, MosaicError> {
    let (x, y) = intrinsics
        .unproject(pixel.x, pixel.y)
        .ok_or(MosaicError::Undistort(pixel.x, pixel.y))?;
    let direction = pose.rotation_matrix().transpose() * Vector3::new(x, y, 1.0);
    let center = pose.center();
    let n = plane.normal();
    let denom = n.dot(&direction);
    if denom.abs() <= PARALLEL_TOLERANCE * direction.norm() {
        return Err(MosaicError::Parallel);
    }
    let lambda = n.dot(&(plane.centroid() - center)) / denom;
    if lambda <= 0.0 {
        return Err(MosaicError::BehindCamera);
    }
    Ok(plane.project_to_ground(&(center + direction * lambda)))
}

/// A grayscale patch on a regular grid in frame G.
///
/// Sample `(i, j)` (column, row) sits at `origin_g + step * (i, j)`. Only
/// cells with a set mask bit belong to the patch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchRaster {
    label: String,
    source_image: String,
    width: usize,
    height: usize,
    samples: Vec<f64>,
    mask: Vec<bool>,
    origin_g: [f64; 2],
    step: f64,
    centroid: [f64; 2],
}

impl PatchRaster {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        label: impl Into<String>,
        source_image: impl Into<String>,
        width: usize,
        height: usize,
        samples: Vec<f64>,
        mask: Vec<bool>,
        origin_g: [f64; 2],
        step: f64,
    ) -> Result<Self, MosaicError> {
        if !(step.is_finite() && step > 0.0) {
            return Err(MosaicError::Step(step));
        }
        if width == 0 || height == 0 || samples.len() != width * height || mask.len() != samples.len() {
            return Err(MosaicError::Layout(format!(
                "{width}x{height} grid with {} samples and {} mask bits",
                samples.len(),
                mask.len()
            )));
        }
        if !origin_g.iter().all(|v| v.is_finite()) {
            return Err(MosaicError::Layout("non-finite origin".into()));
        }
        if samples.iter().zip(&mask).any(|(v, &m)| m && !(0.0..=255.0).contains(v)) {
            return Err(MosaicError::Layout("sample outside [0, 255]".into()));
        }
        let mut sum = [0.0f64; 2];
        let mut count = 0usize;
        for j in 0..height {
            for i in 0..width {
                if mask[j * width + i] {
                    sum[0] += i as f64;
                    sum[1] += j as f64;
                    count += 1;
                }
            }
        }
        if count == 0 {
            return Err(MosaicError::EmptyPatch);
        }
        let centroid = [
            origin_g[0] + step * sum[0] / count as f64,
            origin_g[1] + step * sum[1] / count as f64,
        ];
        Ok(Self {
            label: label.into(),
            source_image: source_image.into(),
            width,
            height,
            samples,
            mask,
            origin_g,
            step,
            centroid,
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn source_image(&self) -> &str {
        &self.source_image
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn origin_g(&self) -> Vector2<f64> {
        Vector2::from(self.origin_g)
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Mean G position of the valid cells.
    pub fn centroid(&self) -> Vector2<f64> {
        Vector2::from(self.centroid)
    }

    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn cell_position(&self, i: usize, j: usize) -> Vector2<f64> {
        self.origin_g() + Vector2::new(i as f64, j as f64) * self.step
    }

    /// `(G position, intensity)` of every valid cell in row-major order.
    pub fn valid_cells(&self) -> impl Iterator<Item = (Vector2<f64>, f64)> + '_ {
        (0..self.samples.len())
            .filter(|&k| self.mask[k])
            .map(|k| (self.cell_position(k % self.width, k / self.width), self.samples[k]))
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }
}

/// Patches sharing one ground plane and grid step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mosaic {
    pub patches: Vec<PatchRaster>,
    pub plane: GroundPlane,
    /// Grid step in G units per sample.
    pub step: f64,
}

impl Mosaic {
    pub fn new(patches: Vec<PatchRaster>, plane: GroundPlane, step: f64) -> Result<Self, MosaicError> {
        if patches.is_empty() {
            return Err(MosaicError::EmptyPatch);
        }
        if let Some(p) = patches.iter().find(|p| p.step() != step) {
            return Err(MosaicError::Layout(format!(
                "patch '{}' has step {} but the mosaic uses {step}",
                p.label(),
                p.step()
            )));
        }
        Ok(Self { patches, plane, step })
    }
}

/// Project one roi onto the ground plane and resample it on a G grid with
/// spacing `step`.
///
/// Each grid cell is mapped back into the source image; the cell is valid
/// when it lands inside the roi polygon and the bilinear footprint.
pub fn render_patch(
    label: &str,
    image: &Raster,
    roi: &RoiSpec,
    pose: &ImagePose,
    intrinsics: &CameraIntrinsics,
    plane: &GroundPlane,
    step: f64,
) -> Result<PatchRaster, MosaicError> {
    let wrap = |source: MosaicError| MosaicError::Patch {
        label: label.to_string(),
        source: Box::new(source),
    };
    if !(step.is_finite() && step > 0.0) {
        return Err(wrap(MosaicError::Step(step)));
    }
    let gray = gray_view(image).map_err(wrap)?;
    let (w, h) = (gray.width() as f64, gray.height() as f64);
    let area = polygon_area(&roi.vertices);
    if roi.vertices.len() < 3 || !(area >= 1.0) {
        return Err(wrap(MosaicError::DegenerateRoi(area)));
    }
    if let Some(v) = roi
        .vertices
        .iter()
        .find(|v| !(v[0] >= 0.0 && v[1] >= 0.0 && v[0] <= w && v[1] <= h))
    {
        return Err(wrap(MosaicError::RoiOutsideImage(v[0], v[1])));
    }
    let mapped: Vec<Vector2<f64>> = roi
        .vertices
        .iter()
        .map(|v| {
            pixel_ray_to_ground(&Vector2::new(v[0], v[1]), pose, intrinsics, plane)
                .map_err(|e| wrap(MosaicError::Horizon(Box::new(e))))
        })
        .collect::<Result<_, _>>()?;

    let min = mapped.iter().fold(Vector2::repeat(f64::INFINITY), |a, b| a.inf(b));
    let max = mapped.iter().fold(Vector2::repeat(f64::NEG_INFINITY), |a, b| a.sup(b));
    let origin = (min / step).map(f64::floor) * step;
    let extent = ((max - origin) / step).map(|v| v.floor() + 1.0);
    let cells = extent.x * extent.y;
    if !(cells <= MAX_PATCH_CELLS as f64) {
        return Err(wrap(MosaicError::GridTooLarge(cells.min(usize::MAX as f64) as usize)));
    }
    let (gw, gh) = (extent.x as usize, extent.y as usize);

    let rotation = pose.rotation_matrix();
    let translation = pose.translation_vector();
    let mut samples = vec![0.0; gw * gh];
    let mut mask = vec![false; gw * gh];
    for j in 0..gh {
        for i in 0..gw {
            let g = origin + Vector2::new(i as f64, j as f64) * step;
            let cam = rotation * plane.lift(&g, 0.0) + translation;
            if cam.z <= 0.0 {
                continue;
            }
            let (u, v) = intrinsics.project(cam.x / cam.z, cam.y / cam.z);
            if !polygon_contains(&roi.vertices, u, v) {
                continue;
            }
            if let Some(value) = gray.sample_bilinear(u - 0.5, v - 0.5) {
                samples[j * gw + i] = value;
                mask[j * gw + i] = true;
            }
        }
    }
    PatchRaster::new(label, roi.image.clone(), gw, gh, samples, mask, [origin.x, origin.y], step)
        .map_err(wrap)
}

/// Render every roi into one mosaic. Patches render in parallel and are
/// assembled in roi order.
pub fn build_mosaic(
    model: &ReconstructionModel,
    images: &BTreeMap<String, Raster>,
    rois: &[RoiSpec],
    labels: &[String],
    plane: &GroundPlane,
    step: f64,
) -> Result<Mosaic, MosaicError> {
    if labels.len() != rois.len() {
        return Err(MosaicError::Layout(format!(
            "{} labels for {} rois",
            labels.len(),
            rois.len()
        )));
    }
    let patches = rois
        .par_iter()
        .zip(labels.par_iter())
        .map(|(roi, label)| {
            let pose = model
                .image_by_name(&roi.image)
                .ok_or_else(|| MosaicError::MissingImage(roi.image.clone()))?;
            let camera = model
                .camera_for(pose)
                .ok_or_else(|| MosaicError::MissingCamera(roi.image.clone()))?;
            let raster = images
                .get(&roi.image)
                .ok_or_else(|| MosaicError::MissingImage(roi.image.clone()))?;
            render_patch(label, raster, roi, pose, camera, plane, step)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Mosaic::new(patches, plane.clone(), step)
}
