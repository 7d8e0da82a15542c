use nalgebra::{Matrix2, Matrix3, Quaternion, UnitQuaternion, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

use super::render::{camera_center, camera_rotation, render_satellite, render_view, scene_intrinsics};
use super::spec::SceneSpec;
use super::SynthError;
use crate::geometry::{GroundPlane, SimilarityTransform2D};
use crate::model::{ImagePose, Observation, ReconstructionModel, ScenePoint, TrackEntry};
use crate::mosaic::{render_patch, RoiConfig, RoiSpec};
use crate::raster::Raster;

const FRAME_STREAM: u64 = 0x6672_616d;
const POINT_STREAM: u64 = 0x706f_696e;
const DRIFT_STREAM: u64 = 0x6472_6966;

/// Default roi size in view pixels (width, height), centered in the image.
pub const DEFAULT_ROI: [f64; 2] = [120.0, 90.0];

/// Similarity taking world coordinates into the reconstruction frame:
/// `c = scale * rotation * w + translation`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameTransform {
    pub scale: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl FrameTransform {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    fn seeded(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ FRAME_STREAM);
        let q = loop {
            let v: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            let n2: f64 = v.iter().map(|x| x * x).sum();
            if n2 > 1e-3 && n2 <= 1.0 {
                break UnitQuaternion::from_quaternion(Quaternion::new(v[0], v[1], v[2], v[3]));
            }
        };
        Self {
            scale: rng.random_range(0.5..2.0),
            rotation: q.to_rotation_matrix().into_inner(),
            translation: Vector3::from_fn(|_, _| rng.random_range(-5.0..5.0)),
        }
    }

    pub fn apply(&self, world: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * world * self.scale + self.translation
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthCentroid {
    pub label: String,
    pub g: [f64; 2],
    pub s: [f64; 2],
}

/// Everything the synthetic world knows that a real pipeline would not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// True G-to-S transform for `plane`.
    pub alpha: SimilarityTransform2D,
    pub plane: GroundPlane,
    pub frame: FrameTransform,
    pub pitch: f64,
    /// Poses before drift, in the reconstruction frame.
    pub clean_poses: Vec<ImagePose>,
    /// Horizontal camera-center errors injected by the drift model, meters.
    pub drift_offsets: Vec<[f64; 2]>,
    pub drift_angle_deg: f64,
    /// Patch centroids rendered from the clean poses.
    pub centroids: Vec<TruthCentroid>,
}

impl GroundTruth {
    /// True transform from the G frame of any plane fitted in this scene's
    /// reconstruction frame to satellite pixels.
    pub fn alpha_for(&self, plane: &GroundPlane) -> Result<SimilarityTransform2D, SynthError> {
        alpha_for(&self.frame, self.pitch, plane)
    }
}

fn alpha_for(frame: &FrameTransform, pitch: f64, plane: &GroundPlane) -> Result<SimilarityTransform2D, SynthError> {
    let span = 100.0 * pitch;
    let g0 = plane.project_to_ground(&frame.apply(&Vector3::zeros()));
    let g1 = plane.project_to_ground(&frame.apply(&Vector3::new(span, 0.0, 0.0)));
    Ok(SimilarityTransform2D::from_point_pairs(
        &g0,
        &g1,
        &Vector2::zeros(),
        &Vector2::new(span / pitch, 0.0),
    )?)
}

/// A rendered synthetic world.
#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub spec: SceneSpec,
    pub map: Raster,
    /// `(image name, RGB raster)` in camera order.
    pub views: Vec<(String, Raster)>,
    pub model: ReconstructionModel,
    pub rois: RoiConfig,
    pub truth: GroundTruth,
}

impl SyntheticScene {
    pub fn images(&self) -> BTreeMap<String, Raster> {
        self.views.iter().cloned().collect()
    }

    /// Grid step giving one patch sample per satellite pixel.
    pub fn step(&self) -> f64 {
        1.0 / self.truth.alpha.s()
    }
}

pub fn view_name(k: usize) -> String {
    format!("view_{k:03}.ppm")
}

/// The model's roi set: the spec's rois, or one central roi per camera.
pub fn scene_rois(spec: &SceneSpec) -> RoiConfig {
    let (w, h) = (spec.intrinsics.width as f64, spec.intrinsics.height as f64);
    let rois = if spec.rois.is_empty() {
        let (hw, hh) = (0.5 * DEFAULT_ROI[0].min(w), 0.5 * DEFAULT_ROI[1].min(h));
        (0..spec.cameras.len())
            .map(|k| RoiSpec {
                image: view_name(k),
                label: Some(format!("p{k}")),
                vertices: vec![
                    [w / 2.0 - hw, h / 2.0 - hh],
                    [w / 2.0 + hw, h / 2.0 - hh],
                    [w / 2.0 + hw, h / 2.0 + hh],
                    [w / 2.0 - hw, h / 2.0 + hh],
                ],
                extra: false,
            })
            .collect()
    } else {
        spec.rois
            .iter()
            .enumerate()
            .map(|(k, r)| RoiSpec {
                image: view_name(r.camera),
                label: Some(r.label.clone().unwrap_or_else(|| format!("p{k}"))),
                vertices: r.vertices.clone(),
                extra: r.extra,
            })
            .collect()
    };
    RoiConfig { rois }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// World-frame scene points: marking outline corners plus four map corners,
/// with optional out-of-plane noise.
fn world_points(spec: &SceneSpec) -> Vec<(Vector3<f64>, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ POINT_STREAM);
    let (w, h) = ((spec.map_width - 1) as f64, (spec.map_height - 1) as f64);
    let mut pts: Vec<([f64; 2], f64)> = vec![
        ([1.0, 1.0], spec.background),
        ([w - 1.0, 1.0], spec.background),
        ([w - 1.0, h - 1.0], spec.background),
        ([1.0, h - 1.0], spec.background),
    ];
    for m in &spec.markings {
        pts.extend(m.outline().into_iter().map(|p| (p, m.intensity())));
    }
    pts.into_iter()
        .map(|(p, gray)| {
            let z = if spec.point_noise > 0.0 { spec.point_noise * gaussian(&mut rng) } else { 0.0 };
            (Vector3::new(p[0] * spec.pitch, p[1] * spec.pitch, z), gray)
        })
        .collect()
}

/// Drift field `e = fraction * N * (c - c_0)` with `N` a unit-gain
/// reflection. Its conformal part is zero, so a similarity fit cannot absorb
/// it and interpatch errors grow in proportion to separation.
fn drift_offsets(spec: &SceneSpec) -> (Vec<Vector2<f64>>, f64) {
    let angle = match spec.drift.angle_deg {
        Some(a) => a,
        None => ChaCha8Rng::seed_from_u64(spec.seed ^ DRIFT_STREAM).random_range(0.0..180.0),
    };
    let (s, c) = (2.0 * angle.to_radians()).sin_cos();
    let n = Matrix2::new(c, s, s, -c);
    let c0 = Vector2::from(spec.cameras[0].position);
    let offsets = spec
        .cameras
        .iter()
        .map(|cam| n * (Vector2::from(cam.position) - c0) * spec.drift.fraction)
        .collect();
    (offsets, angle)
}

/// Render the views and build the (drift-corrupted) reconstruction of a scene.
pub fn render_ground_views(spec: &SceneSpec) -> Result<SyntheticScene, SynthError> {
    let map = render_satellite(spec)?;
    let intrinsics = scene_intrinsics(spec)?;
    let frame = if spec.random_frame { FrameTransform::seeded(spec.seed) } else { FrameTransform::identity() };
    let (offsets, drift_angle_deg) = drift_offsets(spec);

    let mut views = Vec::with_capacity(spec.cameras.len());
    let mut model = ReconstructionModel::default();
    model.cameras.insert(1, intrinsics.clone());
    let mut clean_poses = Vec::new();
    let to_model_rotation = |r: &Matrix3<f64>| r * frame.rotation.transpose();
    for (k, cam) in spec.cameras.iter().enumerate() {
        let name = view_name(k);
        let view = render_view(&map, spec.pitch, spec.background, cam, &intrinsics)?;
        let r = camera_rotation(cam);
        let center = camera_center(cam);
        let drifted = center + Vector3::new(offsets[k].x, offsets[k].y, 0.0);
        let id = k as u32 + 1;
        clean_poses.push(ImagePose::from_center(id, 1, name.clone(), &to_model_rotation(&r), &frame.apply(&center)));
        model
            .images
            .insert(id, ImagePose::from_center(id, 1, name.clone(), &to_model_rotation(&r), &frame.apply(&drifted)));
        views.push((name, view));
    }

    // Observations come from the clean cameras: that is where the points
    // actually appear in the rendered images.
    for (index, (world, gray)) in world_points(spec).into_iter().enumerate() {
        let point_id = index as u64 + 1;
        let mut track = Vec::new();
        for (k, cam) in spec.cameras.iter().enumerate() {
            let pc = camera_rotation(cam) * (world - camera_center(cam));
            if pc.z <= 0.0 {
                continue;
            }
            let (u, v) = intrinsics.project(pc.x / pc.z, pc.y / pc.z);
            if !(u >= 0.0 && v >= 0.0 && u < intrinsics.width() as f64 && v < intrinsics.height() as f64) {
                continue;
            }
            let image = model.images.get_mut(&(k as u32 + 1)).expect("image exists");
            track.push(TrackEntry {
                image_id: image.image_id,
                point2d_index: image.observations.len() as u32,
            });
            image.observations.push(Observation { xy: [u, v], point_id: Some(point_id) });
        }
        let level = gray.round().clamp(0.0, 255.0) as u8;
        model.points.insert(
            point_id,
            ScenePoint {
                point_id,
                position: frame.apply(&world).into(),
                color: [level; 3],
                error: 0.5,
                track,
            },
        );
    }

    let rois = scene_rois(spec);
    let (plane, _) = crate::pipeline::plane_from_model(&model, Some(&rois))
        .map_err(|e| SynthError::Invalid(vec![format!("scene does not define a ground plane: {e}")]))?;
    let alpha = alpha_for(&frame, spec.pitch, &plane)?;

    let step = 1.0 / alpha.s();
    let clean_model = ReconstructionModel {
        images: clean_poses.iter().map(|p| (p.image_id, p.clone())).collect(),
        ..model.clone()
    };
    let images: BTreeMap<String, Raster> = views.iter().cloned().collect();
    let mut centroids = Vec::new();
    for (roi, label) in rois.rois.iter().zip(rois.labels()) {
        let pose = clean_model.image_by_name(&roi.image).expect("roi image exists");
        let patch = render_patch(&label, &images[&roi.image], roi, pose, &intrinsics, &plane, step)
            .map_err(|e| SynthError::Invalid(vec![format!("roi '{label}' does not render: {e}")]))?;
        centroids.push(TruthCentroid {
            label,
            g: patch.centroid().into(),
            s: alpha.apply(&patch.centroid()).into(),
        });
    }

    Ok(SyntheticScene {
        spec: spec.clone(),
        map,
        views,
        model,
        rois,
        truth: GroundTruth {
            alpha,
            plane,
            frame,
            pitch: spec.pitch,
            clean_poses,
            drift_offsets: offsets.iter().map(|o| [o.x, o.y]).collect(),
            drift_angle_deg,
            centroids,
        },
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), SynthError> {
    let text = crate::numfmt::to_json_string(value).map_err(|e| SynthError::Io(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| SynthError::Io(format!("{}: {e}", path.display())))
}

/// Write a scene directory: `map.pgm`, `views/`, `model/`, `rois.json`,
/// `truth.json`, `spec.json` and a ready-to-run `config.json`.
pub fn write_scene(scene: &SyntheticScene, dir: &Path) -> Result<(), SynthError> {
    use crate::pixmap::save_pixmap;
    let io = |e: std::io::Error| SynthError::Io(e.to_string());
    std::fs::create_dir_all(dir.join("views")).map_err(io)?;
    std::fs::write(dir.join("map.pgm"), save_pixmap(&scene.map)).map_err(io)?;
    for (name, view) in &scene.views {
        std::fs::write(dir.join("views").join(name), save_pixmap(view)).map_err(io)?;
    }
    crate::model::write_model_dir(&scene.model, &dir.join("model")).map_err(io)?;
    write_json(&dir.join("rois.json"), &scene.rois)?;
    write_json(&dir.join("truth.json"), &scene.truth)?;
    write_json(&dir.join("spec.json"), &scene.spec)?;
    write_json(&dir.join("config.json"), &crate::pipeline::RunConfig::for_scene(scene))
}
