//! COLMAP text-model reader and writer (`cameras.txt`, `images.txt`, `points3D.txt`).

use super::{
    CameraError, CameraIntrinsics, CameraModel, ImagePose, Observation, ReconstructionModel,
    ScenePoint, TrackEntry,
};
use crate::numfmt::fmt_sig;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;
use thiserror::Error;

/// Quaternions whose norm is further than this from one are rejected.
pub const QUATERNION_TOLERANCE: f64 = 1e-6;
/// Below this deviation the parsed quaternion is kept verbatim, so text
/// written at twelve significant digits reads back unchanged.
const RENORMALIZE_THRESHOLD: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("{file}:{line}: field {field}: {message}")]
    Malformed {
        file: &'static str,
        line: usize,
        field: &'static str,
        message: String,
    },
    #[error("images.txt:{line}: quaternion norm {norm} deviates from 1 by more than {QUATERNION_TOLERANCE}")]
    Quaternion { line: usize, norm: f64 },
    #[error("image {image_id} references missing camera {camera_id}")]
    DanglingCamera { image_id: u32, camera_id: u32 },
    #[error("cameras.txt:{line}: {source}")]
    Camera {
        line: usize,
        #[source]
        source: CameraError,
    },
    #[error("{file}:{line}: duplicate id {id}")]
    Duplicate {
        file: &'static str,
        line: usize,
        id: u64,
    },
    #[error("{file} is not valid UTF-8")]
    Encoding { file: &'static str },
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Counts of references dropped while making the model self-consistent.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize)]
pub struct ParseReport {
    /// 2D observations whose point id was not found among the scene points.
    pub dropped_observations: usize,
    /// Track entries naming an image that is not in the model.
    pub dropped_track_entries: usize,
}

/// The three text files of a model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelText {
    pub cameras: String,
    pub images: String,
    pub points: String,
}

struct Fields<'a> {
    file: &'static str,
    line: usize,
    tokens: std::str::SplitWhitespace<'a>,
}

impl<'a> Fields<'a> {
    fn new(file: &'static str, line: usize, text: &'a str) -> Self {
        Self {
            file,
            line,
            tokens: text.split_whitespace(),
        }
    }

    fn err(&self, field: &'static str, message: impl Into<String>) -> ModelError {
        ModelError::Malformed {
            file: self.file,
            line: self.line,
            field,
            message: message.into(),
        }
    }

    fn next<T: FromStr>(&mut self, field: &'static str) -> Result<T, ModelError> {
        let tok = self.tokens.next().ok_or_else(|| self.err(field, "missing"))?;
        tok.parse()
            .map_err(|_| self.err(field, format!("cannot parse {tok:?}")))
    }

    fn real(&mut self, field: &'static str) -> Result<f64, ModelError> {
        let v: f64 = self.next(field)?;
        if !v.is_finite() {
            return Err(self.err(field, "not finite"));
        }
        Ok(v)
    }

    fn peek_done(&mut self) -> bool {
        self.tokens.clone().next().is_none()
    }
}

fn text<'a>(file: &'static str, bytes: &'a [u8]) -> Result<&'a str, ModelError> {
    std::str::from_utf8(bytes).map_err(|_| ModelError::Encoding { file })
}

fn is_skippable(line: &str) -> bool {
    let t = line.trim_start();
    t.is_empty() || t.starts_with('#')
}

fn parse_cameras(src: &str) -> Result<BTreeMap<u32, CameraIntrinsics>, ModelError> {
    let mut cameras = BTreeMap::new();
    for (idx, line) in src.lines().enumerate() {
        if is_skippable(line) {
            continue;
        }
        let lineno = idx + 1;
        let mut f = Fields::new("cameras.txt", lineno, line);
        let id: u32 = f.next("CAMERA_ID")?;
        let model_name: String = f.next("MODEL")?;
        let model = CameraModel::from_name(&model_name)
            .map_err(|source| ModelError::Camera { line: lineno, source })?;
        let width: u32 = f.next("WIDTH")?;
        let height: u32 = f.next("HEIGHT")?;
        let mut params = Vec::new();
        while !f.peek_done() {
            params.push(f.real("PARAMS")?);
        }
        let cam = CameraIntrinsics::new(model, width, height, params)
            .map_err(|source| ModelError::Camera { line: lineno, source })?;
        if cameras.insert(id, cam).is_some() {
            return Err(ModelError::Duplicate {
                file: "cameras.txt",
                line: lineno,
                id: u64::from(id),
            });
        }
    }
    Ok(cameras)
}

fn parse_observations(lineno: usize, line: &str) -> Result<Vec<Observation>, ModelError> {
    let mut f = Fields::new("images.txt", lineno, line);
    let mut out = Vec::new();
    while !f.peek_done() {
        let x = f.real("POINTS2D.X")?;
        let y = f.real("POINTS2D.Y")?;
        let id: i64 = f.next("POINTS2D.POINT3D_ID")?;
        let point_id = match id {
            -1 => None,
            id if id >= 0 => Some(id as u64),
            _ => return Err(f.err("POINTS2D.POINT3D_ID", "negative id other than -1")),
        };
        out.push(Observation { xy: [x, y], point_id });
    }
    Ok(out)
}

fn parse_images(src: &str) -> Result<BTreeMap<u32, ImagePose>, ModelError> {
    let mut images = BTreeMap::new();
    let mut lines = src.lines().enumerate();
    while let Some((idx, line)) = lines.next() {
        if is_skippable(line) {
            continue;
        }
        let lineno = idx + 1;
        let mut f = Fields::new("images.txt", lineno, line);
        let image_id: u32 = f.next("IMAGE_ID")?;
        let mut q = [0.0; 4];
        for (slot, field) in q.iter_mut().zip(["QW", "QX", "QY", "QZ"]) {
            *slot = f.real(field)?;
        }
        let mut t = [0.0; 3];
        for (slot, field) in t.iter_mut().zip(["TX", "TY", "TZ"]) {
            *slot = f.real(field)?;
        }
        let camera_id: u32 = f.next("CAMERA_ID")?;
        let name = f.tokens.clone().collect::<Vec<_>>().join(" ");
        if name.is_empty() {
            return Err(f.err("NAME", "missing"));
        }
        let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > QUATERNION_TOLERANCE {
            return Err(ModelError::Quaternion { line: lineno, norm });
        }
        if (norm - 1.0).abs() > RENORMALIZE_THRESHOLD {
            q.iter_mut().for_each(|v| *v /= norm);
        }
        let observations = match lines.next() {
            Some((oidx, oline)) => parse_observations(oidx + 1, oline)?,
            None => Vec::new(),
        };
        let pose = ImagePose {
            image_id,
            camera_id,
            name,
            rotation: q,
            translation: t,
            observations,
        };
        if images.insert(image_id, pose).is_some() {
            return Err(ModelError::Duplicate {
                file: "images.txt",
                line: lineno,
                id: u64::from(image_id),
            });
        }
    }
    Ok(images)
}

fn parse_points(src: &str) -> Result<BTreeMap<u64, ScenePoint>, ModelError> {
    let mut points = BTreeMap::new();
    for (idx, line) in src.lines().enumerate() {
        if is_skippable(line) {
            continue;
        }
        let lineno = idx + 1;
        let mut f = Fields::new("points3D.txt", lineno, line);
        let point_id: u64 = f.next("POINT3D_ID")?;
        let position = [f.real("X")?, f.real("Y")?, f.real("Z")?];
        let color = [f.next("R")?, f.next("G")?, f.next("B")?];
        let error = f.real("ERROR")?;
        let mut track = Vec::new();
        while !f.peek_done() {
            let image_id = f.next("TRACK.IMAGE_ID")?;
            let point2d_index = f.next("TRACK.POINT2D_IDX")?;
            track.push(TrackEntry {
                image_id,
                point2d_index,
            });
        }
        let point = ScenePoint {
            point_id,
            position,
            color,
            error,
            track,
        };
        if points.insert(point_id, point).is_some() {
            return Err(ModelError::Duplicate {
                file: "points3D.txt",
                line: lineno,
                id: point_id,
            });
        }
    }
    Ok(points)
}

/// Parse the three text streams of a COLMAP model.
///
/// Observations that reference unknown points are detached (their point id
/// becomes `None`) and track entries naming unknown images are removed; both
/// are counted in the returned report. Dangling camera references are errors.
pub fn parse_model(
    camera_text: &[u8],
    image_text: &[u8],
    point_text: &[u8],
) -> Result<(ReconstructionModel, ParseReport), ModelError> {
    let cameras = parse_cameras(text("cameras.txt", camera_text)?)?;
    let mut images = parse_images(text("images.txt", image_text)?)?;
    let mut points = parse_points(text("points3D.txt", point_text)?)?;
    let mut report = ParseReport::default();

    for image in images.values_mut() {
        if !cameras.contains_key(&image.camera_id) {
            return Err(ModelError::DanglingCamera {
                image_id: image.image_id,
                camera_id: image.camera_id,
            });
        }
        for obs in &mut image.observations {
            if obs.point_id.is_some_and(|id| !points.contains_key(&id)) {
                obs.point_id = None;
                report.dropped_observations += 1;
            }
        }
    }
    for point in points.values_mut() {
        let before = point.track.len();
        point.track.retain(|t| images.contains_key(&t.image_id));
        report.dropped_track_entries += before - point.track.len();
    }
    Ok((
        ReconstructionModel {
            cameras,
            images,
            points,
        },
        report,
    ))
}

/// Serialize a model as COLMAP text, floats at twelve significant digits.
pub fn write_model(model: &ReconstructionModel) -> ModelText {
    let mut cameras = String::new();
    cameras.push_str("# Camera list with one line of data per camera:\n");
    cameras.push_str("#   CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]\n");
    let _ = writeln!(cameras, "# Number of cameras: {}", model.cameras.len());
    for (id, cam) in &model.cameras {
        let _ = write!(cameras, "{id} {} {} {}", cam.model().name(), cam.width(), cam.height());
        for p in cam.params() {
            let _ = write!(cameras, " {}", fmt_sig(*p));
        }
        cameras.push('\n');
    }

    let mut images = String::new();
    images.push_str("# Image list with two lines of data per image:\n");
    images.push_str("#   IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, CAMERA_ID, NAME\n");
    images.push_str("#   POINTS2D[] as (X, Y, POINT3D_ID)\n");
    let _ = writeln!(images, "# Number of images: {}", model.images.len());
    for (id, im) in &model.images {
        let _ = write!(images, "{id}");
        for v in im.rotation.iter().chain(im.translation.iter()) {
            let _ = write!(images, " {}", fmt_sig(*v));
        }
        let _ = writeln!(images, " {} {}", im.camera_id, im.name);
        let obs: Vec<String> = im
            .observations
            .iter()
            .map(|o| {
                let id = o.point_id.map_or_else(|| "-1".to_string(), |p| p.to_string());
                format!("{} {} {id}", fmt_sig(o.xy[0]), fmt_sig(o.xy[1]))
            })
            .collect();
        images.push_str(&obs.join(" "));
        images.push('\n');
    }

    let mut points = String::new();
    points.push_str("# 3D point list with one line of data per point:\n");
    points.push_str("#   POINT3D_ID, X, Y, Z, R, G, B, ERROR, TRACK[] as (IMAGE_ID, POINT2D_IDX)\n");
    let _ = writeln!(points, "# Number of points: {}", model.points.len());
    for (id, p) in &model.points {
        let _ = write!(
            points,
            "{id} {} {} {} {} {} {} {}",
            fmt_sig(p.position[0]),
            fmt_sig(p.position[1]),
            fmt_sig(p.position[2]),
            p.color[0],
            p.color[1],
            p.color[2],
            fmt_sig(p.error)
        );
        for t in &p.track {
            let _ = write!(points, " {} {}", t.image_id, t.point2d_index);
        }
        points.push('\n');
    }
    ModelText {
        cameras,
        images,
        points,
    }
}

fn read(path: &Path) -> Result<Vec<u8>, ModelError> {
    std::fs::read(path).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_model_dir(dir: &Path) -> Result<(ReconstructionModel, ParseReport), ModelError> {
    parse_model(
        &read(&dir.join("cameras.txt"))?,
        &read(&dir.join("images.txt"))?,
        &read(&dir.join("points3D.txt"))?,
    )
}

pub fn write_model_dir(model: &ReconstructionModel, dir: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let text = write_model(model);
    std::fs::write(dir.join("cameras.txt"), text.cameras)?;
    std::fs::write(dir.join("images.txt"), text.images)?;
    std::fs::write(dir.join("points3D.txt"), text.points)
}
