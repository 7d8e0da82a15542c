//! End-to-end commands shared by the command-line front end and the tests:
//! configuration loading, ground-plane extraction, registration and
//! integrity diagnostics, each writing its artifacts to an output directory.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use thiserror::Error;

use crate::geometry::{fit_plane_svd, GeometryError, GroundPlane, SimilarityTransform2D};
use crate::integrity::{
    classify_surface, drift_trend, interpatch_csv, interpatch_errors, mosaic_ambiguity, surface_heatmap,
    AmbiguityReport, DriftTrend, IntegrityConfig, IntegrityError, InterpatchError, SurfaceClassification,
};
use crate::model::{read_model_dir, ModelError, ReconstructionModel};
use crate::mosaic::{build_mosaic, parse_roi_config, polygon_contains, to_grayscale, Mosaic, MosaicError, RoiConfig};
use crate::numfmt::{fmt_sig, to_json_string};
use crate::pixmap::{load_pixmap, save_pixmap};
use crate::raster::Raster;
use crate::registration::{
    compute_ssd_surface, fix_patch, register, render_overlay, PatchFix, RegistrationConfig, RegistrationError,
    RegistrationResult,
};
use crate::synth::{perturb_alpha, render_ground_views, write_scene, SceneSpec, SynthError, SyntheticScene};

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const USAGE: i32 = 2;
    pub const DIVERGENCE: i32 = 3;
    pub const CONDITIONING: i32 = 4;
    pub const IO: i32 = 5;
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("model: {0}")]
    Model(#[from] ModelError),
    #[error("ground plane: {0}")]
    Geometry(#[from] GeometryError),
    #[error("mosaic: {0}")]
    Mosaic(#[from] MosaicError),
    #[error("registration: {0}")]
    Registration(#[from] RegistrationError),
    #[error("registration did not converge within {0} iterations")]
    NotConverged(usize),
    #[error("integrity: {0}")]
    Integrity(#[from] IntegrityError),
    #[error("synth: {0}")]
    Synth(#[from] SynthError),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Io { .. } | PipelineError::Synth(SynthError::Io(_)) => exit::IO,
            PipelineError::Model(ModelError::Io { .. }) => exit::USAGE,
            PipelineError::Registration(e) | PipelineError::Integrity(IntegrityError::Registration(e)) => match e {
                RegistrationError::Conditioning { .. } | RegistrationError::TooFewPatches { .. } => exit::CONDITIONING,
                RegistrationError::Diverged(_)
                | RegistrationError::OutsideCaptureBasin { .. }
                | RegistrationError::Coverage { .. } => exit::DIVERGENCE,
                _ => exit::USAGE,
            },
            PipelineError::NotConverged(_) => exit::DIVERGENCE,
            _ => exit::USAGE,
        }
    }
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Io { path: path.display().to_string(), message: e.to_string() }
}

fn read_file(path: &Path) -> Result<Vec<u8>, PipelineError> {
    if !path.exists() {
        return Err(PipelineError::Usage(format!("{} does not exist", path.display())));
    }
    std::fs::read(path).map_err(|e| io_error(path, e))
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| io_error(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| io_error(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    write_file(path, to_json_string(value).map_err(|e| io_error(path, e))?)
}

// ---------------------------------------------------------------------------
// Configuration

/// Everything one run needs. Relative paths are resolved against the
/// directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model_dir: PathBuf,
    pub image_dir: PathBuf,
    pub satellite: PathBuf,
    pub rois: PathBuf,
    /// Satellite meters per pixel.
    pub pitch: f64,
    /// Initial G-to-S similarity.
    pub initial_alpha: Option<SimilarityTransform2D>,
    /// Mosaic grid step in G units; `1 / s` of the initial state when absent.
    pub step: Option<f64>,
    pub registration: RegistrationConfig,
    pub integrity: IntegrityConfig,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model_dir: "model".into(),
            image_dir: "views".into(),
            satellite: "map.pgm".into(),
            rois: "rois.json".into(),
            pitch: 0.0,
            initial_alpha: None,
            step: None,
            registration: RegistrationConfig::default(),
            integrity: IntegrityConfig::default(),
            output_dir: "out".into(),
            seed: 0,
        }
    }
}

/// Apply `key=value` overrides to a JSON document. Keys are dotted paths;
/// values are parsed as JSON and fall back to plain strings.
pub fn apply_overrides(doc: &mut Value, overrides: &[String]) -> Result<(), PipelineError> {
    for item in overrides {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| PipelineError::Usage(format!("--set expects key=value, got '{item}'")))?;
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut node = &mut *doc;
        let parts: Vec<&str> = key.split('.').collect();
        if parts.iter().any(|p| p.is_empty()) {
            return Err(PipelineError::Usage(format!("--set: malformed key '{key}'")));
        }
        for (k, part) in parts.iter().enumerate() {
            if node.is_null() {
                *node = Value::Object(Default::default());
            }
            let map = node
                .as_object_mut()
                .ok_or_else(|| PipelineError::Usage(format!("--set: '{key}' does not name an object field")))?;
            if k + 1 == parts.len() {
                map.insert(part.to_string(), value.clone());
                break;
            }
            node = map.entry(part.to_string()).or_insert(Value::Null);
        }
    }
    Ok(())
}

impl RunConfig {
    /// Parse a config document, apply overrides and resolve relative paths
    /// against `base`.
    pub fn from_json(bytes: &[u8], overrides: &[String], base: &Path) -> Result<Self, PipelineError> {
        let mut doc: Value =
            serde_json::from_slice(bytes).map_err(|e| PipelineError::Usage(format!("config: {e}")))?;
        apply_overrides(&mut doc, overrides)?;
        let mut config: Self =
            serde_json::from_value(doc).map_err(|e| PipelineError::Usage(format!("config: {e}")))?;
        for path in [
            &mut config.model_dir,
            &mut config.image_dir,
            &mut config.satellite,
            &mut config.rois,
            &mut config.output_dir,
        ] {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, PipelineError> {
        let bytes = read_file(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_json(&bytes, overrides, base)
    }

    /// Numeric range checks.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let mut problems = Vec::new();
        if !(self.pitch.is_finite() && self.pitch > 0.0) {
            problems.push(format!("pitch must be positive, got {}", self.pitch));
        }
        let w = &self.registration.window;
        if w.columns() < 5 || w.rows() < 5 {
            problems.push(format!("registration.window must span at least 5x5 shifts, got {}x{}", w.columns(), w.rows()));
        }
        let r = &self.registration;
        if !(r.coverage_floor > 0.0 && r.coverage_floor <= 1.0) {
            problems.push("registration.coverage_floor must lie in (0, 1]".into());
        }
        if r.max_iterations == 0 {
            problems.push("registration.max_iterations must be at least 1".into());
        }
        if !(r.max_condition > 1.0) {
            problems.push("registration.max_condition must exceed 1".into());
        }
        let i = &self.integrity;
        if !(i.near_tolerance > 0.0 && i.near_tolerance < 1.0) {
            problems.push("integrity.near_tolerance must lie in (0, 1)".into());
        }
        if !(i.flatness_threshold > 0.0 && i.flatness_threshold < 1.0) {
            problems.push("integrity.flatness_threshold must lie in (0, 1)".into());
        }
        if !(i.curvature_ratio > 0.0 && i.curvature_ratio < 1.0) {
            problems.push("integrity.curvature_ratio must lie in (0, 1)".into());
        }
        if i.scan_half_width < 2 {
            problems.push("integrity.scan_half_width must be at least 2".into());
        }
        if let Some(step) = self.step {
            if !(step.is_finite() && step > 0.0) {
                problems.push("step must be positive".into());
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(PipelineError::Usage(format!("invalid config:\n  - {}", problems.join("\n  - "))))
        }
    }

    fn require(&self, paths: &[(&str, &Path)]) -> Result<(), PipelineError> {
        let missing: Vec<String> = paths
            .iter()
            .filter(|(_, p)| !p.exists())
            .map(|(name, p)| format!("{name} {} does not exist", p.display()))
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(PipelineError::Usage(missing.join("; ")))
        }
    }

    fn initial_alpha(&self) -> Result<SimilarityTransform2D, PipelineError> {
        self.initial_alpha
            .ok_or_else(|| PipelineError::Usage("initial_alpha is required for registration".into()))
    }

    fn grid_step(&self) -> Result<f64, PipelineError> {
        Ok(self.step.unwrap_or(1.0 / self.initial_alpha()?.s()))
    }

    /// Config for a synthetic scene directory, with paths relative to it.
    /// The initial state is the true transform perturbed within
    /// (2% scale, 2 degrees, 3 pixels).
    pub fn for_scene(scene: &SyntheticScene) -> Self {
        Self {
            pitch: scene.spec.pitch,
            initial_alpha: Some(perturb_alpha(&scene.truth.alpha, scene.spec.seed, 0.02, 2.0, 3.0)),
            seed: scene.spec.seed,
            ..Self::default()
        }
    }
}

// ---------------------------------------------------------------------------
// Ground plane

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneSelection {
    /// `"rois"` when the plane was fitted to points seen inside the rois,
    /// `"all"` when every scene point was used.
    pub source: String,
    pub points_used: usize,
    pub points_total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Planarity {
    pub rms_out_of_plane: f64,
    pub max_out_of_plane: f64,
    /// Smallest singular value over the largest.
    pub relative_smallest_singular: f64,
    /// Points within the membership threshold.
    pub members: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneReport {
    pub plane: GroundPlane,
    pub selection: PlaneSelection,
    pub planarity: Planarity,
}

fn roi_point_ids(model: &ReconstructionModel, rois: &RoiConfig) -> BTreeSet<u64> {
    let mut ids = BTreeSet::new();
    for roi in &rois.rois {
        let Some(image) = model.image_by_name(&roi.image) else { continue };
        for obs in &image.observations {
            if let Some(id) = obs.point_id {
                if polygon_contains(&roi.vertices, obs.xy[0], obs.xy[1]) {
                    ids.insert(id);
                }
            }
        }
    }
    ids
}

/// Fit the ground plane to the points observed inside the rois, falling back
/// to every scene point when those are too few or collinear. The normal
/// points from the cameras toward the ground and `e1` follows the first
/// image's optical axis.
pub fn plane_from_model(
    model: &ReconstructionModel,
    rois: Option<&RoiConfig>,
) -> Result<(GroundPlane, PlaneSelection), GeometryError> {
    let all: Vec<Vector3<f64>> = model.points.values().map(|p| p.position_vector()).collect();
    let selected: Vec<Vector3<f64>> = match rois {
        Some(r) => {
            let ids = roi_point_ids(model, r);
            ids.iter().filter_map(|id| model.points.get(id)).map(|p| p.position_vector()).collect()
        }
        None => Vec::new(),
    };
    let (fit, source, used) = match fit_plane_svd(&selected) {
        Ok(plane) if rois.is_some() => (plane, "rois", selected.len()),
        _ => (fit_plane_svd(&all)?, "all", all.len()),
    };
    let centers: Vec<Vector3<f64>> = model.images.values().map(|i| i.center()).collect();
    let axis = model.images.values().next().map(|i| i.optical_axis());
    let plane = fit.oriented(&centers, axis.as_ref());
    Ok((
        plane,
        PlaneSelection { source: source.into(), points_used: used, points_total: all.len() },
    ))
}

pub fn plane_report(model: &ReconstructionModel, rois: Option<&RoiConfig>) -> Result<PlaneReport, GeometryError> {
    let (plane, selection) = plane_from_model(model, rois)?;
    let distances: Vec<f64> = model.points.values().map(|p| plane.out_of_plane(&p.position_vector()).abs()).collect();
    let n = distances.len().max(1) as f64;
    let sv = plane.singular_values();
    Ok(PlaneReport {
        planarity: Planarity {
            rms_out_of_plane: (distances.iter().map(|d| d * d).sum::<f64>() / n).sqrt(),
            max_out_of_plane: distances.iter().cloned().fold(0.0, f64::max),
            relative_smallest_singular: if sv[0] > 0.0 { sv[2] / sv[0] } else { 0.0 },
            members: model.points.values().filter(|p| plane.is_member(&p.position_vector())).count(),
        },
        plane,
        selection,
    })
}

// ---------------------------------------------------------------------------
// Inputs and stages

/// Loaded inputs of a run.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub model: ReconstructionModel,
    pub images: BTreeMap<String, Raster>,
    pub rois: RoiConfig,
    pub satellite: Raster,
}

fn load_raster(path: &Path) -> Result<Raster, PipelineError> {
    load_pixmap(&read_file(path)?).map_err(|e| PipelineError::Usage(format!("{}: {e}", path.display())))
}

fn load_model(config: &RunConfig) -> Result<ReconstructionModel, PipelineError> {
    config.require(&[("model_dir", &config.model_dir)])?;
    for file in ["cameras.txt", "images.txt", "points3D.txt"] {
        config.require(&[("model file", &config.model_dir.join(file))])?;
    }
    Ok(read_model_dir(&config.model_dir)?.0)
}

fn load_rois(config: &RunConfig) -> Result<RoiConfig, PipelineError> {
    Ok(parse_roi_config(&read_file(&config.rois)?)?)
}

pub fn load_inputs(config: &RunConfig) -> Result<Inputs, PipelineError> {
    config.require(&[
        ("model_dir", &config.model_dir),
        ("image_dir", &config.image_dir),
        ("satellite", &config.satellite),
        ("rois", &config.rois),
    ])?;
    let model = load_model(config)?;
    let rois = load_rois(config)?;
    let mut images = BTreeMap::new();
    for roi in &rois.rois {
        if !images.contains_key(&roi.image) {
            images.insert(roi.image.clone(), load_raster(&config.image_dir.join(&roi.image))?);
        }
    }
    let satellite = load_raster(&config.satellite)?;
    let satellite = if satellite.channels() == 1 { satellite } else { to_grayscale(&satellite)? };
    Ok(Inputs { model, images, rois, satellite })
}

/// Render every roi of the inputs onto `plane`.
pub fn mosaic_stage(inputs: &Inputs, plane: &GroundPlane, step: f64) -> Result<Mosaic, MosaicError> {
    build_mosaic(&inputs.model, &inputs.images, &inputs.rois.rois, &inputs.rois.labels(), plane, step)
}

/// Split mosaic patches into the registered set and the extras.
pub fn split_extras(mosaic: &Mosaic, rois: &RoiConfig) -> (Vec<crate::mosaic::PatchRaster>, Vec<crate::mosaic::PatchRaster>) {
    let mut registered = Vec::new();
    let mut extras = Vec::new();
    for (patch, roi) in mosaic.patches.iter().zip(&rois.rois) {
        if roi.extra {
            extras.push(patch.clone());
        } else {
            registered.push(patch.clone());
        }
    }
    (registered, extras)
}

/// Integrity artifacts computed from a finished registration.
#[derive(Debug, Clone)]
pub struct Diagnosis {
    pub interpatch: Vec<InterpatchError>,
    pub notes: Vec<String>,
    pub trend: Option<DriftTrend>,
    pub extras: Vec<PatchFix>,
    /// Per patch: classification, or why none was possible.
    pub classifications: Vec<(String, Result<SurfaceClassification, String>)>,
    pub heatmaps: Vec<(String, Raster)>,
    pub ambiguity: Vec<AmbiguityReport>,
    pub joint: AmbiguityReport,
}

pub fn diagnose_stage(
    registered: &[crate::mosaic::PatchRaster],
    extras: &[crate::mosaic::PatchRaster],
    satellite: &Raster,
    result: &RegistrationResult,
    registration: &RegistrationConfig,
    integrity: &IntegrityConfig,
) -> Result<Diagnosis, PipelineError> {
    let alpha = result.alpha;
    let extra_fixes: Vec<PatchFix> = extras.iter().map(|p| fix_patch(p, satellite, &alpha, registration)).collect();
    let (interpatch, mut notes) = interpatch_errors(&result.patches, &extra_fixes)?;
    let trend = match drift_trend(&interpatch) {
        Ok(t) => Some(t),
        Err(e) => {
            notes.push(format!("no drift trend: {e}"));
            None
        }
    };
    let mut classifications = Vec::new();
    let mut heatmaps = Vec::new();
    for patch in registered.iter().chain(extras) {
        let label = patch.label().to_string();
        match compute_ssd_surface(patch, satellite, &alpha, registration.window, registration.coverage_floor) {
            Ok(surface) => {
                heatmaps.push((label.clone(), surface_heatmap(&surface).map_err(MosaicError::from)?));
                classifications.push((label, classify_surface(&surface, integrity).map_err(|e| e.to_string())));
            }
            Err(e) => classifications.push((label, Err(e.to_string()))),
        }
    }
    let (ambiguity, joint, _) = mosaic_ambiguity(registered, satellite, &alpha, integrity)?;
    Ok(Diagnosis { interpatch, notes, trend, extras: extra_fixes, classifications, heatmaps, ambiguity, joint })
}

// ---------------------------------------------------------------------------
// Commands

/// `plane`: fit and write `plane.json`.
pub fn run_plane(config: &RunConfig) -> Result<PlaneReport, PipelineError> {
    let model = load_model(config)?;
    let rois = if config.rois.exists() { Some(load_rois(config)?) } else { None };
    let report = plane_report(&model, rois.as_ref())?;
    write_json(&config.output_dir.join("plane.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegisterReport {
    pub plane: GroundPlane,
    pub step: f64,
    pub pitch: f64,
    /// RMS residual over patches with an SSD optimum, satellite pixels.
    pub residual_rms_px: f64,
    pub residual_rms_m: f64,
    pub registration: RegistrationResult,
}

fn residual_csv(result: &RegistrationResult, pitch: f64) -> Result<String, PipelineError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| PipelineError::Usage(format!("csv: {e}"));
    writer
        .write_record(["label", "centroid_p", "centroid_q", "residual_p", "residual_q", "residual_px", "residual_m", "note"])
        .map_err(csv_err)?;
    for p in &result.patches {
        let (rp, rq, r) = match p.residual {
            Some([a, b]) => (fmt_sig(a), fmt_sig(b), Some((a * a + b * b).sqrt())),
            None => (String::new(), String::new(), None),
        };
        writer
            .write_record([
                p.label.clone(),
                fmt_sig(p.estimated[0]),
                fmt_sig(p.estimated[1]),
                rp,
                rq,
                r.map(fmt_sig).unwrap_or_default(),
                r.map(|r| fmt_sig(r * pitch)).unwrap_or_default(),
                p.note.clone().unwrap_or_default(),
            ])
            .map_err(csv_err)?;
    }
    String::from_utf8(writer.into_inner().map_err(|e| PipelineError::Usage(e.to_string()))?)
        .map_err(|e| PipelineError::Usage(e.to_string()))
}

fn write_registration(
    config: &RunConfig,
    plane: &GroundPlane,
    step: f64,
    registered: &[crate::mosaic::PatchRaster],
    satellite: &Raster,
    result: &RegistrationResult,
) -> Result<RegisterReport, PipelineError> {
    let residuals = result.residuals();
    let rms = if residuals.is_empty() {
        0.0
    } else {
        (residuals.iter().map(|(_, r)| r.norm_squared()).sum::<f64>() / residuals.len() as f64).sqrt()
    };
    let report = RegisterReport {
        plane: plane.clone(),
        step,
        pitch: config.pitch,
        residual_rms_px: rms,
        residual_rms_m: rms * config.pitch,
        registration: result.clone(),
    };
    let out = &config.output_dir;
    write_json(&out.join("report.json"), &report)?;
    write_file(&out.join("residuals.csv"), residual_csv(result, config.pitch)?)?;
    let overlay = render_overlay(satellite, registered, &result.alpha).map_err(MosaicError::from)?;
    write_file(&out.join("overlay.ppm"), save_pixmap(&overlay))?;
    Ok(report)
}

/// `register`: build the mosaic, register it and write `report.json`,
/// `residuals.csv` and `overlay.ppm`. A diverged or unconverged run still
/// writes its report before failing.
pub fn run_register(config: &RunConfig) -> Result<RegisterReport, PipelineError> {
    let inputs = load_inputs(config)?;
    let alpha0 = config.initial_alpha()?;
    let step = config.grid_step()?;
    let (plane, _) = plane_from_model(&inputs.model, Some(&inputs.rois))?;
    let mosaic = mosaic_stage(&inputs, &plane, step)?;
    let (registered, _) = split_extras(&mosaic, &inputs.rois);
    match register(&registered, &inputs.satellite, &alpha0, &config.registration) {
        Ok(result) => {
            let report = write_registration(config, &plane, step, &registered, &inputs.satellite, &result)?;
            if result.converged {
                Ok(report)
            } else {
                Err(PipelineError::NotConverged(result.iterations))
            }
        }
        Err(RegistrationError::Diverged(result)) => {
            write_registration(config, &plane, step, &registered, &inputs.satellite, &result)?;
            Err(RegistrationError::Diverged(result).into())
        }
        Err(e) => Err(e.into()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ClassificationEntry {
    label: String,
    classification: Option<SurfaceClassification>,
    error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct AmbiguityDocument {
    patches: Vec<AmbiguityReport>,
    mosaic: AmbiguityReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TrendDocument {
    trend: Option<DriftTrend>,
    notes: Vec<String>,
    extras: Vec<PatchFix>,
}

/// File-name-safe form of a patch label.
fn file_stem(label: &str) -> String {
    label.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

/// `diagnose`: read `report.json` from the output directory and write the
/// interpatch table, drift trend, surface classes, ambiguity reports and
/// SSD heatmaps.
pub fn run_diagnose(config: &RunConfig) -> Result<Diagnosis, PipelineError> {
    let report_path = config.output_dir.join("report.json");
    if !report_path.exists() {
        return Err(PipelineError::Usage(format!(
            "{} not found; run `register` first",
            report_path.display()
        )));
    }
    let report: RegisterReport = serde_json::from_slice(&read_file(&report_path)?)
        .map_err(|e| PipelineError::Usage(format!("{}: {e}", report_path.display())))?;
    let inputs = load_inputs(config)?;
    let mosaic = mosaic_stage(&inputs, &report.plane, report.step)?;
    let (registered, extras) = split_extras(&mosaic, &inputs.rois);
    let d = diagnose_stage(
        &registered,
        &extras,
        &inputs.satellite,
        &report.registration,
        &config.registration,
        &config.integrity,
    )?;
    let out = &config.output_dir;
    write_file(&out.join("interpatch.csv"), interpatch_csv(&d.interpatch)?)?;
    write_json(
        &out.join("trend.json"),
        &TrendDocument { trend: d.trend.clone(), notes: d.notes.clone(), extras: d.extras.clone() },
    )?;
    let entries: Vec<ClassificationEntry> = d
        .classifications
        .iter()
        .map(|(label, c)| ClassificationEntry {
            label: label.clone(),
            classification: c.as_ref().ok().cloned(),
            error: c.as_ref().err().cloned(),
        })
        .collect();
    write_json(&out.join("classifications.json"), &entries)?;
    write_json(
        &out.join("ambiguity.json"),
        &AmbiguityDocument { patches: d.ambiguity.clone(), mosaic: d.joint.clone() },
    )?;
    for (label, map) in &d.heatmaps {
        write_file(&out.join("heatmaps").join(format!("{}.pgm", file_stem(label))), save_pixmap(map))?;
    }
    Ok(d)
}

/// `synth`: render a scene and write its directory.
pub fn run_synth(spec: &SceneSpec, out: &Path) -> Result<SyntheticScene, PipelineError> {
    let scene = render_ground_views(spec)?;
    write_scene(&scene, out)?;
    Ok(scene)
}

/// Parse a scene spec document with overrides. Without a document the
/// default scene for `seed` is used; `seed` also replaces the spec's seed.
pub fn load_scene_spec(
    bytes: Option<&[u8]>,
    overrides: &[String],
    seed: Option<u64>,
) -> Result<SceneSpec, PipelineError> {
    let mut doc = match bytes {
        Some(b) => serde_json::from_slice(b).map_err(|e| PipelineError::Usage(format!("spec: {e}")))?,
        None => serde_json::to_value(crate::synth::default_scene(seed.unwrap_or(DEFAULT_SEED)))
            .map_err(|e| PipelineError::Usage(e.to_string()))?,
    };
    apply_overrides(&mut doc, overrides)?;
    let mut spec: SceneSpec =
        serde_json::from_value(doc).map_err(|e| PipelineError::Usage(format!("spec: {e}")))?;
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    spec.validate()?;
    Ok(spec)
}

/// Seed of the default synthetic scene.
pub const DEFAULT_SEED: u64 = 7;

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn overrides_set_nested_fields() {
        let mut doc = json!({"pitch": 0.1, "registration": {"max_iterations": 25}});
        apply_overrides(
            &mut doc,
            &["registration.max_iterations=7".into(), "satellite=sat.pgm".into(), "integrity.linkage=2.5".into()],
        )
        .unwrap();
        assert_eq!(doc["registration"]["max_iterations"], 7);
        assert_eq!(doc["satellite"], "sat.pgm");
        assert_eq!(doc["integrity"]["linkage"], 2.5);
        assert!(apply_overrides(&mut doc, &["novalue".into()]).is_err());
        assert!(apply_overrides(&mut doc, &["pitch.x=1".into()]).is_err());
    }

    #[test]
    fn config_resolves_paths_and_checks_ranges() {
        let text = br#"{"pitch": 0.1, "model_dir": "m", "output_dir": "/abs/out"}"#;
        let c = RunConfig::from_json(text, &[], Path::new("/base")).unwrap();
        assert_eq!(c.model_dir, Path::new("/base/m"));
        assert_eq!(c.satellite, Path::new("/base/map.pgm"));
        assert_eq!(c.output_dir, Path::new("/abs/out"));
        let err = RunConfig::from_json(br#"{"pitch": -1}"#, &[], Path::new(".")).unwrap_err();
        assert_eq!(err.exit_code(), exit::USAGE);
        let err = RunConfig::from_json(br#"{"pitch": 1, "bogus": 3}"#, &[], Path::new(".")).unwrap_err();
        assert_eq!(err.exit_code(), exit::USAGE);
        let small = br#"{"pitch": 1, "registration": {"window": {"u_min": -1, "u_max": 1, "v_min": -1, "v_max": 1}}}"#;
        assert!(RunConfig::from_json(small, &[], Path::new(".")).is_err());
    }

    #[test]
    fn exit_codes_follow_the_contract() {
        assert_eq!(PipelineError::Usage("x".into()).exit_code(), 2);
        assert_eq!(PipelineError::NotConverged(25).exit_code(), 3);
        assert_eq!(PipelineError::from(RegistrationError::Conditioning { condition: 1e20 }).exit_code(), 4);
        assert_eq!(PipelineError::Io { path: "p".into(), message: "m".into() }.exit_code(), 5);
    }
}
