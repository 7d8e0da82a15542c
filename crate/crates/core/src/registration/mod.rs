//! SSD registration of a mosaic to the satellite map and iterative
//! least-squares refinement of the similarity state.

mod overlay;
mod ssd;

pub use overlay::render_overlay;
pub use ssd::{compute_ssd_surface, ShiftWindow, SsdSurface};

use nalgebra::{DMatrix, DVector, Matrix2x4, Vector2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GeometryError, SimilarityTransform2D};
use crate::mosaic::PatchRaster;
use crate::raster::Raster;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegistrationError {
    #[error("satellite map must be single-channel, got {0} channels")]
    SatelliteChannels(usize),
    #[error("shift window {0:?} does not contain (0, 0)")]
    Window(ShiftWindow),
    #[error("patch '{label}': fewer than the required share of pixels are comparable at every shift")]
    Coverage { label: String },
    #[error("patch '{label}': SSD minimum on the window boundary after growth; initial guess outside the capture basin")]
    OutsideCaptureBasin { label: String },
    #[error("need at least 2 usable patches, got {usable}")]
    TooFewPatches { usable: usize },
    #[error("normal equations are ill-conditioned (condition number {condition:e}); scale and rotation are unobservable from these patch centroids")]
    Conditioning { condition: f64 },
    #[error("registration diverged after {} iterations", .0.iterations)]
    Diverged(Box<RegistrationResult>),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegistrationConfig {
    pub window: ShiftWindow,
    /// Double the window once when the minimum lands on its boundary.
    pub grow_window: bool,
    /// Share of patch pixels that must be comparable for a shift to count.
    pub coverage_floor: f64,
    pub max_iterations: usize,
    pub scale_tolerance: f64,
    pub theta_tolerance: f64,
    pub translation_tolerance: f64,
    pub max_condition: f64,
    /// Refine each argmin with a 3-point parabola per axis.
    pub subpixel: bool,
    /// Consecutive increases of the measurement norm that count as divergence.
    pub divergence_patience: usize,
    /// Increases smaller than this (pixels RMS) are ignored.
    pub divergence_slack: f64,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self {
            window: ShiftWindow::default(),
            grow_window: true,
            coverage_floor: 0.5,
            max_iterations: 25,
            scale_tolerance: 1e-4,
            theta_tolerance: 1e-4,
            translation_tolerance: 0.25,
            max_condition: 1e8,
            subpixel: false,
            divergence_patience: 3,
            divergence_slack: 0.05,
        }
    }
}

/// Jacobian of the translation-augmented similarity at `x` with respect to
/// `[s, theta, t_p, t_q]`.
pub fn jacobian_block(x: &Vector2<f64>, alpha: &SimilarityTransform2D) -> Matrix2x4<f64> {
    alpha.jacobian(x)
}

/// SSD surface of one patch, with one window growth when the minimum sits on
/// the boundary.
pub fn locate_patch(
    patch: &PatchRaster,
    satellite: &Raster,
    alpha: &SimilarityTransform2D,
    config: &RegistrationConfig,
) -> Result<SsdSurface, RegistrationError> {
    let surface = compute_ssd_surface(patch, satellite, alpha, config.window, config.coverage_floor)?;
    if !surface.argmin_on_boundary() {
        return Ok(surface);
    }
    if config.grow_window {
        let grown = compute_ssd_surface(patch, satellite, alpha, config.window.grown(), config.coverage_floor)?;
        if !grown.argmin_on_boundary() {
            return Ok(grown);
        }
    }
    Err(RegistrationError::OutsideCaptureBasin {
        label: patch.label().to_string(),
    })
}

/// Locate one patch at a fixed state, without updating the state. Failures
/// are recorded in the fix's note.
pub fn fix_patch(
    patch: &PatchRaster,
    satellite: &Raster,
    alpha: &SimilarityTransform2D,
    config: &RegistrationConfig,
) -> PatchFix {
    PatchFix::new(patch, alpha, &locate_patch(patch, satellite, alpha, config), config.subpixel)
}

/// Correction that moves a patch centroid to its SSD-optimal location.
fn measurement(surface: &SsdSurface, subpixel: bool) -> Vector2<f64> {
    let (u, v) = surface.argmin;
    let (du, dv) = if subpixel { surface.subpixel_offset() } else { (0.0, 0.0) };
    Vector2::new(u as f64 + du, v as f64 + dv)
}

/// Per-patch outcome of one SSD search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchFix {
    pub label: String,
    pub centroid_g: [f64; 2],
    /// Centroid placed by the current state.
    pub estimated: [f64; 2],
    /// SSD-optimal centroid location.
    pub optimal: Option<[f64; 2]>,
    /// `optimal - estimated`.
    pub residual: Option<[f64; 2]>,
    pub argmin: Option<(i32, i32)>,
    pub ssd_min: Option<f64>,
    /// SSD at zero shift, if that shift was comparable.
    pub ssd_at_zero: Option<f64>,
    /// Why the patch was left out, if it was.
    pub note: Option<String>,
}

impl PatchFix {
    fn new(
        patch: &PatchRaster,
        alpha: &SimilarityTransform2D,
        surface: &Result<SsdSurface, RegistrationError>,
        subpixel: bool,
    ) -> Self {
        let centroid = patch.centroid();
        let estimated = alpha.apply(&centroid);
        let mut fix = Self {
            label: patch.label().to_string(),
            centroid_g: centroid.into(),
            estimated: estimated.into(),
            optimal: None,
            residual: None,
            argmin: None,
            ssd_min: None,
            ssd_at_zero: None,
            note: None,
        };
        match surface {
            Ok(s) => {
                let r = measurement(s, subpixel);
                fix.optimal = Some((estimated + r).into());
                fix.residual = Some(r.into());
                fix.argmin = Some(s.argmin);
                fix.ssd_min = Some(s.min_value);
                fix.ssd_at_zero = s.value(0, 0);
            }
            Err(e) => fix.note = Some(e.to_string()),
        }
        fix
    }

    pub fn residual_vector(&self) -> Option<Vector2<f64>> {
        self.residual.map(Vector2::from)
    }

    pub fn optimal_vector(&self) -> Option<Vector2<f64>> {
        self.optimal.map(Vector2::from)
    }

    pub fn estimated_vector(&self) -> Vector2<f64> {
        Vector2::from(self.estimated)
    }
}

/// Result of one linearized update.
#[derive(Debug, Clone, PartialEq)]
pub struct RefineStep {
    pub delta: [f64; 4],
    pub fixes: Vec<PatchFix>,
    pub surfaces: Vec<Option<SsdSurface>>,
    /// RMS of the stacked measurements, pixels.
    pub measurement_rms: f64,
    pub condition_number: f64,
}

/// Condition number of `H^T H` after scaling every column of `H` to unit
/// norm, so that it reflects geometry rather than the units of the state.
pub fn equilibrated_condition(h: &DMatrix<f64>) -> f64 {
    let mut scaled = h.clone();
    for mut column in scaled.column_iter_mut() {
        let norm = column.norm();
        if norm == 0.0 {
            return f64::INFINITY;
        }
        column /= norm;
    }
    let sv = scaled.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        (max / min).powi(2)
    }
}

/// Solve the stacked least-squares problem `H delta = dy` for patches with
/// usable measurements.
pub fn solve_update(
    centroids: &[Vector2<f64>],
    measurements: &[Vector2<f64>],
    alpha: &SimilarityTransform2D,
    max_condition: f64,
) -> Result<([f64; 4], f64), RegistrationError> {
    let n = centroids.len();
    if n < 2 {
        return Err(RegistrationError::TooFewPatches { usable: n });
    }
    let mut h = DMatrix::zeros(2 * n, 4);
    let mut dy = DVector::zeros(2 * n);
    for (k, (x, m)) in centroids.iter().zip(measurements).enumerate() {
        h.view_mut((2 * k, 0), (2, 4)).copy_from(&jacobian_block(x, alpha));
        dy[2 * k] = m.x;
        dy[2 * k + 1] = m.y;
    }
    let condition = equilibrated_condition(&h);
    if !(condition <= max_condition) {
        return Err(RegistrationError::Conditioning { condition });
    }
    let delta = h
        .svd(true, true)
        .solve(&dy, 0.0)
        .map_err(|_| RegistrationError::Conditioning { condition })?;
    Ok(([delta[0], delta[1], delta[2], delta[3]], condition))
}

/// One SSD search over all patches followed by the least-squares update.
pub fn refine_step(
    patches: &[PatchRaster],
    satellite: &Raster,
    alpha: &SimilarityTransform2D,
    config: &RegistrationConfig,
) -> Result<RefineStep, RegistrationError> {
    if satellite.channels() != 1 {
        return Err(RegistrationError::SatelliteChannels(satellite.channels()));
    }
    let results: Vec<Result<SsdSurface, RegistrationError>> = patches
        .par_iter()
        .map(|p| locate_patch(p, satellite, alpha, config))
        .collect();
    let fixes: Vec<PatchFix> = patches
        .iter()
        .zip(&results)
        .map(|(p, r)| PatchFix::new(p, alpha, r, config.subpixel))
        .collect();
    let mut centroids = Vec::new();
    let mut measurements = Vec::new();
    for (patch, result) in patches.iter().zip(&results) {
        if let Ok(s) = result {
            centroids.push(patch.centroid());
            measurements.push(measurement(s, config.subpixel));
        }
    }
    let (delta, condition_number) = solve_update(&centroids, &measurements, alpha, config.max_condition)?;
    let measurement_rms =
        (measurements.iter().map(|m| m.norm_squared()).sum::<f64>() / measurements.len() as f64).sqrt();
    Ok(RefineStep {
        delta,
        fixes,
        surfaces: results.into_iter().map(Result::ok).collect(),
        measurement_rms,
        condition_number,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub alpha: SimilarityTransform2D,
    pub delta: [f64; 4],
    pub measurement_rms: f64,
    /// Sum of per-patch SSD minima.
    pub total_ssd: f64,
    /// Sum of per-patch SSD at zero shift (the placement under `alpha`).
    pub total_ssd_at_zero: f64,
    pub condition_number: f64,
    pub argmins: Vec<Option<(i32, i32)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationResult {
    pub alpha0: SimilarityTransform2D,
    pub alpha: SimilarityTransform2D,
    pub iterations: usize,
    pub converged: bool,
    pub diverged: bool,
    pub condition_number: f64,
    pub history: Vec<IterationRecord>,
    /// Final per-patch fixes; residuals are `optimal - estimated` at `alpha`.
    pub patches: Vec<PatchFix>,
    #[serde(skip)]
    pub surfaces: Vec<Option<SsdSurface>>,
}

impl RegistrationResult {
    /// Residuals of patches with a valid SSD optimum.
    pub fn residuals(&self) -> Vec<(String, Vector2<f64>)> {
        self.patches
            .iter()
            .filter_map(|p| p.residual_vector().map(|r| (p.label.clone(), r)))
            .collect()
    }
}

fn small_update(delta: &[f64; 4], alpha: &SimilarityTransform2D, config: &RegistrationConfig) -> bool {
    (delta[0] / alpha.s()).abs() < config.scale_tolerance
        && delta[1].abs() < config.theta_tolerance
        && delta[2].abs() < config.translation_tolerance
        && delta[3].abs() < config.translation_tolerance
}

/// Iterate [`refine_step`] from `alpha0` until the SSD optima stop moving.
///
/// Convergence is declared when every argmin is the zero shift or when the
/// update falls below the configured tolerances; the state of that final
/// step is kept, so reported residuals belong to the returned `alpha`.
/// Reaching the iteration limit returns a result with `converged = false`.
pub fn register(
    patches: &[PatchRaster],
    satellite: &Raster,
    alpha0: &SimilarityTransform2D,
    config: &RegistrationConfig,
) -> Result<RegistrationResult, RegistrationError> {
    let mut alpha = *alpha0;
    let mut history = Vec::new();
    let mut previous_rms = f64::INFINITY;
    let mut increases = 0usize;
    let mut result = RegistrationResult {
        alpha0: *alpha0,
        alpha,
        iterations: 0,
        converged: false,
        diverged: false,
        condition_number: f64::NAN,
        history: Vec::new(),
        patches: Vec::new(),
        surfaces: Vec::new(),
    };
    for iteration in 1..=config.max_iterations.max(1) {
        let step = refine_step(patches, satellite, &alpha, config)?;
        let stationary = step
            .fixes
            .iter()
            .filter_map(|f| f.residual)
            .all(|r| r == [0.0, 0.0]);
        let converged = stationary || small_update(&step.delta, &alpha, config);
        history.push(IterationRecord {
            iteration,
            alpha,
            delta: step.delta,
            measurement_rms: step.measurement_rms,
            total_ssd: step.fixes.iter().filter_map(|f| f.ssd_min).sum(),
            total_ssd_at_zero: step.fixes.iter().filter_map(|f| f.ssd_at_zero).sum(),
            condition_number: step.condition_number,
            argmins: step.fixes.iter().map(|f| f.argmin).collect(),
        });
        result.alpha = alpha;
        result.iterations = iteration;
        result.condition_number = step.condition_number;
        result.patches = step.fixes;
        result.surfaces = step.surfaces;
        if converged {
            result.converged = true;
            break;
        }
        if step.measurement_rms > previous_rms + config.divergence_slack {
            increases += 1;
        } else {
            increases = 0;
        }
        previous_rms = step.measurement_rms;
        if increases >= config.divergence_patience {
            result.diverged = true;
            result.history = history;
            return Err(RegistrationError::Diverged(Box::new(result)));
        }
        alpha = alpha.updated(&step.delta)?;
    }
    result.history = history;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn state() -> impl Strategy<Value = SimilarityTransform2D> {
        (0.2f64..5.0, -3.1f64..3.1, -200.0f64..200.0, -200.0f64..200.0)
            .prop_map(|(s, th, p, q)| SimilarityTransform2D::new(s, th, p, q).unwrap())
    }

    #[test]
    fn zero_measurements_give_zero_update() {
        let centroids = [Vector2::new(0.0, 0.0), Vector2::new(10.0, 3.0), Vector2::new(-4.0, 8.0)];
        let alpha = SimilarityTransform2D::new(2.0, 0.3, 5.0, 5.0).unwrap();
        let (d, _) = solve_update(&centroids, &[Vector2::zeros(); 3], &alpha, 1e8).unwrap();
        assert_eq!(d, [0.0; 4]);
    }

    #[test]
    fn pure_translation_with_two_patches() {
        let centroids = [Vector2::new(-5.0, 1.0), Vector2::new(7.0, 2.0)];
        let alpha = SimilarityTransform2D::new(1.5, 0.2, 0.0, 0.0).unwrap();
        let m = Vector2::new(3.0, -2.0);
        let (d, _) = solve_update(&centroids, &[m, m], &alpha, 1e8).unwrap();
        let expected = [0.0, 0.0, 3.0, -2.0];
        for k in 0..4 {
            assert!((d[k] - expected[k]).abs() < 1e-12, "{d:?}");
        }
    }

    #[test]
    fn coincident_centroids_are_ill_conditioned() {
        let c = Vector2::new(4.0, 2.0);
        let alpha = SimilarityTransform2D::identity();
        let ms = [Vector2::new(1.0, 0.0), Vector2::new(0.0, 1.0), Vector2::new(1.0, 1.0)];
        assert!(matches!(
            solve_update(&[c, c, c], &ms, &alpha, 1e8),
            Err(RegistrationError::Conditioning { .. })
        ));
        assert!(matches!(
            solve_update(&[c], &ms[..1], &alpha, 1e8),
            Err(RegistrationError::TooFewPatches { usable: 1 })
        ));
    }

    #[test]
    fn collinear_centroids_still_determine_a_similarity() {
        // Rotation and scale are observable from any two distinct points.
        let cs = [Vector2::new(-10.0, 0.0), Vector2::new(0.0, 0.0), Vector2::new(10.0, 0.0)];
        let (_, cond) = solve_update(&cs, &[Vector2::zeros(); 3], &SimilarityTransform2D::identity(), 1e8).unwrap();
        assert!(cond.is_finite() && cond < 1e3);
    }

    #[test]
    fn jacobian_examples() {
        let a = SimilarityTransform2D::new(1.0, 0.0, 2.0, 3.0).unwrap();
        assert_eq!(
            jacobian_block(&Vector2::new(1.0, 0.0), &a),
            Matrix2x4::new(1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0)
        );
    }

    proptest! {
        #[test]
        fn jacobian_matches_central_differences(a in state(), x in (-100.0f64..100.0, -100.0f64..100.0)) {
            let x = Vector2::new(x.0, x.1);
            let h = jacobian_block(&x, &a);
            let base = a.to_array();
            for k in 0..4 {
                let step = 1e-6 * base[k].abs().max(1.0);
                let mut plus = base;
                let mut minus = base;
                plus[k] += step;
                minus[k] -= step;
                // The raw map, not the wrapped state, so theta steps stay smooth.
                let eval = |p: [f64; 4]| {
                    let (sin, cos) = p[1].sin_cos();
                    Vector2::new(p[0] * (cos * x.x - sin * x.y) + p[2], p[0] * (sin * x.x + cos * x.y) + p[3])
                };
                let fd = (eval(plus) - eval(minus)) / (2.0 * step);
                for r in 0..2 {
                    let scale = h[(r, k)].abs().max(1.0);
                    prop_assert!((fd[r] - h[(r, k)]).abs() / scale < 1e-6, "entry ({r},{k})");
                }
            }
        }

        #[test]
        fn two_exact_patches_reproduce_the_pair_similarity(
            a in state(),
            x0 in (-50.0f64..50.0, -50.0f64..50.0),
            x1 in (-50.0f64..50.0, -50.0f64..50.0),
            dt in (-2.0f64..2.0, -2.0f64..2.0),
        ) {
            let x0 = Vector2::new(x0.0, x0.1);
            let x1 = Vector2::new(x1.0, x1.1);
            prop_assume!((x1 - x0).norm() > 5.0);
            // Exact targets from a pure translation keep the model linear in the state.
            let m = Vector2::new(dt.0, dt.1);
            let (d, _) = solve_update(&[x0, x1], &[m, m], &a, 1e12).unwrap();
            let updated = a.updated(&d).unwrap();
            let fit = SimilarityTransform2D::from_point_pairs(&x0, &x1, &(a.apply(&x0) + m), &(a.apply(&x1) + m)).unwrap();
            prop_assert!((updated.s() - fit.s()).abs() < 1e-10 * fit.s());
            prop_assert!(crate::geometry::wrap_angle(updated.theta() - fit.theta()).abs() < 1e-10);
            prop_assert!((updated.translation() - fit.translation()).norm() < 1e-10 * (1.0 + fit.translation().norm()));
        }
    }
}
