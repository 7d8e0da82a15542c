use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::render::render_satellite;
use super::scene::DEFAULT_ROI;
use super::spec::{CameraSpec, DriftSpec, IntrinsicsSpec, Marking, SceneRoi, SceneSpec};
use super::SynthError;
use crate::geometry::SimilarityTransform2D;
use crate::mosaic::PatchRaster;
use crate::raster::Raster;

const LAYOUT_STREAM: u64 = 0x6c61_796f;
const PERTURB_STREAM: u64 = 0x7065_7274;

const CAMERA_HEIGHT: f64 = 8.0;
const CAMERA_PITCH_DEG: f64 = 50.0;

/// `count` points evenly spaced on a circle, starting at `phase_deg`.
pub fn pentagon(center: [f64; 2], radius: f64, count: usize, phase_deg: f64) -> Vec<[f64; 2]> {
    (0..count)
        .map(|k| {
            let a = (phase_deg + 360.0 * k as f64 / count as f64).to_radians();
            [center[0] + radius * a.cos(), center[1] + radius * a.sin()]
        })
        .collect()
}

fn cameras_at(targets: &[[f64; 2]], pitch: f64, yaw_deg: f64) -> Vec<CameraSpec> {
    targets
        .iter()
        .map(|&t| CameraSpec::aimed_at(t, pitch, CAMERA_HEIGHT, yaw_deg, CAMERA_PITCH_DEG))
        .collect()
}

/// A few airfield-like markings scattered around `center`.
fn airfield_markings(center: [f64; 2], reach: f64) -> Vec<Marking> {
    let [cx, cy] = center;
    vec![
        Marking::Line { from: [cx - reach, cy - 0.8 * reach], to: [cx + reach, cy - 0.7 * reach], width: 3.0, intensity: 230.0 },
        Marking::Cross { center: [cx, cy], arm: 10.0, width: 3.0, angle_deg: 15.0, intensity: 235.0 },
        Marking::Disk { center: [cx - 0.6 * reach, cy + 0.6 * reach], radius: 6.0, intensity: 40.0 },
        Marking::Block { center: [cx + 0.6 * reach, cy + 0.6 * reach], size: [20.0, 10.0], angle_deg: 30.0, intensity: 220.0 },
    ]
}

/// Textured 512 x 512 map seen by five cameras whose view centers sit on a
/// pentagon of radius 120 pixels. Zero drift, random model frame.
pub fn default_scene(seed: u64) -> SceneSpec {
    let pitch = 0.1;
    let center = [256.0, 256.0];
    let yaw = ChaCha8Rng::seed_from_u64(seed ^ LAYOUT_STREAM).random_range(0.0..360.0);
    SceneSpec {
        map_width: 512,
        map_height: 512,
        pitch,
        background: 120.0,
        texture_amplitude: 25.0,
        texture_radius: 2,
        markings: airfield_markings(center, 180.0),
        cameras: cameras_at(&pentagon(center, 120.0, 5, 90.0), pitch, yaw),
        intrinsics: IntrinsicsSpec::default(),
        drift: DriftSpec::default(),
        point_noise: 0.0,
        random_frame: true,
        rois: vec![],
        seed,
    }
}

/// Scene for registration recovery trials: the default layout.
pub fn recovery_scene(seed: u64) -> SceneSpec {
    default_scene(seed)
}

/// Ten cameras on two concentric pentagons (radius 100 and 220 pixels, the
/// outer one turned by 36 degrees) over a 640 x 640 map. The inner five
/// patches are registered; the outer five are extras used only for
/// interpatch errors, giving 45 pairs in total.
pub fn drift_scene(seed: u64, fraction: f64) -> SceneSpec {
    let pitch = 0.1;
    let center = [320.0, 320.0];
    let yaw = ChaCha8Rng::seed_from_u64(seed ^ LAYOUT_STREAM).random_range(0.0..360.0);
    let mut targets = pentagon(center, 100.0, 5, 90.0);
    targets.extend(pentagon(center, 220.0, 5, 126.0));
    let intrinsics = IntrinsicsSpec::default();
    let (w, h) = (intrinsics.width as f64, intrinsics.height as f64);
    let (hw, hh) = (0.5 * DEFAULT_ROI[0], 0.5 * DEFAULT_ROI[1]);
    let rois = (0..targets.len())
        .map(|k| SceneRoi {
            camera: k,
            vertices: vec![
                [w / 2.0 - hw, h / 2.0 - hh],
                [w / 2.0 + hw, h / 2.0 - hh],
                [w / 2.0 + hw, h / 2.0 + hh],
                [w / 2.0 - hw, h / 2.0 + hh],
            ],
            label: Some(if k < 5 { format!("p{k}") } else { format!("x{}", k - 5) }),
            extra: k >= 5,
        })
        .collect();
    SceneSpec {
        map_width: 640,
        map_height: 640,
        pitch,
        background: 120.0,
        texture_amplitude: 25.0,
        texture_radius: 2,
        markings: airfield_markings(center, 250.0),
        cameras: cameras_at(&targets, pitch, yaw),
        intrinsics,
        drift: DriftSpec { fraction, angle_deg: None },
        point_noise: 0.0,
        random_frame: true,
        rois,
        seed,
    }
}

/// Random initial guess within `(scale_fraction, angle_deg, translation_px)`
/// of `alpha`. The translation offset is uniform in a disk.
pub fn perturb_alpha(
    alpha: &SimilarityTransform2D,
    seed: u64,
    scale_fraction: f64,
    angle_deg: f64,
    translation_px: f64,
) -> SimilarityTransform2D {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ PERTURB_STREAM);
    let ds = scale_fraction * rng.random_range(-1.0..=1.0);
    let dtheta = angle_deg.to_radians() * rng.random_range(-1.0..=1.0);
    let r = translation_px * rng.random::<f64>().sqrt();
    let phi = rng.random_range(0.0..std::f64::consts::TAU);
    SimilarityTransform2D::new(
        alpha.s() * (1.0 + ds),
        alpha.theta() + dtheta,
        alpha.t_p() + r * phi.cos(),
        alpha.t_q() + r * phi.sin(),
    )
    .expect("perturbed scale stays positive")
}

/// Square patch cut straight from the map with G = S and unit step.
///
/// With `magnification` m the cell at `g` shows the map at
/// `center + (g - center) / m`, so the content appears m times too large.
pub fn cut_patch(
    map: &Raster,
    label: &str,
    center: [f64; 2],
    half: usize,
    magnification: f64,
) -> Result<PatchRaster, SynthError> {
    let n = 2 * half + 1;
    let origin = Vector2::new(center[0].round() - half as f64, center[1].round() - half as f64);
    let c = Vector2::from(center);
    let mut samples = vec![0.0; n * n];
    let mut mask = vec![false; n * n];
    for j in 0..n {
        for i in 0..n {
            let g = origin + Vector2::new(i as f64, j as f64);
            let at = c + (g - c) / magnification;
            if let Some(v) = map.sample_bilinear(at.x, at.y) {
                samples[j * n + i] = v;
                mask[j * n + i] = true;
            }
        }
    }
    PatchRaster::new(label, "map", n, n, samples, mask, [origin.x, origin.y], 1.0)
        .map_err(|e| SynthError::Invalid(vec![format!("patch '{label}': {e}")]))
}

/// A map plus patch centers for the surface classification and ambiguity
/// experiments. Patches are cut from the map itself, so the true shift is 0.
#[derive(Debug, Clone)]
pub struct PatchCase {
    pub spec: SceneSpec,
    pub centers: Vec<[f64; 2]>,
    pub half: usize,
    pub magnification: f64,
    /// Orientation of the dominant marking, degrees.
    pub angle_deg: f64,
}

impl PatchCase {
    pub fn render(&self) -> Result<(Raster, Vec<PatchRaster>), SynthError> {
        let map = render_satellite(&self.spec)?;
        let patches = self
            .centers
            .iter()
            .enumerate()
            .map(|(k, &c)| cut_patch(&map, &format!("p{k}"), c, self.half, self.magnification))
            .collect::<Result<_, _>>()?;
        Ok((map, patches))
    }
}

fn plain_map(seed: u64, size: usize, texture_amplitude: f64, markings: Vec<Marking>) -> SceneSpec {
    SceneSpec {
        map_width: size,
        map_height: size,
        background: 100.0,
        texture_amplitude,
        texture_radius: 1,
        markings,
        cameras: vec![],
        rois: vec![],
        drift: DriftSpec::default(),
        ..default_scene(seed)
    }
}

/// A long bright line through the patch at a seeded angle.
pub fn line_patch_scene(seed: u64) -> PatchCase {
    let angle = ChaCha8Rng::seed_from_u64(seed ^ LAYOUT_STREAM).random_range(0.0..180.0);
    let c = [80.0, 80.0];
    let (s, co) = f64::to_radians(angle).sin_cos();
    let reach = 70.0;
    let line = Marking::Line {
        from: [c[0] - reach * co, c[1] - reach * s],
        to: [c[0] + reach * co, c[1] + reach * s],
        width: 3.0,
        intensity: 230.0,
    };
    PatchCase {
        spec: plain_map(seed, 160, 7.0, vec![line]),
        centers: vec![c],
        half: 20,
        magnification: 1.0,
        angle_deg: angle,
    }
}

/// A single cross at a seeded angle.
pub fn cross_patch_scene(seed: u64) -> PatchCase {
    let angle = ChaCha8Rng::seed_from_u64(seed ^ LAYOUT_STREAM).random_range(0.0..90.0);
    let c = [80.0, 80.0];
    let cross = Marking::Cross { center: c, arm: 6.0, width: 3.0, angle_deg: angle, intensity: 230.0 };
    PatchCase {
        spec: plain_map(seed, 160, 7.0, vec![cross]),
        centers: vec![c],
        half: 20,
        magnification: 1.0,
        angle_deg: angle,
    }
}

/// A small dark disk on weak texture, cut at three times the true scale.
pub fn flat_patch_scene(seed: u64) -> PatchCase {
    let c = [80.0, 80.0];
    let disk = Marking::Disk { center: c, radius: 3.0, intensity: 230.0 };
    PatchCase {
        spec: plain_map(seed, 160, 1.5, vec![disk]),
        centers: vec![c],
        half: 20,
        magnification: 3.0,
        angle_deg: 0.0,
    }
}

/// Crosses repeated every `period` pixels over weak texture. Patch 0 sees
/// one cross; patch 1 also contains a unique block glyph.
pub fn periodic_cross_scene(seed: u64, period: usize) -> PatchCase {
    let size = 320usize;
    let mut markings = Vec::new();
    let p = period as f64;
    let mut y = p / 2.0;
    while y + 8.0 < size as f64 {
        let mut x = p / 2.0;
        while x + 8.0 < size as f64 {
            markings.push(Marking::Cross { center: [x, y], arm: 6.0, width: 3.0, angle_deg: 0.0, intensity: 230.0 });
            x += p;
        }
        y += p;
    }
    // Cross centers nearest the two patch sites, two periods apart.
    let snap = |v: f64| ((v - p / 2.0) / p).round() * p + p / 2.0;
    let a = [snap(size as f64 / 2.0 - p), snap(size as f64 / 2.0)];
    let b = [a[0] + 2.0 * p, a[1]];
    markings.push(Marking::Block { center: [b[0] + 8.0, b[1] + 8.0], size: [7.0, 7.0], angle_deg: 0.0, intensity: 250.0 });
    PatchCase {
        spec: plain_map(seed, size, 2.0, markings),
        centers: vec![a, b],
        half: 12,
        magnification: 1.0,
        angle_deg: 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        default_scene(3).validate().unwrap();
        drift_scene(3, 0.04).validate().unwrap();
        for case in [line_patch_scene(1), cross_patch_scene(1), flat_patch_scene(1), periodic_cross_scene(1, 30)] {
            case.spec.validate_map().unwrap();
        }
    }

    #[test]
    fn perturbation_stays_in_bounds() {
        let alpha = SimilarityTransform2D::new(2.0, 0.3, 10.0, -4.0).unwrap();
        for seed in 0..200 {
            let p = perturb_alpha(&alpha, seed, 0.03, 3.0, 5.0);
            assert!((p.s() / alpha.s() - 1.0).abs() <= 0.03 + 1e-12);
            assert!((p.theta() - alpha.theta()).abs() <= 3f64.to_radians() + 1e-12);
            assert!((p.translation() - alpha.translation()).norm() <= 5.0 + 1e-12);
        }
    }

    #[test]
    fn unit_cut_reproduces_map() {
        let case = cross_patch_scene(2);
        let (map, patches) = case.render().unwrap();
        let p = &patches[0];
        for (g, v) in p.valid_cells() {
            assert_eq!(Some(v), map.gray_at(g.x as i64, g.y as i64));
        }
    }
}
