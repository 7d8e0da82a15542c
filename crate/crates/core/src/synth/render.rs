use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::spec::{CameraSpec, SceneSpec};
use super::SynthError;
use crate::model::CameraIntrinsics;
use crate::raster::Raster;

/// Stream offsets so each random quantity has its own reproducible source.
pub(crate) const TEXTURE_STREAM: u64 = 0x7465_7874;

fn box_blur(values: &[f64], w: usize, h: usize, radius: usize) -> Vec<f64> {
    if radius == 0 {
        return values.to_vec();
    }
    let r = radius as i64;
    let pass = |src: &[f64], horizontal: bool| -> Vec<f64> {
        let mut out = vec![0.0; src.len()];
        for y in 0..h as i64 {
            for x in 0..w as i64 {
                let mut sum = 0.0;
                let mut n = 0.0;
                for k in -r..=r {
                    let (xx, yy) = if horizontal { (x + k, y) } else { (x, y + k) };
                    if xx >= 0 && yy >= 0 && xx < w as i64 && yy < h as i64 {
                        sum += src[(yy as usize) * w + xx as usize];
                        n += 1.0;
                    }
                }
                out[y as usize * w + x as usize] = sum / n;
            }
        }
        out
    };
    pass(&pass(values, true), false)
}

/// Smoothed noise with zero mean and unit standard deviation.
pub fn noise_texture(w: usize, h: usize, radius: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ TEXTURE_STREAM);
    let raw: Vec<f64> = (0..w * h).map(|_| rng.random_range(-1.0..1.0)).collect();
    let smooth = box_blur(&box_blur(&raw, w, h, radius), w, h, radius);
    let n = smooth.len() as f64;
    let mean = smooth.iter().sum::<f64>() / n;
    let var = smooth.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
    smooth.iter().map(|v| (v - mean) / sd).collect()
}

/// Rasterize the satellite map: smoothed noise around the background level
/// with the markings painted on top (later markings win).
pub fn render_satellite(spec: &SceneSpec) -> Result<Raster, SynthError> {
    spec.validate_map()?;
    let (w, h) = (spec.map_width, spec.map_height);
    let mut samples = if spec.texture_amplitude > 0.0 {
        noise_texture(w, h, spec.texture_radius, spec.seed)
            .into_iter()
            .map(|n| (spec.background + spec.texture_amplitude * n).clamp(0.0, 255.0))
            .collect()
    } else {
        vec![spec.background; w * h]
    };
    for m in &spec.markings {
        let b = m.bounds();
        let (x0, y0) = (b[0].floor().max(0.0) as usize, b[1].floor().max(0.0) as usize);
        let (x1, y1) = ((b[2].ceil() as usize).min(w - 1), (b[3].ceil() as usize).min(h - 1));
        for y in y0..=y1 {
            for x in x0..=x1 {
                if m.covers(x as f64, y as f64) {
                    samples[y * w + x] = m.intensity();
                }
            }
        }
    }
    Ok(Raster::new(w, h, 1, samples)?.with_pixel_pitch(spec.pitch)?)
}

/// World-to-camera rotation for a camera with the given yaw, depression and
/// roll. World axes: x and y on the ground, z pointing down.
pub fn camera_rotation(camera: &CameraSpec) -> Matrix3<f64> {
    let (sy, cy) = camera.yaw_deg.to_radians().sin_cos();
    let (sb, cb) = camera.pitch_deg.to_radians().sin_cos();
    let (sr, cr) = camera.roll_deg.to_radians().sin_cos();
    let z = Vector3::new(cy * cb, sy * cb, sb);
    let x = Vector3::new(-sy, cy, 0.0);
    let y = z.cross(&x);
    let xr = x * cr + y * sr;
    let yr = y * cr - x * sr;
    Matrix3::from_rows(&[xr.transpose(), yr.transpose(), z.transpose()])
}

pub fn camera_center(camera: &CameraSpec) -> Vector3<f64> {
    Vector3::new(camera.position[0], camera.position[1], -camera.height)
}

pub fn scene_intrinsics(spec: &SceneSpec) -> Result<CameraIntrinsics, SynthError> {
    use crate::model::CameraModel;
    let i = &spec.intrinsics;
    let (cx, cy) = (i.width as f64 / 2.0, i.height as f64 / 2.0);
    let cam = if i.radial == 0.0 {
        CameraIntrinsics::pinhole(i.width, i.height, i.focal, i.focal, cx, cy)
    } else {
        CameraIntrinsics::new(CameraModel::SimpleRadial, i.width, i.height, vec![i.focal, cx, cy, i.radial])
    };
    cam.map_err(|e| SynthError::Invalid(vec![format!("intrinsics: {e}")]))
}

/// Render one view: each pixel center is cast onto the ground and the map
/// is sampled bilinearly. Rays that miss the map see the background level.
/// Output is RGB with equal channels, rounded to integer levels.
pub fn render_view(
    map: &Raster,
    pitch: f64,
    background: f64,
    camera: &CameraSpec,
    intrinsics: &CameraIntrinsics,
) -> Result<Raster, SynthError> {
    let rotation = camera_rotation(camera);
    let rt = rotation.transpose();
    let center = camera_center(camera);
    let (w, h) = (intrinsics.width() as usize, intrinsics.height() as usize);
    let rows: Vec<Vec<f64>> = (0..h)
        .into_par_iter()
        .map(|j| {
            let mut row = Vec::with_capacity(w * 3);
            for i in 0..w {
                let value = intrinsics
                    .unproject(i as f64 + 0.5, j as f64 + 0.5)
                    .and_then(|(x, y)| {
                        let d = rt * Vector3::new(x, y, 1.0);
                        if d.z <= 1e-12 {
                            return None;
                        }
                        let lambda = -center.z / d.z;
                        let hit = center + d * lambda;
                        map.sample_bilinear(hit.x / pitch, hit.y / pitch)
                    })
                    .unwrap_or(background)
                    .round();
                row.extend_from_slice(&[value, value, value]);
            }
            row
        })
        .collect();
    Ok(Raster::new(w, h, 3, rows.concat())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::spec::Marking;

    #[test]
    fn empty_map_is_uniform() {
        let spec = SceneSpec {
            texture_amplitude: 0.0,
            markings: vec![],
            ..SceneSpec::default()
        };
        let map = render_satellite(&spec).unwrap();
        assert!(map.samples().iter().all(|&v| v == spec.background));
    }

    #[test]
    fn single_cross_changes_only_its_footprint() {
        let cross = Marking::Cross { center: [40.0, 30.0], arm: 5.0, width: 3.0, angle_deg: 0.0, intensity: 250.0 };
        let spec = SceneSpec {
            map_width: 80,
            map_height: 60,
            texture_amplitude: 0.0,
            background: 90.0,
            markings: vec![cross.clone()],
            cameras: SceneSpec::default().cameras[..1].to_vec(),
            rois: vec![],
            ..SceneSpec::default()
        };
        let map = render_satellite(&spec).unwrap();
        let mut changed = 0;
        for y in 0..60 {
            for x in 0..80 {
                let painted = cross.covers(x as f64, y as f64);
                assert_eq!(map.get(x, y, 0) != 90.0, painted);
                changed += painted as usize;
            }
        }
        // Two 11x3 bars sharing a 3x3 center.
        assert_eq!(changed, 2 * 11 * 3 - 9);
    }

    #[test]
    fn rotation_is_proper_and_looks_down() {
        let cam = CameraSpec { position: [0.0, 0.0], height: 5.0, yaw_deg: 37.0, pitch_deg: 50.0, roll_deg: 4.0 };
        let r = camera_rotation(&cam);
        assert!((r * r.transpose() - Matrix3::identity()).norm() < 1e-12);
        assert!((r.determinant() - 1.0).abs() < 1e-12);
        assert!(r[(2, 2)] > 0.0);
    }

    #[test]
    fn texture_is_normalized_and_deterministic() {
        let a = noise_texture(40, 30, 2, 5);
        let b = noise_texture(40, 30, 2, 5);
        assert_eq!(a, b);
        let mean = a.iter().sum::<f64>() / a.len() as f64;
        let var = a.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / a.len() as f64;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-9);
        assert_ne!(a, noise_texture(40, 30, 2, 6));
    }
}
