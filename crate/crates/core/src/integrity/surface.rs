use nalgebra::{DMatrix, DVector, Matrix2, SymmetricEigen, Vector2};
use serde::{Deserialize, Serialize};

use super::{IntegrityConfig, IntegrityError};
use crate::raster::{Raster, RasterError};
use crate::registration::SsdSurface;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SurfaceClass {
    Hole,
    Trench,
    Flat,
    Multimodal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceClassification {
    pub label: String,
    pub class: SurfaceClass,
    /// Curvature eigenvalues of the local quadratic fit, `lambda_1 >= lambda_2`.
    pub eigenvalues: [f64; 2],
    /// Share of evaluated shifts within tolerance of the global minimum.
    pub flatness: f64,
    /// Unit direction of least curvature, present only for trenches.
    pub trench_direction: Option<[f64; 2]>,
    pub argmin: (i32, i32),
}

/// Value bound for "near the global minimum": `min + tolerance * (max - min)`
/// over the evaluated shifts. Tying the tolerance to the value range keeps it
/// invariant under offsets and positive scaling of the surface.
pub fn near_global_bound(values: impl Iterator<Item = f64>, tolerance: f64) -> Option<(f64, f64)> {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo > hi {
        return None;
    }
    Some((lo, lo + tolerance * (hi - lo)))
}

/// Least-squares quadratic `a + b u + c v + d u^2 + e u v + f v^2` over the
/// valid shifts of a 5x5 block around `center`; returns the Hessian.
fn local_hessian(surface: &SsdSurface, center: (i32, i32)) -> Option<Matrix2<f64>> {
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for dv in -2..=2 {
        for du in -2..=2 {
            if let Some(value) = surface.value(center.0 + du, center.1 + dv) {
                let (u, v) = (du as f64, dv as f64);
                rows.extend_from_slice(&[1.0, u, v, u * u, u * v, v * v]);
                rhs.push(value);
            }
        }
    }
    if rhs.len() < 6 {
        return None;
    }
    let a = DMatrix::from_row_slice(rhs.len(), 6, &rows);
    let coeffs = a.svd(true, true).solve(&DVector::from_vec(rhs), 1e-12).ok()?;
    Some(Matrix2::new(2.0 * coeffs[3], coeffs[4], coeffs[4], 2.0 * coeffs[5]))
}

/// Classify the topography of an SSD surface around its minimum.
pub fn classify_surface(
    surface: &SsdSurface,
    config: &IntegrityConfig,
) -> Result<SurfaceClassification, IntegrityError> {
    let w = surface.window;
    if w.columns() < 5 || w.rows() < 5 {
        return Err(IntegrityError::WindowTooSmall(w.columns(), w.rows()));
    }
    if surface.argmin_on_boundary() {
        return Err(IntegrityError::BoundaryArgmin(surface.label.clone()));
    }
    let (_, bound) = near_global_bound(surface.valid_shifts().map(|(_, v)| v), config.near_tolerance)
        .ok_or_else(|| IntegrityError::EmptySurface(surface.label.clone()))?;
    let total = surface.valid_shifts().count();
    let near: Vec<(i32, i32)> = surface
        .valid_shifts()
        .filter(|&(_, v)| v <= bound)
        .map(|(s, _)| s)
        .collect();
    let flatness = near.len() as f64 / total as f64;

    // Keep the 5x5 block inside the window.
    let center = (
        surface.argmin.0.clamp(w.u_min + 2, w.u_max - 2),
        surface.argmin.1.clamp(w.v_min + 2, w.v_max - 2),
    );
    let hessian = local_hessian(surface, center).unwrap_or_else(Matrix2::zeros);
    let eigen = SymmetricEigen::new(hessian);
    let (i1, i2) = if eigen.eigenvalues[0] >= eigen.eigenvalues[1] { (0, 1) } else { (1, 0) };
    let (l1, l2) = (eigen.eigenvalues[i1], eigen.eigenvalues[i2]);
    let weak: Vector2<f64> = eigen.eigenvectors.column(i2).into_owned();

    let (a0, a1) = surface.argmin;
    let far_minimum = near.iter().any(|&(u, v)| {
        let (du, dv) = ((u - a0) as f64, (v - a1) as f64);
        (du * du + dv * dv).sqrt() > config.multimodal_distance
    });
    let (class, trench_direction) = if flatness > config.flatness_threshold || l1 <= 0.0 {
        (SurfaceClass::Flat, None)
    } else if l2 / l1 < config.curvature_ratio {
        // Axis direction: fix the sign so the first nonzero component is positive.
        let d = if weak.x < 0.0 || (weak.x == 0.0 && weak.y < 0.0) { -weak } else { weak };
        (SurfaceClass::Trench, Some([d.x, d.y]))
    } else if far_minimum {
        (SurfaceClass::Multimodal, None)
    } else {
        (SurfaceClass::Hole, None)
    };
    Ok(SurfaceClassification {
        label: surface.label.clone(),
        class,
        eigenvalues: [l1, l2],
        flatness,
        trench_direction,
        argmin: surface.argmin,
    })
}

/// Min-max normalized grayscale image of a surface: the minimum maps to 0,
/// the maximum to 254 and shifts without a value to 255.
pub fn surface_heatmap(surface: &SsdSurface) -> Result<Raster, RasterError> {
    let (lo, hi) = surface
        .valid_shifts()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, v)| (lo.min(v), hi.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let samples = surface
        .values
        .iter()
        .map(|v| match v {
            Some(v) => (254.0 * (v - lo) / span).round(),
            None => 255.0,
        })
        .collect();
    Raster::new(surface.window.columns(), surface.window.rows(), 1, samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registration::ShiftWindow;
    use proptest::prelude::*;

    fn surface_from(f: impl Fn(f64, f64) -> f64) -> SsdSurface {
        let window = ShiftWindow::default();
        let values: Vec<Option<f64>> = window.shifts().map(|(u, v)| Some(f(u as f64, v as f64))).collect();
        let mut best = ((0, 0), f64::INFINITY);
        for (s, v) in window.shifts().zip(&values) {
            let v = v.unwrap();
            if v < best.1 {
                best = (s, v);
            }
        }
        SsdSurface {
            label: "s".into(),
            window,
            values,
            valid_counts: vec![100; window.len()],
            mask_size: 100,
            argmin: best.0,
            min_value: best.1,
        }
    }

    fn bowl(u: f64, v: f64) -> f64 {
        // Saturating bowl: sharp in both directions.
        1000.0 * (1.0 - (-(u * u + v * v) / 4.0).exp())
    }

    fn trench(u: f64, v: f64) -> f64 {
        // Valley along the direction (cos 30, sin 30).
        let (s, c) = 30f64.to_radians().sin_cos();
        let across = -s * u + c * v;
        let along = c * u + s * v;
        1000.0 * (1.0 - (-across * across / 2.0).exp()) + 0.5 * along * along
    }

    #[test]
    fn bowl_is_a_hole() {
        let c = classify_surface(&surface_from(bowl), &IntegrityConfig::default()).unwrap();
        assert_eq!(c.class, SurfaceClass::Hole);
        assert!(c.eigenvalues[0] >= c.eigenvalues[1]);
        assert!(c.trench_direction.is_none());
    }

    #[test]
    fn valley_is_a_trench_along_its_axis() {
        let c = classify_surface(&surface_from(trench), &IntegrityConfig::default()).unwrap();
        assert_eq!(c.class, SurfaceClass::Trench);
        let d = Vector2::from(c.trench_direction.unwrap());
        let axis = Vector2::new(30f64.to_radians().cos(), 30f64.to_radians().sin());
        assert!(d.dot(&axis).abs() > 10f64.to_radians().cos());
    }

    #[test]
    fn plateau_is_flat() {
        let c = classify_surface(&surface_from(|u, v| (u * u + v * v).sqrt().max(4.0)), &IntegrityConfig::default()).unwrap();
        assert_eq!(c.class, SurfaceClass::Flat);
        assert!(c.flatness > 0.10);
    }

    #[test]
    fn second_far_minimum_is_multimodal() {
        let c = classify_surface(
            &surface_from(|u, v| bowl(u, v).min(1.0 + bowl(u - 6.0, v + 5.0))),
            &IntegrityConfig::default(),
        )
        .unwrap();
        assert_eq!(c.class, SurfaceClass::Multimodal);
    }

    #[test]
    fn boundary_and_small_windows_are_rejected() {
        let s = surface_from(|u, v| (u - 10.0).powi(2) + v * v);
        assert!(matches!(classify_surface(&s, &IntegrityConfig::default()), Err(IntegrityError::BoundaryArgmin(_))));
        let window = ShiftWindow::square(1);
        let small = SsdSurface {
            label: "t".into(),
            window,
            values: vec![Some(1.0); 9],
            valid_counts: vec![1; 9],
            mask_size: 1,
            argmin: (0, 0),
            min_value: 1.0,
        };
        assert!(matches!(classify_surface(&small, &IntegrityConfig::default()), Err(IntegrityError::WindowTooSmall(3, 3))));
    }

    #[test]
    fn heatmap_normalizes_and_marks_missing() {
        let mut s = surface_from(bowl);
        s.values[0] = None;
        let h = surface_heatmap(&s).unwrap();
        assert_eq!((h.width(), h.height()), (21, 21));
        assert_eq!(h.get(0, 0, 0), 255.0);
        assert_eq!(h.get(10, 10, 0), 0.0);
        assert!(h.samples().iter().any(|&v| v == 254.0));
    }

    proptest! {
        #[test]
        fn classification_is_offset_and_scale_invariant(offset in -1e3f64..1e3, scale in 1e-3f64..1e3, pick in 0usize..3) {
            let f: fn(f64, f64) -> f64 = [bowl, trench, |u: f64, v: f64| (u * u + v * v).sqrt().max(4.0)][pick];
            let base = classify_surface(&surface_from(f), &IntegrityConfig::default()).unwrap();
            let moved = classify_surface(&surface_from(|u, v| scale * f(u, v) + offset.abs()), &IntegrityConfig::default()).unwrap();
            prop_assert_eq!(base.class, moved.class);
            prop_assert!((base.flatness - moved.flatness).abs() < 1e-12);
        }
    }
}
