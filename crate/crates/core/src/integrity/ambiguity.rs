use serde::{Deserialize, Serialize};

use super::surface::near_global_bound;
use super::{IntegrityConfig, IntegrityError};
use crate::geometry::SimilarityTransform2D;
use crate::mosaic::PatchRaster;
use crate::raster::Raster;
use crate::registration::{compute_ssd_surface, ShiftWindow, SsdSurface};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NearMinimum {
    pub shift: (i32, i32),
    pub value: f64,
}

/// Near-global shifts joined by single linkage; `best` is the lowest member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimumCluster {
    pub best: NearMinimum,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmbiguityReport {
    pub label: String,
    pub window: ShiftWindow,
    pub near_global: Vec<NearMinimum>,
    pub clusters: Vec<MinimumCluster>,
    pub ambiguous: bool,
    /// Set when a joint mosaic scan was evaluated: true if the joint surface
    /// has a single cluster.
    pub resolved_by_mosaic: Option<bool>,
}

fn find(parent: &mut [usize], mut k: usize) -> usize {
    while parent[k] != k {
        parent[k] = parent[parent[k]];
        k = parent[k];
    }
    k
}

/// Group shifts whose chains of pairwise distances stay within `linkage`.
pub fn cluster_minima(minima: &[NearMinimum], linkage: f64) -> Vec<MinimumCluster> {
    let n = minima.len();
    let mut parent: Vec<usize> = (0..n).collect();
    let reach = linkage.max(0.0).floor() as i32;
    // Shifts are integers, so only neighbours inside a (2 reach + 1)^2 box can link.
    let index: std::collections::HashMap<(i32, i32), usize> =
        minima.iter().enumerate().map(|(k, m)| (m.shift, k)).collect();
    for (k, m) in minima.iter().enumerate() {
        for dv in -reach..=reach {
            for du in -reach..=reach {
                if ((du * du + dv * dv) as f64).sqrt() > linkage {
                    continue;
                }
                if let Some(&other) = index.get(&(m.shift.0 + du, m.shift.1 + dv)) {
                    let (a, b) = (find(&mut parent, k), find(&mut parent, other));
                    if a != b {
                        parent[a.max(b)] = a.min(b);
                    }
                }
            }
        }
    }
    let mut clusters: Vec<(usize, MinimumCluster)> = Vec::new();
    for k in 0..n {
        let root = find(&mut parent, k);
        match clusters.iter_mut().find(|(r, _)| *r == root) {
            Some((_, c)) => {
                c.size += 1;
                if minima[k].value < c.best.value {
                    c.best = minima[k].clone();
                }
            }
            None => clusters.push((root, MinimumCluster { best: minima[k].clone(), size: 1 })),
        }
    }
    let mut out: Vec<MinimumCluster> = clusters.into_iter().map(|(_, c)| c).collect();
    out.sort_by(|a, b| a.best.value.total_cmp(&b.best.value).then(a.best.shift.cmp(&b.best.shift)));
    out
}

/// Near-global minima and clusters of any surface.
pub fn surface_report(surface: &SsdSurface, config: &IntegrityConfig) -> Result<AmbiguityReport, IntegrityError> {
    let (_, bound) = near_global_bound(surface.valid_shifts().map(|(_, v)| v), config.near_tolerance)
        .ok_or_else(|| IntegrityError::EmptySurface(surface.label.clone()))?;
    let near_global: Vec<NearMinimum> = surface
        .valid_shifts()
        .filter(|&(_, v)| v <= bound)
        .map(|(shift, value)| NearMinimum { shift, value })
        .collect();
    let clusters = cluster_minima(&near_global, config.linkage);
    Ok(AmbiguityReport {
        label: surface.label.clone(),
        window: surface.window,
        ambiguous: clusters.len() >= 2,
        near_global,
        clusters,
        resolved_by_mosaic: None,
    })
}

/// Wide SSD scan of one patch for repeated near-global minima.
pub fn ambiguity_scan(
    patch: &PatchRaster,
    satellite: &Raster,
    alpha: &SimilarityTransform2D,
    config: &IntegrityConfig,
) -> Result<(AmbiguityReport, SsdSurface), IntegrityError> {
    let window = ShiftWindow::square(config.scan_half_width);
    let surface = compute_ssd_surface(patch, satellite, alpha, window, config.coverage_floor)?;
    Ok((surface_report(&surface, config)?, surface))
}

/// Sum per-patch surfaces at common shifts. A shift is kept only if every
/// patch has a value there.
pub fn joint_surface(label: &str, surfaces: &[SsdSurface]) -> Result<SsdSurface, IntegrityError> {
    let first = surfaces.first().ok_or(IntegrityError::TooFewPatches(0))?;
    if surfaces.iter().any(|s| s.window != first.window) {
        return Err(IntegrityError::WindowMismatch);
    }
    let window = first.window;
    let mut values = Vec::with_capacity(window.len());
    let mut valid_counts = Vec::with_capacity(window.len());
    for k in 0..window.len() {
        let mut sum = Some(0.0);
        let mut count = 0;
        for s in surfaces {
            sum = sum.zip(s.values[k]).map(|(a, b)| a + b);
            count += s.valid_counts[k];
        }
        values.push(sum);
        valid_counts.push(count);
    }
    let mut best: Option<((i32, i32), f64)> = None;
    for (shift, value) in window.shifts().zip(&values) {
        let Some(value) = *value else { continue };
        let key = |s: (i32, i32)| ((s.0 as i64).pow(2) + (s.1 as i64).pow(2), s.1, s.0);
        best = match best {
            Some((b, bv)) if bv < value || (bv == value && key(b) <= key(shift)) => Some((b, bv)),
            _ => Some((shift, value)),
        };
    }
    let (argmin, min_value) = best.ok_or_else(|| IntegrityError::EmptySurface(label.to_string()))?;
    Ok(SsdSurface {
        label: label.to_string(),
        window,
        values,
        valid_counts,
        mask_size: surfaces.iter().map(|s| s.mask_size).sum(),
        argmin,
        min_value,
    })
}

/// Scan every patch alone, then the mosaic jointly under a common shift.
///
/// Each per-patch report gets `resolved_by_mosaic` set from the joint scan.
/// The joint report is returned last.
pub fn mosaic_ambiguity(
    patches: &[PatchRaster],
    satellite: &Raster,
    alpha: &SimilarityTransform2D,
    config: &IntegrityConfig,
) -> Result<(Vec<AmbiguityReport>, AmbiguityReport, Vec<SsdSurface>), IntegrityError> {
    let mut reports = Vec::with_capacity(patches.len());
    let mut surfaces = Vec::with_capacity(patches.len());
    for p in patches {
        let (r, s) = ambiguity_scan(p, satellite, alpha, config)?;
        reports.push(r);
        surfaces.push(s);
    }
    let joint = surface_report(&joint_surface("mosaic", &surfaces)?, config)?;
    let unique = !joint.ambiguous;
    for r in &mut reports {
        r.resolved_by_mosaic = Some(unique);
    }
    Ok((reports, joint, surfaces))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(u: i32, v: i32) -> NearMinimum {
        NearMinimum { shift: (u, v), value: (u * u + v * v) as f64 }
    }

    #[test]
    fn single_linkage_chains_and_splits() {
        let minima = vec![m(0, 0), m(2, 0), m(4, 1), m(20, 0), m(21, 2)];
        let c = cluster_minima(&minima, 3.0);
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].best.shift, (0, 0));
        assert_eq!(c[0].size, 3);
        assert_eq!(c[1].size, 2);
        // Distance sqrt(10) > 3 does not link.
        assert_eq!(cluster_minima(&[m(0, 0), m(3, 1)], 3.0).len(), 2);
        assert_eq!(cluster_minima(&[m(0, 0), m(3, 0)], 3.0).len(), 1);
    }

    #[test]
    fn joint_surface_sums_and_drops_missing() {
        let window = ShiftWindow::square(2);
        let make = |f: &dyn Fn(i32, i32) -> Option<f64>| {
            let values: Vec<_> = window.shifts().map(|(u, v)| f(u, v)).collect();
            SsdSurface {
                label: "x".into(),
                window,
                valid_counts: vec![1; values.len()],
                values,
                mask_size: 1,
                argmin: (0, 0),
                min_value: 0.0,
            }
        };
        let a = make(&|u, v| Some(((u - 2) * (u - 2) + v * v) as f64).filter(|_| u != -2));
        let b = make(&|u, v| Some(((u + 1) * (u + 1) + v * v) as f64 * 0.5));
        let j = joint_surface("j", &[a, b]).unwrap();
        assert_eq!(j.value(-2, 0), None);
        assert_eq!(j.value(1, 0), Some(1.0 + 2.0));
        assert_eq!(j.argmin, (1, 0));
    }
}
