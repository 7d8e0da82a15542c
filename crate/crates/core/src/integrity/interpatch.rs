use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::IntegrityError;
use crate::registration::PatchFix;

/// Agreement required between the direct interpatch error and the
/// residual-difference shortcut, relative to the separation magnitude.
pub const SHORTCUT_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpatchError {
    pub i: usize,
    pub j: usize,
    pub label_i: String,
    pub label_j: String,
    /// Separation of the SSD-optimal centroids, `y*_i - y*_j`.
    pub true_separation: [f64; 2],
    /// Separation of the centroids placed by the registered state.
    pub estimated_separation: [f64; 2],
    /// `true_separation - estimated_separation`.
    pub error: [f64; 2],
    /// `r_i - r_j`, the residual-difference form of the same quantity.
    pub shortcut_error: [f64; 2],
    pub magnitude: f64,
    pub distance: f64,
}

/// Interpatch error between two fixed patches, or `None` if either lacks an
/// SSD optimum.
pub fn pair_error(i: usize, a: &PatchFix, j: usize, b: &PatchFix) -> Option<InterpatchError> {
    let (oa, ob) = (a.optimal_vector()?, b.optimal_vector()?);
    let (ra, rb) = (a.residual_vector()?, b.residual_vector()?);
    let true_sep = oa - ob;
    let est_sep = a.estimated_vector() - b.estimated_vector();
    let error = true_sep - est_sep;
    let shortcut = ra - rb;
    Some(InterpatchError {
        i,
        j,
        label_i: a.label.clone(),
        label_j: b.label.clone(),
        true_separation: true_sep.into(),
        estimated_separation: est_sep.into(),
        error: error.into(),
        shortcut_error: shortcut.into(),
        magnitude: error.norm(),
        distance: true_sep.norm(),
    })
}

/// All pairwise interpatch errors over the registered patches followed by
/// any extra patches optimized on their own.
///
/// Patches without a valid SSD optimum are skipped and named in the returned
/// notes. Every pair is cross-checked against the residual shortcut.
pub fn interpatch_errors(
    registered: &[PatchFix],
    extras: &[PatchFix],
) -> Result<(Vec<InterpatchError>, Vec<String>), IntegrityError> {
    let all: Vec<&PatchFix> = registered.iter().chain(extras).collect();
    let mut notes = Vec::new();
    let usable: Vec<usize> = (0..all.len())
        .filter(|&k| {
            let ok = all[k].optimal.is_some() && all[k].residual.is_some();
            if !ok {
                notes.push(format!(
                    "patch '{}' excluded: {}",
                    all[k].label,
                    all[k].note.as_deref().unwrap_or("no SSD optimum")
                ));
            }
            ok
        })
        .collect();
    if usable.len() < 2 {
        return Err(IntegrityError::TooFewPatches(usable.len()));
    }
    let mut out = Vec::with_capacity(usable.len() * (usable.len() - 1) / 2);
    for (a, &i) in usable.iter().enumerate() {
        for &j in &usable[a + 1..] {
            let e = pair_error(i, all[i], j, all[j]).expect("usable patches have optima");
            let gap = (Vector2::from(e.error) - Vector2::from(e.shortcut_error)).norm();
            if gap > SHORTCUT_TOLERANCE * (1.0 + Vector2::from(e.estimated_separation).norm()) {
                return Err(IntegrityError::ShortcutMismatch {
                    label_i: e.label_i,
                    label_j: e.label_j,
                    gap,
                });
            }
            out.push(e);
        }
    }
    Ok((out, notes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftTrend {
    /// Least-squares slope of `|error| = slope * distance` through the origin.
    pub slope: f64,
    pub pairs: usize,
}

pub fn drift_trend(errors: &[InterpatchError]) -> Result<DriftTrend, IntegrityError> {
    if errors.len() < 3 {
        return Err(IntegrityError::TooFewPairs(errors.len()));
    }
    let sxx: f64 = errors.iter().map(|e| e.distance * e.distance).sum();
    if sxx == 0.0 {
        return Err(IntegrityError::ZeroDistances);
    }
    let sxy: f64 = errors.iter().map(|e| e.distance * e.magnitude).sum();
    Ok(DriftTrend {
        slope: sxy / sxx,
        pairs: errors.len(),
    })
}

/// Interpatch table as CSV with a header row.
pub fn interpatch_csv(errors: &[InterpatchError]) -> Result<String, IntegrityError> {
    use crate::numfmt::fmt_sig;
    let mut writer = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| IntegrityError::Csv(e.to_string());
    writer
        .write_record(["i", "j", "label_i", "label_j", "distance", "error", "error_p", "error_q"])
        .map_err(io)?;
    for e in errors {
        writer
            .write_record([
                e.i.to_string(),
                e.j.to_string(),
                e.label_i.clone(),
                e.label_j.clone(),
                fmt_sig(e.distance),
                fmt_sig(e.magnitude),
                fmt_sig(e.error[0]),
                fmt_sig(e.error[1]),
            ])
            .map_err(io)?;
    }
    let bytes = writer.into_inner().map_err(|e| IntegrityError::Csv(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| IntegrityError::Csv(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn fix(label: &str, estimated: [f64; 2], residual: [f64; 2]) -> PatchFix {
        PatchFix {
            label: label.into(),
            centroid_g: [0.0, 0.0],
            estimated,
            optimal: Some([estimated[0] + residual[0], estimated[1] + residual[1]]),
            residual: Some(residual),
            argmin: Some((0, 0)),
            ssd_min: Some(0.0),
            ssd_at_zero: Some(0.0),
            note: None,
        }
    }

    #[test]
    fn zero_residuals_give_zero_errors() {
        let fixes = [fix("a", [0.0, 0.0], [0.0, 0.0]), fix("b", [10.0, 0.0], [0.0, 0.0]), fix("c", [0.0, 7.0], [0.0, 0.0])];
        let (errs, notes) = interpatch_errors(&fixes, &[]).unwrap();
        assert_eq!(errs.len(), 3);
        assert!(notes.is_empty());
        assert!(errs.iter().all(|e| e.error == [0.0, 0.0]));
    }

    #[test]
    fn residual_difference_example() {
        let (errs, _) = interpatch_errors(&[fix("1", [3.0, 4.0], [1.0, 0.0]), fix("2", [20.0, -5.0], [0.0, 1.0])], &[]).unwrap();
        assert_eq!(errs[0].shortcut_error, [1.0, -1.0]);
        assert!((Vector2::from(errs[0].error) - Vector2::new(1.0, -1.0)).norm() < 1e-12);
    }

    #[test]
    fn ten_patches_give_45_pairs_and_failures_are_noted() {
        let regs: Vec<_> = (0..5).map(|k| fix(&format!("r{k}"), [k as f64 * 10.0, 0.0], [0.1 * k as f64, 0.0])).collect();
        let extras: Vec<_> = (0..5).map(|k| fix(&format!("x{k}"), [0.0, k as f64 * 13.0], [0.0, -0.2])).collect();
        let (errs, _) = interpatch_errors(&regs, &extras).unwrap();
        assert_eq!(errs.len(), 45);
        let mut broken = extras.clone();
        broken[2].optimal = None;
        broken[2].note = Some("coverage".into());
        let (errs, notes) = interpatch_errors(&regs, &broken).unwrap();
        assert_eq!(errs.len(), 36);
        assert_eq!(notes.len(), 1);
    }

    #[test]
    fn proportional_trend() {
        let errors: Vec<_> = [5.0, 10.0, 17.0, 40.0]
            .iter()
            .enumerate()
            .map(|(k, &d)| InterpatchError {
                i: 0,
                j: k + 1,
                label_i: "a".into(),
                label_j: "b".into(),
                true_separation: [d, 0.0],
                estimated_separation: [d, 0.0],
                error: [0.04 * d, 0.0],
                shortcut_error: [0.04 * d, 0.0],
                magnitude: 0.04 * d,
                distance: d,
            })
            .collect();
        let t = drift_trend(&errors).unwrap();
        assert!((t.slope - 0.04).abs() < 1e-15);
        let csv = interpatch_csv(&errors).unwrap();
        assert!(csv.starts_with("i,j,label_i,label_j,distance,error,error_p,error_q\n"));
        assert_eq!(csv.lines().count(), 5);
        let zeros: Vec<_> = errors.iter().cloned().map(|mut e| {
            e.distance = 0.0;
            e
        }).collect();
        assert!(matches!(drift_trend(&zeros), Err(IntegrityError::ZeroDistances)));
        assert!(matches!(drift_trend(&errors[..2]), Err(IntegrityError::TooFewPairs(2))));
    }

    fn fixes() -> impl Strategy<Value = Vec<PatchFix>> {
        proptest::collection::vec(((-500.0f64..500.0, -500.0f64..500.0), (-5.0f64..5.0, -5.0f64..5.0)), 3..8).prop_map(|v| {
            v.into_iter()
                .enumerate()
                .map(|(k, (e, r))| fix(&format!("p{k}"), [e.0, e.1], [r.0, r.1]))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn antisymmetry_and_triangle_identity(fs in fixes()) {
            let n = fs.len();
            for i in 0..n {
                for j in 0..n {
                    if i == j { continue; }
                    let ij = pair_error(i, &fs[i], j, &fs[j]).unwrap();
                    let ji = pair_error(j, &fs[j], i, &fs[i]).unwrap();
                    prop_assert_eq!(ij.error, [-ji.error[0], -ji.error[1]]);
                    prop_assert!((Vector2::from(ij.error) - Vector2::from(ij.shortcut_error)).norm() < 1e-10);
                    for k in 0..n {
                        if k == i || k == j { continue; }
                        let jk = pair_error(j, &fs[j], k, &fs[k]).unwrap();
                        let ik = pair_error(i, &fs[i], k, &fs[k]).unwrap();
                        let sum = Vector2::from(ij.shortcut_error) + Vector2::from(jk.shortcut_error);
                        prop_assert!((sum - Vector2::from(ik.shortcut_error)).norm() < 1e-12);
                        let direct = Vector2::from(ij.error) + Vector2::from(jk.error);
                        prop_assert!((direct - Vector2::from(ik.error)).norm() < 1e-10);
                    }
                }
            }
        }
    }
}
