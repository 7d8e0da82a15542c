//! Integrity diagnostics: interpatch drift, SSD surface topography and
//! registration ambiguity.

mod ambiguity;
mod interpatch;
mod surface;

pub use ambiguity::{
    ambiguity_scan, cluster_minima, joint_surface, mosaic_ambiguity, surface_report, AmbiguityReport,
    MinimumCluster, NearMinimum,
};
pub use interpatch::{drift_trend, interpatch_csv, interpatch_errors, pair_error, DriftTrend, InterpatchError};
pub use surface::{classify_surface, near_global_bound, surface_heatmap, SurfaceClass, SurfaceClassification};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::registration::RegistrationError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegrityError {
    #[error("need at least 2 patches with an SSD optimum, got {0}")]
    TooFewPatches(usize),
    #[error("need at least 3 interpatch pairs for a trend, got {0}")]
    TooFewPairs(usize),
    #[error("all interpatch distances are zero")]
    ZeroDistances,
    #[error("pair ({label_i}, {label_j}): direct and residual-difference errors differ by {gap:e}")]
    ShortcutMismatch { label_i: String, label_j: String, gap: f64 },
    #[error("classification needs a window of at least 5x5 shifts, got {0}x{1}")]
    WindowTooSmall(usize, usize),
    #[error("surface '{0}': minimum on the window boundary, classification unreliable")]
    BoundaryArgmin(String),
    #[error("surface '{0}' has no evaluated shifts")]
    EmptySurface(String),
    #[error("surfaces cover different shift windows")]
    WindowMismatch,
    #[error("csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Registration(#[from] RegistrationError),
}

/// Decision thresholds. Defaults follow the flat-surface description of
/// roughly 40 near-minimal shifts out of 441.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegrityConfig {
    /// Near-global tolerance as a share of the surface value range.
    pub near_tolerance: f64,
    pub flatness_threshold: f64,
    /// `lambda_2 / lambda_1` below which a surface is a trench.
    pub curvature_ratio: f64,
    /// Distance (pixels) beyond which a near-global shift is a second minimum.
    pub multimodal_distance: f64,
    /// Single-linkage distance (pixels) for clustering near-global shifts.
    pub linkage: f64,
    pub scan_half_width: i32,
    pub coverage_floor: f64,
}

impl Default for IntegrityConfig {
    fn default() -> Self {
        Self {
            near_tolerance: 0.05,
            flatness_threshold: 0.10,
            curvature_ratio: 0.15,
            multimodal_distance: 3.0,
            linkage: 3.0,
            scan_half_width: 60,
            coverage_floor: 0.5,
        }
    }
}
