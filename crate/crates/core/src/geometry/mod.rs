//! Ground-plane extraction and the G-to-S similarity transform.

mod plane;
mod similarity;

pub use plane::{demean_points, fit_plane_svd, GroundPlane, COLLINEAR_TOLERANCE};
pub use similarity::{wrap_angle, SimilarityTransform2D};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point list is empty")]
    Empty,
    #[error("plane fit needs at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("collinear points: the set does not span a plane")]
    Collinear,
    #[error("non-finite coordinate")]
    NonFinite,
    #[error("scale must be positive and finite, got {0}")]
    InvalidScale(f64),
    #[error("degenerate geometry: {0}")]
    Degenerate(&'static str),
}
