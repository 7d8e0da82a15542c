use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CameraError {
    #[error("unsupported camera model {0:?}; only PINHOLE and SIMPLE_RADIAL are accepted")]
    UnsupportedModel(String),
    #[error("camera dimensions must be positive, got {width}x{height}")]
    Dimensions { width: u32, height: u32 },
    #[error("{model} expects {expected} parameters, got {actual}")]
    Arity {
        model: CameraModel,
        expected: usize,
        actual: usize,
    },
    #[error("camera parameters must be finite")]
    NonFinite,
    #[error("focal length must be positive, got {0}")]
    Focal(f64),
    #[error("principal point ({cx}, {cy}) lies outside the {width}x{height} image")]
    PrincipalPoint {
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CameraModel {
    /// `fx, fy, cx, cy`
    Pinhole,
    /// `f, cx, cy, k`
    SimpleRadial,
}

impl CameraModel {
    pub fn arity(self) -> usize {
        4
    }

    pub fn name(self) -> &'static str {
        match self {
            CameraModel::Pinhole => "PINHOLE",
            CameraModel::SimpleRadial => "SIMPLE_RADIAL",
        }
    }

    pub fn from_name(name: &str) -> Result<Self, CameraError> {
        match name {
            "PINHOLE" => Ok(CameraModel::Pinhole),
            "SIMPLE_RADIAL" => Ok(CameraModel::SimpleRadial),
            other => Err(CameraError::UnsupportedModel(other.to_string())),
        }
    }
}

impl fmt::Display for CameraModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Intrinsics in COLMAP's pixel convention: the center of the top-left pixel
/// sits at `(0.5, 0.5)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    model: CameraModel,
    width: u32,
    height: u32,
    params: Vec<f64>,
}

impl CameraIntrinsics {
    pub fn new(
        model: CameraModel,
        width: u32,
        height: u32,
        params: Vec<f64>,
    ) -> Result<Self, CameraError> {
        if width == 0 || height == 0 {
            return Err(CameraError::Dimensions { width, height });
        }
        if params.len() != model.arity() {
            return Err(CameraError::Arity {
                model,
                expected: model.arity(),
                actual: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(CameraError::NonFinite);
        }
        let cam = Self {
            model,
            width,
            height,
            params,
        };
        let (fx, fy) = cam.focal_lengths();
        for f in [fx, fy] {
            if f <= 0.0 {
                return Err(CameraError::Focal(f));
            }
        }
        let (cx, cy) = cam.principal_point();
        if !(0.0..=f64::from(width)).contains(&cx) || !(0.0..=f64::from(height)).contains(&cy) {
            return Err(CameraError::PrincipalPoint {
                cx,
                cy,
                width,
                height,
            });
        }
        Ok(cam)
    }

    pub fn pinhole(width: u32, height: u32, fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self, CameraError> {
        Self::new(CameraModel::Pinhole, width, height, vec![fx, fy, cx, cy])
    }

    pub fn model(&self) -> CameraModel {
        self.model
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn focal_lengths(&self) -> (f64, f64) {
        match self.model {
            CameraModel::Pinhole => (self.params[0], self.params[1]),
            CameraModel::SimpleRadial => (self.params[0], self.params[0]),
        }
    }

    pub fn principal_point(&self) -> (f64, f64) {
        match self.model {
            CameraModel::Pinhole => (self.params[2], self.params[3]),
            CameraModel::SimpleRadial => (self.params[1], self.params[2]),
        }
    }

    fn radial(&self) -> f64 {
        match self.model {
            CameraModel::Pinhole => 0.0,
            CameraModel::SimpleRadial => self.params[3],
        }
    }

    /// Normalized image-plane point (`x/z`, `y/z`) to pixel coordinates,
    /// applying radial distortion when the model carries it.
    pub fn project(&self, x: f64, y: f64) -> (f64, f64) {
        let k = self.radial();
        let scale = 1.0 + k * (x * x + y * y);
        let (fx, fy) = self.focal_lengths();
        let (cx, cy) = self.principal_point();
        (fx * x * scale + cx, fy * y * scale + cy)
    }

    /// Pixel coordinates to the undistorted normalized image plane.
    ///
    /// Returns `None` if the radial inversion fails to converge, which only
    /// happens far outside the calibrated field of view.
    pub fn unproject(&self, u: f64, v: f64) -> Option<(f64, f64)> {
        let (fx, fy) = self.focal_lengths();
        let (cx, cy) = self.principal_point();
        let xd = (u - cx) / fx;
        let yd = (v - cy) / fy;
        let k = self.radial();
        if k == 0.0 {
            return Some((xd, yd));
        }
        let (mut x, mut y) = (xd, yd);
        for _ in 0..100 {
            let scale = 1.0 + k * (x * x + y * y);
            if scale <= 0.0 {
                return None;
            }
            let (nx, ny) = (xd / scale, yd / scale);
            let step = (nx - x).abs().max((ny - y).abs());
            x = nx;
            y = ny;
            if step < 1e-14 {
                return Some((x, y));
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validates_invariants() {
        assert!(CameraIntrinsics::pinhole(640, 480, 500.0, 500.0, 320.0, 240.0).is_ok());
        assert_eq!(
            CameraIntrinsics::pinhole(640, 480, -1.0, 500.0, 320.0, 240.0),
            Err(CameraError::Focal(-1.0))
        );
        assert!(matches!(
            CameraIntrinsics::pinhole(640, 480, 500.0, 500.0, 700.0, 240.0),
            Err(CameraError::PrincipalPoint { .. })
        ));
        assert!(matches!(
            CameraIntrinsics::new(CameraModel::SimpleRadial, 10, 10, vec![1.0, 5.0]),
            Err(CameraError::Arity { expected: 4, actual: 2, .. })
        ));
        assert!(matches!(CameraModel::from_name("OPENCV"), Err(CameraError::UnsupportedModel(_))));
        assert!(CameraIntrinsics::pinhole(0, 480, 1.0, 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn radial_round_trip() {
        let cam = CameraIntrinsics::new(CameraModel::SimpleRadial, 320, 240, vec![250.0, 160.0, 120.0, -0.08]).unwrap();
        for &(x, y) in &[(0.0, 0.0), (0.3, -0.2), (-0.6, 0.45)] {
            let (u, v) = cam.project(x, y);
            let (bx, by) = cam.unproject(u, v).unwrap();
            assert!((bx - x).abs() < 1e-12 && (by - y).abs() < 1e-12);
        }
    }
}
