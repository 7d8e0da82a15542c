use nalgebra::{Matrix2, Matrix2x4, Vector2};
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

use super::GeometryError;

/// Wrap an angle to `(-pi, pi]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let a = theta.rem_euclid(TAU);
    if a > PI {
        a - TAU
    } else {
        a
    }
}

#[derive(Deserialize)]
struct RawSimilarity {
    s: f64,
    theta: f64,
    t_p: f64,
    t_q: f64,
}

/// Four-parameter similarity from the ground frame G to satellite pixels S:
/// `y = s R(theta) x + t`.
///
/// `s` is satellite pixels per G unit and `t = (t_p, t_q)` is in satellite
/// pixels (column, row).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSimilarity")]
pub struct SimilarityTransform2D {
    s: f64,
    theta: f64,
    t_p: f64,
    t_q: f64,
}

impl TryFrom<RawSimilarity> for SimilarityTransform2D {
    type Error = GeometryError;

    fn try_from(raw: RawSimilarity) -> Result<Self, Self::Error> {
        Self::new(raw.s, raw.theta, raw.t_p, raw.t_q)
    }
}

impl SimilarityTransform2D {
    pub fn new(s: f64, theta: f64, t_p: f64, t_q: f64) -> Result<Self, GeometryError> {
        if !(s.is_finite() && s > 0.0) {
            return Err(GeometryError::InvalidScale(s));
        }
        if !(theta.is_finite() && t_p.is_finite() && t_q.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        Ok(Self {
            s,
            theta: wrap_angle(theta),
            t_p,
            t_q,
        })
    }

    pub fn identity() -> Self {
        Self {
            s: 1.0,
            theta: 0.0,
            t_p: 0.0,
            t_q: 0.0,
        }
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn t_p(&self) -> f64 {
        self.t_p
    }

    pub fn t_q(&self) -> f64 {
        self.t_q
    }

    pub fn translation(&self) -> Vector2<f64> {
        Vector2::new(self.t_p, self.t_q)
    }

    pub fn rotation(&self) -> Matrix2<f64> {
        let (sin, cos) = self.theta.sin_cos();
        Matrix2::new(cos, -sin, sin, cos)
    }

    /// `[s, theta, t_p, t_q]`
    pub fn to_array(&self) -> [f64; 4] {
        [self.s, self.theta, self.t_p, self.t_q]
    }

    pub fn apply(&self, x: &Vector2<f64>) -> Vector2<f64> {
        self.rotation() * x * self.s + self.translation()
    }

    pub fn apply_inverse(&self, y: &Vector2<f64>) -> Vector2<f64> {
        self.rotation().transpose() * (y - self.translation()) / self.s
    }

    /// The transform `x -> outer(self(x))`.
    pub fn then(&self, outer: &Self) -> Self {
        let t = outer.rotation() * self.translation() * outer.s + outer.translation();
        Self {
            s: self.s * outer.s,
            theta: wrap_angle(self.theta + outer.theta),
            t_p: t.x,
            t_q: t.y,
        }
    }

    pub fn inverse(&self) -> Self {
        let t = -(self.rotation().transpose() * self.translation()) / self.s;
        Self {
            s: 1.0 / self.s,
            theta: wrap_angle(-self.theta),
            t_p: t.x,
            t_q: t.y,
        }
    }

    /// Additive state update `alpha -> alpha + delta`.
    pub fn updated(&self, delta: &[f64; 4]) -> Result<Self, GeometryError> {
        Self::new(
            self.s + delta[0],
            self.theta + delta[1],
            self.t_p + delta[2],
            self.t_q + delta[3],
        )
    }

    /// Jacobian of `apply` at `x` with respect to `[s, theta, t_p, t_q]`.
    pub fn jacobian(&self, x: &Vector2<f64>) -> Matrix2x4<f64> {
        let (sin, cos) = self.theta.sin_cos();
        let (xp, xq) = (x.x, x.y);
        Matrix2x4::new(
            cos * xp - sin * xq,
            self.s * (-sin * xp - cos * xq),
            1.0,
            0.0,
            sin * xp + cos * xq,
            self.s * (cos * xp - sin * xq),
            0.0,
            1.0,
        )
    }

    /// The unique similarity mapping `a0 -> b0` and `a1 -> b1`.
    pub fn from_point_pairs(
        a0: &Vector2<f64>,
        a1: &Vector2<f64>,
        b0: &Vector2<f64>,
        b1: &Vector2<f64>,
    ) -> Result<Self, GeometryError> {
        let da = a1 - a0;
        let db = b1 - b0;
        let na = da.norm();
        if na == 0.0 {
            return Err(GeometryError::Degenerate("coincident source points"));
        }
        let s = db.norm() / na;
        let theta = db.y.atan2(db.x) - da.y.atan2(da.x);
        let partial = Self::new(s, theta, 0.0, 0.0)?;
        let t = b0 - partial.apply(a0);
        Self::new(s, theta, t.x, t.y)
    }
}
