use nalgebra::{DMatrix, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::GeometryError;

/// Relative singular-value floor below which the point set counts as collinear.
pub const COLLINEAR_TOLERANCE: f64 = 1e-9;
const AXIS_PROJECTION_FLOOR: f64 = 1e-6;

/// Subtract the arithmetic mean from every point.
pub fn demean_points(
    points: &[Vector3<f64>],
) -> Result<(Vector3<f64>, Vec<Vector3<f64>>), GeometryError> {
    if points.is_empty() {
        return Err(GeometryError::Empty);
    }
    if points.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
        return Err(GeometryError::NonFinite);
    }
    let centroid = points.iter().sum::<Vector3<f64>>() / points.len() as f64;
    let demeaned = points.iter().map(|p| p - centroid).collect();
    Ok((centroid, demeaned))
}

/// Best-fit plane through a point cloud and the ground frame G it defines.
///
/// `basis` columns are `[e1, e2, n]`: two in-plane axes and the unit normal,
/// forming a right-handed frame. G coordinates of a point are its offsets from
/// `centroid` along `e1` and `e2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundPlane {
    centroid: Vector3<f64>,
    basis: Matrix3<f64>,
    singular_values: [f64; 3],
    point_count: usize,
}

impl GroundPlane {
    /// Column of `basis` holding the plane normal.
    pub const NORMAL_INDEX: usize = 2;

    /// Construct directly from a frame; used by synthetic tests.
    pub fn from_frame(
        centroid: Vector3<f64>,
        e1: Vector3<f64>,
        normal: Vector3<f64>,
    ) -> Result<Self, GeometryError> {
        let n = normal
            .try_normalize(1e-12)
            .ok_or(GeometryError::Degenerate("zero normal"))?;
        let e1 = (e1 - n * e1.dot(&n))
            .try_normalize(1e-12)
            .ok_or(GeometryError::Degenerate("in-plane axis parallel to normal"))?;
        let e2 = n.cross(&e1);
        Ok(Self {
            centroid,
            basis: Matrix3::from_columns(&[e1, e2, n]),
            singular_values: [0.0; 3],
            point_count: 0,
        })
    }

    pub fn centroid(&self) -> Vector3<f64> {
        self.centroid
    }

    pub fn basis(&self) -> &Matrix3<f64> {
        &self.basis
    }

    pub fn normal(&self) -> Vector3<f64> {
        self.basis.column(Self::NORMAL_INDEX).into_owned()
    }

    pub fn axis(&self, i: usize) -> Vector3<f64> {
        self.basis.column(i).into_owned()
    }

    /// Descending.
    pub fn singular_values(&self) -> [f64; 3] {
        self.singular_values
    }

    pub fn point_count(&self) -> usize {
        self.point_count
    }

    /// `(g1, g2, h)`: in-plane coordinates and signed distance along the normal.
    pub fn frame_coordinates(&self, point: &Vector3<f64>) -> Vector3<f64> {
        self.basis.transpose() * (point - self.centroid)
    }

    /// G-frame coordinates of a point.
    pub fn project_to_ground(&self, point: &Vector3<f64>) -> Vector2<f64> {
        let c = self.frame_coordinates(point);
        Vector2::new(c.x, c.y)
    }

    pub fn out_of_plane(&self, point: &Vector3<f64>) -> f64 {
        self.normal().dot(&(point - self.centroid))
    }

    /// Point in the reconstruction frame with G coordinates `g` at height `h`.
    pub fn lift(&self, g: &Vector2<f64>, h: f64) -> Vector3<f64> {
        self.centroid + self.basis * Vector3::new(g.x, g.y, h)
    }

    /// Out-of-plane distance bound for plane membership: `3 sigma_min / sqrt(N)`.
    pub fn membership_threshold(&self) -> f64 {
        if self.point_count == 0 {
            return 0.0;
        }
        3.0 * self.singular_values[2] / (self.point_count as f64).sqrt()
    }

    pub fn is_member(&self, point: &Vector3<f64>) -> bool {
        self.out_of_plane(point).abs() <= self.membership_threshold()
    }

    /// Flip the normal toward the ground as seen from the cameras and align
    /// `e1` with the reference optical axis projected into the plane.
    ///
    /// With no cameras the normal keeps the sign chosen by [`fit_plane_svd`].
    /// If the reference axis is (nearly) parallel to the normal, the current
    /// `e1` is retained.
    pub fn oriented(
        &self,
        camera_centers: &[Vector3<f64>],
        reference_axis: Option<&Vector3<f64>>,
    ) -> Self {
        let mut n = self.normal();
        let mut e1 = self.axis(0);
        if !camera_centers.is_empty() {
            let down: Vector3<f64> = camera_centers
                .iter()
                .map(|c| self.centroid - c)
                .sum::<Vector3<f64>>()
                / camera_centers.len() as f64;
            if n.dot(&down) < 0.0 {
                n = -n;
            }
        }
        if let Some(axis) = reference_axis {
            let projected = axis - n * axis.dot(&n);
            if projected.norm() > AXIS_PROJECTION_FLOOR * axis.norm() {
                e1 = projected.normalize();
            }
        }
        let e2 = n.cross(&e1);
        Self {
            basis: Matrix3::from_columns(&[e1, e2, n]),
            ..self.clone()
        }
    }
}

/// Fit a plane to the points by singular value decomposition of the
/// mean-free point matrix.
///
/// The smallest right singular vector is the normal; its sign is chosen so
/// the normal has a non-negative third component and the in-plane axes are
/// the two leading principal directions, completed to a right-handed frame.
pub fn fit_plane_svd(points: &[Vector3<f64>]) -> Result<GroundPlane, GeometryError> {
    if points.len() < 3 {
        return Err(GeometryError::TooFewPoints(points.len()));
    }
    let (centroid, demeaned) = demean_points(points)?;
    let a = DMatrix::from_fn(demeaned.len(), 3, |r, c| demeaned[r][c]);
    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or(GeometryError::Degenerate("SVD did not converge"))?;
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let sv = order.map(|i| svd.singular_values[i]);
    if sv[0] == 0.0 || sv[1] <= COLLINEAR_TOLERANCE * sv[0] {
        return Err(GeometryError::Collinear);
    }
    let column = |k: usize| -> Vector3<f64> {
        let r = v_t.row(order[k]);
        Vector3::new(r[0], r[1], r[2])
    };
    let mut n = column(2);
    if n.z < 0.0 {
        n = -n;
    }
    let e1 = column(0);
    let e2 = n.cross(&e1);
    Ok(GroundPlane {
        centroid,
        basis: Matrix3::from_columns(&[e1, e2, n]),
        singular_values: sv,
        point_count: points.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Rotation3, Unit};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn square() -> Vec<Vector3<f64>> {
        vec![
            Vector3::new(1.0, 1.0, 0.0),
            Vector3::new(-1.0, 1.0, 0.0),
            Vector3::new(1.0, -1.0, 0.0),
            Vector3::new(-1.0, -1.0, 0.0),
        ]
    }

    #[test]
    fn demean_examples() {
        let (c, d) = demean_points(&[Vector3::new(1.0, 1.0, 1.0)]).unwrap();
        assert_eq!(c, Vector3::new(1.0, 1.0, 1.0));
        assert_eq!(d, vec![Vector3::zeros()]);
        let (c, d) = demean_points(&[Vector3::zeros(), Vector3::new(2.0, 0.0, 0.0)]).unwrap();
        assert_eq!(c, Vector3::new(1.0, 0.0, 0.0));
        assert_eq!(d, vec![Vector3::new(-1.0, 0.0, 0.0), Vector3::new(1.0, 0.0, 0.0)]);
        assert!(matches!(demean_points(&[]), Err(GeometryError::Empty)));
    }

    #[test]
    fn demeaned_random_points_sum_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<_> = (0..100)
            .map(|_| Vector3::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0)))
            .collect();
        let (_, d) = demean_points(&pts).unwrap();
        // Direct summation oracle.
        let mut sum = [0.0f64; 3];
        for p in &d {
            for k in 0..3 {
                sum[k] += p[k];
            }
        }
        assert!((sum[0].powi(2) + sum[1].powi(2) + sum[2].powi(2)).sqrt() < 1e-10);
    }

    #[test]
    fn square_on_xy_plane() {
        let plane = fit_plane_svd(&square()).unwrap();
        assert!((plane.normal() - Vector3::z()).norm() < 1e-12);
        assert!(plane.singular_values()[2] < 1e-12);
        assert!((plane.basis().determinant() - 1.0).abs() < 1e-12);
        let vtv = plane.basis().transpose() * plane.basis();
        assert!((vtv - Matrix3::identity()).norm() < 1e-9);
    }

    #[test]
    fn rotated_square_normal_follows_rotation() {
        let q = Rotation3::from_axis_angle(&Unit::new_normalize(Vector3::new(0.3, -1.0, 0.5)), 1.1);
        let pts: Vec<_> = square().iter().map(|p| q * p).collect();
        let plane = fit_plane_svd(&pts).unwrap();
        let expected = q * Vector3::z();
        assert!(plane.normal().dot(&expected).abs() > 1.0 - 1e-12);
    }

    #[test]
    fn noisy_plane_normal_within_half_degree() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = Unit::new_normalize(Vector3::new(0.2, 0.1, 1.0));
        let rot = Rotation3::rotation_between(&Vector3::z(), &n).unwrap();
        let normal_noise = rand_distr_normal(&mut rng, 500, 0.01);
        let pts: Vec<_> = normal_noise
            .iter()
            .map(|&h| rot * Vector3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), h) + Vector3::new(3.0, -2.0, 7.0))
            .collect();
        let plane = fit_plane_svd(&pts).unwrap();
        let angle = plane.normal().dot(&n).abs().min(1.0).acos();
        assert!(angle.to_degrees() < 0.5, "angle {angle}");
    }

    fn rand_distr_normal(rng: &mut ChaCha8Rng, count: usize, sigma: f64) -> Vec<f64> {
        // Box-Muller keeps the test free of extra dependencies.
        (0..count)
            .map(|_| {
                let u1: f64 = rng.random_range(1e-12..1.0);
                let u2: f64 = rng.random();
                sigma * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
            })
            .collect()
    }

    #[test]
    fn collinear_points_are_rejected() {
        let pts: Vec<_> = (0..5).map(|i| Vector3::new(i as f64, 2.0 * i as f64, 0.5)).collect();
        assert!(matches!(fit_plane_svd(&pts), Err(GeometryError::Collinear)));
        assert!(matches!(fit_plane_svd(&pts[..2]), Err(GeometryError::TooFewPoints(2))));
        let same = vec![Vector3::new(1.0, 1.0, 1.0); 4];
        assert!(matches!(fit_plane_svd(&same), Err(GeometryError::Collinear)));
    }

    #[test]
    fn ground_coordinates_round_trip() {
        let plane = fit_plane_svd(&square()).unwrap();
        assert_eq!(plane.project_to_ground(&plane.centroid()), Vector2::zeros());
        let g = plane.project_to_ground(&(plane.centroid() + plane.axis(0)));
        assert!((g - Vector2::new(1.0, 0.0)).norm() < 1e-15);
        let p = Vector3::new(0.3, -7.0, 2.5);
        let c = plane.frame_coordinates(&p);
        let back = plane.lift(&Vector2::new(c.x, c.y), c.z);
        assert!((back - p).norm() < 1e-12);
    }

    #[test]
    fn orientation_uses_cameras_and_reference_axis() {
        let plane = fit_plane_svd(&square()).unwrap();
        // Cameras at negative z look "down" along +z.
        let cams = [Vector3::new(0.0, 0.0, -3.0)];
        let axis = Vector3::new(0.0, 1.0, 1.0);
        let o = plane.oriented(&cams, Some(&axis));
        assert!((o.normal() - Vector3::z()).norm() < 1e-12);
        assert!((o.axis(0) - Vector3::y()).norm() < 1e-12);
        assert!((o.basis().determinant() - 1.0).abs() < 1e-12);
        let up = plane.oriented(&[Vector3::new(0.0, 0.0, 3.0)], None);
        assert!((up.normal() + Vector3::z()).norm() < 1e-12);
        assert!((up.basis().determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn membership_threshold_scales_with_residual() {
        let mut pts = square();
        pts.push(Vector3::new(0.0, 0.0, 0.01));
        let plane = fit_plane_svd(&pts).unwrap();
        let thr = plane.membership_threshold();
        assert!(thr > 0.0);
        assert!(plane.is_member(&(plane.centroid() + plane.normal() * thr * 0.5)));
        assert!(!plane.is_member(&(plane.centroid() + plane.normal() * thr * 2.0)));
    }
}
