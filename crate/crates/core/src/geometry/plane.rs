use nalgebra::{Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::GeometryError;

/// Infinite plane `normal · p + offset = 0`.
///
/// `offset` is the signed distance of the origin from the plane, measured
/// along `normal`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub normal: Vector3<f64>,
    pub offset: f64,
    pub inlier_count: usize,
}

impl Plane {
    pub fn from_point_normal(point: &Vector3<f64>, normal: &Vector3<f64>) -> Self {
        let normal = normal.normalize();
        Self { normal, offset: -normal.dot(point), inlier_count: 0 }
    }

    pub fn signed_distance(&self, p: &Vector3<f64>) -> f64 {
        self.normal.dot(p) + self.offset
    }

    pub fn project_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        p - self.normal * self.signed_distance(p)
    }

    /// The point of the plane closest to the origin.
    pub fn anchor(&self) -> Vector3<f64> {
        -self.normal * self.offset
    }

    pub fn flipped(&self) -> Self {
        Self { normal: -self.normal, offset: -self.offset, inlier_count: self.inlier_count }
    }

    /// Same plane with the normal on the side of `viewpoint`.
    pub fn oriented_toward(&self, viewpoint: &Vector3<f64>) -> Self {
        if self.signed_distance(viewpoint) < 0.0 {
            self.flipped()
        } else {
            *self
        }
    }

    pub fn count_inliers(&self, points: &[Vector3<f64>], inlier_dist: f64) -> usize {
        points.iter().filter(|p| self.signed_distance(p).abs() <= inlier_dist).count()
    }

    pub fn basis(&self) -> PlaneBasis {
        PlaneBasis::new(self.anchor(), self.normal)
    }
}

/// Orthonormal in-plane coordinate system.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlaneBasis {
    pub origin: Vector3<f64>,
    pub u: Vector3<f64>,
    pub v: Vector3<f64>,
    pub normal: Vector3<f64>,
}

impl PlaneBasis {
    pub fn new(origin: Vector3<f64>, normal: Vector3<f64>) -> Self {
        let normal = normal.normalize();
        let seed = if normal.x.abs() <= normal.y.abs() && normal.x.abs() <= normal.z.abs() {
            Vector3::x()
        } else if normal.y.abs() <= normal.z.abs() {
            Vector3::y()
        } else {
            Vector3::z()
        };
        let u = normal.cross(&seed).normalize();
        let v = normal.cross(&u);
        Self { origin, u, v, normal }
    }

    pub fn project(&self, p: &Vector3<f64>) -> Vector2<f64> {
        let d = p - self.origin;
        Vector2::new(d.dot(&self.u), d.dot(&self.v))
    }

    pub fn lift(&self, q: &Vector2<f64>) -> Vector3<f64> {
        self.origin + self.u * q.x + self.v * q.y
    }
}

/// Orthogonal projection of `points` onto `plane`, in the plane's own basis.
pub fn project_to_plane(points: &[Vector3<f64>], plane: &Plane) -> (PlaneBasis, Vec<Vector2<f64>>) {
    let basis = plane.basis();
    let projected = points.iter().map(|p| basis.project(p)).collect();
    (basis, projected)
}

/// Least-squares plane through `points` (smallest-eigenvalue direction of the
/// scatter matrix). `None` when fewer than 3 points are given.
pub fn fit_plane_least_squares(points: &[Vector3<f64>]) -> Option<Plane> {
    if points.len() < 3 {
        return None;
    }
    let n = points.len() as f64;
    let centroid = points.iter().sum::<Vector3<f64>>() / n;
    let mut scatter = Matrix3::zeros();
    for p in points {
        let d = p - centroid;
        scatter += d * d.transpose();
    }
    let eig = scatter.symmetric_eigen();
    let (idx, _) = eig.eigenvalues.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1))?;
    let normal = eig.eigenvectors.column(idx).into_owned();
    if !normal.iter().all(|v| v.is_finite()) || normal.norm() < 0.5 {
        return None;
    }
    let mut plane = Plane::from_point_normal(&centroid, &normal);
    plane.inlier_count = points.len();
    Some(plane)
}

/// Finds the plane supported by the most points.
///
/// Plane hypotheses through random point triples are scored by how many
/// points lie within `inlier_dist`; the winner is then refit by least squares
/// on its inliers, and the refit is kept only if it does not lose support.
pub fn fit_plane_most_points(
    points: &[Vector3<f64>],
    inlier_dist: f64,
    iterations: usize,
    seed: u64,
) -> Result<Plane, GeometryError> {
    if points.len() < 3 {
        return Err(GeometryError::TooFewPoints { needed: 3, got: points.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = points.len();
    let mut best: Option<Plane> = None;
    for _ in 0..iterations.max(1) {
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let mut k = rng.random_range(0..n - 2);
        for taken in [i.min(j), i.max(j)] {
            if k >= taken {
                k += 1;
            }
        }
        let (a, b, c) = (points[i], points[j], points[k]);
        let normal = (b - a).cross(&(c - a));
        let scale = (b - a).norm() * (c - a).norm();
        if normal.norm() <= 1e-12 * scale.max(1e-300) {
            continue;
        }
        let mut plane = Plane::from_point_normal(&a, &normal);
        plane.inlier_count = plane.count_inliers(points, inlier_dist);
        if best.is_none_or(|b| plane.inlier_count > b.inlier_count) {
            best = Some(plane);
            if plane.inlier_count == n {
                break;
            }
        }
    }
    let best = best.ok_or(GeometryError::Degenerate)?;
    let inliers: Vec<_> = points.iter().copied().filter(|p| best.signed_distance(p).abs() <= inlier_dist).collect();
    let refit = fit_plane_least_squares(&inliers).map(|mut p| {
        p.inlier_count = p.count_inliers(points, inlier_dist);
        p
    });
    Ok(match refit {
        Some(r) if r.inlier_count >= best.inlier_count => r,
        _ => best,
    })
}
