use nalgebra::{Vector2, Vector3};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::GeometryError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Circle2D {
    pub center: Vector2<f64>,
    pub radius: f64,
}

/// Circle in space: center, unit axis (normal of its plane) and radius.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Circle3D {
    pub center: Vector3<f64>,
    pub axis: Vector3<f64>,
    pub radius: f64,
}

impl Circle2D {
    pub fn contains(&self, p: &Vector2<f64>, eps: f64) -> bool {
        (p - self.center).norm() <= self.radius + eps
    }

    fn from_diameter(a: &Vector2<f64>, b: &Vector2<f64>) -> Self {
        Self { center: (a + b) / 2.0, radius: (a - b).norm() / 2.0 }
    }

    /// Circumcircle; falls back to the widest diameter circle for collinear
    /// triples.
    fn from_three(a: &Vector2<f64>, b: &Vector2<f64>, c: &Vector2<f64>) -> Self {
        let (bx, by) = (b.x - a.x, b.y - a.y);
        let (cx, cy) = (c.x - a.x, c.y - a.y);
        let d = 2.0 * (bx * cy - by * cx);
        let scale = (bx * bx + by * by).max(cx * cx + cy * cy);
        if d.abs() <= 1e-14 * scale {
            let pairs = [(a, b), (a, c), (b, c)];
            return pairs
                .iter()
                .map(|(p, q)| Self::from_diameter(p, q))
                .max_by(|x, y| x.radius.total_cmp(&y.radius))
                .unwrap();
        }
        let b2 = bx * bx + by * by;
        let c2 = cx * cx + cy * cy;
        let ux = (cy * b2 - by * c2) / d;
        let uy = (bx * c2 - cx * b2) / d;
        Self { center: Vector2::new(a.x + ux, a.y + uy), radius: (ux * ux + uy * uy).sqrt() }
    }
}

const MEC_SHUFFLE_SEED: u64 = 0x5eed_c1c1e;

/// Smallest circle containing every point (randomized incremental
/// construction, expected linear time). The shuffle uses a fixed seed so the
/// result is reproducible.
pub fn min_enclosing_circle(points: &[Vector2<f64>]) -> Result<Circle2D, GeometryError> {
    if points.is_empty() {
        return Err(GeometryError::EmptyInput);
    }
    let mut pts = points.to_vec();
    pts.shuffle(&mut ChaCha8Rng::seed_from_u64(MEC_SHUFFLE_SEED));
    let eps = |c: &Circle2D| 1e-12 * (1.0 + c.radius);

    let mut circle = Circle2D { center: pts[0], radius: 0.0 };
    for i in 1..pts.len() {
        if circle.contains(&pts[i], eps(&circle)) {
            continue;
        }
        circle = Circle2D { center: pts[i], radius: 0.0 };
        for j in 0..i {
            if circle.contains(&pts[j], eps(&circle)) {
                continue;
            }
            circle = Circle2D::from_diameter(&pts[i], &pts[j]);
            for k in 0..j {
                if !circle.contains(&pts[k], eps(&circle)) {
                    circle = Circle2D::from_three(&pts[i], &pts[j], &pts[k]);
                }
            }
        }
    }
    Ok(circle)
}
