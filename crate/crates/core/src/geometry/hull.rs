use nalgebra::Vector2;
use std::f64::consts::PI;

use super::GeometryError;

fn cross(o: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Convex hull by monotone chain. Returns the strictly convex vertices in
/// counterclockwise order.
pub fn convex_hull_2d(points: &[Vector2<f64>]) -> Result<Vec<Vector2<f64>>, GeometryError> {
    let mut pts: Vec<_> = points.to_vec();
    if pts.len() < 3 {
        return Err(GeometryError::DegenerateHull);
    }
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();

    let mut lower: Vec<Vector2<f64>> = Vec::with_capacity(pts.len());
    for p in &pts {
        while lower.len() >= 2 && cross(&lower[lower.len() - 2], &lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(*p);
    }
    let mut upper: Vec<Vector2<f64>> = Vec::with_capacity(pts.len());
    for p in pts.iter().rev() {
        while upper.len() >= 2 && cross(&upper[upper.len() - 2], &upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(*p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    if lower.len() < 3 {
        return Err(GeometryError::DegenerateHull);
    }
    Ok(lower)
}

/// Signed shoelace area; positive for counterclockwise polygons.
pub fn signed_area(polygon: &[Vector2<f64>]) -> f64 {
    let n = polygon.len();
    (0..n)
        .map(|i| {
            let (a, b) = (polygon[i], polygon[(i + 1) % n]);
            a.x * b.y - b.x * a.y
        })
        .sum::<f64>()
        / 2.0
}

pub fn perimeter(polygon: &[Vector2<f64>]) -> f64 {
    let n = polygon.len();
    (0..n).map(|i| (polygon[(i + 1) % n] - polygon[i]).norm()).sum()
}

/// Roundness `4π·Area / Perimeter²`; 1 for a disk, π/4 for a square.
pub fn circularity(polygon: &[Vector2<f64>]) -> Result<f64, GeometryError> {
    if polygon.len() < 3 {
        return Err(GeometryError::DegenerateHull);
    }
    let area = signed_area(polygon).abs();
    let perim = perimeter(polygon);
    if area <= f64::EPSILON * perim * perim || perim == 0.0 {
        return Err(GeometryError::DegenerateHull);
    }
    Ok(4.0 * PI * area / (perim * perim))
}

/// Whether `p` is inside or on the boundary of a counterclockwise convex
/// polygon, with an absolute slack `eps`.
pub fn convex_contains(polygon: &[Vector2<f64>], p: &Vector2<f64>, eps: f64) -> bool {
    let n = polygon.len();
    (0..n).all(|i| {
        let (a, b) = (polygon[i], polygon[(i + 1) % n]);
        let edge = b - a;
        cross(&a, &b, p) >= -eps * edge.norm()
    })
}
