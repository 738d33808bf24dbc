//! Point-cloud containers plus the neighborhood queries used by normal
//! estimation and region growing.

use std::collections::HashMap;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<Vector3<f64>>,
    /// Either empty or one color per point.
    #[serde(default)]
    pub colors: Vec<[u8; 3]>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn select(&self, indices: &[u32]) -> Vec<Vector3<f64>> {
        indices.iter().map(|&i| self.points[i as usize]).collect()
    }
}

/// A named index set into a cloud.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentMask {
    /// Producer-assigned label, e.g. the source object id.
    pub label: String,
    /// Sorted, unique point indices.
    pub indices: Vec<u32>,
}

impl SegmentMask {
    pub fn new(label: impl Into<String>, mut indices: Vec<u32>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        Self { label: label.into(), indices }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn intersection_len(&self, other: &SegmentMask) -> usize {
        sorted_intersection_len(&self.indices, &other.indices)
    }

    pub fn iou(&self, other: &SegmentMask) -> f64 {
        let inter = self.intersection_len(other);
        let union = self.len() + other.len() - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }
}

pub(crate) fn sorted_intersection_len(a: &[u32], b: &[u32]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// Uniform hash grid over a fixed point set.
pub struct VoxelGrid<'a> {
    points: &'a [Vector3<f64>],
    cell: f64,
    cells: HashMap<[i64; 3], Vec<u32>>,
}

impl<'a> VoxelGrid<'a> {
    pub fn new(points: &'a [Vector3<f64>], cell: f64) -> Self {
        let mut cells: HashMap<[i64; 3], Vec<u32>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(p, cell)).or_default().push(i as u32);
        }
        Self { points, cell, cells }
    }

    fn key(p: &Vector3<f64>, cell: f64) -> [i64; 3] {
        [(p.x / cell).floor() as i64, (p.y / cell).floor() as i64, (p.z / cell).floor() as i64]
    }

    /// Indices within `radius` of `p`, in ascending cell then insertion order.
    pub fn radius_neighbors(&self, p: &Vector3<f64>, radius: f64, out: &mut Vec<u32>) {
        out.clear();
        let reach = (radius / self.cell).ceil() as i64;
        let [cx, cy, cz] = Self::key(p, self.cell);
        let r2 = radius * radius;
        for dx in -reach..=reach {
            for dy in -reach..=reach {
                for dz in -reach..=reach {
                    if let Some(ids) = self.cells.get(&[cx + dx, cy + dy, cz + dz]) {
                        out.extend(ids.iter().copied().filter(|&i| (self.points[i as usize] - p).norm_squared() <= r2));
                    }
                }
            }
        }
    }
}

/// Per-point surface normal with a flatness measure.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalEstimate {
    pub normal: Vector3<f64>,
    /// Smallest eigenvalue over the eigenvalue sum; 0 on a perfect plane.
    pub curvature: f64,
}

/// PCA normals over radius neighborhoods, oriented toward `viewpoint`.
/// Points with fewer than three neighbors get `None`.
pub fn estimate_normals(points: &[Vector3<f64>], radius: f64, viewpoint: &Vector3<f64>) -> Vec<Option<NormalEstimate>> {
    let grid = VoxelGrid::new(points, radius);
    let mut neighbors = Vec::new();
    points
        .iter()
        .map(|p| {
            grid.radius_neighbors(p, radius, &mut neighbors);
            if neighbors.len() < 3 {
                return None;
            }
            let n = neighbors.len() as f64;
            let centroid = neighbors.iter().map(|&i| points[i as usize]).sum::<Vector3<f64>>() / n;
            let mut cov = Matrix3::zeros();
            for &i in &neighbors {
                let d = points[i as usize] - centroid;
                cov += d * d.transpose();
            }
            let eig = cov.symmetric_eigen();
            let (idx, min) = eig.eigenvalues.iter().copied().enumerate().min_by(|a, b| a.1.total_cmp(&b.1))?;
            let sum = eig.eigenvalues.sum();
            let mut normal = eig.eigenvectors.column(idx).into_owned().normalize();
            if normal.dot(&(viewpoint - p)) < 0.0 {
                normal = -normal;
            }
            normal
                .iter()
                .all(|v| v.is_finite())
                .then_some(NormalEstimate { normal, curvature: if sum > 0.0 { min.max(0.0) / sum } else { 0.0 } })
        })
        .collect()
}
