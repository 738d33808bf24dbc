//! Open-world affordance detection: planes by region growing, circles by
//! per-mask plane fitting and hull analysis, plus deduplication, stable ids
//! and the periodic refresh cadence.

mod circles;
mod planes;
mod refresh;

pub use circles::{assign_circle_ids, circles_similar, dedup_circles, detect_circles};
pub use planes::{assign_plane_ids, dedup_planes, extract_planes};
pub use refresh::{refresh_snapshot, run_refresh_loop, AffordanceSnapshot, SensorError, SensorSource, SimSensor};

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::geometry::{Circle3D, Plane, PlaneBasis};

pub type AffordanceId = String;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectionConfig {
    /// Inlier distance to a fitted plane, meters.
    pub d_in: f64,
    /// Minimum hull circularity for a circle.
    pub c_min: f64,
    /// Largest accepted circle radius, meters.
    pub r_max: f64,
    /// Dedup: largest center distance between similar circles, meters.
    pub delta_c: f64,
    /// Dedup: largest radius difference between similar circles, meters.
    pub delta_rad: f64,
    /// Seconds between refreshes.
    pub refresh_period: f64,
    pub plane_min_inliers: usize,
    /// Neighborhood radius for normals and region growing, meters.
    pub normal_radius: f64,
    /// Largest angle between a region's seed normal and a member's.
    pub region_angle: f64,
    /// Hypotheses per mask when fitting a circle's support plane.
    pub plane_iterations: usize,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            d_in: 0.005,
            c_min: 0.9,
            r_max: 0.07,
            delta_c: 0.05,
            delta_rad: 0.01,
            refresh_period: 5.0,
            plane_min_inliers: 300,
            normal_radius: 0.02,
            region_angle: 10f64.to_radians(),
            plane_iterations: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("`{0}` must be strictly positive")]
    NotPositive(&'static str),
    #[error("c_min must lie in (0, 1]")]
    CircularityRange,
}

impl DetectionConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("d_in", self.d_in),
            ("r_max", self.r_max),
            ("delta_c", self.delta_c),
            ("delta_rad", self.delta_rad),
            ("refresh_period", self.refresh_period),
            ("normal_radius", self.normal_radius),
            ("region_angle", self.region_angle),
        ];
        for (name, v) in positive {
            if v.is_nan() || v <= 0.0 {
                return Err(ConfigError::NotPositive(name));
            }
        }
        if self.plane_min_inliers == 0 {
            return Err(ConfigError::NotPositive("plane_min_inliers"));
        }
        if self.plane_iterations == 0 {
            return Err(ConfigError::NotPositive("plane_iterations"));
        }
        if !(self.c_min > 0.0 && self.c_min <= 1.0) {
            return Err(ConfigError::CircularityRange);
        }
        Ok(())
    }
}

/// A planar surface in the world frame. The normal faces the sensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaneAffordance {
    pub id: AffordanceId,
    pub plane: Plane,
    /// Convex boundary of the inliers, on the plane.
    pub boundary: Vec<Vector3<f64>>,
    pub detected_at: f64,
}

impl PlaneAffordance {
    /// Area centroid of the boundary polygon.
    pub fn centroid(&self) -> Vector3<f64> {
        if self.boundary.len() < 3 {
            return self.plane.anchor();
        }
        let basis = PlaneBasis::new(self.boundary[0], self.plane.normal);
        let flat: Vec<_> = self.boundary.iter().map(|p| basis.project(p)).collect();
        let (mut area, mut c) = (0.0, Vector2::zeros());
        for (i, a) in flat.iter().enumerate() {
            let b = flat[(i + 1) % flat.len()];
            let cross = a.x * b.y - b.x * a.y;
            area += cross;
            c += (a + b) * cross;
        }
        if area.abs() < 1e-15 {
            return self.boundary.iter().sum::<Vector3<f64>>() / self.boundary.len() as f64;
        }
        basis.lift(&(c / (3.0 * area)))
    }
}

/// A circular rim in the world frame. The axis faces the sensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircleAffordance {
    pub id: AffordanceId,
    pub circle: Circle3D,
    /// Label of the mask the circle came from.
    pub source_mask: String,
    /// Indices of that mask in its frame. Only meaningful within one frame.
    #[serde(skip)]
    pub mask_indices: Vec<u32>,
    pub inlier_ratio: f64,
    pub detected_at: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AffordanceKind {
    Plane,
    Circle,
}

/// Deterministic display hue in [0, 360) for an affordance id.
pub fn hue_for(id: &str) -> f64 {
    (crate::hashing::stable_u64(id.as_bytes()) % 3600) as f64 / 10.0
}

fn next_id(prefix: &str, counter: &mut u64) -> AffordanceId {
    let id = format!("{prefix}-{counter}");
    *counter += 1;
    id
}

#[cfg(test)]
mod tests;
