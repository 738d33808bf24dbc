//! Pluggable image-mask producers. The detection pipeline consumes masks
//! without caring where they came from.

use std::collections::VecDeque;

use nalgebra::Vector3;

use super::SensorFrame;
use crate::cloud::{estimate_normals, SegmentMask, VoxelGrid};

pub trait Segmenter {
    fn segment(&self, frame: &SensorFrame) -> Vec<SegmentMask>;
}

/// Passes through the renderer's per-object masks.
#[derive(Clone, Copy, Debug, Default)]
pub struct GroundTruthSegmenter;

impl Segmenter for GroundTruthSegmenter {
    fn segment(&self, frame: &SensorFrame) -> Vec<SegmentMask> {
        frame.masks.clone()
    }
}

/// Region growing over estimated normals and point colors.
#[derive(Clone, Copy, Debug)]
pub struct RegionGrowingSegmenter {
    /// Neighborhood radius for normals and adjacency, meters.
    pub radius: f64,
    pub max_normal_angle: f64,
    /// Euclidean RGB distance.
    pub max_color_distance: f64,
    pub min_region: usize,
}

impl Default for RegionGrowingSegmenter {
    fn default() -> Self {
        Self { radius: 0.015, max_normal_angle: 20f64.to_radians(), max_color_distance: 40.0, min_region: 30 }
    }
}

fn color_distance(a: [u8; 3], b: [u8; 3]) -> f64 {
    a.iter().zip(&b).map(|(x, y)| (*x as f64 - *y as f64).powi(2)).sum::<f64>().sqrt()
}

impl Segmenter for RegionGrowingSegmenter {
    fn segment(&self, frame: &SensorFrame) -> Vec<SegmentMask> {
        let points = &frame.cloud.points;
        let colors = &frame.cloud.colors;
        let normals = estimate_normals(points, self.radius, &Vector3::zeros());
        let grid = VoxelGrid::new(points, self.radius);
        let cos_limit = self.max_normal_angle.cos();
        let mut label = vec![usize::MAX; points.len()];
        let mut masks = Vec::new();
        let mut neighbors = Vec::new();
        let mut queue = VecDeque::new();
        for seed in 0..points.len() {
            if label[seed] != usize::MAX || normals[seed].is_none() {
                continue;
            }
            let id = masks.len();
            let mut members = vec![seed as u32];
            label[seed] = id;
            queue.push_back(seed);
            while let Some(i) = queue.pop_front() {
                let ni = normals[i].unwrap().normal;
                grid.radius_neighbors(&points[i], self.radius, &mut neighbors);
                for &j in &neighbors {
                    let j = j as usize;
                    if label[j] != usize::MAX {
                        continue;
                    }
                    let Some(nj) = normals[j] else { continue };
                    let same_color =
                        colors.is_empty() || color_distance(colors[i], colors[j]) <= self.max_color_distance;
                    if ni.dot(&nj.normal) >= cos_limit && same_color {
                        label[j] = id;
                        members.push(j as u32);
                        queue.push_back(j);
                    }
                }
            }
            // Keep ids dense even for rejected regions: they are dropped below.
            masks.push(members);
        }
        masks
            .into_iter()
            .filter(|m| m.len() >= self.min_region)
            .enumerate()
            .map(|(k, m)| SegmentMask::new(format!("region_{k}"), m))
            .collect()
    }
}
