use std::collections::VecDeque;

use super::circles::claim;
use super::{next_id, DetectionConfig, PlaneAffordance};
use crate::cloud::{estimate_normals, VoxelGrid};
use crate::geometry::{convex_contains, convex_hull_2d, fit_plane_most_points, project_to_plane, PlaneBasis};
use crate::scenesim::SensorFrame;

const SIMILAR_NORMAL_COS: f64 = 0.996_194_698; // cos 5°

/// Region growing over estimated normals, then a plane fit per region.
/// Regions grow from the flattest points outward; a neighbor joins when its
/// normal is close to the seed's and it sits on the local tangent plane, so
/// parallel surfaces separated by a step stay apart.
pub fn extract_planes(frame: &SensorFrame, config: &DetectionConfig) -> Vec<PlaneAffordance> {
    if frame.cloud.is_empty() {
        return Vec::new();
    }
    let sensor = frame.camera.position;
    let points = frame.world_points();
    let normals = estimate_normals(&points, config.normal_radius, &sensor);
    let grid = VoxelGrid::new(&points, config.normal_radius);
    let cos_limit = config.region_angle.cos();

    let mut seeds: Vec<usize> = (0..points.len()).filter(|&i| normals[i].is_some()).collect();
    seeds.sort_by(|&a, &b| {
        let (ca, cb) = (normals[a].unwrap().curvature, normals[b].unwrap().curvature);
        ca.total_cmp(&cb).then(a.cmp(&b))
    });
    let mut assigned = vec![false; points.len()];
    let mut neighbors = Vec::new();
    let mut queue = VecDeque::new();
    let mut found = Vec::new();
    for seed in seeds {
        if assigned[seed] {
            continue;
        }
        let seed_normal = normals[seed].unwrap().normal;
        assigned[seed] = true;
        queue.push_back(seed);
        let mut region = vec![seed];
        while let Some(i) = queue.pop_front() {
            let ni = normals[i].unwrap().normal;
            grid.radius_neighbors(&points[i], config.normal_radius, &mut neighbors);
            for &j in &neighbors {
                let j = j as usize;
                if assigned[j] {
                    continue;
                }
                let Some(nj) = normals[j] else { continue };
                if nj.normal.dot(&seed_normal) >= cos_limit && ni.dot(&(points[j] - points[i])).abs() <= config.d_in {
                    assigned[j] = true;
                    region.push(j);
                    queue.push_back(j);
                }
            }
        }
        if region.len() < config.plane_min_inliers {
            continue;
        }
        let region_points: Vec<_> = region.iter().map(|&i| points[i]).collect();
        let Ok(plane) = fit_plane_most_points(&region_points, config.d_in, config.plane_iterations, seed as u64) else {
            continue;
        };
        let plane = plane.oriented_toward(&sensor);
        let inliers: Vec<_> =
            region_points.into_iter().filter(|p| plane.signed_distance(p).abs() <= config.d_in).collect();
        if inliers.len() < config.plane_min_inliers {
            continue;
        }
        let (basis, flat) = project_to_plane(&inliers, &plane);
        let Ok(hull) = convex_hull_2d(&flat) else { continue };
        let mut plane = plane;
        plane.inlier_count = inliers.len();
        found.push(PlaneAffordance {
            id: format!("candidate:{}", found.len()),
            plane,
            boundary: hull.iter().map(|q| basis.lift(q)).collect(),
            detected_at: frame.timestamp,
        });
    }
    dedup_planes(&found)
}

fn overlaps(a: &PlaneAffordance, b: &PlaneAffordance) -> bool {
    let basis = PlaneBasis::new(a.plane.anchor(), a.plane.normal);
    let poly: Vec<_> = a.boundary.iter().map(|p| basis.project(p)).collect();
    convex_contains(&poly, &basis.project(&b.centroid()), 1e-9)
}

/// Near-parallel, near-coincident planes where one contains the other's
/// centroid. The plane with more inliers survives.
pub fn dedup_planes(planes: &[PlaneAffordance]) -> Vec<PlaneAffordance> {
    let mut order: Vec<&PlaneAffordance> = planes.iter().collect();
    order.sort_by(|a, b| b.plane.inlier_count.cmp(&a.plane.inlier_count).then_with(|| a.id.cmp(&b.id)));
    let mut kept: Vec<PlaneAffordance> = Vec::new();
    for p in order {
        let dup = kept.iter().any(|k| {
            k.plane.normal.dot(&p.plane.normal) >= SIMILAR_NORMAL_COS
                && (k.plane.offset - p.plane.offset).abs() <= 0.01
                && (overlaps(k, p) || overlaps(p, k))
        });
        if !dup {
            kept.push(p.clone());
        }
    }
    kept
}

/// Carries ids across refreshes by matching orientation, offset and
/// centroid; unmatched planes get fresh ids from `counter`.
pub fn assign_plane_ids(planes: &mut [PlaneAffordance], previous: &[PlaneAffordance], counter: &mut u64) {
    let mut pairs = Vec::new();
    for (i, a) in planes.iter().enumerate() {
        for (j, b) in previous.iter().enumerate() {
            let d = (a.centroid() - b.centroid()).norm();
            if a.plane.normal.dot(&b.plane.normal) >= SIMILAR_NORMAL_COS
                && (a.plane.offset - b.plane.offset).abs() <= 0.02
                && d <= 0.1
            {
                pairs.push((d, i, j));
            }
        }
    }
    claim(pairs, planes.len(), previous.len()).into_iter().zip(planes.iter_mut()).for_each(|(m, p)| {
        p.id = match m {
            Some(j) => previous[j].id.clone(),
            None => next_id("plane", counter),
        }
    });
}
