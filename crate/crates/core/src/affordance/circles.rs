use super::{next_id, CircleAffordance, DetectionConfig};
use crate::cloud::sorted_intersection_len;
use crate::geometry::{
    circularity, convex_hull_2d, fit_plane_least_squares, fit_plane_most_points, min_enclosing_circle,
    project_to_plane, Circle2D, Circle3D, Plane, PlaneBasis, Vector2, Vector3,
};
use crate::hashing::stable_u64;
use crate::scenesim::SensorFrame;

/// Runs the per-mask circle pipeline. Results are in the world frame and
/// carry provisional ids; see [`assign_circle_ids`].
struct CircleFit {
    plane: Plane,
    basis: PlaneBasis,
    inliers: Vec<Vector3<f64>>,
    flat: Vec<Vector2<f64>>,
    hull: Vec<Vector2<f64>>,
    mec: Circle2D,
}

fn fit_circle(points: &[Vector3<f64>], plane: &Plane, config: &DetectionConfig) -> Option<CircleFit> {
    let inliers: Vec<_> = points.iter().copied().filter(|p| plane.signed_distance(p).abs() <= config.d_in).collect();
    if inliers.len() < 3 {
        return None;
    }
    let (basis, flat) = project_to_plane(&inliers, plane);
    let hull = convex_hull_2d(&flat).ok()?;
    let mec = min_enclosing_circle(&hull).ok()?;
    Some(CircleFit { plane: *plane, basis, inliers, flat, hull, mec })
}

pub fn detect_circles(frame: &SensorFrame, config: &DetectionConfig) -> Vec<CircleAffordance> {
    let sensor = frame.camera.position;
    let mut out = Vec::new();
    for mask in &frame.masks {
        if mask.len() < 3 {
            continue;
        }
        let points: Vec<_> =
            mask.indices.iter().map(|&i| frame.camera.transform_point(&frame.cloud.points[i as usize])).collect();
        let seed = stable_u64(mask.label.as_bytes());
        let Ok(plane) = fit_plane_most_points(&points, config.d_in, config.plane_iterations, seed) else {
            continue;
        };
        let plane = plane.oriented_toward(&sensor);
        let Some(first) = fit_circle(&points, &plane, config) else { continue };
        // Rim and side-wall points near the plane tilt the fit; refit on
        // the interior of the first circle and redo the circle.
        let core: Vec<_> = first
            .inliers
            .iter()
            .zip(&first.flat)
            .filter(|(_, f)| (*f - first.mec.center).norm() <= 0.7 * first.mec.radius)
            .map(|(p, _)| *p)
            .collect();
        let refined = fit_plane_least_squares(&core)
            .map(|p| p.oriented_toward(&sensor))
            .and_then(|p| fit_circle(&points, &p, config));
        let fit = refined.unwrap_or(first);
        match circularity(&fit.hull) {
            Ok(c) if c >= config.c_min => {}
            _ => continue,
        }
        if fit.mec.radius > config.r_max {
            continue;
        }
        let (basis, plane, mec, inliers) = (fit.basis, fit.plane, fit.mec, fit.inliers);
        out.push(CircleAffordance {
            id: format!("candidate:{}", mask.label),
            circle: Circle3D { center: basis.lift(&mec.center), axis: plane.normal, radius: mec.radius },
            source_mask: mask.label.clone(),
            mask_indices: mask.indices.clone(),
            inlier_ratio: inliers.len() as f64 / mask.len() as f64,
            detected_at: frame.timestamp,
        });
    }
    out
}

/// Overlapping masks, nearby centers and similar radii.
pub fn circles_similar(a: &CircleAffordance, b: &CircleAffordance, config: &DetectionConfig) -> bool {
    sorted_intersection_len(&a.mask_indices, &b.mask_indices) > 0
        && (a.circle.center - b.circle.center).norm() <= config.delta_c
        && (a.circle.radius - b.circle.radius).abs() <= config.delta_rad
}

/// Keeps, greedily by descending inlier ratio, every candidate that is not
/// similar to one already kept. Survivors are pairwise dissimilar, so a
/// second pass keeps them all.
pub fn dedup_circles(candidates: &[CircleAffordance], config: &DetectionConfig) -> Vec<CircleAffordance> {
    let mut order: Vec<&CircleAffordance> = candidates.iter().collect();
    order.sort_by(|a, b| {
        b.inlier_ratio
            .total_cmp(&a.inlier_ratio)
            .then_with(|| a.source_mask.cmp(&b.source_mask))
            .then_with(|| a.id.cmp(&b.id))
    });
    let mut kept: Vec<CircleAffordance> = Vec::new();
    for c in order {
        if !kept.iter().any(|k| circles_similar(k, c, config)) {
            kept.push(c.clone());
        }
    }
    kept
}

/// Gives each circle the id of the nearest unclaimed previous circle within
/// the dedup tolerances, or a fresh id from `counter`.
pub fn assign_circle_ids(
    circles: &mut [CircleAffordance],
    previous: &[CircleAffordance],
    config: &DetectionConfig,
    counter: &mut u64,
) {
    let mut pairs = Vec::new();
    for (i, c) in circles.iter().enumerate() {
        for (j, p) in previous.iter().enumerate() {
            let d = (c.circle.center - p.circle.center).norm();
            if d <= config.delta_c
                && (c.circle.radius - p.circle.radius).abs() <= config.delta_rad
                && c.circle.axis.dot(&p.circle.axis) >= 0.9
            {
                pairs.push((d, i, j));
            }
        }
    }
    claim(pairs, circles.len(), previous.len()).into_iter().zip(circles.iter_mut()).for_each(|(m, c)| {
        c.id = match m {
            Some(j) => previous[j].id.clone(),
            None => next_id("circle", counter),
        }
    });
}

/// Greedy one-to-one matching by ascending cost; ties broken by index.
pub(super) fn claim(mut pairs: Vec<(f64, usize, usize)>, n: usize, m: usize) -> Vec<Option<usize>> {
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut out = vec![None; n];
    let mut taken = vec![false; m];
    for (_, i, j) in pairs {
        if out[i].is_none() && !taken[j] {
            out[i] = Some(j);
            taken[j] = true;
        }
    }
    out
}
