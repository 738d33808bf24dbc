use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::shapes::labeled_patches;
use super::{SceneDescription, SceneError};
use crate::cloud::{PointCloud, SegmentMask};
use crate::geometry::Pose;

/// Pinhole frustum limits. The optical axis is the camera's local +z.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub half_fov_x: f64,
    pub half_fov_y: f64,
    pub near: f64,
    pub max_range: f64,
}

impl Default for CameraModel {
    fn default() -> Self {
        Self { half_fov_x: 0.8, half_fov_y: 0.65, near: 0.05, max_range: 4.0 }
    }
}

/// One capture: points in the camera frame plus ground-truth masks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorFrame {
    pub cloud: PointCloud,
    pub masks: Vec<SegmentMask>,
    pub timestamp: f64,
    /// Camera-to-world transform at capture time.
    pub camera: Pose,
}

impl SensorFrame {
    pub fn world_points(&self) -> Vec<nalgebra::Vector3<f64>> {
        self.cloud.points.iter().map(|p| self.camera.transform_point(p)).collect()
    }
}

pub fn render_sensor_frame(
    scene: &SceneDescription,
    camera: &Pose,
    density: f64,
    noise_sigma: f64,
    seed: u64,
) -> Result<SensorFrame, SceneError> {
    render_with_model(scene, camera, &CameraModel::default(), density, noise_sigma, seed, 0.0)
}

/// Samples visible surfaces at `density` points/m², culls back faces,
/// out-of-frustum and occluded samples, and perturbs each point along its
/// viewing ray by Gaussian noise.
pub fn render_with_model(
    scene: &SceneDescription,
    camera: &Pose,
    model: &CameraModel,
    density: f64,
    noise_sigma: f64,
    seed: u64,
    timestamp: f64,
) -> Result<SensorFrame, SceneError> {
    if scene.objects.is_empty() {
        return Err(SceneError::EmptyScene);
    }
    assert!(density > 0.0 && noise_sigma >= 0.0, "density > 0 and noise_sigma >= 0");
    let solids = scene.solids();
    let eye = camera.position;
    let to_camera = camera.inverse();
    let (tan_x, tan_y) = (model.half_fov_x.tan(), model.half_fov_y.tan());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = (noise_sigma > 0.0).then(|| Normal::new(0.0, noise_sigma).unwrap());

    let mut cloud = PointCloud::default();
    let mut masks = Vec::new();
    for obj in &scene.objects {
        for (label, patches) in labeled_patches(obj) {
            let mut indices = Vec::new();
            for patch in &patches {
                let count = (patch.area() * density).round() as usize;
                for _ in 0..count {
                    let (p, mut n) = patch.sample(&mut rng);
                    let eps = noise.map(|d| d.sample(&mut rng)).unwrap_or(0.0);
                    let view = eye - p;
                    if patch.two_sided() && n.dot(&view) < 0.0 {
                        n = -n;
                    }
                    if n.dot(&view) <= 0.0 {
                        continue;
                    }
                    let local = to_camera.transform_point(&p);
                    let range = local.norm();
                    if local.z < model.near
                        || range > model.max_range
                        || local.x.abs() > tan_x * local.z
                        || local.y.abs() > tan_y * local.z
                    {
                        continue;
                    }
                    let tol = 1.0 - 1e-6 / range;
                    if solids.iter().any(|s| s.segment_hit(&eye, &p).is_some_and(|t| t < tol)) {
                        continue;
                    }
                    let noisy = local + local / range * eps;
                    indices.push(cloud.points.len() as u32);
                    cloud.points.push(noisy);
                    cloud.colors.push(obj.color);
                }
            }
            if !indices.is_empty() {
                masks.push(SegmentMask::new(label, indices));
            }
        }
    }
    Ok(SensorFrame { cloud, masks, timestamp, camera: *camera })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{fit_plane_least_squares, Vector3};
    use crate::scenesim::{look_at, Role, SceneObject, Shape};

    fn single(shape: Shape, pose: Pose) -> SceneDescription {
        SceneDescription {
            name: "t".into(),
            task: None,
            camera: look_at(&Vector3::new(0.0, 0.0, 1.0), &Vector3::zeros()),
            objects: vec![SceneObject { id: "obj".into(), shape, pose, color: [10, 20, 30], role: Some(Role::Target) }],
        }
    }

    #[test]
    fn plane_point_count_tracks_density() {
        let scene = single(Shape::Plane { size: [1.0, 1.0] }, Pose::identity());
        let frame = render_sensor_frame(&scene, &scene.camera, 1e4, 0.001, 42).unwrap();
        let n = frame.cloud.len() as f64;
        assert!((n - 1e4).abs() <= 0.05 * 1e4, "{n}");
        assert_eq!(frame.masks.len(), 1);
        assert_eq!(frame.masks[0].len(), frame.cloud.len());
    }

    #[test]
    fn noiseless_disk_is_coplanar() {
        let scene =
            single(Shape::Disk { radius: 0.05, thickness: 0.01 }, Pose::from_translation(Vector3::new(0.1, 0.0, 0.0)));
        let frame = render_sensor_frame(&scene, &scene.camera, 1e5, 0.0, 1).unwrap();
        let pts: Vec<_> = frame.world_points().into_iter().filter(|p| p.z > 0.005 - 1e-9).collect();
        assert!(pts.len() > 500);
        let plane = fit_plane_least_squares(&pts).unwrap();
        for p in &pts {
            assert!(plane.signed_distance(p).abs() < 1e-9);
        }
    }

    #[test]
    fn empty_scene_rejected() {
        let mut scene = single(Shape::Plane { size: [1.0, 1.0] }, Pose::identity());
        scene.objects.clear();
        assert!(matches!(render_sensor_frame(&scene, &scene.camera, 1e4, 0.0, 0), Err(SceneError::EmptyScene)));
    }

    #[test]
    fn rendering_is_deterministic() {
        let scene = super::super::tasks::task_scene(
            super::super::tasks::TaskKind::Jar,
            &super::super::tasks::SceneVariation::nominal(),
        );
        let a = render_sensor_frame(&scene, &scene.camera, 2e4, 0.001, 9).unwrap();
        let b = render_sensor_frame(&scene, &scene.camera, 2e4, 0.001, 9).unwrap();
        assert_eq!(a, b);
        for m in &a.masks {
            assert!(m.indices.iter().all(|&i| (i as usize) < a.cloud.len()));
        }
        // Ground-truth masks are disjoint.
        for (i, m) in a.masks.iter().enumerate() {
            for o in &a.masks[i + 1..] {
                assert_eq!(m.intersection_len(o), 0);
            }
        }
    }

    #[test]
    fn occluded_surfaces_are_hidden() {
        let mut scene = single(Shape::Plane { size: [1.0, 1.0] }, Pose::identity());
        scene.objects.push(SceneObject {
            id: "cover".into(),
            shape: Shape::Box { size: [2.0, 2.0, 0.1] },
            pose: Pose::from_translation(Vector3::new(0.0, 0.0, 0.5)),
            color: [0, 0, 0],
            role: None,
        });
        let frame = render_sensor_frame(&scene, &scene.camera, 1e4, 0.0, 3).unwrap();
        assert!(frame.masks.iter().all(|m| m.label == "cover"));
    }
}
