use std::f64::consts::PI;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use nalgebra::{UnitQuaternion, Vector3};
use proptest::prelude::*;

use super::*;
use crate::cloud::{PointCloud, SegmentMask};
use crate::geometry::{Circle3D, Pose};
use crate::scenesim::segment::GroundTruthSegmenter;
use crate::scenesim::{look_at, render_sensor_frame, Role, SceneDescription, SceneObject, SensorFrame, Shape};

fn obj(id: &str, shape: Shape, pose: Pose) -> SceneObject {
    SceneObject { id: id.into(), shape, pose, color: [100, 100, 100], role: Some(Role::Target) }
}

fn overhead(objects: Vec<SceneObject>) -> SceneDescription {
    SceneDescription {
        name: "t".into(),
        task: None,
        camera: look_at(&Vector3::new(0.0, 0.0, 1.0), &Vector3::zeros()),
        objects,
    }
}

fn disk_at(radius: f64, x: f64) -> SceneObject {
    obj(
        &format!("disk_{radius}"),
        Shape::Disk { radius, thickness: 0.01 },
        Pose::from_translation(Vector3::new(x, 0.0, 0.005)),
    )
}

fn synthetic(points: Vec<Vector3<f64>>, masks: Vec<SegmentMask>) -> SensorFrame {
    SensorFrame {
        cloud: PointCloud { colors: vec![[0; 3]; points.len()], points },
        masks,
        timestamp: 0.0,
        camera: Pose::identity(),
    }
}

#[test]
fn floor_and_tabletop_give_two_planes() {
    let scene = SceneDescription {
        name: "room".into(),
        task: None,
        camera: look_at(&Vector3::new(-0.6, 0.0, 1.6), &Vector3::new(0.6, 0.0, 0.4)),
        objects: vec![
            obj("floor", Shape::Plane { size: [3.0, 3.0] }, Pose::identity()),
            obj("top", Shape::Plane { size: [0.8, 0.8] }, Pose::from_translation(Vector3::new(0.5, 0.0, 0.75))),
        ],
    };
    let frame = render_sensor_frame(&scene, &scene.camera, 2e4, 0.001, 5).unwrap();
    let planes = extract_planes(&frame, &DetectionConfig::default());
    assert_eq!(planes.len(), 2, "{:?}", planes.iter().map(|p| p.plane).collect::<Vec<_>>());
    for p in &planes {
        assert!(p.plane.normal.dot(&Vector3::z()) >= 1f64.to_radians().cos());
        assert!(p.plane.inlier_count >= 300);
        for v in &p.boundary {
            assert!(p.plane.signed_distance(v).abs() <= 0.005);
        }
    }
    let mut heights: Vec<f64> = planes.iter().map(|p| -p.plane.offset).collect();
    heights.sort_by(f64::total_cmp);
    assert!(heights[0].abs() < 0.005 && (heights[1] - 0.75).abs() < 0.005, "{heights:?}");
}

#[test]
fn sphere_cloud_has_no_planes() {
    let mut pts = Vec::new();
    let n = 20_000;
    let golden = PI * (3.0 - 5f64.sqrt());
    for i in 0..n {
        let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
        let r = (1.0 - z * z).sqrt();
        let phi = golden * i as f64;
        pts.push(Vector3::new(r * phi.cos(), r * phi.sin(), z) * 0.2 + Vector3::new(0.0, 0.0, 1.0));
    }
    let cfg = DetectionConfig { plane_min_inliers: 500, ..Default::default() };
    assert!(extract_planes(&synthetic(pts, vec![]), &cfg).is_empty());
}

#[test]
fn empty_frame_has_no_affordances() {
    let frame = synthetic(vec![], vec![]);
    assert!(extract_planes(&frame, &DetectionConfig::default()).is_empty());
    assert!(detect_circles(&frame, &DetectionConfig::default()).is_empty());
}

#[test]
fn disk_detected_with_small_error() {
    let scene = overhead(vec![disk_at(0.05, 0.1)]);
    let frame = render_sensor_frame(&scene, &scene.camera, 1e5, 0.001, 11).unwrap();
    let circles = detect_circles(&frame, &DetectionConfig::default());
    assert_eq!(circles.len(), 1);
    let c = &circles[0].circle;
    assert!((c.center - Vector3::new(0.1, 0.0, 0.01)).norm() <= 0.01, "{:?}", c.center);
    assert!((c.radius - 0.05).abs() <= 0.005, "{}", c.radius);
    assert!(c.axis.z > 0.999);
    assert!(circles[0].inlier_ratio > 0.5 && circles[0].inlier_ratio <= 1.0);
}

#[test]
fn square_plate_and_large_disk_rejected() {
    let plate =
        obj("plate", Shape::Box { size: [0.1, 0.1, 0.01] }, Pose::from_translation(Vector3::new(0.0, 0.0, 0.005)));
    let scene = overhead(vec![plate, disk_at(0.10, 0.25)]);
    let frame = render_sensor_frame(&scene, &scene.camera, 1e5, 0.001, 3).unwrap();
    assert_eq!(frame.masks.len(), 2);
    assert!(detect_circles(&frame, &DetectionConfig::default()).is_empty());
}

fn candidate(id: &str, center: [f64; 3], radius: f64, ratio: f64, mask: Vec<u32>) -> CircleAffordance {
    CircleAffordance {
        id: id.into(),
        circle: Circle3D { center: Vector3::from(center), axis: Vector3::z(), radius },
        source_mask: id.into(),
        mask_indices: mask,
        inlier_ratio: ratio,
        detected_at: 0.0,
    }
}

#[test]
fn dedup_examples() {
    let cfg = DetectionConfig::default();
    let a = candidate("a", [0.0, 0.0, 0.0], 0.050, 0.9, vec![1, 2, 3]);
    let b = candidate("b", [0.04, 0.0, 0.0], 0.055, 0.7, vec![3, 4]);
    let kept = dedup_circles(&[b.clone(), a.clone()], &cfg);
    assert_eq!(kept.iter().map(|c| c.id.as_str()).collect::<Vec<_>>(), ["a"]);

    let far = candidate("far", [0.06, 0.0, 0.0], 0.055, 0.7, vec![3, 4]);
    assert_eq!(dedup_circles(&[a.clone(), far], &cfg).len(), 2);

    let disjoint = candidate("d", [0.01, 0.0, 0.0], 0.05, 0.7, vec![7, 8]);
    assert_eq!(dedup_circles(&[a, disjoint], &cfg).len(), 2);
}

#[test]
fn identical_previous_keeps_id() {
    let cfg = DetectionConfig::default();
    let prev = vec![candidate("circle-4", [0.5, 0.0, 0.8], 0.04, 0.9, vec![])];
    let mut now =
        vec![candidate("x", [0.5, 0.0, 0.8], 0.04, 0.9, vec![]), candidate("y", [0.0, 0.3, 0.8], 0.02, 0.9, vec![])];
    let mut counter = 5;
    assign_circle_ids(&mut now, &prev, &cfg, &mut counter);
    assert_eq!(now[0].id, "circle-4");
    assert_eq!(now[1].id, "circle-5");
    assert_eq!(counter, 6);
}

struct Flaky {
    inner: SimSensor,
    fail_at: u64,
}

impl SensorSource for Flaky {
    fn capture(&mut self, t: f64) -> Result<SensorFrame, SensorError> {
        if self.inner.captures == self.fail_at {
            self.inner.captures += 1;
            return Err(SensorError::Unavailable("unplugged".into()));
        }
        self.inner.capture(t)
    }
}

fn two_disk_scene() -> SceneDescription {
    let mut table = obj("table", Shape::Plane { size: [1.0, 1.0] }, Pose::identity());
    table.role = None;
    overhead(vec![table, disk_at(0.03, -0.15), disk_at(0.05, 0.15)])
}

#[test]
fn static_scene_refreshes_keep_ids() {
    let cfg = DetectionConfig::default();
    let mut sensor = SimSensor::new(Arc::new(two_disk_scene()), 5e4, 0.001, 7);
    let mut snap = AffordanceSnapshot::default();
    let mut history = Vec::new();
    for k in 0..3 {
        let frame = sensor.capture(k as f64 * 5.0);
        snap = refresh_snapshot(&snap, frame.as_ref(), &GroundTruthSegmenter, &cfg);
        history.push(snap.clone());
    }
    for (k, s) in history.iter().enumerate() {
        assert_eq!(s.revision, k as u64 + 1);
        assert!(!s.stale);
        assert_eq!(s.circles.len(), 2);
        assert!(!s.planes.is_empty());
        assert_eq!(s.planes.len(), history[0].planes.len());
        let ids = |s: &AffordanceSnapshot| {
            let mut v: Vec<_> = s.circles.iter().map(|c| c.id.clone()).collect();
            v.extend(s.planes.iter().map(|p| p.id.clone()));
            v.sort();
            v
        };
        assert_eq!(ids(s), ids(&history[0]));
    }
}

#[test]
fn removed_object_disappears_and_failure_goes_stale() {
    let cfg = DetectionConfig::default();
    let scene = two_disk_scene();
    let first = SimSensor::new(Arc::new(scene.clone()), 5e4, 0.001, 1).frame(0, 0.0);
    let s1 = refresh_snapshot(&AffordanceSnapshot::default(), first.as_ref(), &GroundTruthSegmenter, &cfg);
    assert_eq!(s1.circles.len(), 2);
    let mut reduced = scene;
    reduced.objects.retain(|o| o.id != "disk_0.05");
    let second = SimSensor::new(Arc::new(reduced), 5e4, 0.001, 1).frame(1, 5.0);
    let s2 = refresh_snapshot(&s1, second.as_ref(), &GroundTruthSegmenter, &cfg);
    assert_eq!(s2.circles.len(), 1);
    assert!((s2.circles[0].circle.radius - 0.03).abs() < 0.005);
    assert_eq!(s1.circle(&s2.circles[0].id).map(|c| c.source_mask.as_str()), Some("disk_0.03"));

    let failed: Result<SensorFrame, SensorError> = Err(SensorError::Unavailable("x".into()));
    let s3 = refresh_snapshot(&s2, failed.as_ref(), &GroundTruthSegmenter, &cfg);
    assert!(s3.stale);
    assert_eq!(s3.revision, 3);
    assert_eq!(s3.circles, s2.circles);
}

#[test]
fn refresh_loop_publishes_and_survives_failures() {
    let cfg = DetectionConfig { refresh_period: 0.01, ..Default::default() };
    let inner = SimSensor::new(Arc::new(two_disk_scene()), 2e4, 0.001, 2);
    let mut source = Flaky { inner, fail_at: 1 };
    let stop = AtomicBool::new(false);
    let mut seen = Vec::new();
    run_refresh_loop(
        &mut source,
        &GroundTruthSegmenter,
        &cfg,
        |s| {
            seen.push(s);
            if seen.len() == 3 {
                stop.store(true, std::sync::atomic::Ordering::Release);
            }
        },
        &stop,
    );
    let revisions: Vec<_> = seen.iter().map(|s| s.revision).collect();
    assert_eq!(revisions, [1, 2, 3]);
    assert!(!seen[0].stale && seen[1].stale && !seen[2].stale);
    assert_eq!(seen[1].circles, seen[0].circles);
}

#[test]
fn circles_follow_rigid_motion() {
    let scene = two_disk_scene();
    let t = Pose::new(Vector3::new(0.3, -1.2, 0.4), UnitQuaternion::from_euler_angles(0.3, -0.5, 1.1));
    let moved = scene.transformed(&t);
    let cfg = DetectionConfig::default();
    let a = detect_circles(&render_sensor_frame(&scene, &scene.camera, 5e4, 0.001, 4).unwrap(), &cfg);
    let b = detect_circles(&render_sensor_frame(&moved, &moved.camera, 5e4, 0.001, 4).unwrap(), &cfg);
    assert_eq!(a.len(), 2);
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert!((t.transform_point(&x.circle.center) - y.circle.center).norm() <= 0.01);
        let angle = t.transform_vector(&x.circle.axis).dot(&y.circle.axis).clamp(-1.0, 1.0).acos();
        assert!(angle <= 2f64.to_radians());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hull_circularity_gates_detection(
        sides in 3usize..10,
        radius in 0.01f64..0.06,
        roll in 0.0..PI,
        pitch in -1.0f64..1.0,
        spin in 0.0..PI,
    ) {
        // Regular polygon on a random plane: vertices plus interior fill.
        let pose = Pose::new(Vector3::new(0.2, -0.1, 0.9), UnitQuaternion::from_euler_angles(roll, pitch, 0.0));
        let mut pts = Vec::new();
        for k in 0..sides {
            let a = spin + 2.0 * PI * k as f64 / sides as f64;
            pts.push(pose.transform_point(&Vector3::new(radius * a.cos(), radius * a.sin(), 0.0)));
        }
        for k in 0..200 {
            let f = k as f64 / 200.0;
            let a = 2.0 * PI * f * 13.0;
            let r = 0.5 * radius * f.sqrt();
            pts.push(pose.transform_point(&Vector3::new(r * a.cos(), r * a.sin(), 0.0)));
        }
        let mask = SegmentMask::new("poly", (0..pts.len() as u32).collect());
        let found = detect_circles(&synthetic(pts, vec![mask]), &DetectionConfig::default());
        let analytic = (PI / sides as f64) / (PI / sides as f64).tan();
        prop_assert_eq!(found.len(), usize::from(analytic >= 0.9));
        for c in &found {
            prop_assert!(c.circle.radius <= 0.07);
        }
    }

    #[test]
    fn dedup_is_idempotent(raw in prop::collection::vec(
        (0.0f64..0.1, 0.0f64..0.1, 0.01f64..0.07, 0.0f64..1.0, 0u32..6, 1u32..4),
        0..12,
    )) {
        let cfg = DetectionConfig::default();
        let cands: Vec<_> = raw
            .iter()
            .enumerate()
            .map(|(i, &(x, y, r, q, start, len))| {
                candidate(&format!("c{i}"), [x, y, 0.0], r, q, (start..start + len).collect())
            })
            .collect();
        let once = dedup_circles(&cands, &cfg);
        let twice = dedup_circles(&once, &cfg);
        prop_assert_eq!(&once, &twice);
        for (i, a) in once.iter().enumerate() {
            for b in &once[i + 1..] {
                prop_assert!(!circles_similar(a, b, &cfg));
            }
        }
    }
}
