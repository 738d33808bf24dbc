//! The three benchmark task setups (jar lid, plug and socket, dial) as
//! synthetic scenes, plus geometric completion monitors.

use std::f64::consts::PI;

use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{default_camera, look_at, GripperState, Role, SceneDescription, SceneObject, Shape};
use crate::geometry::Pose;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Jar,
    Plug,
    Dial,
}

impl TaskKind {
    pub const ALL: [TaskKind; 3] = [TaskKind::Jar, TaskKind::Plug, TaskKind::Dial];

    pub fn name(&self) -> &'static str {
        match self {
            TaskKind::Jar => "jar",
            TaskKind::Plug => "plug",
            TaskKind::Dial => "dial",
        }
    }
}

impl std::str::FromStr for TaskKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "jar" => Ok(TaskKind::Jar),
            "plug" => Ok(TaskKind::Plug),
            "dial" => Ok(TaskKind::Dial),
            other => Err(format!("unknown task `{other}`")),
        }
    }
}

/// How a generated scene departs from the nominal layout.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneVariation {
    pub seed: u64,
    /// Uniform placement jitter of the target objects, meters.
    pub jitter: f64,
    pub distractors: usize,
}

impl SceneVariation {
    pub fn nominal() -> Self {
        Self { seed: 0, jitter: 0.0, distractors: 0 }
    }
}

pub const TABLE_TOP: f64 = 0.75;

/// Where every session starts: above the front of the table, facing down.
pub fn start_pose() -> Pose {
    Pose::new(Vector3::new(0.35, 0.0, 1.25), UnitQuaternion::from_axis_angle(&Vector3::x_axis(), PI))
}

fn object(id: &str, shape: Shape, pose: Pose, color: [u8; 3], role: Option<Role>) -> SceneObject {
    SceneObject { id: id.into(), shape, pose, color, role }
}

fn table() -> SceneObject {
    object(
        "table",
        Shape::Box { size: [0.8, 1.2, 0.05] },
        Pose::from_translation(Vector3::new(0.8, 0.0, TABLE_TOP - 0.025)),
        [150, 110, 70],
        None,
    )
}

fn facing(position: Vector3<f64>, axis: &Vector3<f64>) -> Pose {
    let q = UnitQuaternion::rotation_between(&Vector3::z(), axis)
        .unwrap_or_else(|| UnitQuaternion::from_axis_angle(&Vector3::x_axis(), PI));
    Pose::new(position, q)
}

/// Builds the scene for `kind`. Target objects carry [`Role::Target`].
pub fn task_scene(kind: TaskKind, variation: &SceneVariation) -> SceneDescription {
    let mut rng = ChaCha8Rng::seed_from_u64(variation.seed ^ ((kind as u64 + 1) * 0x9e37_79b9));
    let j = variation.jitter;
    let jit = |rng: &mut ChaCha8Rng| if j > 0.0 { rng.random_range(-j..=j) } else { 0.0 };
    let mut objects = vec![table()];
    // Footprints (x, y, radius) that distractors must avoid.
    let mut keep_out: Vec<(f64, f64, f64)> = Vec::new();
    match kind {
        TaskKind::Jar => {
            let (x, y) = (0.72 + jit(&mut rng), 0.12 + jit(&mut rng));
            objects.push(object(
                "jar_body",
                Shape::Cylinder { radius: 0.045, height: 0.15 },
                Pose::from_translation(Vector3::new(x, y, TABLE_TOP + 0.075)),
                [200, 220, 230],
                None,
            ));
            objects.push(object(
                "jar_lid",
                Shape::Disk { radius: 0.05, thickness: 0.02 },
                Pose::from_translation(Vector3::new(x, y, TABLE_TOP + 0.16)),
                [240, 200, 40],
                Some(Role::Target),
            ));
            keep_out.push((x, y, 0.06));
        }
        TaskKind::Plug => {
            let (x, y) = (0.75 + jit(&mut rng), -0.18 + jit(&mut rng));
            objects.push(object(
                "socket",
                Shape::SocketHole {
                    size: [0.12, 0.12, 0.05],
                    face_radius: 0.04,
                    face_height: 0.01,
                    hole_radius: 0.02,
                    hole_depth: 0.045,
                },
                Pose::from_translation(Vector3::new(x, y, TABLE_TOP + 0.025)),
                [60, 90, 220],
                Some(Role::Target),
            ));
            keep_out.push((x, y, 0.09));
        }
        TaskKind::Dial => {
            let panel_x = 1.05;
            let (y, z) = (jit(&mut rng), 1.2 + jit(&mut rng));
            objects.push(object(
                "panel",
                Shape::Box { size: [0.03, 0.5, 0.6] },
                Pose::from_translation(Vector3::new(panel_x, 0.0, TABLE_TOP + 0.3)),
                [220, 220, 220],
                None,
            ));
            objects.push(object(
                "dial",
                Shape::Disk { radius: 0.04, thickness: 0.025 },
                facing(Vector3::new(panel_x - 0.015 - 0.0125, y, z), &-Vector3::x()),
                [200, 40, 40],
                Some(Role::Target),
            ));
            keep_out.push((panel_x - 0.05, 0.0, 0.12));
        }
    }
    add_distractors(&mut objects, &mut keep_out, variation.distractors, kind, &mut rng);
    SceneDescription { name: kind.name().into(), task: Some(kind), camera: default_camera(), objects }
}

fn add_distractors(
    objects: &mut Vec<SceneObject>,
    keep_out: &mut Vec<(f64, f64, f64)>,
    count: usize,
    kind: TaskKind,
    rng: &mut ChaCha8Rng,
) {
    let x_max = if kind == TaskKind::Dial { 0.92 } else { 1.1 };
    for i in 0..count {
        let style = i % 3;
        let footprint = match style {
            0 => rng.random_range(0.025..0.06),
            1 => rng.random_range(0.03..0.05),
            _ => rng.random_range(0.04..0.06),
        };
        let mut placed = None;
        for _ in 0..200 {
            let x = rng.random_range(0.5..x_max);
            let y = rng.random_range(-0.5..0.5);
            if keep_out
                .iter()
                .all(|(kx, ky, kr)| ((x - kx).powi(2) + (y - ky).powi(2)).sqrt() > kr + footprint * 1.5 + 0.08)
            {
                placed = Some((x, y));
                break;
            }
        }
        let Some((x, y)) = placed else { continue };
        keep_out.push((x, y, footprint * 1.5));
        let color = [rng.random(), rng.random(), rng.random()];
        let yaw = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), rng.random_range(0.0..PI));
        let id = format!("distractor_{i}");
        let obj = match style {
            0 => object(
                &id,
                Shape::Disk { radius: footprint, thickness: 0.015 },
                Pose::from_translation(Vector3::new(x, y, TABLE_TOP + 0.0075)),
                color,
                Some(Role::Distractor),
            ),
            1 => {
                let h = rng.random_range(0.05..0.12);
                object(
                    &id,
                    Shape::Box { size: [footprint * 2.0, footprint * 2.0, h] },
                    Pose::new(Vector3::new(x, y, TABLE_TOP + h / 2.0), yaw),
                    color,
                    Some(Role::Distractor),
                )
            }
            _ => object(
                &id,
                Shape::Box { size: [footprint * 2.0, footprint * 2.0, 0.01] },
                Pose::new(Vector3::new(x, y, TABLE_TOP + 0.005), yaw),
                color,
                Some(Role::Distractor),
            ),
        };
        objects.push(obj);
    }
}

/// Radii used by the circle-detection benchmark.
pub const BENCHMARK_RADII: [f64; 3] = [0.02, 0.05, 0.069];

/// Flat table with one disk of each benchmark radius and two flat
/// distractor plates (a square and a rectangle), seen from overhead.
pub fn disk_benchmark_scene(seed: u64) -> SceneDescription {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut objects = vec![object(
        "table",
        Shape::Plane { size: [1.2, 1.2] },
        Pose::from_translation(Vector3::new(0.8, 0.0, TABLE_TOP)),
        [150, 110, 70],
        None,
    )];
    let mut placed: Vec<(f64, f64, f64)> = Vec::new();
    let mut place = |rng: &mut ChaCha8Rng, r: f64| loop {
        let x = rng.random_range(0.55..1.05);
        let y = rng.random_range(-0.25..0.25);
        if placed.iter().all(|(px, py, pr)| ((x - px).powi(2) + (y - py).powi(2)).sqrt() > r + pr + 0.03) {
            placed.push((x, y, r));
            return (x, y);
        }
    };
    for (i, r) in BENCHMARK_RADII.iter().enumerate() {
        let (x, y) = place(&mut rng, *r);
        objects.push(object(
            &format!("disk_{i}"),
            Shape::Disk { radius: *r, thickness: 0.01 },
            Pose::from_translation(Vector3::new(x, y, TABLE_TOP + 0.005)),
            [rng.random(), rng.random(), rng.random()],
            Some(Role::Target),
        ));
    }
    let side = rng.random_range(0.06..0.12);
    let plates: [(&str, [f64; 2]); 2] = [("square_plate", [side, side]), ("rect_plate", [0.14, 0.07])];
    for (id, [sx, sy]) in plates {
        let (x, y) = place(&mut rng, 0.5 * (sx * sx + sy * sy).sqrt());
        objects.push(object(
            id,
            Shape::Box { size: [sx, sy, 0.01] },
            Pose::new(
                Vector3::new(x, y, TABLE_TOP + 0.005),
                UnitQuaternion::from_axis_angle(&Vector3::z_axis(), rng.random_range(0.0..PI)),
            ),
            [rng.random(), rng.random(), rng.random()],
            Some(Role::Distractor),
        ));
    }
    SceneDescription {
        name: format!("disks-{seed}"),
        task: None,
        camera: look_at(&Vector3::new(0.8, 0.0, TABLE_TOP + 1.2), &Vector3::new(0.8, 0.0, TABLE_TOP)),
        objects,
    }
}

/// Signed rotation angle of `delta` about `axis` (swing-twist decomposition).
pub fn twist_angle(delta: &UnitQuaternion<f64>, axis: &Vector3<f64>) -> f64 {
    let q = delta.quaternion();
    let mut a = 2.0 * q.imag().dot(axis).atan2(q.w);
    if a > PI {
        a -= 2.0 * PI;
    } else if a < -PI {
        a += 2.0 * PI;
    }
    a
}

/// Geometry the monitor watches: a reference point on the target's working
/// face and the face's outward axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskTarget {
    pub point: Vector3<f64>,
    pub axis: Vector3<f64>,
    pub radius: f64,
}

pub fn task_target(scene: &SceneDescription) -> Option<(TaskKind, TaskTarget)> {
    let kind = scene.task?;
    let obj = scene.targets().next()?;
    let target = match (&obj.shape, kind) {
        (Shape::Disk { radius, thickness }, TaskKind::Jar | TaskKind::Dial) => TaskTarget {
            point: obj.pose.transform_point(&Vector3::new(0.0, 0.0, thickness / 2.0)),
            axis: obj.pose.transform_vector(&Vector3::z()),
            radius: *radius,
        },
        (Shape::SocketHole { size, face_height, hole_radius, .. }, TaskKind::Plug) => TaskTarget {
            point: obj.pose.transform_point(&Vector3::new(0.0, 0.0, size[2] / 2.0 + face_height)),
            axis: obj.pose.transform_vector(&Vector3::z()),
            radius: *hole_radius,
        },
        _ => return None,
    };
    Some((kind, target))
}

pub const GRASP_DISTANCE: f64 = 0.02;
pub const GRASP_CLOSED: f64 = 0.3;
pub const JAR_UNSCREW: f64 = PI;
pub const JAR_LIFT: f64 = 0.03;
pub const DIAL_TURNS: f64 = 3.0;
pub const PLUG_DEPTH: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskMonitor {
    pub kind: TaskKind,
    pub target: TaskTarget,
    pub tool_offset: f64,
    /// Signed rotation about the target axis while grasped, radians.
    pub turned: f64,
    pub loosened: bool,
    pub complete: bool,
}

impl TaskMonitor {
    pub fn new(scene: &SceneDescription, tool_offset: f64) -> Option<Self> {
        let (kind, target) = task_target(scene)?;
        Some(Self { kind, target, tool_offset, turned: 0.0, loosened: false, complete: false })
    }

    fn grasping(&self, s: &GripperState) -> bool {
        (s.pose.tool_tip(self.tool_offset) - self.target.point).norm() <= GRASP_DISTANCE && s.aperture <= GRASP_CLOSED
    }

    /// Feeds one simulation step; returns whether the task is complete.
    pub fn observe(&mut self, prev: &GripperState, next: &GripperState) -> bool {
        if self.complete {
            return true;
        }
        let tip = next.pose.tool_tip(self.tool_offset);
        match self.kind {
            TaskKind::Jar | TaskKind::Dial => {
                if self.grasping(prev) && self.grasping(next) {
                    let delta = next.pose.orientation * prev.pose.orientation.inverse();
                    self.turned += twist_angle(&delta, &self.target.axis);
                }
                if self.kind == TaskKind::Dial {
                    self.complete = self.turned.abs() >= DIAL_TURNS * 2.0 * PI;
                } else {
                    self.loosened |= self.turned >= JAR_UNSCREW;
                    let lifted = (tip - self.target.point).dot(&self.target.axis) >= JAR_LIFT;
                    let lateral = {
                        let d = tip - self.target.point;
                        (d - self.target.axis * d.dot(&self.target.axis)).norm()
                    };
                    self.complete =
                        self.loosened && lifted && lateral <= GRASP_DISTANCE && next.aperture <= GRASP_CLOSED;
                }
            }
            TaskKind::Plug => {
                let d = tip - self.target.point;
                let depth = -d.dot(&self.target.axis);
                let lateral = (d + self.target.axis * depth).norm();
                self.complete = depth >= PLUG_DEPTH && lateral <= self.target.radius;
            }
        }
        self.complete
    }
}
