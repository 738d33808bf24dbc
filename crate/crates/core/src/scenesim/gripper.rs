use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::shapes::{object_normal, object_sdf};
use super::SceneDescription;
use crate::geometry::Pose;

/// Collision sphere centered `offset` meters along the gripper's forward axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sphere {
    pub offset: f64,
    pub radius: f64,
}

/// Sphere-chain approximation of the gripper body, wrist to tool tip.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GripperShape {
    /// Distance of the tool tip from the end-effector origin along forward.
    pub tool_offset: f64,
    pub spheres: Vec<Sphere>,
}

impl Default for GripperShape {
    fn default() -> Self {
        Self {
            tool_offset: 0.12,
            spheres: vec![
                Sphere { offset: 0.12, radius: 0.008 },
                Sphere { offset: 0.095, radius: 0.014 },
                Sphere { offset: 0.065, radius: 0.02 },
                Sphere { offset: 0.03, radius: 0.025 },
                Sphere { offset: 0.0, radius: 0.03 },
                Sphere { offset: -0.05, radius: 0.04 },
            ],
        }
    }
}

impl GripperShape {
    /// Largest distance from the end-effector origin to any body point.
    pub fn reach(&self) -> f64 {
        self.spheres.iter().map(|s| s.offset.abs() + s.radius).fold(0.0, f64::max)
    }

    /// Smallest sphere-surface clearance to the scene, with the outward
    /// normal of the nearest object. Negative when penetrating.
    pub fn clearance(&self, pose: &Pose, scene: &SceneDescription) -> (f64, Vector3<f64>) {
        let forward = pose.forward();
        let mut best = (f64::INFINITY, Vector3::z());
        for s in &self.spheres {
            let c = pose.position + forward * s.offset;
            for obj in &scene.objects {
                let d = object_sdf(obj, &c) - s.radius;
                if d < best.0 {
                    best = (d, object_normal(obj, &c));
                }
            }
        }
        best
    }
}

/// True iff the gripper body at `pose` touches or overlaps any object.
/// Zero clearance counts as a collision.
pub fn check_collision(pose: &Pose, shape: &GripperShape, scene: &SceneDescription) -> bool {
    let forward = pose.forward();
    shape.spheres.iter().any(|s| {
        let c = pose.position + forward * s.offset;
        scene.objects.iter().any(|o| object_sdf(o, &c) <= s.radius)
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fault {
    ExcessiveForce,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GripperState {
    pub pose: Pose,
    /// 0 = closed, 1 = open.
    pub aperture: f64,
    pub estimated_force: Vector3<f64>,
    #[serde(default)]
    pub fault: Option<Fault>,
}

impl GripperState {
    pub fn at(pose: Pose) -> Self {
        Self { pose, aperture: 1.0, estimated_force: Vector3::zeros(), fault: None }
    }
}

/// Kinematic free-flying gripper with speed caps and penalty contact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GripperModel {
    pub shape: GripperShape,
    /// m/s
    pub max_linear_speed: f64,
    /// rad/s
    pub max_angular_speed: f64,
    /// N/m
    pub stiffness: f64,
    /// Clearance below which the gripper counts as touching.
    pub contact_tolerance: f64,
    /// Force magnitude (N) above which a fault is raised.
    pub fault_force: f64,
}

impl Default for GripperModel {
    fn default() -> Self {
        Self {
            shape: GripperShape::default(),
            max_linear_speed: 0.5,
            max_angular_speed: 1.5,
            stiffness: 2000.0,
            contact_tolerance: 1e-3,
            fault_force: 60.0,
        }
    }
}

const BISECTION_STEPS: usize = 30;

impl GripperModel {
    /// Moves toward `target` for `dt` seconds. Rotation is applied first,
    /// then translation; either stops at first contact, and translation may
    /// slide along the contact surface. Force is the stiffness times how far
    /// the commanded target lies inside the touched geometry.
    pub fn step(
        &self,
        state: &GripperState,
        target: &Pose,
        aperture_rate: f64,
        dt: f64,
        scene: &SceneDescription,
    ) -> GripperState {
        assert!(dt > 0.0, "dt must be positive");
        let mut pose = state.pose;

        let angle = pose.angle_to(target);
        if angle > 0.0 {
            let frac = (self.max_angular_speed * dt / angle).min(1.0);
            let rotated = Pose::new(pose.position, pose.interpolate(target, frac).orientation);
            pose = self.advance(&pose, &rotated, scene);
        }

        let delta = target.position - pose.position;
        let dist = delta.norm();
        if dist > 0.0 {
            let step = delta * (self.max_linear_speed * dt / dist).min(1.0);
            let wanted = Pose::new(pose.position + step, pose.orientation);
            let reached = self.advance(&pose, &wanted, scene);
            pose = reached;
            let rest = wanted.position - reached.position;
            if rest.norm() > 1e-9 {
                let (_, normal) = self.shape.clearance(&reached, scene);
                let slide = rest - normal * rest.dot(&normal).min(0.0);
                if slide.norm() > 1e-9 {
                    pose = self.advance(&reached, &Pose::new(reached.position + slide, reached.orientation), scene);
                }
            }
        }

        let (clearance, normal) = self.shape.clearance(&pose, scene);
        let estimated_force = if clearance <= self.contact_tolerance {
            let (target_clearance, _) = self.shape.clearance(target, scene);
            normal * (self.stiffness * (-target_clearance).max(0.0))
        } else {
            Vector3::zeros()
        };
        GripperState {
            pose,
            aperture: (state.aperture + aperture_rate * dt).clamp(0.0, 1.0),
            estimated_force,
            fault: (estimated_force.norm() > self.fault_force).then_some(super::Fault::ExcessiveForce),
        }
    }

    /// Farthest collision-free pose on the way from `from` to `to`.
    fn advance(&self, from: &Pose, to: &Pose, scene: &SceneDescription) -> Pose {
        if !check_collision(to, &self.shape, scene) {
            return *to;
        }
        if check_collision(from, &self.shape, scene) {
            // Already embedded: only accept moves that back out.
            let (now, _) = self.shape.clearance(from, scene);
            let (next, _) = self.shape.clearance(to, scene);
            return if next > now { *to } else { *from };
        }
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            if check_collision(&from.interpolate(to, mid), &self.shape, scene) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        from.interpolate(to, lo)
    }
}
