use nalgebra::{Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use std::ops::Mul;

/// Canonical forward axis of the gripper frame. The tool tip sits on this axis.
pub const FORWARD: Vector3<f64> = Vector3::new(0.0, 0.0, 1.0);
/// Canonical "up" axis of the gripper frame, used to break the antiparallel
/// tie in [`align_forward_to`].
pub const UP: Vector3<f64> = Vector3::new(0.0, 1.0, 0.0);

/// Rigid transform: a position in meters and a unit quaternion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self { position: Vector3::zeros(), orientation: UnitQuaternion::identity() }
    }

    pub fn new(position: Vector3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        Self { position, orientation: renormalize(orientation) }
    }

    pub fn from_translation(position: Vector3<f64>) -> Self {
        Self::new(position, UnitQuaternion::identity())
    }

    /// `self ∘ other`: `other` is expressed in the frame of `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose::new(self.position + self.orientation * other.position, self.orientation * other.orientation)
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.orientation.inverse();
        Pose::new(-(inv * self.position), inv)
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.position + self.orientation * p
    }

    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.orientation * v
    }

    /// World-frame direction of the gripper's forward axis.
    pub fn forward(&self) -> Vector3<f64> {
        self.orientation * FORWARD
    }

    pub fn up(&self) -> Vector3<f64> {
        self.orientation * UP
    }

    /// Point `offset` meters along the forward axis.
    pub fn tool_tip(&self, offset: f64) -> Vector3<f64> {
        self.position + self.forward() * offset
    }

    /// Angle of the rotation taking `self.orientation` to `other.orientation`.
    pub fn angle_to(&self, other: &Pose) -> f64 {
        self.orientation.angle_to(&other.orientation)
    }

    pub fn distance_to(&self, other: &Pose) -> f64 {
        (self.position - other.position).norm()
    }

    /// Interpolates position linearly and orientation by slerp.
    pub fn interpolate(&self, other: &Pose, t: f64) -> Pose {
        let orientation = self.orientation.try_slerp(&other.orientation, t, 1e-12).unwrap_or_else(|| {
            // Antipodal quaternions describe rotations π apart; fall back
            // to an explicit axis.
            let delta = other.orientation * self.orientation.inverse();
            let (axis, angle) = delta.axis_angle().unwrap_or((Vector3::x_axis(), 0.0));
            UnitQuaternion::from_axis_angle(&axis, angle * t) * self.orientation
        });
        Pose::new(self.position.lerp(&other.position, t), orientation)
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite()) && self.orientation.coords.iter().all(|v| v.is_finite())
    }
}

impl Mul for Pose {
    type Output = Pose;
    fn mul(self, rhs: Pose) -> Pose {
        self.compose(&rhs)
    }
}

impl Mul<&Pose> for &Pose {
    type Output = Pose;
    fn mul(self, rhs: &Pose) -> Pose {
        self.compose(rhs)
    }
}

pub(crate) fn renormalize(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::new_normalize(q.into_inner())
}

/// Orientation whose forward axis points along `direction`, reached from
/// `current` by the smallest possible rotation.
///
/// When the current forward axis is exactly opposite to `direction`, every
/// half-turn about a perpendicular axis is minimal; the gripper's own up axis
/// is used.
pub fn align_forward_to(current: &UnitQuaternion<f64>, direction: &Vector3<f64>) -> UnitQuaternion<f64> {
    let target = direction.normalize();
    let forward = current * FORWARD;
    let cross = forward.cross(&target);
    let sin = cross.norm();
    let cos = forward.dot(&target);
    let rotation = if sin < 1e-12 {
        if cos > 0.0 {
            UnitQuaternion::identity()
        } else {
            UnitQuaternion::from_axis_angle(&Unit::new_normalize(current * UP), std::f64::consts::PI)
        }
    } else {
        UnitQuaternion::from_axis_angle(&Unit::new_unchecked(cross / sin), sin.atan2(cos))
    };
    renormalize(rotation * current)
}
