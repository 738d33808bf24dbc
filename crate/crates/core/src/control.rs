//! Direct teleoperation: clutch-relative targets, axis constraints with a
//! sensitivity mode, the gripper joystick and force feedback.
//!
//! Constraints act in a task frame fixed when they are configured. Its x
//! axis is the gripper's forward direction, y is the end-effector's +x and
//! z its +y, so "x and roll" means pushing along and twisting about the
//! approach direction.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::geometry::Pose;

/// Scale applied to operator motion in sensitivity mode.
pub const SENSITIVITY_SCALE: f64 = 0.25;
/// Aperture rate at full joystick deflection, 1/s.
pub const MAX_APERTURE_RATE: f64 = 0.25;
pub const JOYSTICK_DEADZONE: f64 = 0.1;
/// Force window mapped onto the vibration range, newtons.
pub const FEEDBACK_MIN_FORCE: f64 = 10.0;
pub const FEEDBACK_MAX_FORCE: f64 = 30.0;
/// Pitch distance from ±π/2 treated as gimbal lock.
pub const GIMBAL_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Sens,
    X,
    Y,
    Z,
    Roll,
    Pitch,
    Yaw,
}

impl Axis {
    pub const ALL: [Axis; 7] = [Axis::Sens, Axis::X, Axis::Y, Axis::Z, Axis::Roll, Axis::Pitch, Axis::Yaw];

    pub fn name(self) -> &'static str {
        ["sens", "x", "y", "z", "roll", "pitch", "yaw"][self as usize]
    }
}

/// Sensitivity flag plus one enable flag per task-frame degree of freedom.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConstraintState {
    pub sens: bool,
    pub x: bool,
    pub y: bool,
    pub z: bool,
    pub roll: bool,
    pub pitch: bool,
    pub yaw: bool,
}

impl Default for ConstraintState {
    fn default() -> Self {
        Self::FREE
    }
}

impl ConstraintState {
    /// Every axis enabled, normal sensitivity.
    pub const FREE: ConstraintState =
        ConstraintState { sens: false, x: true, y: true, z: true, roll: true, pitch: true, yaw: true };

    pub fn get(&self, axis: Axis) -> bool {
        match axis {
            Axis::Sens => self.sens,
            Axis::X => self.x,
            Axis::Y => self.y,
            Axis::Z => self.z,
            Axis::Roll => self.roll,
            Axis::Pitch => self.pitch,
            Axis::Yaw => self.yaw,
        }
    }

    pub fn set(&mut self, axis: Axis, value: bool) {
        match axis {
            Axis::Sens => self.sens = value,
            Axis::X => self.x = value,
            Axis::Y => self.y = value,
            Axis::Z => self.z = value,
            Axis::Roll => self.roll = value,
            Axis::Pitch => self.pitch = value,
            Axis::Yaw => self.yaw = value,
        }
    }

    pub fn toggled(mut self, axis: Axis) -> Self {
        self.set(axis, !self.get(axis));
        self
    }

    /// Bit i set iff `Axis::ALL[i]` is on.
    pub fn to_bits(&self) -> u8 {
        Axis::ALL.iter().enumerate().fold(0, |acc, (i, a)| acc | (u8::from(self.get(*a)) << i))
    }

    pub fn from_bits(bits: u8) -> Self {
        let mut c =
            ConstraintState { sens: false, x: false, y: false, z: false, roll: false, pitch: false, yaw: false };
        for (i, a) in Axis::ALL.iter().enumerate() {
            c.set(*a, bits >> i & 1 == 1);
        }
        c
    }

    /// All 128 states.
    pub fn all() -> impl Iterator<Item = ConstraintState> {
        (0u8..128).map(Self::from_bits)
    }

    /// The flags as ±1, in `Axis::ALL` order.
    pub fn signs(&self) -> [f64; 7] {
        Axis::ALL.map(|a| if self.get(a) { 1.0 } else { -1.0 })
    }

    fn translation_mask(&self) -> Vector3<f64> {
        Vector3::new(f64::from(u8::from(self.x)), f64::from(u8::from(self.y)), f64::from(u8::from(self.z)))
    }
}

/// Named constraint sets offered as teleop actions. Each appears with and
/// without sensitivity mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    AllFree,
    TranslationOnly,
    XRoll,
    RollOnly,
    XOnly,
    XyzRoll,
}

impl Preset {
    pub const ALL: [Preset; 6] =
        [Preset::AllFree, Preset::TranslationOnly, Preset::XRoll, Preset::RollOnly, Preset::XOnly, Preset::XyzRoll];

    pub fn state(self, sens: bool) -> ConstraintState {
        let (x, y, z, roll, pitch, yaw) = match self {
            Preset::AllFree => (true, true, true, true, true, true),
            Preset::TranslationOnly => (true, true, true, false, false, false),
            Preset::XRoll => (true, false, false, true, false, false),
            Preset::RollOnly => (false, false, false, true, false, false),
            Preset::XOnly => (true, false, false, false, false, false),
            Preset::XyzRoll => (true, true, true, true, false, false),
        };
        ConstraintState { sens, x, y, z, roll, pitch, yaw }
    }
}

/// The twelve teleop constraint states, presets in order, sensitivity off
/// before on.
pub fn teleop_presets() -> Vec<ConstraintState> {
    Preset::ALL.iter().flat_map(|p| [p.state(false), p.state(true)]).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClutchState {
    pub engaged: bool,
    pub controller_origin: Pose,
    pub ee_origin: Pose,
}

impl ClutchState {
    pub fn released() -> Self {
        Self { engaged: false, controller_origin: Pose::identity(), ee_origin: Pose::identity() }
    }

    pub fn engage(controller: Pose, ee: Pose) -> Self {
        Self { engaged: true, controller_origin: controller, ee_origin: ee }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ControlError {
    #[error("clutch is not engaged")]
    ClutchDisengaged,
}

/// Scales a rotation's angle, keeping its axis.
pub fn scale_rotation(q: &UnitQuaternion<f64>, s: f64) -> UnitQuaternion<f64> {
    UnitQuaternion::from_scaled_axis(q.scaled_axis() * s)
}

/// End-effector target: the engage-time pose moved by the controller's
/// displacement since engage (world-frame translation, world-frame
/// rotation about the end effector), scaled down in sensitivity mode.
pub fn clutch_target(clutch: &ClutchState, controller_now: &Pose, sens: bool) -> Result<Pose, ControlError> {
    if !clutch.engaged {
        return Err(ControlError::ClutchDisengaged);
    }
    let s = if sens { SENSITIVITY_SCALE } else { 1.0 };
    let dp = (controller_now.position - clutch.controller_origin.position) * s;
    let dq = scale_rotation(&(controller_now.orientation * clutch.controller_origin.orientation.inverse()), s);
    Ok(Pose::new(clutch.ee_origin.position + dp, dq * clutch.ee_origin.orientation))
}

/// Roll, pitch, yaw with R = Rz(yaw)·Ry(pitch)·Rx(roll). At gimbal lock the
/// yaw is folded into roll and the flag is set.
pub fn to_rpy(q: &UnitQuaternion<f64>) -> ([f64; 3], bool) {
    let m: Matrix3<f64> = q.to_rotation_matrix().into_inner();
    let pitch = (-m[(2, 0)]).atan2((m[(0, 0)].powi(2) + m[(1, 0)].powi(2)).sqrt());
    if FRAC_PI_2 - pitch.abs() < GIMBAL_TOLERANCE {
        let s = pitch.signum();
        let roll = (s * m[(0, 1)]).atan2(m[(1, 1)]);
        return ([roll, s * FRAC_PI_2, 0.0], true);
    }
    let roll = m[(2, 1)].atan2(m[(2, 2)]);
    let yaw = m[(1, 0)].atan2(m[(0, 0)]);
    ([roll, pitch, yaw], false)
}

pub fn from_rpy([roll, pitch, yaw]: [f64; 3]) -> UnitQuaternion<f64> {
    UnitQuaternion::from_rotation_matrix(&Rotation3::from_euler_angles(roll, pitch, yaw))
}

/// Result of projecting a motion onto the enabled axes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Constrained {
    pub delta: Pose,
    pub gimbal_degenerate: bool,
}

/// Zeroes the translation and roll/pitch/yaw components of `delta` (in the
/// task frame) whose axes are disabled.
pub fn apply_constraints(delta: &Pose, c: &ConstraintState) -> Constrained {
    let position = delta.position.component_mul(&c.translation_mask());
    let ([roll, pitch, yaw], gimbal) = to_rpy(&delta.orientation);
    let keep = |on: bool, v: f64| if on { v } else { 0.0 };
    let orientation = if c.roll && c.pitch && c.yaw && !gimbal {
        delta.orientation
    } else if !c.roll && !c.pitch && !c.yaw {
        UnitQuaternion::identity()
    } else {
        from_rpy([keep(c.roll, roll), keep(c.pitch, pitch), keep(c.yaw, yaw)])
    };
    Constrained { delta: Pose { position, orientation }, gimbal_degenerate: gimbal }
}

/// Orientation of the task frame for an end-effector orientation: its
/// x, y, z axes are the end effector's z, x, y.
pub fn task_frame(ee_orientation: &UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    let relabel = Matrix3::new(0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0);
    *ee_orientation * UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(relabel))
}

/// Clutch target with constraints applied to the motion since engage,
/// expressed in the task frame `frame`.
pub fn constrained_target(
    clutch: &ClutchState,
    controller_now: &Pose,
    c: &ConstraintState,
    frame: &UnitQuaternion<f64>,
) -> Result<(Pose, bool), ControlError> {
    let raw = clutch_target(clutch, controller_now, c.sens)?;
    let origin = clutch.ee_origin;
    let local = Pose::new(
        frame.inverse() * (raw.position - origin.position),
        frame.inverse() * raw.orientation * origin.orientation.inverse() * frame,
    );
    let out = apply_constraints(&local, c);
    let target = Pose::new(
        origin.position + frame * out.delta.position,
        *frame * out.delta.orientation * frame.inverse() * origin.orientation,
    );
    Ok((target, out.gimbal_degenerate))
}

/// Aperture rate for a joystick deflection: right closes.
pub fn gripper_rate(joystick_x: f64) -> f64 {
    let j = joystick_x.clamp(-1.0, 1.0);
    if j.abs() < JOYSTICK_DEADZONE {
        0.0
    } else {
        -MAX_APERTURE_RATE * j
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeedbackSignal {
    /// Controller vibration in [0, 1].
    pub vibration: f64,
    /// Direction of the contact force; absent whenever vibration is zero.
    pub force_dir: Option<Vector3<f64>>,
    /// Opacity of the force hemisphere, equal to the vibration.
    pub opacity: f64,
}

pub fn feedback_from_force(force: &Vector3<f64>) -> FeedbackSignal {
    let magnitude = force.norm();
    let vibration = ((magnitude - FEEDBACK_MIN_FORCE) / (FEEDBACK_MAX_FORCE - FEEDBACK_MIN_FORCE)).clamp(0.0, 1.0);
    FeedbackSignal { vibration, force_dir: (vibration > 0.0).then(|| force / magnitude), opacity: vibration }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_delta() -> impl Strategy<Value = Pose> {
        (prop::array::uniform3(-0.5f64..0.5), prop::array::uniform3(-3.0f64..3.0))
            .prop_map(|(t, r)| Pose::new(Vector3::from(t), UnitQuaternion::from_scaled_axis(Vector3::from(r))))
    }

    fn close(a: &Pose, b: &Pose, tol: f64) -> bool {
        (a.position - b.position).norm() <= tol && a.angle_to(b) <= tol
    }

    #[test]
    fn bits_round_trip() {
        let all: Vec<_> = ConstraintState::all().collect();
        assert_eq!(all.len(), 128);
        for (i, c) in all.iter().enumerate() {
            assert_eq!(c.to_bits() as usize, i);
        }
        assert_eq!(ConstraintState::FREE.to_bits(), 0b111_1110);
        assert_eq!(teleop_presets().len(), 12);
    }

    #[test]
    fn toggling_flips_one_flag() {
        let c = ConstraintState::FREE;
        let t = c.toggled(Axis::X);
        assert!(!t.x);
        assert_eq!(t.to_bits() ^ c.to_bits(), 1 << 1);
        assert_eq!(c.toggled(Axis::Sens).toggled(Axis::Sens), c);
    }

    #[test]
    fn clutch_examples() {
        let ee = Pose::new(Vector3::new(0.4, 0.1, 1.0), UnitQuaternion::from_euler_angles(0.1, 0.2, 0.3));
        let ctrl = Pose::new(Vector3::new(0.0, 0.3, 1.2), UnitQuaternion::from_euler_angles(-0.4, 0.0, 1.0));
        let clutch = ClutchState::engage(ctrl, ee);
        assert!(close(&clutch_target(&clutch, &ctrl, false).unwrap(), &ee, 1e-12));
        let moved = Pose::new(ctrl.position + Vector3::new(0.1, 0.0, 0.0), ctrl.orientation);
        let t = clutch_target(&clutch, &moved, false).unwrap();
        assert!((t.position - ee.position - Vector3::new(0.1, 0.0, 0.0)).norm() < 1e-12);
        let t = clutch_target(&clutch, &moved, true).unwrap();
        assert!((t.position - ee.position - Vector3::new(0.025, 0.0, 0.0)).norm() < 1e-12);
        assert_eq!(clutch_target(&ClutchState::released(), &moved, false), Err(ControlError::ClutchDisengaged));
    }

    #[test]
    fn constraint_examples() {
        let d = Pose::new(Vector3::new(0.1, 0.2, 0.0), UnitQuaternion::from_euler_angles(0.3, 0.2, 0.0));
        assert_eq!(apply_constraints(&d, &ConstraintState::FREE).delta, d);
        let no_x = ConstraintState { x: false, ..ConstraintState::FREE };
        assert!((apply_constraints(&d, &no_x).delta.position - Vector3::new(0.0, 0.2, 0.0)).norm() < 1e-15);
        let roll_only = Preset::RollOnly.state(false);
        let out = apply_constraints(&d, &roll_only).delta;
        let expected = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), 0.3);
        assert!(out.orientation.angle_to(&expected) < 1e-9);
        assert_eq!(out.position, Vector3::zeros());
    }

    #[test]
    fn gimbal_lock_folds_yaw_into_roll() {
        for pitch in [FRAC_PI_2, -FRAC_PI_2] {
            let q = from_rpy([0.4, pitch, 0.1]);
            let ([r, p, y], flag) = to_rpy(&q);
            assert!(flag);
            assert_eq!(y, 0.0);
            assert!((p - pitch).abs() < 1e-12);
            assert!(from_rpy([r, p, y]).angle_to(&q) < 1e-9);
        }
        let ([r, p, y], flag) = to_rpy(&from_rpy([0.4, 0.3, -0.2]));
        assert!(!flag);
        assert!((r - 0.4).abs() < 1e-12 && (p - 0.3).abs() < 1e-12 && (y + 0.2).abs() < 1e-12);
    }

    #[test]
    fn task_frame_relabels_axes() {
        let q = UnitQuaternion::from_euler_angles(0.3, -1.0, 2.0);
        let f = task_frame(&q);
        assert!((f * Vector3::x() - q * Vector3::z()).norm() < 1e-12);
        assert!((f * Vector3::y() - q * Vector3::x()).norm() < 1e-12);
        assert!((f * Vector3::z() - q * Vector3::y()).norm() < 1e-12);
    }

    #[test]
    fn x_only_moves_along_forward() {
        let ee =
            Pose::new(Vector3::new(0.5, 0.0, 1.0), UnitQuaternion::from_euler_angles(std::f64::consts::PI, 0.0, 0.0));
        let ctrl = Pose::identity();
        let clutch = ClutchState::engage(ctrl, ee);
        let frame = task_frame(&ee.orientation);
        let push = Pose::new(Vector3::new(0.05, 0.02, -0.1), UnitQuaternion::from_euler_angles(0.2, 0.1, 0.3));
        let (t, _) = constrained_target(&clutch, &push, &Preset::XOnly.state(false), &frame).unwrap();
        assert!((t.position - Vector3::new(0.5, 0.0, 0.9)).norm() < 1e-12);
        assert!(t.angle_to(&ee) < 1e-12);
    }

    #[test]
    fn joystick_and_feedback() {
        assert_eq!(gripper_rate(0.0), 0.0);
        assert_eq!(gripper_rate(1.0), -0.25);
        assert_eq!(gripper_rate(-1.0), 0.25);
        assert_eq!(gripper_rate(0.05), 0.0);
        let f = |n: f64| feedback_from_force(&Vector3::new(0.0, n, 0.0));
        assert_eq!(f(10.0).vibration, 0.0);
        assert_eq!(f(20.0).vibration, 0.5);
        assert_eq!(f(30.0).vibration, 1.0);
        assert_eq!(f(45.0).vibration, 1.0);
        assert_eq!(f(5.0).force_dir, None);
        assert_eq!(f(20.0).force_dir, Some(Vector3::y()));
        assert_eq!(f(20.0).opacity, 0.5);
    }

    proptest! {
        #[test]
        fn projection_is_idempotent(bits in 0u8..128, d in arb_delta()) {
            let c = ConstraintState::from_bits(bits);
            let once = apply_constraints(&d, &c).delta;
            let twice = apply_constraints(&once, &c).delta;
            prop_assert!(close(&once, &twice, 1e-9));
        }

        #[test]
        fn clutch_ignores_common_translation(d in arb_delta(), shift in prop::array::uniform3(-1.0f64..1.0)) {
            let ee = Pose::new(Vector3::new(0.3, 0.0, 1.0), UnitQuaternion::identity());
            let origin = Pose::identity();
            let s = Vector3::from(shift);
            let a = clutch_target(&ClutchState::engage(origin, ee), &d, false).unwrap();
            let shifted = |p: &Pose| Pose::new(p.position + s, p.orientation);
            let b = clutch_target(&ClutchState::engage(shifted(&origin), ee), &shifted(&d), false).unwrap();
            prop_assert!(close(&a, &b, 1e-9));
        }

        #[test]
        fn sensitivity_keeps_direction(d in arb_delta()) {
            let ee = Pose::identity();
            let clutch = ClutchState::engage(Pose::identity(), ee);
            let full = clutch_target(&clutch, &d, false).unwrap();
            let fine = clutch_target(&clutch, &d, true).unwrap();
            prop_assert!((fine.position - full.position * 0.25).norm() < 1e-12);
            let (a, b) = (full.orientation.scaled_axis(), fine.orientation.scaled_axis());
            prop_assert!((b - a * 0.25).norm() < 1e-9);
        }
    }
}
