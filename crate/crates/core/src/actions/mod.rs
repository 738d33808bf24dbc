//! Assistive actions: snap targets for planes and circles, a sampling
//! planner, trajectory tracking and the action lifecycle.

mod planner;
mod tracking;

pub use planner::{edge_is_free, plan_motion, plan_with, PlanError, Trajectory, Workspace};
pub use tracking::{Tracker, TrackerStep};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::affordance::{AffordanceId, AffordanceSnapshot};
use crate::control::ConstraintState;
use crate::geometry::{align_forward_to, Circle3D, Plane, Pose};

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Action {
    ConstrainedTeleop { constraints: ConstraintState },
    SnapToPlane { plane: AffordanceId },
    SnapToCircle { circle: AffordanceId },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionType {
    Teleop,
    Plane,
    Circle,
}

impl ActionType {
    pub const ALL: [ActionType; 3] = [ActionType::Teleop, ActionType::Plane, ActionType::Circle];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl Action {
    pub fn action_type(&self) -> ActionType {
        match self {
            Action::ConstrainedTeleop { .. } => ActionType::Teleop,
            Action::SnapToPlane { .. } => ActionType::Plane,
            Action::SnapToCircle { .. } => ActionType::Circle,
        }
    }

    pub fn affordance(&self) -> Option<&str> {
        match self {
            Action::ConstrainedTeleop { .. } => None,
            Action::SnapToPlane { plane } => Some(plane),
            Action::SnapToCircle { circle } => Some(circle),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SnapConfig {
    /// Tool-tip standoff from the target surface, meters.
    pub standoff: f64,
    /// Wall-clock planning budget, seconds.
    pub plan_timeout: f64,
    pub max_iterations: usize,
    /// Largest tree extension, in the planner's pose metric.
    pub extend_step: f64,
    /// Meters per radian in the planner's pose metric.
    pub rotation_weight: f64,
    /// Largest body-point displacement between collision samples, meters.
    pub check_resolution: f64,
    pub workspace: Workspace,
    pub seed: u64,
}

impl Default for SnapConfig {
    fn default() -> Self {
        Self {
            standoff: 0.15,
            plan_timeout: 10.0,
            max_iterations: 5000,
            extend_step: 0.08,
            rotation_weight: 0.15,
            check_resolution: 0.01,
            workspace: Workspace::default(),
            seed: 0,
        }
    }
}

fn target_for(tip: Vector3<f64>, surface_normal: &Vector3<f64>, current: &Pose, tool_offset: f64) -> Pose {
    let orientation = align_forward_to(&current.orientation, &-surface_normal);
    let forward = orientation * crate::geometry::FORWARD;
    Pose::new(tip - forward * tool_offset, orientation)
}

/// Faces the plane and backs the tool tip off to the standoff distance
/// without moving it sideways.
pub fn plane_snap_target(plane: &Plane, current: &Pose, tool_offset: f64, cfg: &SnapConfig) -> Pose {
    let tip = current.tool_tip(tool_offset);
    let on_plane = plane.project_point(&tip);
    target_for(on_plane + plane.normal * cfg.standoff, &plane.normal, current, tool_offset)
}

/// Faces the circle's plane with the tool tip on its axis at the standoff.
pub fn circle_snap_target(circle: &Circle3D, current: &Pose, tool_offset: f64, cfg: &SnapConfig) -> Pose {
    target_for(circle.center + circle.axis * cfg.standoff, &circle.axis, current, tool_offset)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ActionError {
    #[error("affordance `{0}` is not in the latest snapshot")]
    StaleAffordance(AffordanceId),
    #[error("another action is still executing")]
    ActionAlreadyRunning,
    #[error("action {0} has already ended")]
    AlreadyEnded(u64),
}

/// Snap target for a snap action against the given snapshot, or `None` for
/// teleop actions.
pub fn snap_target(
    action: &Action,
    snapshot: &AffordanceSnapshot,
    current: &Pose,
    tool_offset: f64,
    cfg: &SnapConfig,
) -> Result<Option<Pose>, ActionError> {
    match action {
        Action::ConstrainedTeleop { .. } => Ok(None),
        Action::SnapToPlane { plane } => snapshot
            .plane(plane)
            .map(|p| Some(plane_snap_target(&p.plane, current, tool_offset, cfg)))
            .ok_or_else(|| ActionError::StaleAffordance(plane.clone())),
        Action::SnapToCircle { circle } => snapshot
            .circle(circle)
            .map(|c| Some(circle_snap_target(&c.circle, current, tool_offset, cfg)))
            .ok_or_else(|| ActionError::StaleAffordance(circle.clone())),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionStatus {
    Executing,
    Succeeded,
    Failed,
    Cancelled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub id: u64,
    pub action: Action,
    pub status: ActionStatus,
    pub started_at: f64,
    pub ended_at: Option<f64>,
    pub failure_reason: Option<String>,
}

impl ActionRecord {
    pub fn start(id: u64, action: Action, t: f64) -> Self {
        Self { id, action, status: ActionStatus::Executing, started_at: t, ended_at: None, failure_reason: None }
    }

    pub fn is_executing(&self) -> bool {
        self.status == ActionStatus::Executing
    }

    /// Moves an executing record to a terminal status. Terminal records
    /// never change again.
    pub fn finish(&mut self, status: ActionStatus, t: f64, reason: Option<String>) -> Result<(), ActionError> {
        if !self.is_executing() {
            return Err(ActionError::AlreadyEnded(self.id));
        }
        assert!(status != ActionStatus::Executing, "finish needs a terminal status");
        self.status = status;
        self.ended_at = Some(t);
        self.failure_reason = reason;
        Ok(())
    }
}
