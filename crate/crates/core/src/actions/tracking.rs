use serde::{Deserialize, Serialize};

use super::Trajectory;
use crate::geometry::Pose;
use crate::scenesim::GripperModel;

/// Position tolerance for reaching a setpoint or the goal, meters.
pub const REACH_DISTANCE: f64 = 0.005;
/// Orientation tolerance, radians.
pub const REACH_ANGLE: f64 = std::f64::consts::PI / 180.0;
/// Ticks the gripper may lag its setpoint before tracking gives up.
pub const STALL_TICKS: u32 = 30;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TrackerStep {
    Command(Pose),
    Done,
    Stalled,
}

/// Walks a trajectory with a setpoint that moves along the interpolated
/// path no faster than the gripper can follow, so the executed motion is
/// the one the planner checked.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tracker {
    pub waypoints: Vec<Pose>,
    segment: usize,
    progress: f64,
    lagging: u32,
}

fn within(a: &Pose, b: &Pose) -> bool {
    (a.position - b.position).norm() <= REACH_DISTANCE && a.angle_to(b) <= REACH_ANGLE
}

impl Tracker {
    pub fn new(trajectory: Trajectory) -> Self {
        assert!(!trajectory.waypoints.is_empty(), "empty trajectory");
        Self { waypoints: trajectory.waypoints, segment: 0, progress: 0.0, lagging: 0 }
    }

    pub fn goal(&self) -> &Pose {
        self.waypoints.last().unwrap()
    }

    pub fn setpoint(&self) -> Pose {
        match self.waypoints.get(self.segment + 1) {
            Some(next) => self.waypoints[self.segment].interpolate(next, self.progress),
            None => *self.goal(),
        }
    }

    fn at_end(&self) -> bool {
        self.segment + 1 >= self.waypoints.len()
    }

    pub fn step(&mut self, current: &Pose, model: &GripperModel, dt: f64) -> TrackerStep {
        if self.at_end() && within(current, self.goal()) {
            return TrackerStep::Done;
        }
        if within(current, &self.setpoint()) {
            self.lagging = 0;
            if !self.at_end() {
                let (a, b) = (self.waypoints[self.segment], self.waypoints[self.segment + 1]);
                let length = (b.position - a.position).norm();
                let turn = a.angle_to(&b);
                let mut ds = f64::INFINITY;
                if length > 0.0 {
                    ds = ds.min(0.95 * model.max_linear_speed * dt / length);
                }
                if turn > 0.0 {
                    ds = ds.min(0.95 * model.max_angular_speed * dt / turn);
                }
                self.progress = (self.progress + ds).min(1.0);
                if self.progress >= 1.0 {
                    self.segment += 1;
                    self.progress = 0.0;
                }
            }
        } else {
            self.lagging += 1;
            if self.lagging > STALL_TICKS {
                return TrackerStep::Stalled;
            }
        }
        TrackerStep::Command(self.setpoint())
    }
}
