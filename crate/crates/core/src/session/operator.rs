//! A scripted operator that completes the benchmark tasks through the same
//! inputs a person would give: menu button presses, item selections,
//! clutch strokes and the gripper joystick.

use std::collections::VecDeque;

use nalgebra::{Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::{InputState, MenuCounters, Session, SessionError, SessionEvent};
use crate::actions::{Action, ActionStatus};
use crate::control::{Axis, ConstraintState, Preset, SENSITIVITY_SCALE};
use crate::geometry::Pose;
use crate::menu::{suggestion_id, toggle_id, Screen, BACK, CLOSE, HAND_SETTINGS, MORE, SNAP_CIRCLE};
use crate::scenesim::tasks::{TaskKind, TaskTarget};

/// Tool-tip height above a grasped face.
const GRASP_STANDOFF: f64 = 0.012;
/// Clutch stroke while turning, radians.
const STROKE: f64 = std::f64::consts::FRAC_PI_3;
const REACH_TOLERANCE: f64 = 0.003;
const STALL_TICKS: u32 = 30;
const MAX_RETRIES: u32 = 3;
const MAX_STROKES: u32 = 40;
/// Ticks to wait for a missing affordance before giving up.
const DETECTION_PATIENCE: u32 = 900;

#[derive(Clone, Copy, Debug, PartialEq)]
enum Choice {
    TargetCircle,
    Constraints(ConstraintState),
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Goal {
    Choose(Choice),
    /// Moves the tool tip to the target point offset along its axis.
    Reach(f64),
    Close,
    /// Turns in clutch strokes until the task monitor is satisfied.
    Turn,
    /// Raises the tool tip along the target axis.
    Lift(f64),
}

#[derive(Clone, Debug, PartialEq)]
enum Phase {
    Start,
    AwaitAction(u64),
    Moving { tip: Vector3<f64>, best: f64, stall: u32 },
    Stroke { stall: u32, last: f64 },
}

#[derive(Clone, Debug)]
pub struct ScriptedOperator {
    kind: TaskKind,
    target: TaskTarget,
    goals: VecDeque<Goal>,
    phase: Phase,
    input: InputState,
    retries: u32,
    strokes: u32,
    waited: u32,
    failure: Option<String>,
}

fn plan_for(kind: TaskKind) -> Vec<Goal> {
    use Goal::*;
    let x_roll = Choice::Constraints(Preset::XRoll.state(false));
    match kind {
        TaskKind::Jar => {
            vec![Choose(Choice::TargetCircle), Choose(x_roll), Reach(GRASP_STANDOFF), Close, Turn, Lift(0.05)]
        }
        TaskKind::Dial => vec![
            Choose(Choice::TargetCircle),
            Choose(x_roll),
            Reach(GRASP_STANDOFF),
            Close,
            Choose(Choice::Constraints(Preset::RollOnly.state(false))),
            Turn,
        ],
        TaskKind::Plug => vec![
            Choose(Choice::TargetCircle),
            Choose(Choice::Constraints(Preset::TranslationOnly.state(true))),
            Reach(0.03),
            Reach(-0.013),
        ],
    }
}

impl ScriptedOperator {
    /// `None` when the session's scene sets up no task.
    pub fn new(session: &Session) -> Option<Self> {
        let monitor = session.monitor()?;
        Some(Self {
            kind: monitor.kind,
            target: monitor.target,
            goals: plan_for(monitor.kind).into(),
            phase: Phase::Start,
            input: session.input().clone(),
            retries: 0,
            strokes: 0,
            waited: 0,
            failure: None,
        })
    }

    pub fn finished(&self) -> bool {
        self.goals.is_empty()
    }

    pub fn failure(&self) -> Option<&str> {
        self.failure.as_deref()
    }

    fn fail(&mut self, why: impl Into<String>) {
        self.failure.get_or_insert_with(|| why.into());
    }

    fn next_goal(&mut self) {
        self.goals.pop_front();
        self.phase = Phase::Start;
        self.retries = 0;
        self.strokes = 0;
        self.waited = 0;
    }

    fn emit(&self) -> SessionEvent {
        SessionEvent::Input { input: self.input.clone() }
    }

    /// Events for the coming tick.
    pub fn act(&mut self, s: &Session) -> Vec<SessionEvent> {
        if self.failure.is_some() {
            return Vec::new();
        }
        if self.input.b {
            self.input.b = false;
            return vec![self.emit()];
        }
        let Some(goal) = self.goals.front().copied() else { return Vec::new() };
        match goal {
            Goal::Choose(choice) => self.choose(choice, s),
            Goal::Reach(offset) => {
                let tip = self.target.point + self.target.axis * offset;
                self.move_tip(s, tip)
            }
            Goal::Lift(height) => {
                let start = s.gripper().pose.tool_tip(s.tool_offset());
                self.move_tip(s, start + self.target.axis * height)
            }
            Goal::Close => {
                if s.gripper().aperture <= 0.2 {
                    self.input.joystick_x = 0.0;
                    self.next_goal();
                } else {
                    self.input.joystick_x = 1.0;
                }
                vec![self.emit()]
            }
            Goal::Turn => self.turn(s),
        }
    }

    fn wanted_circle(&self, s: &Session) -> Option<String> {
        s.snapshot()
            .circles
            .iter()
            .filter(|c| c.circle.axis.dot(&self.target.axis) > 0.9)
            .map(|c| ((c.circle.center - self.target.point).norm(), c))
            .filter(|(d, _)| *d < 0.03)
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, c)| c.id.clone())
    }

    fn select(&mut self, item: &str) -> Vec<SessionEvent> {
        vec![SessionEvent::Select { item: item.to_string() }]
    }

    fn press_b(&mut self) -> Vec<SessionEvent> {
        self.input.b = true;
        vec![self.emit()]
    }

    fn choose(&mut self, choice: Choice, s: &Session) -> Vec<SessionEvent> {
        if self.input.pedal {
            self.input.pedal = false;
            return vec![self.emit()];
        }
        if let Phase::AwaitAction(id) = self.phase {
            match s.actions().get(id as usize).map(|r| r.status) {
                Some(ActionStatus::Executing) => return Vec::new(),
                Some(ActionStatus::Succeeded) => {
                    self.next_goal();
                    return Vec::new();
                }
                Some(_) => {
                    self.retries += 1;
                    if self.retries > MAX_RETRIES {
                        self.fail("action kept failing");
                        return Vec::new();
                    }
                    self.phase = Phase::Start;
                }
                None => self.phase = Phase::Start,
            }
        }
        let menu = s.menu();
        if let Choice::Constraints(c) = choice {
            if s.constraints() == c && !menu.is_visible() {
                self.next_goal();
                return Vec::new();
            }
        }
        let wanted = match choice {
            Choice::TargetCircle => match self.wanted_circle(s) {
                Some(id) => Some(Action::SnapToCircle { circle: id }),
                None => {
                    self.waited += 1;
                    if self.waited > DETECTION_PATIENCE {
                        self.fail("target circle never detected");
                    }
                    if menu.is_visible() && menu.screen != Screen::ExecutingBanner {
                        return self.select(CLOSE);
                    }
                    return Vec::new();
                }
            },
            Choice::Constraints(c) => Some(Action::ConstrainedTeleop { constraints: c }),
        };
        let next_id = s.actions().len() as u64;
        match menu.screen {
            Screen::Hidden | Screen::ResultBanner { .. } => self.press_b(),
            Screen::ExecutingBanner => Vec::new(),
            Screen::PredictiveRoot => match menu.pinned.suggestions.iter().position(|a| Some(a) == wanted.as_ref()) {
                Some(rank) => {
                    if choice == Choice::TargetCircle {
                        self.phase = Phase::AwaitAction(next_id);
                    }
                    self.select(&suggestion_id(rank))
                }
                None => self.select(MORE),
            },
            Screen::ManualRoot => match choice {
                Choice::TargetCircle => self.select(SNAP_CIRCLE),
                Choice::Constraints(c) if c == s.constraints() => self.select(CLOSE),
                Choice::Constraints(_) => self.select(HAND_SETTINGS),
            },
            Screen::HandSettings => match choice {
                Choice::Constraints(c) => match Axis::ALL.iter().find(|a| c.get(**a) != s.constraints().get(**a)) {
                    Some(axis) => self.select(&toggle_id(*axis)),
                    None => self.select(CLOSE),
                },
                Choice::TargetCircle => self.select(BACK),
            },
            Screen::SnapCircleSelect => match (&wanted, choice) {
                (Some(Action::SnapToCircle { circle }), Choice::TargetCircle)
                    if menu.pinned.circles.contains(circle) =>
                {
                    self.phase = Phase::AwaitAction(next_id);
                    self.select(circle)
                }
                (_, Choice::TargetCircle) => self.select(CLOSE),
                _ => self.select(BACK),
            },
            Screen::SnapPlaneSelect => self.select(BACK),
        }
    }

    /// Clutched translation toward a tool-tip position.
    fn move_tip(&mut self, s: &Session, goal_tip: Vector3<f64>) -> Vec<SessionEvent> {
        let tip_now = s.gripper().pose.tool_tip(s.tool_offset());
        let goal = match &self.phase {
            Phase::Moving { tip, .. } => *tip,
            _ => goal_tip,
        };
        if !self.input.pedal || !s.clutch().engaged {
            if matches!(self.phase, Phase::Moving { .. }) && !s.clutch().engaged && self.input.pedal {
                // Clutch dropped, e.g. on a force fault: press again.
                self.input.pedal = false;
                return vec![self.emit()];
            }
            self.input.pedal = true;
            self.phase = Phase::Moving { tip: goal, best: f64::INFINITY, stall: 0 };
            return vec![self.emit()];
        }
        let err = (tip_now - goal).norm();
        let Phase::Moving { best, stall, .. } = &mut self.phase else { unreachable!("moving") };
        if err + 5e-4 < *best {
            *best = err;
            *stall = 0;
        } else {
            *stall += 1;
        }
        if err < REACH_TOLERANCE || *stall > STALL_TICKS {
            self.input.pedal = false;
            self.next_goal();
            return vec![self.emit()];
        }
        let clutch = s.clutch();
        let scale = if s.constraints().sens { SENSITIVITY_SCALE } else { 1.0 };
        let ee_goal = goal - clutch.ee_origin.forward() * s.tool_offset();
        let delta = (ee_goal - clutch.ee_origin.position) / scale;
        let command = Pose::new(clutch.controller_origin.position + delta, clutch.controller_origin.orientation);
        if command != self.input.controller {
            self.input.controller = command;
            return vec![self.emit()];
        }
        Vec::new()
    }

    fn turn_done(&self, s: &Session) -> bool {
        s.monitor().is_some_and(|m| match self.kind {
            TaskKind::Jar => m.loosened,
            _ => m.complete,
        })
    }

    fn turn(&mut self, s: &Session) -> Vec<SessionEvent> {
        if !self.input.pedal {
            if self.turn_done(s) {
                self.next_goal();
                return Vec::new();
            }
            if self.strokes >= MAX_STROKES {
                self.fail("turning made no progress");
                return Vec::new();
            }
            self.input.pedal = true;
            self.phase = Phase::Stroke { stall: 0, last: 0.0 };
            return vec![self.emit()];
        }
        let clutch = *s.clutch();
        if !clutch.engaged {
            self.input.pedal = false;
            return vec![self.emit()];
        }
        let turned = s.gripper().pose.orientation.angle_to(&clutch.ee_origin.orientation);
        let Phase::Stroke { stall, last } = &mut self.phase else {
            self.phase = Phase::Stroke { stall: 0, last: turned };
            return Vec::new();
        };
        if turned > *last + 1e-3 {
            *last = turned;
            *stall = 0;
        } else {
            *stall += 1;
        }
        if turned >= STROKE - 0.02 || *stall > STALL_TICKS || self.turn_done(s) {
            self.strokes += 1;
            self.input.pedal = false;
            return vec![self.emit()];
        }
        let axis = Unit::new_normalize(self.target.axis);
        let command = Pose::new(
            clutch.controller_origin.position,
            UnitQuaternion::from_axis_angle(&axis, STROKE) * clutch.controller_origin.orientation,
        );
        if command != self.input.controller {
            self.input.controller = command;
            return vec![self.emit()];
        }
        Vec::new()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub success: bool,
    pub ticks: u64,
    pub seconds: f64,
    pub counters: MenuCounters,
    pub failure: Option<String>,
}

/// Drives `session` with `operator` until the task completes, the operator
/// gives up or `max_seconds` of session time pass. Work is computed inline.
/// `observe` sees each batch of applied events with the state after it.
pub fn run_scripted(
    session: &mut Session,
    operator: &mut ScriptedOperator,
    max_seconds: f64,
    observe: &mut dyn FnMut(&[SessionEvent], &Session),
) -> Result<RunOutcome, SessionError> {
    let limit = (max_seconds * session.config().tick_rate).ceil() as u64;
    while !session.task_complete() && operator.failure().is_none() && session.tick() < limit {
        for event in operator.act(session) {
            let applied = session.handle_inline(&event)?;
            observe(&applied, session);
        }
        let applied = session.handle_inline(&SessionEvent::Tick)?;
        observe(&applied, session);
    }
    let failure = match (session.task_complete(), operator.failure()) {
        (true, _) => None,
        (false, Some(f)) => Some(f.to_string()),
        (false, None) if operator.finished() => Some("plan finished without completing the task".into()),
        (false, None) => Some("time limit".into()),
    };
    Ok(RunOutcome {
        success: session.task_complete(),
        ticks: session.tick(),
        seconds: session.time(),
        counters: session.counters(),
        failure,
    })
}
