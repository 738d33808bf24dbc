//! The authoritative session: one state advanced by a serialized stream of
//! events. Slow work (detection refreshes, motion plans) is requested by the
//! session and its result delivered back as an event, so replaying the
//! same events reproduces the same states.

mod demos;
pub mod operator;
pub mod trace;

pub use demos::{collapse_decisions, generate_demo, Decision};
pub use operator::{run_scripted, RunOutcome, ScriptedOperator};

use std::collections::BTreeMap;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::actions::{
    plan_motion, snap_target, Action, ActionRecord, ActionStatus, ActionType, PlanError, SnapConfig, Tracker,
    TrackerStep, Trajectory,
};
use crate::affordance::{refresh_snapshot, AffordanceSnapshot, ConfigError, DetectionConfig, SimSensor};
use crate::control::{
    constrained_target, feedback_from_force, gripper_rate, task_frame, ClutchState, ConstraintState, FeedbackSignal,
};
use crate::geometry::Pose;
use crate::hashing::{derive_seed, digest_json};
use crate::menu::{
    handle_event, render, InterfaceMode, MenuContext, MenuEffect, MenuEvent, MenuState, RenderDirective, Screen,
};
use crate::predictor::{
    feasible_actions, featurize, suggest, Candidate, ContextInputs, ScorerWeights, Suggestions, HISTORY_LEN,
};
use crate::scenesim::segment::{GroundTruthSegmenter, RegionGrowingSegmenter, Segmenter};
use crate::scenesim::tasks::{start_pose, TaskMonitor};
use crate::scenesim::{GripperModel, GripperState, SceneDescription, SceneError};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmenterKind {
    #[default]
    GroundTruth,
    RegionGrowing,
}

impl SegmenterKind {
    pub fn segmenter(self) -> Box<dyn Segmenter> {
        match self {
            SegmenterKind::GroundTruth => Box::new(GroundTruthSegmenter),
            SegmenterKind::RegionGrowing => Box::new(RegionGrowingSegmenter::default()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorConfig {
    /// Points per square meter.
    pub density: f64,
    /// Depth noise, meters.
    pub noise_sigma: f64,
    pub segmenter: SegmenterKind,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self { density: 1.0e4, noise_sigma: 0.001, segmenter: SegmenterKind::GroundTruth }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub mode: InterfaceMode,
    pub seed: u64,
    /// Simulation ticks per second.
    pub tick_rate: f64,
    /// Ticks between trace checkpoints.
    pub checkpoint_every: u64,
    /// Suggestions shown in the predictive menu.
    pub suggestions: usize,
    pub detection: DetectionConfig,
    pub snap: SnapConfig,
    pub sensor: SensorConfig,
    pub gripper: GripperModel,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            mode: InterfaceMode::Manual,
            seed: 0,
            tick_rate: 60.0,
            checkpoint_every: 60,
            suggestions: crate::predictor::DEFAULT_K,
            detection: DetectionConfig::default(),
            snap: SnapConfig::default(),
            sensor: SensorConfig::default(),
            gripper: GripperModel::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("predictive mode needs scorer weights")]
    WeightsRequired,
    #[error("invalid session config: {0}")]
    Config(String),
    #[error(transparent)]
    Detection(#[from] ConfigError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error("work result for request {0} does not match its request")]
    WorkMismatch(u64),
}

/// Controller and button state sampled by the cockpit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InputState {
    pub controller: Pose,
    /// Menu button.
    pub b: bool,
    /// Clutch pedal.
    pub pedal: bool,
    /// Gripper joystick, right closes.
    pub joystick_x: f64,
    /// Menu item under the pointer.
    pub hover: Option<String>,
}

impl Default for InputState {
    fn default() -> Self {
        Self { controller: Pose::identity(), b: false, pedal: false, joystick_x: 0.0, hover: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SessionEvent {
    Input {
        input: InputState,
    },
    /// Direct click on a menu item.
    Select {
        item: String,
    },
    /// Advances the simulation by one period.
    Tick,
    /// The result of request `id` is available.
    WorkDone {
        id: u64,
    },
}

/// Slow work the session hands to its host.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum WorkRequest {
    Refresh { capture: u64, time: f64, previous: Arc<AffordanceSnapshot> },
    Plan { start: Pose, goal: Pose, seed: u64 },
}

#[derive(Clone, Debug, PartialEq)]
pub enum WorkResult {
    Snapshot(AffordanceSnapshot),
    Plan(Result<Trajectory, PlanError>),
}

/// Everything needed to compute work results away from the session.
#[derive(Clone, Debug)]
pub struct WorkContext {
    pub scene: Arc<SceneDescription>,
    pub config: Arc<SessionConfig>,
}

/// Computes a work result. Pure in its inputs except for cancellation.
pub fn run_work(ctx: &WorkContext, request: &WorkRequest, cancel: Option<&AtomicBool>) -> WorkResult {
    let cfg = &ctx.config;
    match request {
        WorkRequest::Refresh { capture, time, previous } => {
            let sensor = SimSensor::new(ctx.scene.clone(), cfg.sensor.density, cfg.sensor.noise_sigma, cfg.seed);
            let frame = sensor.frame(*capture, *time);
            let segmenter = cfg.sensor.segmenter.segmenter();
            WorkResult::Snapshot(refresh_snapshot(previous, frame.as_ref(), segmenter.as_ref(), &cfg.detection))
        }
        WorkRequest::Plan { start, goal, seed } => {
            let snap = SnapConfig { seed: *seed, ..cfg.snap.clone() };
            WorkResult::Plan(plan_motion(start, goal, &ctx.scene, &cfg.gripper.shape, &snap, cancel))
        }
    }
}

/// What one event asked of the host.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Step {
    pub requests: Vec<(u64, WorkRequest)>,
    /// Requests whose results are no longer wanted.
    pub cancelled: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "phase", rename_all = "snake_case")]
enum Execution {
    Planning { work: u64 },
    Tracking { tracker: Tracker },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Running {
    record: usize,
    execution: Execution,
}

/// Predictor output at one trigger, with the inputs that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub tick: u64,
    pub context: Vec<f64>,
    pub candidates: Vec<Candidate>,
    pub suggestions: Suggestions,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MenuCounters {
    /// Rising edges of the menu button.
    pub button_presses: u64,
    pub selections: u64,
    /// Times a menu root was opened.
    pub openings: u64,
}

impl MenuCounters {
    pub fn interactions(&self) -> u64 {
        self.button_presses + self.selections
    }
}

/// Per-tick view for the cockpit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameView {
    pub tick: u64,
    pub time: f64,
    pub gripper: GripperState,
    pub constraints: ConstraintState,
    pub clutch_engaged: bool,
    pub gimbal_degenerate: bool,
    pub feedback: FeedbackSignal,
    pub menu: RenderDirective,
    pub snapshot_revision: u64,
    pub action: Option<ActionRecord>,
    pub task_complete: bool,
}

pub struct Session {
    scene: Arc<SceneDescription>,
    config: Arc<SessionConfig>,
    weights: Option<Arc<ScorerWeights>>,
    tick: u64,
    gripper: GripperState,
    input: InputState,
    clutch: ClutchState,
    constraints: ConstraintState,
    frame: nalgebra::UnitQuaternion<f64>,
    gimbal: bool,
    menu: MenuState,
    snapshot: Arc<AffordanceSnapshot>,
    snapshot_digest: String,
    captures: u64,
    pending: BTreeMap<u64, WorkRequest>,
    refresh_pending: Option<u64>,
    next_work: u64,
    actions: Vec<ActionRecord>,
    running: Option<Running>,
    history: Vec<ActionType>,
    last_teleop_opening: Option<u64>,
    prediction: Option<Prediction>,
    decisions: Vec<Decision>,
    counters: MenuCounters,
    monitor: Option<TaskMonitor>,
}

/// The state a checksum covers.
#[derive(Serialize)]
struct Digest<'a> {
    tick: u64,
    gripper: &'a GripperState,
    input: &'a InputState,
    clutch: &'a ClutchState,
    constraints: &'a ConstraintState,
    frame: &'a nalgebra::UnitQuaternion<f64>,
    gimbal: bool,
    menu: &'a MenuState,
    snapshot: &'a str,
    captures: u64,
    pending: Vec<u64>,
    refresh_pending: Option<u64>,
    next_work: u64,
    actions: &'a [ActionRecord],
    running: &'a Option<Running>,
    history: &'a [ActionType],
    last_teleop_opening: Option<u64>,
    counters: &'a MenuCounters,
    monitor: &'a Option<TaskMonitor>,
}

impl Session {
    /// Starts a session with the gripper at the start pose and the first
    /// snapshot detected synchronously.
    pub fn new(
        scene: SceneDescription,
        config: SessionConfig,
        weights: Option<Arc<ScorerWeights>>,
    ) -> Result<Self, SessionError> {
        scene.validate()?;
        config.detection.validate()?;
        if config.tick_rate.is_nan()
            || config.tick_rate <= 0.0
            || config.checkpoint_every == 0
            || config.suggestions == 0
        {
            return Err(SessionError::Config("tick_rate, checkpoint_every and suggestions must be positive".into()));
        }
        if config.mode == InterfaceMode::Predictive && weights.is_none() {
            return Err(SessionError::WeightsRequired);
        }
        let scene = Arc::new(scene);
        let config = Arc::new(config);
        let gripper = GripperState::at(start_pose());
        let monitor = TaskMonitor::new(&scene, config.gripper.shape.tool_offset);
        let mut s = Self {
            scene,
            menu: MenuState::new(config.mode),
            config,
            weights,
            tick: 0,
            frame: task_frame(&gripper.pose.orientation),
            gripper,
            input: InputState::default(),
            clutch: ClutchState::released(),
            constraints: ConstraintState::FREE,
            gimbal: false,
            snapshot: Arc::new(AffordanceSnapshot::default()),
            snapshot_digest: String::new(),
            captures: 0,
            pending: BTreeMap::new(),
            refresh_pending: None,
            next_work: 0,
            actions: Vec::new(),
            running: None,
            history: Vec::new(),
            last_teleop_opening: None,
            prediction: None,
            decisions: Vec::new(),
            counters: MenuCounters::default(),
            monitor,
        };
        let first = s.refresh_request();
        if let WorkResult::Snapshot(snap) = run_work(&s.work_context(), &first, None) {
            s.install_snapshot(snap);
        }
        s.predict();
        Ok(s)
    }

    pub fn work_context(&self) -> WorkContext {
        WorkContext { scene: self.scene.clone(), config: self.config.clone() }
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn scene(&self) -> &SceneDescription {
        &self.scene
    }

    pub fn weights(&self) -> Option<&Arc<ScorerWeights>> {
        self.weights.as_ref()
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 / self.config.tick_rate
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.config.tick_rate
    }

    pub fn tool_offset(&self) -> f64 {
        self.config.gripper.shape.tool_offset
    }

    pub fn gripper(&self) -> &GripperState {
        &self.gripper
    }

    pub fn input(&self) -> &InputState {
        &self.input
    }

    pub fn clutch(&self) -> &ClutchState {
        &self.clutch
    }

    pub fn constraints(&self) -> ConstraintState {
        self.constraints
    }

    pub fn menu(&self) -> &MenuState {
        &self.menu
    }

    pub fn snapshot(&self) -> &Arc<AffordanceSnapshot> {
        &self.snapshot
    }

    pub fn actions(&self) -> &[ActionRecord] {
        &self.actions
    }

    pub fn action_running(&self) -> bool {
        self.running.is_some()
    }

    pub fn prediction(&self) -> Option<&Prediction> {
        self.prediction.as_ref()
    }

    /// One entry per started action, with the predictor inputs in force
    /// when it was chosen.
    pub fn decisions(&self) -> &[Decision] {
        &self.decisions
    }

    pub fn counters(&self) -> MenuCounters {
        self.counters
    }

    pub fn monitor(&self) -> Option<&TaskMonitor> {
        self.monitor.as_ref()
    }

    pub fn task_complete(&self) -> bool {
        self.monitor.is_some_and(|m| m.complete)
    }

    pub fn pending_work(&self) -> impl Iterator<Item = (u64, &WorkRequest)> {
        self.pending.iter().map(|(id, r)| (*id, r))
    }

    /// SHA-256 over the full session state.
    pub fn checksum(&self) -> String {
        digest_json(&Digest {
            tick: self.tick,
            gripper: &self.gripper,
            input: &self.input,
            clutch: &self.clutch,
            constraints: &self.constraints,
            frame: &self.frame,
            gimbal: self.gimbal,
            menu: &self.menu,
            snapshot: &self.snapshot_digest,
            captures: self.captures,
            pending: self.pending.keys().copied().collect(),
            refresh_pending: self.refresh_pending,
            next_work: self.next_work,
            actions: &self.actions,
            running: &self.running,
            history: &self.history,
            last_teleop_opening: self.last_teleop_opening,
            counters: &self.counters,
            monitor: &self.monitor,
        })
    }

    pub fn frame_view(&self) -> FrameView {
        FrameView {
            tick: self.tick,
            time: self.time(),
            gripper: self.gripper,
            constraints: self.constraints,
            clutch_engaged: self.clutch.engaged,
            gimbal_degenerate: self.gimbal,
            feedback: feedback_from_force(&self.gripper.estimated_force),
            menu: render(&self.menu, &self.constraints),
            snapshot_revision: self.snapshot.revision,
            action: self.actions.last().cloned(),
            task_complete: self.task_complete(),
        }
    }

    /// Applies one event. `resolve` is asked for the result of a
    /// `WorkDone` request that is still pending.
    pub fn handle(
        &mut self,
        event: &SessionEvent,
        resolve: &mut dyn FnMut(u64, &WorkRequest) -> WorkResult,
    ) -> Result<Step, SessionError> {
        let mut step = Step::default();
        match event {
            SessionEvent::Input { input } => self.on_input(input, &mut step),
            SessionEvent::Select { item } => {
                self.counters.selections += 1;
                self.menu_event(MenuEvent::Select { item: item.clone() }, &mut step);
            }
            SessionEvent::Tick => self.on_tick(&mut step),
            SessionEvent::WorkDone { id } => {
                if let Some(request) = self.pending.remove(id) {
                    let result = resolve(*id, &request);
                    self.on_work_done(*id, result, &mut step)?;
                }
            }
        }
        Ok(step)
    }

    /// Applies an event, computing any requested work inline right away.
    pub fn handle_inline(&mut self, event: &SessionEvent) -> Result<Vec<SessionEvent>, SessionError> {
        let ctx = self.work_context();
        let mut resolve = |_: u64, r: &WorkRequest| run_work(&ctx, r, None);
        let step = self.handle(event, &mut resolve)?;
        let mut applied = vec![event.clone()];
        let mut queue: Vec<u64> = step.requests.iter().map(|(id, _)| *id).collect();
        while let Some(id) = queue.first().copied() {
            queue.remove(0);
            let done = SessionEvent::WorkDone { id };
            let next = self.handle(&done, &mut resolve)?;
            applied.push(done);
            queue.extend(next.requests.iter().map(|(id, _)| *id));
        }
        Ok(applied)
    }

    /// Ends the session: a running action is cancelled.
    pub fn finish(&mut self) {
        let mut step = Step::default();
        self.cancel_running(&mut step);
    }

    fn refresh_request(&mut self) -> WorkRequest {
        let capture = self.captures;
        self.captures += 1;
        WorkRequest::Refresh { capture, time: self.time(), previous: self.snapshot.clone() }
    }

    fn request(&mut self, request: WorkRequest, step: &mut Step) -> u64 {
        let id = self.next_work;
        self.next_work += 1;
        self.pending.insert(id, request.clone());
        step.requests.push((id, request));
        id
    }

    fn install_snapshot(&mut self, snapshot: AffordanceSnapshot) {
        self.snapshot_digest = digest_json(&snapshot);
        self.snapshot = Arc::new(snapshot);
    }

    fn menu_context<R>(&self, f: impl FnOnce(&MenuContext<'_>) -> R) -> R {
        let planes: Vec<String> = self.snapshot.planes.iter().map(|p| p.id.clone()).collect();
        let circles: Vec<String> = self.snapshot.circles.iter().map(|c| c.id.clone()).collect();
        f(&MenuContext {
            revision: self.snapshot.revision,
            planes: &planes,
            circles: &circles,
            constraints: self.constraints,
            action_executing: self.running.is_some(),
        })
    }

    fn menu_event(&mut self, event: MenuEvent, step: &mut Step) {
        let before = self.menu.screen;
        let (menu, effects) = self.menu_context(|ctx| handle_event(&self.menu, &event, ctx));
        self.menu = menu;
        let opened = matches!(self.menu.screen, Screen::ManualRoot | Screen::PredictiveRoot)
            && matches!(before, Screen::Hidden | Screen::ResultBanner { .. });
        if opened {
            self.counters.openings += 1;
        }
        for effect in effects {
            match effect {
                MenuEffect::ExecuteAction { action } => self.start_action(action, step),
                MenuEffect::CancelAction => self.cancel_running(step),
            }
        }
    }

    fn notify_status(&mut self, status: ActionStatus) {
        let (menu, _) = self.menu_context(|ctx| handle_event(&self.menu, &MenuEvent::ActionStatus { status }, ctx));
        self.menu = menu;
    }

    fn on_input(&mut self, input: &InputState, step: &mut Step) {
        let prev = std::mem::replace(&mut self.input, input.clone());
        if input.hover != prev.hover {
            self.menu_event(MenuEvent::HoverMove { item: input.hover.clone() }, step);
        }
        if input.b && !prev.b {
            self.counters.button_presses += 1;
            self.menu_event(MenuEvent::ButtonB, step);
        }
        if input.pedal && !prev.pedal {
            self.menu_event(MenuEvent::PedalDown, step);
            self.clutch = ClutchState::engage(input.controller, self.gripper.pose);
        }
        if !input.pedal && prev.pedal {
            self.clutch = ClutchState::released();
            self.menu_event(MenuEvent::PedalUp, step);
        }
    }

    fn start_action(&mut self, action: Action, step: &mut Step) {
        if self.running.is_some() {
            return;
        }
        let id = self.actions.len() as u64;
        if let Some(p) = &self.prediction {
            self.decisions.push(Decision {
                action_id: id,
                opening: self.counters.openings,
                context: p.context.clone(),
                candidates: p.candidates.clone(),
                action: action.clone(),
            });
        }
        let mut record = ActionRecord::start(id, action.clone(), self.time());
        let target = snap_target(&action, &self.snapshot, &self.gripper.pose, self.tool_offset(), &self.config.snap);
        match (target, &action) {
            (Ok(None), Action::ConstrainedTeleop { constraints }) => {
                self.constraints = *constraints;
                self.frame = task_frame(&self.gripper.pose.orientation);
                if self.clutch.engaged {
                    self.clutch = ClutchState::engage(self.input.controller, self.gripper.pose);
                }
                record.finish(ActionStatus::Succeeded, self.time(), None).expect("fresh record");
                self.actions.push(record);
                self.notify_status(ActionStatus::Succeeded);
                self.action_ended(ActionType::Teleop);
            }
            (Ok(Some(goal)), _) => {
                self.actions.push(record);
                self.clutch = ClutchState::released();
                let seed = derive_seed(self.config.seed, "plan", id);
                let work = self.request(WorkRequest::Plan { start: self.gripper.pose, goal, seed }, step);
                self.running =
                    Some(Running { record: self.actions.len() - 1, execution: Execution::Planning { work } });
                self.notify_status(ActionStatus::Executing);
            }
            (Ok(None), _) => unreachable!("only teleop actions have no snap target"),
            (Err(e), _) => {
                record.finish(ActionStatus::Failed, self.time(), Some(e.to_string())).expect("fresh record");
                self.actions.push(record);
                self.notify_status(ActionStatus::Executing);
                self.notify_status(ActionStatus::Failed);
                self.action_ended(action.action_type());
            }
        }
    }

    fn end_running(&mut self, status: ActionStatus, reason: Option<String>, step: &mut Step) {
        let Some(running) = self.running.take() else { return };
        if let Execution::Planning { work } = running.execution {
            if self.pending.remove(&work).is_some() {
                step.cancelled.push(work);
            }
        }
        let t = self.time();
        let record = &mut self.actions[running.record];
        record.finish(status, t, reason).expect("running record is executing");
        let kind = record.action.action_type();
        self.notify_status(status);
        self.action_ended(kind);
    }

    fn cancel_running(&mut self, step: &mut Step) {
        self.end_running(ActionStatus::Cancelled, None, step);
    }

    fn action_ended(&mut self, kind: ActionType) {
        let opening = self.counters.openings;
        let merge = kind == ActionType::Teleop
            && self.history.last() == Some(&ActionType::Teleop)
            && self.last_teleop_opening == Some(opening);
        if !merge {
            self.history.push(kind);
        }
        self.last_teleop_opening = (kind == ActionType::Teleop).then_some(opening);
        self.predict();
    }

    fn predict(&mut self) {
        let recent: Vec<ActionType> = self.history.iter().rev().take(HISTORY_LEN).copied().collect();
        let context = featurize(&ContextInputs {
            history: &recent,
            snapshot: &self.snapshot,
            gripper: &self.gripper,
            constraints: &self.constraints,
        });
        let candidates = feasible_actions(&self.snapshot, &self.gripper, self.tool_offset());
        let suggestions =
            suggest(self.weights.as_deref(), &context, &candidates, self.config.suggestions, self.snapshot.revision);
        let (menu, _) = self.menu_context(|ctx| {
            handle_event(&self.menu, &MenuEvent::SuggestionsReady { suggestions: suggestions.clone() }, ctx)
        });
        self.menu = menu;
        self.prediction = Some(Prediction { tick: self.tick, context, candidates, suggestions });
    }

    fn on_work_done(&mut self, id: u64, result: WorkResult, step: &mut Step) -> Result<(), SessionError> {
        match result {
            WorkResult::Snapshot(snapshot) => {
                if self.refresh_pending != Some(id) {
                    return Err(SessionError::WorkMismatch(id));
                }
                self.refresh_pending = None;
                self.install_snapshot(snapshot);
            }
            WorkResult::Plan(plan) => {
                let planning = matches!(
                    &self.running,
                    Some(Running { execution: Execution::Planning { work }, .. }) if *work == id
                );
                if !planning {
                    return Err(SessionError::WorkMismatch(id));
                }
                match plan {
                    Ok(trajectory) => {
                        let running = self.running.as_mut().expect("planning");
                        running.execution = Execution::Tracking { tracker: Tracker::new(trajectory) };
                    }
                    Err(e) => self.end_running(ActionStatus::Failed, Some(e.to_string()), step),
                }
            }
        }
        Ok(())
    }

    fn on_tick(&mut self, step: &mut Step) {
        let dt = self.dt();
        let mut target = self.gripper.pose;
        let mut aperture_rate = 0.0;
        let mut tracking_end = None;
        self.gimbal = false;

        match &mut self.running {
            Some(Running { execution: Execution::Tracking { tracker }, .. }) => {
                match tracker.step(&self.gripper.pose, &self.config.gripper, dt) {
                    TrackerStep::Command(p) => target = p,
                    TrackerStep::Done => tracking_end = Some((ActionStatus::Succeeded, None)),
                    TrackerStep::Stalled => {
                        tracking_end = Some((ActionStatus::Failed, Some("tracking stalled".to_string())))
                    }
                }
            }
            Some(_) => {}
            None => {
                aperture_rate = gripper_rate(self.input.joystick_x);
                if self.clutch.engaged && self.menu.direct_control_active() {
                    if let Ok((t, gimbal)) =
                        constrained_target(&self.clutch, &self.input.controller, &self.constraints, &self.frame)
                    {
                        target = t;
                        self.gimbal = gimbal;
                    }
                }
            }
        }
        if let Some((status, reason)) = tracking_end {
            self.end_running(status, reason, step);
        }

        let next = self.config.gripper.step(&self.gripper, &target, aperture_rate, dt, &self.scene);
        if let Some(m) = &mut self.monitor {
            m.observe(&self.gripper, &next);
        }
        self.gripper = next;
        self.tick += 1;

        if self.gripper.fault.is_some() {
            self.clutch = ClutchState::released();
            if self.running.is_some() {
                self.end_running(ActionStatus::Failed, Some("excessive force".to_string()), step);
            }
        }

        let period = (self.config.detection.refresh_period * self.config.tick_rate).round().max(1.0) as u64;
        if self.tick.is_multiple_of(period) && self.refresh_pending.is_none() {
            let request = self.refresh_request();
            self.refresh_pending = Some(self.request(request, step));
        }
    }
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session")
            .field("tick", &self.tick)
            .field("mode", &self.config.mode)
            .field("actions", &self.actions.len())
            .finish_non_exhaustive()
    }
}
