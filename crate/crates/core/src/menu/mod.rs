//! The operator menu as a pure state machine: screens, hover and
//! selection, and the render directives the cockpit draws.

use std::f64::consts::{FRAC_PI_2, TAU};

use serde::{Deserialize, Serialize};

use crate::actions::{Action, ActionStatus};
use crate::affordance::{hue_for, AffordanceId};
use crate::control::{Axis, ConstraintState};
use crate::predictor::Suggestions;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InterfaceMode {
    /// Direct teleoperation only.
    #[default]
    #[serde(rename = "DT")]
    Direct,
    #[serde(rename = "MM")]
    Manual,
    #[serde(rename = "PM")]
    Predictive,
}

impl std::str::FromStr for InterfaceMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_uppercase().as_str() {
            "DT" => Ok(Self::Direct),
            "MM" => Ok(Self::Manual),
            "PM" => Ok(Self::Predictive),
            _ => Err(format!("unknown mode `{s}` (expected DT, MM or PM)")),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "screen", rename_all = "snake_case")]
pub enum Screen {
    #[default]
    Hidden,
    ManualRoot,
    HandSettings,
    SnapPlaneSelect,
    SnapCircleSelect,
    PredictiveRoot,
    ExecutingBanner,
    ResultBanner {
        success: bool,
    },
}

pub const CLOSE: &str = "close";
pub const BACK: &str = "back";
pub const MORE: &str = "more";
pub const HAND_SETTINGS: &str = "hand_settings";
pub const SNAP_PLANE: &str = "snap_plane";
pub const SNAP_CIRCLE: &str = "snap_circle";

/// Item id for a constraint toggle.
pub fn toggle_id(axis: Axis) -> String {
    format!("toggle:{}", axis.name())
}

pub fn suggestion_id(rank: usize) -> String {
    format!("suggestion:{rank}")
}

/// What the menu shows, frozen when it opens.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pinned {
    pub revision: u64,
    pub planes: Vec<AffordanceId>,
    pub circles: Vec<AffordanceId>,
    pub suggestions: Vec<Action>,
    pub degraded: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MenuState {
    pub mode: InterfaceMode,
    pub screen: Screen,
    pub hover: Option<String>,
    /// Latest suggestions from the predictor.
    pub suggestions: Suggestions,
    pub pinned: Pinned,
}

impl Eq for MenuState {}

impl std::hash::Hash for MenuState {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.mode.hash(state);
        self.screen.hash(state);
        self.hover.hash(state);
        self.pinned.hash(state);
        self.suggestions.revision.hash(state);
        self.suggestions.degraded.hash(state);
        for r in &self.suggestions.items {
            r.action.hash(state);
            r.score.to_bits().hash(state);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum MenuEvent {
    ButtonB,
    PedalDown,
    PedalUp,
    /// Item under the pointer, as reported by the cockpit.
    HoverMove {
        item: Option<String>,
    },
    Select {
        item: String,
    },
    ActionStatus {
        status: ActionStatus,
    },
    SuggestionsReady {
        suggestions: Suggestions,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "effect", rename_all = "snake_case")]
pub enum MenuEffect {
    ExecuteAction { action: Action },
    CancelAction,
}

/// Session facts the menu reads but does not own.
#[derive(Clone, Copy, Debug)]
pub struct MenuContext<'a> {
    pub revision: u64,
    pub planes: &'a [AffordanceId],
    pub circles: &'a [AffordanceId],
    pub constraints: ConstraintState,
    pub action_executing: bool,
}

impl MenuState {
    pub fn new(mode: InterfaceMode) -> Self {
        Self { mode, ..Default::default() }
    }

    pub fn is_visible(&self) -> bool {
        self.screen != Screen::Hidden
    }

    /// The operator's hand drives the robot directly.
    pub fn direct_control_active(&self) -> bool {
        self.screen == Screen::Hidden
    }

    fn open(&mut self, ctx: &MenuContext<'_>) {
        self.pinned = Pinned {
            revision: ctx.revision,
            planes: ctx.planes.to_vec(),
            circles: ctx.circles.to_vec(),
            suggestions: Vec::new(),
            degraded: false,
        };
        self.hover = None;
        match self.mode {
            InterfaceMode::Direct => {}
            InterfaceMode::Manual => self.screen = Screen::ManualRoot,
            InterfaceMode::Predictive => {
                let pinned = &mut self.pinned;
                pinned.suggestions = self
                    .suggestions
                    .items
                    .iter()
                    .map(|r| r.action.clone())
                    .filter(|a| match a {
                        Action::ConstrainedTeleop { .. } => true,
                        Action::SnapToPlane { plane } => pinned.planes.contains(plane),
                        Action::SnapToCircle { circle } => pinned.circles.contains(circle),
                    })
                    .collect();
                pinned.degraded = self.suggestions.degraded;
                self.screen = Screen::PredictiveRoot;
            }
        }
    }

    fn go(&mut self, screen: Screen) {
        self.screen = screen;
        self.hover = None;
    }

    /// Selectable item ids on the current screen.
    pub fn items(&self) -> Vec<String> {
        let ids = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        match self.screen {
            Screen::Hidden | Screen::ExecutingBanner => Vec::new(),
            Screen::ManualRoot => ids(&[HAND_SETTINGS, SNAP_PLANE, SNAP_CIRCLE, CLOSE]),
            Screen::HandSettings => {
                let mut v: Vec<String> = Axis::ALL.iter().map(|a| toggle_id(*a)).collect();
                v.extend(ids(&[BACK, CLOSE]));
                v
            }
            Screen::SnapPlaneSelect => self.pinned.planes.iter().cloned().chain(ids(&[BACK, CLOSE])).collect(),
            Screen::SnapCircleSelect => self.pinned.circles.iter().cloned().chain(ids(&[BACK, CLOSE])).collect(),
            Screen::PredictiveRoot => {
                (0..self.pinned.suggestions.len()).map(suggestion_id).chain(ids(&[MORE, CLOSE])).collect()
            }
            Screen::ResultBanner { .. } => ids(&[CLOSE]),
        }
    }

    fn select(&mut self, item: &str, ctx: &MenuContext<'_>) -> Vec<MenuEffect> {
        if !self.items().iter().any(|i| i == item) {
            return Vec::new();
        }
        let execute = |action: Action| vec![MenuEffect::ExecuteAction { action }];
        match (self.screen, item) {
            (_, CLOSE) => self.go(Screen::Hidden),
            (Screen::ManualRoot, HAND_SETTINGS) => self.go(Screen::HandSettings),
            (Screen::ManualRoot, SNAP_PLANE) => self.go(Screen::SnapPlaneSelect),
            (Screen::ManualRoot, SNAP_CIRCLE) => self.go(Screen::SnapCircleSelect),
            (Screen::PredictiveRoot, MORE) => self.go(Screen::ManualRoot),
            (_, BACK) => self.go(Screen::ManualRoot),
            (Screen::HandSettings, toggle) => {
                if ctx.action_executing {
                    return Vec::new();
                }
                let axis = Axis::ALL.iter().find(|a| toggle_id(**a) == toggle).copied();
                if let Some(axis) = axis {
                    return execute(Action::ConstrainedTeleop { constraints: ctx.constraints.toggled(axis) });
                }
            }
            (Screen::SnapPlaneSelect, id) => {
                self.go(Screen::Hidden);
                return execute(Action::SnapToPlane { plane: id.to_string() });
            }
            (Screen::SnapCircleSelect, id) => {
                self.go(Screen::Hidden);
                return execute(Action::SnapToCircle { circle: id.to_string() });
            }
            (Screen::PredictiveRoot, id) => {
                let rank = id.strip_prefix("suggestion:").and_then(|r| r.parse::<usize>().ok());
                if let Some(action) = rank.and_then(|r| self.pinned.suggestions.get(r)).cloned() {
                    self.go(Screen::Hidden);
                    return execute(action);
                }
            }
            _ => {}
        }
        Vec::new()
    }
}

/// Advances the menu by one event. Unknown or out-of-place events leave
/// the state unchanged.
pub fn handle_event(state: &MenuState, event: &MenuEvent, ctx: &MenuContext<'_>) -> (MenuState, Vec<MenuEffect>) {
    let mut s = state.clone();
    let effects = match event {
        MenuEvent::PedalDown => {
            s.go(Screen::Hidden);
            vec![MenuEffect::CancelAction]
        }
        MenuEvent::PedalUp => Vec::new(),
        MenuEvent::ButtonB => match s.screen {
            Screen::Hidden | Screen::ResultBanner { .. } => {
                if s.mode == InterfaceMode::Direct {
                    s.go(Screen::Hidden);
                } else {
                    s.open(ctx);
                }
                Vec::new()
            }
            Screen::ExecutingBanner => Vec::new(),
            _ => match s.hover.clone() {
                Some(item) => s.select(&item, ctx),
                None => Vec::new(),
            },
        },
        MenuEvent::HoverMove { item } => {
            s.hover = item.clone().filter(|i| s.items().contains(i));
            Vec::new()
        }
        MenuEvent::Select { item } => s.select(item, ctx),
        MenuEvent::ActionStatus { status } => {
            match status {
                ActionStatus::Executing => s.go(Screen::ExecutingBanner),
                terminal if s.screen == Screen::ExecutingBanner => {
                    s.go(Screen::ResultBanner { success: *terminal == ActionStatus::Succeeded })
                }
                _ => {}
            }
            Vec::new()
        }
        MenuEvent::SuggestionsReady { suggestions } => {
            s.suggestions = suggestions.clone();
            Vec::new()
        }
    };
    (s, effects)
}

pub const AFFORDANCE_OPACITY: f64 = 0.3;
pub const HOVERED_OPACITY: f64 = 1.0;
pub const DIMMED_OPACITY: f64 = 0.1;
pub const ICON_OPACITY: f64 = 1.0;
/// Pie radius in view space.
pub const PIE_RADIUS: f64 = 0.25;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemKind {
    Icon,
    /// AR overlay drawn on the affordance's own geometry.
    Affordance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItemDirective {
    pub id: String,
    pub kind: ItemKind,
    pub label: String,
    pub opacity: f64,
    /// Pie slot in view space; `None` for affordance overlays.
    pub position: Option<[f64; 2]>,
    pub hue: Option<f64>,
    /// Toggle state for hand-settings icons.
    pub active: Option<bool>,
    pub selectable: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderDirective {
    pub mode: InterfaceMode,
    pub screen: Screen,
    pub hovered: Option<String>,
    pub items: Vec<ItemDirective>,
    pub banner: Option<String>,
    pub degraded: bool,
}

fn pie_position(slot: usize, count: usize) -> [f64; 2] {
    let angle = FRAC_PI_2 - TAU * slot as f64 / count as f64;
    [PIE_RADIUS * angle.cos(), PIE_RADIUS * angle.sin()]
}

fn action_label(action: &Action) -> String {
    match action {
        Action::ConstrainedTeleop { constraints } => {
            let on: Vec<&str> = Axis::ALL[1..].iter().filter(|a| constraints.get(**a)).map(|a| a.name()).collect();
            let sens = if constraints.sens { " (sens)" } else { "" };
            format!("teleop {}{sens}", if on.is_empty() { "locked".into() } else { on.join("+") })
        }
        Action::SnapToPlane { plane } => format!("snap to {plane}"),
        Action::SnapToCircle { circle } => format!("snap to {circle}"),
    }
}

fn icon(id: &str, label: &str) -> ItemDirective {
    ItemDirective {
        id: id.into(),
        kind: ItemKind::Icon,
        label: label.into(),
        opacity: ICON_OPACITY,
        position: None,
        hue: None,
        active: None,
        selectable: true,
    }
}

/// What the cockpit should draw for this state.
pub fn render(state: &MenuState, constraints: &ConstraintState) -> RenderDirective {
    let hovered = state.hover.as_deref();
    let mut items: Vec<ItemDirective> = Vec::new();
    let mut banner = None;
    match state.screen {
        Screen::Hidden => {}
        Screen::ExecutingBanner => banner = Some("Executing action (press the pedal to cancel)".to_string()),
        Screen::ResultBanner { success } => {
            banner = Some(if success { "Action succeeded" } else { "Action failed" }.to_string());
            items.push(icon(CLOSE, "Close"));
        }
        Screen::ManualRoot => {
            for (id, label) in [
                (HAND_SETTINGS, "Hand Settings"),
                (SNAP_PLANE, "Snap to Plane"),
                (SNAP_CIRCLE, "Snap to Circle"),
                (CLOSE, "Close"),
            ] {
                items.push(icon(id, label));
            }
        }
        Screen::HandSettings => {
            for axis in Axis::ALL {
                let mut it = icon(&toggle_id(axis), axis.name());
                it.active = Some(constraints.get(axis));
                items.push(it);
            }
            items.push(icon(BACK, "Back"));
            items.push(icon(CLOSE, "Close"));
        }
        Screen::SnapPlaneSelect | Screen::SnapCircleSelect => {
            let ids =
                if state.screen == Screen::SnapPlaneSelect { &state.pinned.planes } else { &state.pinned.circles };
            for id in ids {
                items.push(ItemDirective {
                    kind: ItemKind::Affordance,
                    opacity: if hovered == Some(id) { HOVERED_OPACITY } else { AFFORDANCE_OPACITY },
                    hue: Some(hue_for(id)),
                    ..icon(id, id)
                });
            }
            items.push(icon(BACK, "Back"));
            items.push(icon(CLOSE, "Close"));
        }
        Screen::PredictiveRoot => {
            let focus = hovered.and_then(|h| h.strip_prefix("suggestion:")).and_then(|r| r.parse::<usize>().ok());
            for (rank, action) in state.pinned.suggestions.iter().enumerate() {
                items.push(icon(&suggestion_id(rank), &action_label(action)));
                if let Some(aff) = action.affordance() {
                    items.push(ItemDirective {
                        kind: ItemKind::Affordance,
                        opacity: match hovered {
                            None => AFFORDANCE_OPACITY,
                            Some(_) if focus == Some(rank) => HOVERED_OPACITY,
                            Some(_) => DIMMED_OPACITY,
                        },
                        hue: Some(hue_for(aff)),
                        selectable: false,
                        ..icon(aff, aff)
                    });
                }
            }
            items.push(icon(MORE, "More"));
            items.push(icon(CLOSE, "Close"));
            if let Some(h) = hovered {
                for it in items.iter_mut().filter(|it| it.kind == ItemKind::Icon) {
                    it.opacity = if it.id == h { HOVERED_OPACITY } else { DIMMED_OPACITY };
                }
            }
        }
    }
    let icons: Vec<usize> = (0..items.len()).filter(|&i| items[i].kind == ItemKind::Icon).collect();
    for (slot, &i) in icons.iter().enumerate() {
        items[i].position = Some(pie_position(slot, icons.len()));
    }
    RenderDirective {
        mode: state.mode,
        screen: state.screen,
        hovered: state.hover.clone(),
        items,
        banner,
        degraded: state.screen == Screen::PredictiveRoot && state.pinned.degraded,
    }
}
