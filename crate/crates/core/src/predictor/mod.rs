//! Intent prediction: a context vector, per-action parameter features, and
//! a scorer that adds an action-type score to a parameter score.

mod net;
mod train;

pub use net::Mlp;
pub use train::{hinge_loss_and_grad, train_max_margin, TrainConfig, TrainingCurve};

use std::cmp::Ordering;
use std::f64::consts::FRAC_PI_2;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::actions::{Action, ActionType};
use crate::affordance::{AffordanceSnapshot, CircleAffordance, PlaneAffordance};
use crate::control::{teleop_presets, ConstraintState};
use crate::hashing::stable_u64;
use crate::scenesim::tasks::TaskKind;
use crate::scenesim::GripperState;

/// Executed action types remembered in the context.
pub const HISTORY_LEN: usize = 3;
pub const CONTEXT_DIM: usize = HISTORY_LEN * 4 + 2 + 2 + 7 + 1;
/// Parameter feature sizes for teleop, plane and circle actions.
pub const PARAM_DIMS: [usize; 3] = [7, 5, 8];
pub const DEFAULT_K: usize = 4;
const RADIUS_SCALE: f64 = 0.07;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PredictError {
    #[error("expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("no training steps")]
    EmptyDataset,
    #[error("step {0} has no negative candidates")]
    NoNegatives(usize),
    #[error("weight file: {0}")]
    Format(String),
}

/// What the context vector is computed from.
#[derive(Clone, Copy, Debug)]
pub struct ContextInputs<'a> {
    /// Executed action types, oldest first.
    pub history: &'a [ActionType],
    pub snapshot: &'a AffordanceSnapshot,
    pub gripper: &'a GripperState,
    pub constraints: &'a ConstraintState,
}

/// Layout: three history slots (most recent first) one-hot over
/// none/teleop/plane/circle; plane and circle counts over ten; gripper
/// height relative to one meter, over half a meter; forward-axis elevation
/// over π/2; the seven constraint flags as ±1; gripper aperture.
pub fn featurize(inputs: &ContextInputs<'_>) -> Vec<f64> {
    let mut x = Vec::with_capacity(CONTEXT_DIM);
    for slot in 0..HISTORY_LEN {
        let kind = inputs.history.iter().rev().nth(slot).map_or(0, |t| t.index() + 1);
        x.extend((0..4).map(|k| f64::from(u8::from(k == kind))));
    }
    x.push(inputs.snapshot.planes.len() as f64 / 10.0);
    x.push(inputs.snapshot.circles.len() as f64 / 10.0);
    let pose = &inputs.gripper.pose;
    x.push((pose.position.z - 1.0) / 0.5);
    x.push(pose.forward().z.clamp(-1.0, 1.0).asin() / FRAC_PI_2);
    x.extend(inputs.constraints.signs());
    x.push(inputs.gripper.aperture);
    x.iter_mut().for_each(|v| *v = v.clamp(-1.0, 1.0));
    x
}

pub fn teleop_params(c: &ConstraintState) -> Vec<f64> {
    c.signs().to_vec()
}

pub fn plane_params(p: &PlaneAffordance, tool_tip: &Vector3<f64>) -> Vec<f64> {
    let n = p.plane.normal;
    vec![
        n.x,
        n.y,
        n.z,
        p.plane.signed_distance(tool_tip).clamp(-1.0, 1.0),
        (p.plane.inlier_count as f64 / 10_000.0).min(1.0),
    ]
}

pub fn circle_params(c: &CircleAffordance, tool_tip: &Vector3<f64>) -> Vec<f64> {
    let d = c.circle.center - tool_tip;
    vec![
        d.x.clamp(-1.0, 1.0),
        d.y.clamp(-1.0, 1.0),
        d.z.clamp(-1.0, 1.0),
        (c.circle.radius / RADIUS_SCALE).min(1.0),
        c.inlier_ratio,
        c.circle.axis.x,
        c.circle.axis.y,
        c.circle.axis.z,
    ]
}

/// A feasible action with its parameter features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub action: Action,
    pub params: Vec<f64>,
}

/// Teleop presets, then every plane, then every circle in the snapshot.
pub fn feasible_actions(snapshot: &AffordanceSnapshot, gripper: &GripperState, tool_offset: f64) -> Vec<Candidate> {
    let tip = gripper.pose.tool_tip(tool_offset);
    let mut out: Vec<Candidate> = teleop_presets()
        .into_iter()
        .map(|c| Candidate { params: teleop_params(&c), action: Action::ConstrainedTeleop { constraints: c } })
        .collect();
    out.extend(
        snapshot
            .planes
            .iter()
            .map(|p| Candidate { action: Action::SnapToPlane { plane: p.id.clone() }, params: plane_params(p, &tip) }),
    );
    out.extend(
        snapshot.circles.iter().map(|c| Candidate {
            action: Action::SnapToCircle { circle: c.id.clone() },
            params: circle_params(c, &tip),
        }),
    );
    out
}

pub const WEIGHTS_FORMAT: &str = "teleassist-scorer";
pub const WEIGHTS_VERSION: u32 = 1;

/// Action network plus one parameter network per action type.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScorerWeights {
    pub format: String,
    pub version: u32,
    pub context_dim: usize,
    pub param_dims: [usize; 3],
    pub action_net: Mlp,
    pub param_nets: [Mlp; 3],
}

impl ScorerWeights {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            format: WEIGHTS_FORMAT.into(),
            version: WEIGHTS_VERSION,
            context_dim: CONTEXT_DIM,
            param_dims: PARAM_DIMS,
            action_net: Mlp::zeros(CONTEXT_DIM, hidden, 3),
            param_nets: PARAM_DIMS.map(|d| Mlp::zeros(CONTEXT_DIM + d, hidden, 1)),
        }
    }

    /// All parameters as one vector: action net, then the parameter nets.
    pub fn flat(&self) -> Vec<f64> {
        let mut v = self.action_net.params.clone();
        for n in &self.param_nets {
            v.extend_from_slice(&n.params);
        }
        v
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.flat().len(), "parameter count");
        let mut rest = flat;
        for net in std::iter::once(&mut self.action_net).chain(self.param_nets.iter_mut()) {
            let (head, tail) = rest.split_at(net.params.len());
            net.params.copy_from_slice(head);
            rest = tail;
        }
    }

    fn check(&self) -> Result<(), PredictError> {
        let bad = |m: String| Err(PredictError::Format(m));
        if self.format != WEIGHTS_FORMAT {
            return bad(format!("unknown format `{}`", self.format));
        }
        if self.version != WEIGHTS_VERSION {
            return bad(format!("unsupported version {}", self.version));
        }
        if self.context_dim != CONTEXT_DIM || self.param_dims != PARAM_DIMS {
            return bad("feature dimensions do not match this build".into());
        }
        let a = &self.action_net;
        if a.input != CONTEXT_DIM || a.output != 3 || !a.is_consistent() {
            return bad("action network shape".into());
        }
        for (i, n) in self.param_nets.iter().enumerate() {
            if n.input != CONTEXT_DIM + PARAM_DIMS[i] || n.output != 1 || !n.is_consistent() {
                return bad(format!("parameter network {i} shape"));
            }
        }
        if self.flat().iter().any(|w| !w.is_finite()) {
            return bad("non-finite weight".into());
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, PredictError> {
        let text = std::fs::read_to_string(path).map_err(|e| PredictError::Format(e.to_string()))?;
        let w: ScorerWeights = serde_json::from_str(&text).map_err(|e| PredictError::Format(e.to_string()))?;
        w.check()?;
        Ok(w)
    }

    pub fn save(&self, path: &Path) -> Result<(), PredictError> {
        let text = serde_json::to_string(self).map_err(|e| PredictError::Format(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| PredictError::Format(e.to_string()))
    }
}

fn check_dim(expected: usize, got: usize) -> Result<(), PredictError> {
    if expected == got {
        Ok(())
    } else {
        Err(PredictError::DimensionMismatch { expected, got })
    }
}

/// Action-type score plus parameter score.
pub fn score(w: &ScorerWeights, x: &[f64], kind: ActionType, params: &[f64]) -> Result<f64, PredictError> {
    check_dim(w.context_dim, x.len())?;
    check_dim(w.param_dims[kind.index()], params.len())?;
    let a = w.action_net.forward(x);
    Ok(a[kind.index()] + param_score(w, x, kind, params))
}

fn param_score(w: &ScorerWeights, x: &[f64], kind: ActionType, params: &[f64]) -> f64 {
    let mut input = x.to_vec();
    input.extend_from_slice(params);
    w.param_nets[kind.index()].forward(&input)[0]
}

/// Scores every candidate, sharing one pass of the action network.
pub fn score_all(w: &ScorerWeights, x: &[f64], candidates: &[Candidate]) -> Result<Vec<f64>, PredictError> {
    check_dim(w.context_dim, x.len())?;
    let a = w.action_net.forward(x);
    candidates
        .iter()
        .map(|c| {
            let kind = c.action.action_type();
            check_dim(w.param_dims[kind.index()], c.params.len())?;
            Ok(a[kind.index()] + param_score(w, x, kind, &c.params))
        })
        .collect()
}

fn tie_key(action: &Action) -> (usize, u64) {
    let bytes = serde_json::to_vec(action).expect("serializable action");
    (action.action_type().index(), stable_u64(&bytes))
}

/// Candidates in descending score order; equal scores fall back to
/// action type, then a stable hash of the action.
pub fn rank(candidates: &[Candidate], scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&i, &j| {
        scores[j]
            .total_cmp(&scores[i])
            .then_with(|| tie_key(&candidates[i].action).cmp(&tie_key(&candidates[j].action)))
            .then(Ordering::Equal)
    });
    order
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ranked {
    pub action: Action,
    pub score: f64,
}

pub fn top_k(w: &ScorerWeights, x: &[f64], candidates: &[Candidate], k: usize) -> Result<Vec<Ranked>, PredictError> {
    let scores = score_all(w, x, candidates)?;
    Ok(rank(candidates, &scores)
        .into_iter()
        .take(k)
        .map(|i| Ranked { action: candidates[i].action.clone(), score: scores[i] })
        .collect())
}

/// Ranking used when no scorer is available: all scores equal.
pub fn fallback_top_k(candidates: &[Candidate], k: usize) -> Vec<Ranked> {
    let scores = vec![0.0; candidates.len()];
    rank(candidates, &scores)
        .into_iter()
        .take(k)
        .map(|i| Ranked { action: candidates[i].action.clone(), score: 0.0 })
        .collect()
}

/// Cached menu suggestions and the snapshot revision they were ranked on.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Suggestions {
    pub items: Vec<Ranked>,
    /// Set when the ranking came from the fallback instead of the scorer.
    pub degraded: bool,
    pub revision: u64,
}

/// Top-k suggestions, falling back to equal scores when there is no
/// scorer or it cannot score this input.
pub fn suggest(
    weights: Option<&ScorerWeights>,
    x: &[f64],
    candidates: &[Candidate],
    k: usize,
    revision: u64,
) -> Suggestions {
    match weights.map(|w| top_k(w, x, candidates, k)) {
        Some(Ok(items)) => Suggestions { items, degraded: false, revision },
        _ => Suggestions { items: fallback_top_k(candidates, k), degraded: true, revision },
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoStep {
    pub context: Vec<f64>,
    pub candidates: Vec<Candidate>,
    pub chosen: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoTrace {
    pub task: Option<TaskKind>,
    pub steps: Vec<DemoStep>,
}

/// Fraction of steps whose chosen action ranks within the top `k`.
pub fn top_k_accuracy(w: &ScorerWeights, steps: &[&DemoStep], k: usize) -> Result<f64, PredictError> {
    if steps.is_empty() {
        return Err(PredictError::EmptyDataset);
    }
    let mut hits = 0;
    for s in steps {
        let scores = score_all(w, &s.context, &s.candidates)?;
        if rank(&s.candidates, &scores).iter().take(k).any(|&i| i == s.chosen) {
            hits += 1;
        }
    }
    Ok(hits as f64 / steps.len() as f64)
}
