use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SnapConfig;
use crate::geometry::Pose;
use crate::scenesim::{GripperShape, SceneDescription};

/// Axis-aligned box the planner samples end-effector positions from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Default for Workspace {
    fn default() -> Self {
        Self { min: Vector3::new(-0.3, -1.0, 0.3), max: Vector3::new(1.6, 1.0, 2.0) }
    }
}

impl Workspace {
    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub waypoints: Vec<Pose>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PlanError {
    #[error("no path found: {0}")]
    NoPathFound(String),
    #[error("start pose is in collision")]
    StartInCollision,
    #[error("planning cancelled")]
    Cancelled,
}

/// Clearance oracle: distance from the body to the nearest obstacle,
/// never more than the true distance; non-positive means collision.
type Clearance<'a> = dyn Fn(&Pose) -> f64 + 'a;

/// Bound on how far any body point moves between two poses.
fn sweep_bound(a: &Pose, b: &Pose, reach: f64) -> f64 {
    (a.position - b.position).norm() + reach * a.angle_to(b)
}

/// Conservative continuous check of the interpolated motion from `a` to
/// `b`: consecutive samples must have clearances summing to more than the
/// sweep between them, which rules out contact anywhere in between.
pub fn edge_is_free(a: &Pose, b: &Pose, reach: f64, resolution: f64, clearance: &Clearance<'_>) -> bool {
    let total = sweep_bound(a, b, reach);
    let n = ((total / resolution).ceil() as usize).max(1);
    let samples: Vec<(Pose, f64)> = (0..=n)
        .map(|k| {
            let p = a.interpolate(b, k as f64 / n as f64);
            let c = clearance(&p);
            (p, c)
        })
        .collect();
    if samples.iter().any(|(_, c)| *c <= 0.0) {
        return false;
    }
    samples.windows(2).all(|w| segment_safe(&w[0], &w[1], reach, clearance, 0))
}

fn segment_safe(a: &(Pose, f64), b: &(Pose, f64), reach: f64, clearance: &Clearance<'_>, depth: u32) -> bool {
    if a.1 + b.1 > sweep_bound(&a.0, &b.0, reach) {
        return true;
    }
    if depth >= 12 {
        return false;
    }
    let mid = a.0.interpolate(&b.0, 0.5);
    let c = clearance(&mid);
    c > 0.0
        && segment_safe(a, &(mid, c), reach, clearance, depth + 1)
        && segment_safe(&(mid, c), b, reach, clearance, depth + 1)
}

struct Tree {
    nodes: Vec<Pose>,
    parents: Vec<usize>,
}

impl Tree {
    fn new(root: Pose) -> Self {
        Self { nodes: vec![root], parents: vec![usize::MAX] }
    }

    fn path_to_root(&self, mut i: usize) -> Vec<Pose> {
        let mut out = vec![self.nodes[i]];
        while self.parents[i] != usize::MAX {
            i = self.parents[i];
            out.push(self.nodes[i]);
        }
        out
    }
}

enum Extend {
    Trapped,
    Advanced,
    Reached,
}

struct Planner<'a> {
    cfg: &'a SnapConfig,
    reach: f64,
    clearance: &'a Clearance<'a>,
}

impl Planner<'_> {
    fn distance(&self, a: &Pose, b: &Pose) -> f64 {
        (a.position - b.position).norm() + self.cfg.rotation_weight * a.angle_to(b)
    }

    fn free(&self, a: &Pose, b: &Pose) -> bool {
        edge_is_free(a, b, self.reach, self.cfg.check_resolution, self.clearance)
    }

    fn extend(&self, tree: &mut Tree, q: &Pose) -> Extend {
        let (near, d) = tree
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (i, self.distance(n, q)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        let reached = d <= self.cfg.extend_step;
        let new = if reached { *q } else { tree.nodes[near].interpolate(q, self.cfg.extend_step / d) };
        if !self.free(&tree.nodes[near], &new) {
            return Extend::Trapped;
        }
        tree.nodes.push(new);
        tree.parents.push(near);
        if reached {
            Extend::Reached
        } else {
            Extend::Advanced
        }
    }

    fn connect(&self, tree: &mut Tree, q: &Pose) -> Extend {
        loop {
            match self.extend(tree, q) {
                Extend::Advanced => continue,
                other => return other,
            }
        }
    }

    fn shortcut(&self, path: Vec<Pose>) -> Vec<Pose> {
        let mut out = vec![path[0]];
        let mut i = 0;
        while i + 1 < path.len() {
            let mut j = path.len() - 1;
            while j > i + 1 && !self.free(&path[i], &path[j]) {
                j -= 1;
            }
            out.push(path[j]);
            i = j;
        }
        out
    }
}

fn random_orientation(rng: &mut ChaCha8Rng) -> UnitQuaternion<f64> {
    let (u1, u2, u3): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
    let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
    let tau = std::f64::consts::TAU;
    UnitQuaternion::from_quaternion(Quaternion::new(
        a * (tau * u2).sin(),
        a * (tau * u2).cos(),
        b * (tau * u3).sin(),
        b * (tau * u3).cos(),
    ))
}

/// Bidirectional sampling planner over end-effector poses with a greedy
/// straight-line shortcut. `clearance` must under-estimate the distance
/// from the body to obstacles.
pub fn plan_with(
    start: &Pose,
    goal: &Pose,
    reach: f64,
    clearance: &Clearance<'_>,
    cfg: &SnapConfig,
    cancel: Option<&AtomicBool>,
) -> Result<Trajectory, PlanError> {
    if clearance(start) <= 0.0 {
        return Err(PlanError::StartInCollision);
    }
    if clearance(goal) <= 0.0 {
        return Err(PlanError::NoPathFound("goal is in collision".into()));
    }
    if !cfg.workspace.contains(&goal.position) {
        return Err(PlanError::NoPathFound("goal is outside the workspace".into()));
    }
    let planner = Planner { cfg, reach, clearance };
    if planner.free(start, goal) {
        return Ok(Trajectory { waypoints: vec![*start, *goal] });
    }
    let deadline = Instant::now() + Duration::from_secs_f64(cfg.plan_timeout);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut a = Tree::new(*start);
    let mut b = Tree::new(*goal);
    let mut a_is_start = true;
    for _ in 0..cfg.max_iterations {
        if cancel.is_some_and(|c| c.load(Ordering::Acquire)) {
            return Err(PlanError::Cancelled);
        }
        if Instant::now() >= deadline {
            return Err(PlanError::NoPathFound("planning timed out".into()));
        }
        let ws = &cfg.workspace;
        let position = Vector3::from_fn(|i, _| rng.random_range(ws.min[i]..=ws.max[i]));
        let orientation = if rng.random_bool(0.7) {
            start.orientation.slerp(&goal.orientation, rng.random())
        } else {
            random_orientation(&mut rng)
        };
        let sample = Pose::new(position, orientation);
        if !matches!(planner.extend(&mut a, &sample), Extend::Trapped) {
            let newest = *a.nodes.last().unwrap();
            if matches!(planner.connect(&mut b, &newest), Extend::Reached) {
                let mut from_a = a.path_to_root(a.nodes.len() - 1);
                from_a.reverse();
                let from_b = b.path_to_root(b.nodes.len() - 1);
                let mut path = from_a;
                path.extend(from_b.into_iter().skip(1));
                if !a_is_start {
                    path.reverse();
                }
                return Ok(Trajectory { waypoints: planner.shortcut(path) });
            }
        }
        std::mem::swap(&mut a, &mut b);
        a_is_start = !a_is_start;
    }
    Err(PlanError::NoPathFound("iteration budget exhausted".into()))
}

/// Plans a collision-free gripper motion through `scene`.
pub fn plan_motion(
    start: &Pose,
    goal: &Pose,
    scene: &SceneDescription,
    shape: &GripperShape,
    cfg: &SnapConfig,
    cancel: Option<&AtomicBool>,
) -> Result<Trajectory, PlanError> {
    let reach = shape.spheres.iter().map(|s| s.offset.abs()).fold(0.0, f64::max);
    let clearance = |p: &Pose| shape.clearance(p, scene).0;
    plan_with(start, goal, reach, &clearance, cfg, cancel)
}
