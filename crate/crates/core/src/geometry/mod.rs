//! Geometric kernels shared by every other module: rigid poses, plane
//! fitting, planar hulls, enclosing circles and circularity.
//!
//! Everything here is a pure function of its inputs.

mod circle;
mod hull;
mod plane;
mod pose;

pub use circle::{min_enclosing_circle, Circle2D, Circle3D};
pub use hull::{circularity, convex_contains, convex_hull_2d, perimeter, signed_area};
pub use plane::{fit_plane_least_squares, fit_plane_most_points, project_to_plane, Plane, PlaneBasis};
pub use pose::{align_forward_to, Pose, FORWARD, UP};

pub use nalgebra::{UnitQuaternion, Vector2, Vector3};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GeometryError {
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("points are collinear or coincident; no hull with positive area")]
    DegenerateHull,
    #[error("empty input")]
    EmptyInput,
    #[error("points do not span a plane")]
    Degenerate,
}
