//! Synthetic stand-in for the robot and its affordance camera.
//!
//! A scene is a list of rigid primitives. From it we render noisy point
//! clouds with ground-truth masks, step a free-flying gripper with speed caps
//! and penalty contact, and check gripper collisions.

mod gripper;
mod render;
pub mod segment;
mod shapes;
pub mod tasks;

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geometry::{Pose, UnitQuaternion, Vector3};

pub use gripper::{check_collision, Fault, GripperModel, GripperShape, GripperState, Sphere};
pub use render::{render_sensor_frame, render_with_model, CameraModel, SensorFrame};
pub use shapes::Solid;

pub type ObjectId = String;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    /// Full extents along local x, y, z; centered on the pose.
    Box { size: [f64; 3] },
    /// Axis along local z; centered on the pose.
    Cylinder { radius: f64, height: f64 },
    /// Thin cylinder; axis along local z.
    Disk { radius: f64, thickness: f64 },
    /// Zero-thickness rectangle in the local xy plane.
    Plane { size: [f64; 2] },
    /// Box base with a round faceplate on its top face and a hole bored
    /// through the faceplate center along local z.
    SocketHole { size: [f64; 3], face_radius: f64, face_height: f64, hole_radius: f64, hole_depth: f64 },
}

impl Shape {
    fn dimensions(&self) -> Vec<f64> {
        match self {
            Shape::Box { size } => size.to_vec(),
            Shape::Cylinder { radius, height } => vec![*radius, *height],
            Shape::Disk { radius, thickness } => vec![*radius, *thickness],
            Shape::Plane { size } => size.to_vec(),
            Shape::SocketHole { size, face_radius, face_height, hole_radius, hole_depth } => {
                let mut d = size.to_vec();
                d.extend([*face_radius, *face_height, *hole_radius, *hole_depth]);
                d
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Target,
    Distractor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub id: ObjectId,
    pub shape: Shape,
    pub pose: Pose,
    #[serde(default = "default_color")]
    pub color: [u8; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<Role>,
}

fn default_color() -> [u8; 3] {
    [180, 180, 180]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneDescription {
    #[serde(default)]
    pub name: String,
    /// Task this scene sets up, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<tasks::TaskKind>,
    /// Mount pose of the affordance camera (optical axis = local +z).
    #[serde(default = "default_camera")]
    pub camera: Pose,
    pub objects: Vec<SceneObject>,
}

/// Below the head, looking down at the middle of the workspace.
pub fn default_camera() -> Pose {
    look_at(&Vector3::new(0.15, 0.0, 1.55), &Vector3::new(0.8, 0.0, 0.8))
}

/// Camera pose at `eye` whose +z axis points at `target`.
pub fn look_at(eye: &Vector3<f64>, target: &Vector3<f64>) -> Pose {
    let dir = (target - eye).normalize();
    let orientation = crate::geometry::align_forward_to(&UnitQuaternion::identity(), &dir);
    Pose::new(*eye, orientation)
}

#[derive(Debug, thiserror::Error)]
pub enum SceneError {
    #[error("scene has no objects")]
    EmptyScene,
    #[error("duplicate object id `{0}`")]
    DuplicateId(String),
    #[error("object `{0}` has a non-positive or non-finite dimension")]
    BadDimension(String),
    #[error("object `{0}`: {1}")]
    BadComposite(String, &'static str),
    #[error("scene file: {0}")]
    Io(#[from] std::io::Error),
    #[error("scene file: {0}")]
    Parse(#[from] serde_json::Error),
}

impl SceneDescription {
    pub fn validate(&self) -> Result<(), SceneError> {
        let mut seen = HashSet::new();
        for obj in &self.objects {
            if !seen.insert(obj.id.as_str()) {
                return Err(SceneError::DuplicateId(obj.id.clone()));
            }
            if obj.shape.dimensions().iter().any(|d| !(d.is_finite() && *d > 0.0)) {
                return Err(SceneError::BadDimension(obj.id.clone()));
            }
            if let Shape::SocketHole { size, face_radius, hole_radius, .. } = &obj.shape {
                if hole_radius >= face_radius {
                    return Err(SceneError::BadComposite(obj.id.clone(), "hole wider than faceplate"));
                }
                if 2.0 * face_radius > size[0].min(size[1]) {
                    return Err(SceneError::BadComposite(obj.id.clone(), "faceplate wider than base"));
                }
            }
        }
        Ok(())
    }

    pub fn object(&self, id: &str) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn targets(&self) -> impl Iterator<Item = &SceneObject> {
        self.objects.iter().filter(|o| o.role == Some(Role::Target))
    }

    /// Convex solids making up the scene, in object order.
    pub fn solids(&self) -> Vec<Solid> {
        self.objects.iter().flat_map(shapes::solids_of).collect()
    }

    /// Rigidly moves every object and the camera.
    pub fn transformed(&self, t: &Pose) -> SceneDescription {
        let mut out = self.clone();
        out.camera = t.compose(&self.camera);
        for o in &mut out.objects {
            o.pose = t.compose(&o.pose);
        }
        out
    }

    pub fn load(path: &Path) -> Result<Self, SceneError> {
        let text = std::fs::read_to_string(path)?;
        let scene: SceneDescription = serde_json::from_str(&text)?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn save(&self, path: &Path) -> Result<(), SceneError> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// Stable digest of the scene contents.
    pub fn digest(&self) -> String {
        crate::hashing::digest_json(self)
    }
}
