use nalgebra::{Vector2, Vector3};
use rand::Rng;
use std::f64::consts::PI;

use super::{SceneObject, Shape};
use crate::geometry::Pose;

/// Convex piece of an object, used for ray occlusion.
#[derive(Clone, Debug)]
pub struct Solid {
    pub object: String,
    pub pose: Pose,
    pub kind: SolidKind,
}

#[derive(Clone, Debug)]
pub enum SolidKind {
    Box { half: Vector3<f64> },
    Cylinder { radius: f64, half_height: f64 },
    Rect { half: Vector2<f64> },
}

impl Solid {
    /// Smallest parameter `t ∈ [0, 1]` at which the segment `a → b` touches
    /// the solid.
    pub fn segment_hit(&self, a: &Vector3<f64>, b: &Vector3<f64>) -> Option<f64> {
        let inv = self.pose.inverse();
        let o = inv.transform_point(a);
        let d = inv.transform_vector(&(b - a));
        let (enter, exit) = match &self.kind {
            SolidKind::Box { half } => {
                let mut t0 = f64::NEG_INFINITY;
                let mut t1 = f64::INFINITY;
                for i in 0..3 {
                    if !slab(o[i], d[i], half[i], &mut t0, &mut t1) {
                        return None;
                    }
                }
                (t0, t1)
            }
            SolidKind::Cylinder { radius, half_height } => {
                let mut t0 = f64::NEG_INFINITY;
                let mut t1 = f64::INFINITY;
                if !slab(o.z, d.z, *half_height, &mut t0, &mut t1) {
                    return None;
                }
                let a2 = d.x * d.x + d.y * d.y;
                let b2 = 2.0 * (o.x * d.x + o.y * d.y);
                let c2 = o.x * o.x + o.y * o.y - radius * radius;
                if a2 < 1e-30 {
                    if c2 > 0.0 {
                        return None;
                    }
                } else {
                    let disc = b2 * b2 - 4.0 * a2 * c2;
                    if disc < 0.0 {
                        return None;
                    }
                    let sq = disc.sqrt();
                    t0 = t0.max((-b2 - sq) / (2.0 * a2));
                    t1 = t1.min((-b2 + sq) / (2.0 * a2));
                }
                (t0, t1)
            }
            SolidKind::Rect { half } => {
                if d.z.abs() < 1e-30 {
                    return None;
                }
                let t = -o.z / d.z;
                let x = o.x + t * d.x;
                let y = o.y + t * d.y;
                if x.abs() > half.x || y.abs() > half.y {
                    return None;
                }
                (t, t)
            }
        };
        if enter > exit || exit < 0.0 || enter > 1.0 {
            return None;
        }
        Some(enter.max(0.0))
    }
}

fn slab(o: f64, d: f64, h: f64, t0: &mut f64, t1: &mut f64) -> bool {
    if d.abs() < 1e-30 {
        return o.abs() <= h;
    }
    let (mut a, mut b) = ((-h - o) / d, (h - o) / d);
    if a > b {
        std::mem::swap(&mut a, &mut b);
    }
    *t0 = t0.max(a);
    *t1 = t1.min(b);
    t0 <= t1
}

fn socket_face_pose(pose: &Pose, size: &[f64; 3], face_height: f64) -> Pose {
    pose.compose(&Pose::from_translation(Vector3::new(0.0, 0.0, size[2] / 2.0 + face_height / 2.0)))
}

pub(crate) fn solids_of(obj: &SceneObject) -> Vec<Solid> {
    let solid = |pose: Pose, kind| Solid { object: obj.id.clone(), pose, kind };
    match &obj.shape {
        Shape::Box { size } => vec![solid(obj.pose, SolidKind::Box { half: Vector3::from(*size) / 2.0 })],
        Shape::Cylinder { radius, height } => {
            vec![solid(obj.pose, SolidKind::Cylinder { radius: *radius, half_height: height / 2.0 })]
        }
        Shape::Disk { radius, thickness } => {
            vec![solid(obj.pose, SolidKind::Cylinder { radius: *radius, half_height: thickness / 2.0 })]
        }
        Shape::Plane { size } => vec![solid(obj.pose, SolidKind::Rect { half: Vector2::from(*size) / 2.0 })],
        Shape::SocketHole { size, face_radius, face_height, .. } => vec![
            solid(obj.pose, SolidKind::Box { half: Vector3::from(*size) / 2.0 }),
            solid(
                socket_face_pose(&obj.pose, size, *face_height),
                SolidKind::Cylinder { radius: *face_radius, half_height: face_height / 2.0 },
            ),
        ],
    }
}

fn sdf_box(p: &Vector3<f64>, half: &Vector3<f64>) -> f64 {
    let q = p.abs() - half;
    q.sup(&Vector3::zeros()).norm() + q.max().min(0.0)
}

fn sdf_cylinder(p: &Vector3<f64>, radius: f64, half_height: f64) -> f64 {
    let dx = p.xy().norm() - radius;
    let dz = p.z.abs() - half_height;
    dx.max(dz).min(0.0) + Vector2::new(dx.max(0.0), dz.max(0.0)).norm()
}

/// Signed distance from a world point to an object (negative inside).
pub(crate) fn object_sdf(obj: &SceneObject, p: &Vector3<f64>) -> f64 {
    let local = obj.pose.inverse().transform_point(p);
    match &obj.shape {
        Shape::Box { size } => sdf_box(&local, &(Vector3::from(*size) / 2.0)),
        Shape::Cylinder { radius, height } => sdf_cylinder(&local, *radius, height / 2.0),
        Shape::Disk { radius, thickness } => sdf_cylinder(&local, *radius, thickness / 2.0),
        Shape::Plane { size } => {
            let dx = (local.x.abs() - size[0] / 2.0).max(0.0);
            let dy = (local.y.abs() - size[1] / 2.0).max(0.0);
            Vector3::new(dx, dy, local.z).norm()
        }
        Shape::SocketHole { size, face_radius, face_height, hole_radius, hole_depth } => {
            let base = sdf_box(&local, &(Vector3::from(*size) / 2.0));
            let face_center = size[2] / 2.0 + face_height / 2.0;
            let face = sdf_cylinder(&(local - Vector3::new(0.0, 0.0, face_center)), *face_radius, face_height / 2.0);
            let top = size[2] / 2.0 + face_height;
            let hole = (local.xy().norm() - hole_radius).max((top - hole_depth) - local.z);
            base.min(face).max(-hole)
        }
    }
}

/// Outward surface normal near `p`, by central differences of the SDF.
pub(crate) fn object_normal(obj: &SceneObject, p: &Vector3<f64>) -> Vector3<f64> {
    let h = 1e-6;
    let mut g = Vector3::zeros();
    for i in 0..3 {
        let mut e = Vector3::zeros();
        e[i] = h;
        g[i] = object_sdf(obj, &(p + e)) - object_sdf(obj, &(p - e));
    }
    let n = g.norm();
    if n > 0.0 {
        g / n
    } else {
        Vector3::z()
    }
}

/// A sampleable surface piece in world coordinates.
#[derive(Clone, Debug)]
pub(crate) enum Patch {
    /// Parallelogram `center ± u ± v`.
    Rect { center: Vector3<f64>, u: Vector3<f64>, v: Vector3<f64>, normal: Vector3<f64>, two_sided: bool },
    /// Disk or annulus.
    Disk { center: Vector3<f64>, u: Vector3<f64>, v: Vector3<f64>, normal: Vector3<f64>, radius: f64, hole: f64 },
    CylinderSide {
        center: Vector3<f64>,
        axis: Vector3<f64>,
        u: Vector3<f64>,
        v: Vector3<f64>,
        radius: f64,
        half_height: f64,
    },
}

impl Patch {
    pub fn area(&self) -> f64 {
        match self {
            Patch::Rect { u, v, .. } => 4.0 * u.norm() * v.norm(),
            Patch::Disk { radius, hole, .. } => PI * (radius * radius - hole * hole),
            Patch::CylinderSide { radius, half_height, .. } => 2.0 * PI * radius * 2.0 * half_height,
        }
    }

    pub fn two_sided(&self) -> bool {
        matches!(self, Patch::Rect { two_sided: true, .. })
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> (Vector3<f64>, Vector3<f64>) {
        match self {
            Patch::Rect { center, u, v, normal, .. } => {
                let (s, t): (f64, f64) = (rng.random(), rng.random());
                (center + u * (2.0 * s - 1.0) + v * (2.0 * t - 1.0), *normal)
            }
            Patch::Disk { center, u, v, normal, radius, hole } => {
                let (s, t): (f64, f64) = (rng.random(), rng.random());
                let r = (hole * hole + s * (radius * radius - hole * hole)).sqrt();
                let a = 2.0 * PI * t;
                (center + (u * a.cos() + v * a.sin()) * r, *normal)
            }
            Patch::CylinderSide { center, axis, u, v, radius, half_height } => {
                let (s, t): (f64, f64) = (rng.random(), rng.random());
                let a = 2.0 * PI * s;
                let radial = u * a.cos() + v * a.sin();
                (center + radial * *radius + axis * ((2.0 * t - 1.0) * half_height), radial)
            }
        }
    }
}

fn box_patches(pose: &Pose, half: &Vector3<f64>) -> Vec<Patch> {
    let axes = [Vector3::x(), Vector3::y(), Vector3::z()];
    let mut out = Vec::with_capacity(6);
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        for sign in [1.0, -1.0] {
            let n = pose.transform_vector(&(axes[i] * sign));
            out.push(Patch::Rect {
                center: pose.transform_point(&(axes[i] * sign * half[i])),
                u: pose.transform_vector(&(axes[j] * half[j])),
                v: pose.transform_vector(&(axes[k] * half[k])),
                normal: n,
                two_sided: false,
            });
        }
    }
    out
}

fn cylinder_patches(pose: &Pose, radius: f64, half_height: f64, hole: f64) -> Vec<Patch> {
    let axis = pose.transform_vector(&Vector3::z());
    let u = pose.transform_vector(&Vector3::x());
    let v = pose.transform_vector(&Vector3::y());
    vec![
        Patch::Disk {
            center: pose.transform_point(&Vector3::new(0.0, 0.0, half_height)),
            u,
            v,
            normal: axis,
            radius,
            hole,
        },
        Patch::Disk {
            center: pose.transform_point(&Vector3::new(0.0, 0.0, -half_height)),
            u,
            v,
            normal: -axis,
            radius,
            hole: 0.0,
        },
        Patch::CylinderSide { center: pose.position, axis, u, v, radius, half_height },
    ]
}

/// Surface patches grouped by mask label.
pub(crate) fn labeled_patches(obj: &SceneObject) -> Vec<(String, Vec<Patch>)> {
    match &obj.shape {
        Shape::Box { size } => vec![(obj.id.clone(), box_patches(&obj.pose, &(Vector3::from(*size) / 2.0)))],
        Shape::Cylinder { radius, height } => {
            vec![(obj.id.clone(), cylinder_patches(&obj.pose, *radius, height / 2.0, 0.0))]
        }
        Shape::Disk { radius, thickness } => {
            vec![(obj.id.clone(), cylinder_patches(&obj.pose, *radius, thickness / 2.0, 0.0))]
        }
        Shape::Plane { size } => vec![(
            obj.id.clone(),
            vec![Patch::Rect {
                center: obj.pose.position,
                u: obj.pose.transform_vector(&Vector3::new(size[0] / 2.0, 0.0, 0.0)),
                v: obj.pose.transform_vector(&Vector3::new(0.0, size[1] / 2.0, 0.0)),
                normal: obj.pose.transform_vector(&Vector3::z()),
                two_sided: true,
            }],
        )],
        Shape::SocketHole { size, face_radius, face_height, hole_radius, .. } => vec![
            (obj.id.clone(), box_patches(&obj.pose, &(Vector3::from(*size) / 2.0))),
            (
                format!("{}/face", obj.id),
                cylinder_patches(
                    &socket_face_pose(&obj.pose, size, *face_height),
                    *face_radius,
                    face_height / 2.0,
                    *hole_radius,
                ),
            ),
        ],
    }
}
