//! Rigid SE(3) poses and the transform chains used to relate camera, world,
//! end-effector and object frames.
//!
//! Naming follows `<parent>_<child>`: `w_c` maps camera coordinates into the
//! world frame, `e_o` maps object coordinates into the end-effector frame.

use nalgebra::{Matrix3, Point3, Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for the orthonormality check on construction.
pub const ORTHONORMAL_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("rotation is not orthonormal (max deviation {0:e})")]
    NotOrthonormal(f64),
    #[error("rotation has determinant {0}, expected +1")]
    Reflection(f64),
    #[error("non-finite value in pose")]
    NonFinite,
    #[error("quaternion has zero norm")]
    ZeroQuaternion,
    #[error("task label must be non-empty")]
    EmptyTask,
}

/// A rigid transform: `x -> rotation * x + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

fn orthonormal_deviation(r: &Matrix3<f64>) -> f64 {
    (r.transpose() * r - Matrix3::identity()).amax()
}

/// Nearest rotation in the Frobenius sense (polar factor).
fn reproject(r: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = r.svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let mut q = u * v_t;
    if q.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        q = u * v_t;
    }
    q
}

impl Pose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        if rotation.iter().chain(translation.iter()).any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let dev = orthonormal_deviation(&rotation);
        if dev > ORTHONORMAL_TOL {
            return Err(GeometryError::NotOrthonormal(dev));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ORTHONORMAL_TOL {
            return Err(GeometryError::Reflection(det));
        }
        Ok(Self { rotation, translation })
    }

    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::new(x, y, z) }
    }

    pub fn from_quaternion(q: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self { rotation: *q.to_rotation_matrix().matrix(), translation }
    }

    /// Rotation of `angle` radians about `axis` (need not be normalized).
    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64, translation: Vector3<f64>) -> Self {
        let q = match nalgebra::Unit::try_new(axis, 1e-15) {
            Some(axis) => UnitQuaternion::from_axis_angle(&axis, angle),
            None => UnitQuaternion::identity(),
        };
        Self::from_quaternion(q, translation)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// `self · other`: applying the result equals applying `other` then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        let mut rotation = self.rotation * other.rotation;
        if orthonormal_deviation(&rotation) > ORTHONORMAL_TOL {
            rotation = reproject(&rotation);
        }
        Pose { rotation, translation: self.rotation * other.translation + self.translation }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose { rotation: rt, translation: -(rt * self.translation) }
    }

    pub fn transform_point(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    pub fn transform_vector(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Largest element-wise difference between the two 3×4 matrices.
    pub fn max_abs_diff(&self, other: &Pose) -> f64 {
        (self.rotation - other.rotation).amax().max((self.translation - other.translation).amax())
    }

    pub fn approx_eq(&self, other: &Pose, tol: f64) -> bool {
        self.max_abs_diff(other) <= tol
    }
}

/// `W_O T = W_C T · C_O T`.
pub fn object_pose_from_camera(w_c: &Pose, c_o: &Pose) -> Pose {
    w_c.compose(c_o)
}

/// Task label and grip pose parameterising an affordance transform.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskContext {
    task: String,
    grip_pose: Pose,
}

impl TaskContext {
    pub fn new(task: impl Into<String>, grip_pose: Pose) -> Result<Self, GeometryError> {
        let task = task.into();
        if task.trim().is_empty() {
            return Err(GeometryError::EmptyTask);
        }
        Ok(Self { task, grip_pose })
    }

    pub fn task(&self) -> &str {
        &self.task
    }

    pub fn grip_pose(&self) -> &Pose {
        &self.grip_pose
    }
}

/// Object pose in the end-effector frame, tagged with the task it serves.
#[derive(Debug, Clone, PartialEq)]
pub struct AffordanceTransform {
    pub context: TaskContext,
    pub e_o: Pose,
}

/// Solves `W_O T = W_E T · E_O T` for `E_O T`.
pub fn affordance_transform(w_e: &Pose, w_o: &Pose, ctx: &TaskContext) -> AffordanceTransform {
    AffordanceTransform { context: ctx.clone(), e_o: w_e.inverse().compose(w_o) }
}

/// Pose of a part centroid (world frame) relative to the end effector.
///
/// The rotation is identity: a point region carries no orientation.
pub fn toao_pose(centroid_world: &Vector3<f64>, w_e: &Pose) -> Pose {
    Pose {
        rotation: Matrix3::identity(),
        translation: w_e.inverse().transform_vector(centroid_world),
    }
}

/// Same as [`toao_pose`] for a centroid measured in the camera frame.
pub fn toao_pose_from_camera(centroid_cam: &Vector3<f64>, w_e: &Pose, w_c: &Pose) -> Pose {
    toao_pose(&w_c.transform_vector(centroid_cam), w_e)
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum PoseRepr {
    Matrix { rotation: [f64; 9], translation: [f64; 3] },
    Quaternion { qw: f64, qx: f64, qy: f64, qz: f64, t: [f64; 3] },
}

impl Serialize for Pose {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let r = &self.rotation;
        let mut rotation = [0.0; 9];
        for i in 0..3 {
            for j in 0..3 {
                rotation[i * 3 + j] = r[(i, j)];
            }
        }
        let t = &self.translation;
        PoseRepr::Matrix { rotation, translation: [t.x, t.y, t.z] }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Pose {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        match PoseRepr::deserialize(d)? {
            PoseRepr::Matrix { rotation, translation } => {
                let r = Matrix3::from_row_slice(&rotation);
                Pose::new(r, Vector3::from(translation)).map_err(D::Error::custom)
            }
            PoseRepr::Quaternion { qw, qx, qy, qz, t } => {
                let q = Quaternion::new(qw, qx, qy, qz);
                if !(q.norm() > 1e-12) {
                    return Err(D::Error::custom(GeometryError::ZeroQuaternion));
                }
                Ok(Pose::from_quaternion(UnitQuaternion::from_quaternion(q), Vector3::from(t)))
            }
        }
    }
}
