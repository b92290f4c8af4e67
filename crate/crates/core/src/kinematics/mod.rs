//! Skeletons, poses, forward kinematics and pose normalization.

mod skeleton;

pub use skeleton::{Axis, Joint, Skeleton};

use nalgebra::{Isometry3, Matrix4, Translation3, UnitQuaternion};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;

pub type Rigid = Isometry3<f64>;

/// Full pose vector `[alpha, t, rho]`: root axis-angle rotation, root
/// translation and the per-joint Euler angles in the skeleton's dof layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub alpha: [f64; 3],
    pub t: [f64; 3],
    pub rho: Vec<f64>,
}

impl Pose {
    /// Rest configuration for a skeleton with `dof` joint angles.
    pub fn zero(dof: usize) -> Self {
        Self {
            alpha: [0.0; 3],
            t: [0.0; 3],
            rho: vec![0.0; dof],
        }
    }

    pub fn dim(&self) -> usize {
        6 + self.rho.len()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        v.extend_from_slice(&self.alpha);
        v.extend_from_slice(&self.t);
        v.extend_from_slice(&self.rho);
        v
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        if values.len() < 6 {
            return Err(Error::DimensionMismatch {
                what: "pose vector",
                expected: 6,
                got: values.len(),
            });
        }
        Ok(Self {
            alpha: [values[0], values[1], values[2]],
            t: [values[3], values[4], values[5]],
            rho: values[6..].to_vec(),
        })
    }

    pub fn root_rotation(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_scaled_axis(Vec3::from(self.alpha))
    }
}

/// Pose with global translation and yaw removed; the conditioning input of
/// the skinning field.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedPose {
    pub values: Vec<f64>,
}

impl NormalizedPose {
    pub fn as_pose(&self) -> Pose {
        Pose::from_slice(&self.values).expect("normalized pose has at least six entries")
    }
}

/// Per-joint global transforms and skinning transforms (global composed
/// with the inverse bind transform).
#[derive(Debug, Clone)]
pub struct JointTransforms {
    pub global: Vec<Rigid>,
    pub skinning: Vec<Rigid>,
}

impl JointTransforms {
    pub fn joint_count(&self) -> usize {
        self.global.len()
    }

    pub fn global_matrix(&self, j: usize) -> Matrix4<f64> {
        self.global[j].to_homogeneous()
    }

    pub fn skinning_matrix(&self, j: usize) -> Matrix4<f64> {
        self.skinning[j].to_homogeneous()
    }

    pub fn joint_origin(&self, j: usize) -> Vec3 {
        self.global[j].translation.vector
    }

    /// Applies a rigid motion after every joint transform.
    pub fn premultiply(&self, motion: &Rigid) -> Self {
        Self {
            global: self.global.iter().map(|g| motion * g).collect(),
            skinning: self.skinning.iter().map(|s| motion * s).collect(),
        }
    }
}

fn local_rotation(axes: &[Axis], angles: &[f64]) -> UnitQuaternion<f64> {
    axes.iter()
        .zip(angles)
        .fold(UnitQuaternion::identity(), |acc, (axis, &angle)| {
            acc * UnitQuaternion::from_axis_angle(&axis.unit(), angle)
        })
}

/// Global joint transforms for a pose. The root receives the pose's rotation
/// and translation in front of its own rest offset and joint angles.
pub fn forward_kinematics(skel: &Skeleton, pose: &Pose) -> Result<Vec<Rigid>> {
    if pose.rho.len() != skel.dof() {
        return Err(Error::DimensionMismatch {
            what: "pose joint angles",
            expected: skel.dof(),
            got: pose.rho.len(),
        });
    }
    let root = Rigid::from_parts(Translation3::from(Vec3::from(pose.t)), pose.root_rotation());
    let mut global: Vec<Rigid> = Vec::with_capacity(skel.joint_count());
    for (j, joint) in skel.joints().iter().enumerate() {
        let range = skel.dof_range(j);
        let local = Rigid::from_parts(
            Translation3::from(joint.offset),
            local_rotation(&joint.axes, &pose.rho[range]),
        );
        let g = match joint.parent {
            Some(p) => global[p] * local,
            None => root * local,
        };
        global.push(g);
    }
    Ok(global)
}

/// Inverse bind transforms: the inverse of each joint's global transform at
/// the canonical pose.
pub fn bind_transforms(skel: &Skeleton, canonical: &Pose) -> Result<Vec<Rigid>> {
    Ok(forward_kinematics(skel, canonical)?
        .into_iter()
        .map(|g| g.inverse())
        .collect())
}

/// Global and skinning transforms of `pose` relative to precomputed inverse
/// bind transforms.
pub fn skinning_transforms(skel: &Skeleton, inverse_bind: &[Rigid], pose: &Pose) -> Result<JointTransforms> {
    let global = forward_kinematics(skel, pose)?;
    let skinning = global.iter().zip(inverse_bind).map(|(g, b)| g * b).collect();
    Ok(JointTransforms { global, skinning })
}

/// Splits `q` into `twist * remainder` where `twist` rotates about `up`.
/// At the antipodal singularity the twist is taken to be the identity.
pub fn split_yaw(q: &UnitQuaternion<f64>, up: &Vec3) -> (UnitQuaternion<f64>, UnitQuaternion<f64>) {
    let u = up.normalize();
    let v = q.imag();
    let proj = u * v.dot(&u);
    let raw = nalgebra::Quaternion::new(q.w, proj.x, proj.y, proj.z);
    let twist = if raw.norm() < 1e-12 {
        UnitQuaternion::identity()
    } else {
        UnitQuaternion::from_quaternion(raw)
    };
    let remainder = twist.inverse() * q;
    (twist, remainder)
}

/// Yaw angle (radians) of `q` about `up`.
pub fn yaw_angle(q: &UnitQuaternion<f64>, up: &Vec3) -> f64 {
    let (twist, _) = split_yaw(q, up);
    let u = up.normalize();
    let s = twist.imag().dot(&u);
    2.0 * s.atan2(twist.w)
}

/// Zeroes the global translation and removes the yaw (rotation about the
/// skeleton's up axis) from the root rotation. Joint angles are untouched.
pub fn normalize_pose(pose: &Pose, up: &Vec3) -> NormalizedPose {
    let (_, remainder) = split_yaw(&pose.root_rotation(), up);
    let r = remainder.scaled_axis();
    let mut values = Vec::with_capacity(pose.dim());
    values.extend_from_slice(&[r.x, r.y, r.z, 0.0, 0.0, 0.0]);
    values.extend_from_slice(&pose.rho);
    NormalizedPose { values }
}
