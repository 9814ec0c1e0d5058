//! Serial kinematic chains: forward kinematics and translational point Jacobians.
//!
//! Bodies are indexed from the base: body 0 is the fixed base, body `k` is the
//! link moved by joint `k` (1-based). Joint `k` sits at the end of its fixed
//! parent transform and rotates body `k` about its axis, expressed in the joint
//! frame.

use std::collections::HashSet;

use nalgebra::{DMatrix, Isometry3, Matrix3, Point3, Translation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rigid pose in the world frame. The quaternion serializes as `[x, y, z, w]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            position: Vector3::zeros(),
            orientation: UnitQuaternion::identity(),
        }
    }

    pub fn new(position: Vector3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        Self {
            position,
            orientation,
        }
    }

    pub fn from_translation(position: Vector3<f64>) -> Self {
        Self::new(position, UnitQuaternion::identity())
    }

    pub fn from_isometry(iso: &Isometry3<f64>) -> Self {
        Self::new(iso.translation.vector, iso.rotation)
    }

    pub fn to_isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(Translation3::from(self.position), self.orientation)
    }

    /// Maps a point given in this pose's local frame to the world frame.
    pub fn transform_point(&self, local: &Vector3<f64>) -> Vector3<f64> {
        self.position + self.orientation * local
    }

    /// `self ∘ other`: `other` is expressed in the frame of `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose::new(
            self.transform_point(&other.position),
            self.orientation * other.orientation,
        )
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        *self.orientation.to_rotation_matrix().matrix()
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.orientation.coords.iter().all(|v| v.is_finite())
    }
}

/// Builds a rotation from roll/pitch/yaw (extrinsic x, then y, then z).
pub fn rotation_from_rpy(rpy: [f64; 3]) -> UnitQuaternion<f64> {
    UnitQuaternion::from_euler_angles(rpy[0], rpy[1], rpy[2])
}

#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub name: String,
    pub axis: Unit<Vector3<f64>>,
    pub origin: Isometry3<f64>,
    pub limits: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Attachment {
    pub name: String,
    pub body: usize,
    pub offset: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KinematicChain {
    pub name: String,
    pub base: Isometry3<f64>,
    pub joints: Vec<Joint>,
    pub attachments: Vec<Attachment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointState {
    pub q: Vec<f64>,
    pub qdot: Vec<f64>,
}

impl JointState {
    pub fn at_rest(q: Vec<f64>) -> Self {
        let n = q.len();
        Self {
            q,
            qdot: vec![0.0; n],
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self::at_rest(vec![0.0; n])
    }
}

// On-disk chain description.

#[derive(Debug, Clone, Serialize, Deserialize)]
struct OriginFile {
    #[serde(default)]
    xyz: [f64; 3],
    #[serde(default)]
    rpy: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct JointFile {
    #[serde(default)]
    name: Option<String>,
    axis: [f64; 3],
    origin: OriginFile,
    #[serde(default)]
    limits: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AttachmentFile {
    name: String,
    body: usize,
    offset: [f64; 3],
    #[serde(default)]
    orientation: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ChainFile {
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    base: Option<OriginFile>,
    joints: Vec<JointFile>,
    #[serde(default)]
    attachments: Vec<AttachmentFile>,
}

fn origin_to_isometry(o: &OriginFile) -> Isometry3<f64> {
    Isometry3::from_parts(Translation3::from(Vector3::from(o.xyz)), rotation_from_rpy(o.rpy))
}

pub const PANDA_CHAIN: &str = include_str!("../data/panda.json");
pub const PLANAR2_CHAIN: &str = include_str!("../data/planar2.json");

/// Parses and validates a JSON chain description.
pub fn load_chain(config_text: &str) -> Result<KinematicChain> {
    let file: ChainFile = serde_json::from_str(config_text).map_err(|source| Error::Parse {
        what: "chain description",
        source,
    })?;
    let mut joints = Vec::with_capacity(file.joints.len());
    for (i, j) in file.joints.iter().enumerate() {
        let axis = Vector3::from(j.axis);
        let norm = axis.norm();
        if !norm.is_finite() || norm < 1e-12 {
            return Err(Error::ZeroNormAxis { joint: i + 1 });
        }
        let limits = match j.limits {
            Some([lower, upper]) => {
                if !(lower < upper) {
                    return Err(Error::InvalidLimits {
                        joint: i + 1,
                        lower,
                        upper,
                    });
                }
                Some((lower, upper))
            }
            None => None,
        };
        joints.push(Joint {
            name: j.name.clone().unwrap_or_else(|| format!("joint{}", i + 1)),
            axis: Unit::new_normalize(axis),
            origin: origin_to_isometry(&j.origin),
            limits,
        });
    }
    let mut seen = HashSet::new();
    let bodies = joints.len() + 1;
    let mut attachments = Vec::with_capacity(file.attachments.len());
    for a in &file.attachments {
        if !seen.insert(a.name.clone()) {
            return Err(Error::DuplicateAttachment(a.name.clone()));
        }
        if a.body >= bodies {
            return Err(Error::InvalidBody {
                name: a.name.clone(),
                body: a.body,
                bodies,
            });
        }
        attachments.push(Attachment {
            name: a.name.clone(),
            body: a.body,
            offset: Vector3::from(a.offset),
            orientation: rotation_from_rpy(a.orientation),
        });
    }
    Ok(KinematicChain {
        name: file.name.unwrap_or_else(|| "chain".to_owned()),
        base: file.base.as_ref().map(origin_to_isometry).unwrap_or_else(Isometry3::identity),
        joints,
        attachments,
    })
}

/// World frames of every body after a forward pass.
#[derive(Debug, Clone)]
pub struct ChainFrames {
    /// `bodies[k]` is the pose of body `k` (index 0 is the base).
    pub bodies: Vec<Isometry3<f64>>,
    /// World-frame joint axes, `axes[k - 1]` for joint `k`.
    pub axes: Vec<Vector3<f64>>,
}

impl ChainFrames {
    pub fn point(&self, body: usize, local: &Vector3<f64>) -> Vector3<f64> {
        (self.bodies[body] * Point3::from(*local)).coords
    }

    /// Translational Jacobian of a point rigidly attached to `body`, given in
    /// world coordinates. Column `j` is `axis_j × (point − joint_origin_j)`.
    pub fn point_jacobian_world(&self, body: usize, point: &Vector3<f64>) -> DMatrix<f64> {
        let n = self.axes.len();
        let mut jac = DMatrix::zeros(3, n);
        for j in 0..body.min(n) {
            let origin = self.bodies[j + 1].translation.vector;
            let col = self.axes[j].cross(&(point - origin));
            jac.fixed_view_mut::<3, 1>(0, j).copy_from(&col);
        }
        jac
    }
}

impl KinematicChain {
    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn attachment(&self, name: &str) -> Result<&Attachment> {
        self.attachments
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| Error::UnknownAttachment(name.to_owned()))
    }

    pub fn check_dims(&self, q: &[f64]) -> Result<()> {
        if q.len() != self.dof() {
            return Err(Error::DimensionMismatch {
                expected: self.dof(),
                got: q.len(),
            });
        }
        Ok(())
    }

    pub fn frames(&self, q: &[f64]) -> Result<ChainFrames> {
        self.check_dims(q)?;
        let mut bodies = Vec::with_capacity(self.dof() + 1);
        let mut axes = Vec::with_capacity(self.dof());
        let mut current = self.base;
        bodies.push(current);
        for (joint, &angle) in self.joints.iter().zip(q) {
            let at_joint = current * joint.origin;
            axes.push(at_joint.rotation * joint.axis.into_inner());
            let spin = UnitQuaternion::from_axis_angle(&joint.axis, angle);
            current = at_joint * Isometry3::from_parts(Translation3::identity(), spin);
            bodies.push(current);
        }
        Ok(ChainFrames { bodies, axes })
    }

    /// World position of a named attachment.
    pub fn point_position(&self, state: &JointState, attachment: &str) -> Result<Vector3<f64>> {
        let a = self.attachment(attachment)?;
        let frames = self.frames(&state.q)?;
        Ok(frames.point(a.body, &a.offset))
    }

    /// World pose of a named attachment, orientation included.
    pub fn attachment_pose(&self, state: &JointState, attachment: &str) -> Result<Pose> {
        let a = self.attachment(attachment)?;
        let frames = self.frames(&state.q)?;
        let body = frames.bodies[a.body];
        Ok(Pose::new(
            frames.point(a.body, &a.offset),
            body.rotation * a.orientation,
        ))
    }

    /// Translational Jacobian `∂h/∂q` (3×n) of a named attachment.
    pub fn point_jacobian(&self, state: &JointState, attachment: &str) -> Result<DMatrix<f64>> {
        let a = self.attachment(attachment)?;
        let frames = self.frames(&state.q)?;
        let p = frames.point(a.body, &a.offset);
        Ok(frames.point_jacobian_world(a.body, &p))
    }

    pub fn clamp_to_limits(&self, q: &mut [f64]) {
        for (value, joint) in q.iter_mut().zip(&self.joints) {
            if let Some((lo, hi)) = joint.limits {
                *value = value.clamp(lo, hi);
            }
        }
    }
}
