//! Force laws of the virtual components and the paired-point geometry.
//!
//! Sign conventions: `p` is always `target − gripper`, so a spring force `F(p)`
//! applied at the gripper point pulls it toward the target. For repulsive
//! regions `p_r` is `gripper − center`, so the force pushes outward.

use nalgebra::{DMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{JointState, KinematicChain, Pose};

const ZERO_EXTENSION: f64 = 1e-12;

fn check_finite(v: &Vector3<f64>, what: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaturatedSpringParams {
    /// Force bound (N).
    pub f_max: f64,
    /// Small-extension stiffness (N/m).
    pub k: f64,
}

impl SaturatedSpringParams {
    pub fn new(f_max: f64, k: f64) -> Result<Self> {
        let s = Self { f_max, k };
        s.validate("spring")?;
        Ok(s)
    }

    pub fn validate(&self, key: &str) -> Result<()> {
        if !(self.f_max > 0.0 && self.f_max.is_finite()) {
            return Err(Error::invalid(format!("{key}.f_max"), "must be > 0"));
        }
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(Error::invalid(format!("{key}.k"), "must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariableDamperParams {
    /// Damping at zero extension (N·s/m).
    pub c1: f64,
    /// Additional damping reached at large extension (N·s/m).
    pub c2: f64,
    /// Sensitivity of the damping coefficient to extension (1/m).
    pub beta_d: f64,
}

impl VariableDamperParams {
    pub fn validate(&self, key: &str) -> Result<()> {
        if !(self.c1 >= 0.0) {
            return Err(Error::invalid(format!("{key}.c1"), "must be >= 0"));
        }
        if !(self.c1 + self.c2 >= 0.0) {
            return Err(Error::invalid(format!("{key}.c2"), "c1 + c2 must be >= 0"));
        }
        if !(self.beta_d > 0.0 && self.beta_d.is_finite()) {
            return Err(Error::invalid(format!("{key}.beta_d"), "must be > 0"));
        }
        Ok(())
    }

    pub fn coefficient(&self, extension: f64) -> f64 {
        self.c1 + self.c2 * (self.beta_d * extension).tanh()
    }
}

/// Gaussian-profile repulsive spring. The stiffness is derived so that the
/// peak force `f_max` occurs at distance `sigma` from the center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepulsiveRegionParams {
    pub f_max: f64,
    pub sigma: f64,
}

impl RepulsiveRegionParams {
    pub fn new(f_max: f64, sigma: f64) -> Result<Self> {
        let r = Self { f_max, sigma };
        r.validate("repulsive")?;
        Ok(r)
    }

    pub fn validate(&self, key: &str) -> Result<()> {
        if !(self.f_max > 0.0 && self.f_max.is_finite()) {
            return Err(Error::invalid(format!("{key}.f_max"), "must be > 0"));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid(format!("{key}.sigma"), "must be > 0"));
        }
        Ok(())
    }

    /// `k_r = (f_max / sigma)·e^0.5` (N/m).
    pub fn stiffness(&self) -> f64 {
        self.f_max / self.sigma * 0.5f64.exp()
    }
}

/// Saturated spring: `F = f_max·tanh(k|p|/f_max)·p/|p|`.
pub fn saturated_spring_force(params: &SaturatedSpringParams, p: &Vector3<f64>) -> Result<Vector3<f64>> {
    check_finite(p, "saturated_spring_force")?;
    let len = p.norm();
    if len < ZERO_EXTENSION {
        return Ok(Vector3::zeros());
    }
    let magnitude = params.f_max * (params.k * len / params.f_max).tanh();
    Ok(p * (magnitude / len))
}

/// Potential of the saturated spring, `U = (f_max²/k)·ln cosh(k|p|/f_max)`.
pub fn saturated_spring_potential(params: &SaturatedSpringParams, p: &Vector3<f64>) -> Result<f64> {
    check_finite(p, "saturated_spring_potential")?;
    let x = params.k * p.norm() / params.f_max;
    Ok(params.f_max * params.f_max / params.k * ln_cosh(x))
}

// ln cosh(x) without overflow for large |x|.
fn ln_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// Variable damper: `F = (c1 + c2·tanh(beta_d|p|))·ṗ`. With `ṗ` the rate of
/// `target − gripper`, the force on the gripper opposes its relative motion.
pub fn damper_force(
    params: &VariableDamperParams,
    p: &Vector3<f64>,
    pdot: &Vector3<f64>,
) -> Result<Vector3<f64>> {
    check_finite(p, "damper_force")?;
    check_finite(pdot, "damper_force")?;
    Ok(pdot * params.coefficient(p.norm()))
}

/// Repulsive force for `p_r = gripper − center`:
/// `F = k_r·exp(−|p_r|²/(2σ²))·p_r`, the negative gradient of [`repulsive_energy`].
pub fn repulsive_force(params: &RepulsiveRegionParams, p_r: &Vector3<f64>) -> Result<Vector3<f64>> {
    check_finite(p_r, "repulsive_force")?;
    let s2 = params.sigma * params.sigma;
    Ok(p_r * (params.stiffness() * (-p_r.norm_squared() / (2.0 * s2)).exp()))
}

/// `E = k_r·σ²·exp(−|p_r|²/(2σ²))`.
pub fn repulsive_energy(params: &RepulsiveRegionParams, p_r: &Vector3<f64>) -> Result<f64> {
    check_finite(p_r, "repulsive_energy")?;
    let s2 = params.sigma * params.sigma;
    Ok(params.stiffness() * s2 * (-p_r.norm_squared() / (2.0 * s2)).exp())
}

/// Where a handover grasp sits on the object and which gripper points pair with it.
///
/// Target points are given in the object frame. The third point marks the
/// direction of the wrist; it is pushed out along that direction to `link_length`
/// from the finger midpoint on both the object and the gripper side, forming the
/// virtual rigid links.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraspSpec {
    pub left: [f64; 3],
    pub right: [f64; 3],
    pub back: [f64; 3],
    #[serde(default = "default_attachments")]
    pub gripper_attachments: [String; 3],
    #[serde(default = "default_link_length")]
    pub link_length: f64,
}

fn default_attachments() -> [String; 3] {
    [
        "left_finger".to_owned(),
        "right_finger".to_owned(),
        "wrist_back".to_owned(),
    ]
}

pub fn default_link_length() -> f64 {
    0.45
}

fn extend_back(left: &Vector3<f64>, right: &Vector3<f64>, back: &Vector3<f64>, length: f64) -> Vector3<f64> {
    let mid = (left + right) * 0.5;
    let dir = back - mid;
    let n = dir.norm();
    if n < 1e-12 {
        return *back;
    }
    mid + dir * (length / n)
}

impl GraspSpec {
    pub fn validate(&self) -> Result<()> {
        let [a, b, c] = self.raw_points();
        let area = 0.5 * (b - a).cross(&(c - a)).norm();
        if !(area > 1e-6) {
            return Err(Error::invalid("grasp", "grasp points are collinear"));
        }
        if !(self.link_length > 0.0 && self.link_length.is_finite()) {
            return Err(Error::invalid("grasp.link_length", "must be > 0"));
        }
        Ok(())
    }

    /// Object-frame grasp points as authored.
    pub fn raw_points(&self) -> [Vector3<f64>; 3] {
        [
            Vector3::from(self.left),
            Vector3::from(self.right),
            Vector3::from(self.back),
        ]
    }

    /// Object-frame target points with the rigid-link extension applied.
    pub fn target_points_local(&self) -> [Vector3<f64>; 3] {
        let [l, r, b] = self.raw_points();
        [l, r, extend_back(&l, &r, &b, self.link_length)]
    }

    pub fn centroid_local(&self) -> Vector3<f64> {
        let [a, b, c] = self.raw_points();
        (a + b + c) / 3.0
    }
}

/// Gripper attachments resolved against a chain: all three points live on one body.
#[derive(Debug, Clone, PartialEq)]
pub struct GripperPoints {
    pub body: usize,
    pub local: [Vector3<f64>; 3],
}

impl GripperPoints {
    pub fn resolve(chain: &KinematicChain, grasp: &GraspSpec) -> Result<Self> {
        let atts = grasp
            .gripper_attachments
            .iter()
            .map(|n| chain.attachment(n))
            .collect::<Result<Vec<_>>>()?;
        let body = atts[0].body;
        if atts.iter().any(|a| a.body != body) {
            return Err(Error::invalid(
                "grasp.gripper_attachments",
                "all gripper attachments must be on the same body",
            ));
        }
        let (l, r, b) = (atts[0].offset, atts[1].offset, atts[2].offset);
        Ok(Self {
            body,
            local: [l, r, extend_back(&l, &r, &b, grasp.link_length)],
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedPointState {
    pub gripper_point: Vector3<f64>,
    pub target_point: Vector3<f64>,
    /// `target_point − gripper_point`.
    pub p: Vector3<f64>,
    pub pdot: Vector3<f64>,
}

#[derive(Debug, Clone)]
pub struct PairedPoints {
    pub pairs: [PairedPointState; 3],
    /// Target points before the offset, i.e. the points rigidly fixed to the object.
    pub grasp_points: [Vector3<f64>; 3],
    /// Gripper-point Jacobians, one per pair.
    pub jacobians: [DMatrix<f64>; 3],
    /// Unit direction the targets were offset along.
    pub offset_direction: Vector3<f64>,
}

/// Velocity field of a rigid body: `v(p) = linear + angular × (p − origin)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidVelocity {
    pub linear: Vector3<f64>,
    pub angular: Vector3<f64>,
    pub origin: Vector3<f64>,
}

impl RigidVelocity {
    pub fn translation(linear: Vector3<f64>) -> Self {
        Self {
            linear,
            angular: Vector3::zeros(),
            origin: Vector3::zeros(),
        }
    }

    pub fn at(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.linear + self.angular.cross(&(p - self.origin))
    }
}

/// Unit vector from `centroid` toward `gripper_base`, falling back to the
/// previous direction (or world +z) when the two coincide.
pub fn offset_direction(
    centroid: &Vector3<f64>,
    gripper_base: &Vector3<f64>,
    previous: Option<Vector3<f64>>,
) -> Vector3<f64> {
    let d = gripper_base - centroid;
    let n = d.norm();
    if n < 1e-6 {
        previous.unwrap_or_else(Vector3::z)
    } else {
        d / n
    }
}

/// Computes the three gripper/target pairs for the current configuration.
///
/// Target point velocities come from `object_velocity` (the offset is treated
/// as fixed); `previous_direction` is reused when the offset direction degenerates.
#[allow(clippy::too_many_arguments)]
pub fn paired_points(
    chain: &KinematicChain,
    state: &JointState,
    object_pose: &Pose,
    object_velocity: &RigidVelocity,
    grasp: &GraspSpec,
    alpha: f64,
    gripper_base: &Vector3<f64>,
    previous_direction: Option<Vector3<f64>>,
) -> Result<PairedPoints> {
    if !(alpha >= 0.0) {
        return Err(Error::invalid("alpha", "must be >= 0"));
    }
    let gripper = GripperPoints::resolve(chain, grasp)?;
    let frames = chain.frames(&state.q)?;
    let qdot = nalgebra::DVector::from_column_slice(&state.qdot);
    chain.check_dims(&state.qdot)?;

    let centroid = object_pose.transform_point(&grasp.centroid_local());
    let direction = offset_direction(&centroid, gripper_base, previous_direction);
    let local_targets = grasp.target_points_local();
    let grasp_points = local_targets.map(|t| object_pose.transform_point(&t));

    let mut jacobians: [DMatrix<f64>; 3] = Default::default();
    let mut pairs = [PairedPointState {
        gripper_point: Vector3::zeros(),
        target_point: Vector3::zeros(),
        p: Vector3::zeros(),
        pdot: Vector3::zeros(),
    }; 3];
    for i in 0..3 {
        let g = frames.point(gripper.body, &gripper.local[i]);
        let jac = frames.point_jacobian_world(gripper.body, &g);
        let g_vel = &jac * &qdot;
        let t = grasp_points[i] + direction * alpha;
        pairs[i] = PairedPointState {
            gripper_point: g,
            target_point: t,
            p: t - g,
            pdot: object_velocity.at(&grasp_points[i]) - Vector3::new(g_vel[0], g_vel[1], g_vel[2]),
        };
        jacobians[i] = jac;
    }
    Ok(PairedPoints {
        pairs,
        grasp_points,
        jacobians,
        offset_direction: direction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spring() -> SaturatedSpringParams {
        SaturatedSpringParams::new(20.0, 200.0).unwrap()
    }

    #[test]
    fn spring_examples() {
        assert_eq!(saturated_spring_force(&spring(), &Vector3::zeros()).unwrap(), Vector3::zeros());
        let f = saturated_spring_force(&spring(), &Vector3::new(0.1, 0.0, 0.0)).unwrap();
        assert!((f.x - 15.231883119115297).abs() < 1e-12);
        assert_eq!((f.y, f.z), (0.0, 0.0));
        let f = saturated_spring_force(&spring(), &Vector3::new(10.0, 0.0, 0.0)).unwrap();
        assert!((f.norm() - 20.0).abs() < 5e-4);
    }

    #[test]
    fn spring_potential_examples() {
        assert_eq!(saturated_spring_potential(&spring(), &Vector3::zeros()).unwrap(), 0.0);
        let u = saturated_spring_potential(&spring(), &Vector3::new(0.0, 0.1, 0.0)).unwrap();
        assert!((u - 0.8675616609660542).abs() < 1e-12, "{u}");
        // Large extensions stay finite.
        let u = saturated_spring_potential(&spring(), &Vector3::new(1e4, 0.0, 0.0)).unwrap();
        assert!(u.is_finite());
    }

    #[test]
    fn damper_examples() {
        let d = VariableDamperParams { c1: 5.0, c2: 20.0, beta_d: 10.0 };
        let zero = damper_force(&d, &Vector3::new(0.2, 0.0, 0.0), &Vector3::zeros()).unwrap();
        assert_eq!(zero, Vector3::zeros());
        let f = damper_force(&d, &Vector3::new(0.2, 0.0, 0.0), &Vector3::new(0.1, 0.0, 0.0)).unwrap();
        assert!((f.norm() - 2.428055160151634).abs() < 1e-12, "{}", f.norm());
        assert!((d.coefficient(10.0 / d.beta_d) - 25.0).abs() < 1e-7);
    }

    #[test]
    fn repulsive_examples() {
        let r = RepulsiveRegionParams::new(30.0, 0.1).unwrap();
        assert_eq!(repulsive_force(&r, &Vector3::zeros()).unwrap(), Vector3::zeros());
        let f = repulsive_force(&r, &Vector3::new(0.0, 0.1, 0.0)).unwrap();
        assert!((f.norm() - 30.0).abs() < 1e-12);
        assert!(f.y > 0.0);
        let f = repulsive_force(&r, &Vector3::new(0.3, 0.0, 0.0)).unwrap();
        assert!((f.norm() - 1.6484074999860763).abs() < 1e-12, "{}", f.norm());
        let e0 = repulsive_energy(&r, &Vector3::zeros()).unwrap();
        assert!((e0 - r.stiffness() * 0.01).abs() < 1e-12);
        assert!((e0 - 4.946163812100385).abs() < 1e-12, "{e0}");
    }

    #[test]
    fn non_finite_inputs_rejected() {
        let bad = Vector3::new(f64::NAN, 0.0, 0.0);
        assert!(saturated_spring_force(&spring(), &bad).is_err());
        assert!(saturated_spring_potential(&spring(), &bad).is_err());
        let d = VariableDamperParams { c1: 1.0, c2: 1.0, beta_d: 1.0 };
        assert!(damper_force(&d, &Vector3::zeros(), &bad).is_err());
        let r = RepulsiveRegionParams::new(1.0, 1.0).unwrap();
        assert!(repulsive_force(&r, &bad).is_err());
        assert!(repulsive_energy(&r, &bad).is_err());
    }

    #[test]
    fn parameter_validation() {
        assert!(SaturatedSpringParams::new(0.0, 1.0).is_err());
        assert!(SaturatedSpringParams::new(1.0, -1.0).is_err());
        assert!(RepulsiveRegionParams::new(1.0, 0.0).is_err());
        assert!(VariableDamperParams { c1: -1.0, c2: 2.0, beta_d: 1.0 }.validate("d").is_err());
        assert!(VariableDamperParams { c1: 1.0, c2: -2.0, beta_d: 1.0 }.validate("d").is_err());
        assert!(VariableDamperParams { c1: 1.0, c2: -1.0, beta_d: 1.0 }.validate("d").is_ok());
    }

    #[test]
    fn degenerate_offset_direction() {
        let c = Vector3::new(0.1, 0.2, 0.3);
        assert_eq!(offset_direction(&c, &c, None), Vector3::z());
        let prev = Vector3::x();
        assert_eq!(offset_direction(&c, &c, Some(prev)), prev);
    }

    #[test]
    fn collinear_grasp_rejected() {
        let g = GraspSpec {
            left: [0.0, 0.0, 0.0],
            right: [1.0, 0.0, 0.0],
            back: [2.0, 0.0, 0.0],
            gripper_attachments: default_attachments(),
            link_length: 0.45,
        };
        assert!(g.validate().is_err());
    }
}
