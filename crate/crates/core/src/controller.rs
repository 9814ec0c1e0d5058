//! Per-tick assembly of the virtual mechanism and the Jacobian-transpose
//! mapping of every virtual force to joint torques.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{JointState, KinematicChain, Pose};
use crate::virtual_mechanisms::{
    damper_force, paired_points, RigidVelocity, repulsive_energy, repulsive_force, saturated_spring_force,
    saturated_spring_potential, GraspSpec, PairedPointState, RepulsiveRegionParams,
    SaturatedSpringParams, VariableDamperParams,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// Both attraction springs active.
    #[default]
    Authoritative,
    /// Snap spring disabled; the human closes the last gap.
    Cooperative,
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "authoritative" => Ok(Profile::Authoritative),
            "cooperative" => Ok(Profile::Cooperative),
            other => Err(Error::UnknownProfile(other.to_owned())),
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Profile::Authoritative => "authoritative",
            Profile::Cooperative => "cooperative",
        })
    }
}

/// Which direction a repulsive region is offset from the hand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum RegionDirection {
    /// From the hand toward the robot base, tilted out of the horizontal
    /// plane by `elevation_deg` (negative is below the hand).
    TowardBase {
        #[serde(default)]
        elevation_deg: f64,
    },
    /// A fixed axis of the hand frame (the palm normal is `[1, 0, 0]`).
    HandAxis { axis: [f64; 3] },
}

impl Default for RegionDirection {
    fn default() -> Self {
        RegionDirection::TowardBase { elevation_deg: 0.0 }
    }
}

/// Where a repulsive region sits relative to the hand.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RegionPlacement {
    #[serde(default)]
    pub direction: RegionDirection,
    /// Falls back to `beta_placement` when absent.
    #[serde(default)]
    pub distance: Option<f64>,
}

impl RegionPlacement {
    pub fn validate(&self, key: &str) -> Result<()> {
        match &self.direction {
            RegionDirection::HandAxis { axis } => {
                let n = Vector3::from(*axis).norm();
                if !(n > 1e-9 && n.is_finite()) {
                    return Err(Error::invalid(format!("{key}.direction.axis"), "must be a non-zero vector"));
                }
            }
            RegionDirection::TowardBase { elevation_deg } => {
                if !(elevation_deg.abs() <= 90.0) {
                    return Err(Error::invalid(format!("{key}.direction.elevation_deg"), "must be in [-90, 90]"));
                }
            }
        }
        if let Some(d) = self.distance {
            if !(d >= 0.0 && d.is_finite()) {
                return Err(Error::invalid(format!("{key}.distance"), "must be >= 0"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    #[serde(flatten)]
    pub params: RepulsiveRegionParams,
    #[serde(default)]
    pub placement: RegionPlacement,
}

/// Tunable controller parameters, as stored in the controller config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VmcParams {
    pub spring1: SaturatedSpringParams,
    pub spring2: SaturatedSpringParams,
    pub damper: VariableDamperParams,
    #[serde(default)]
    pub repulsive: Vec<RegionSpec>,
    /// Stand-off of the targets toward the gripper base (m).
    pub alpha_default: f64,
    /// Distance of the repulsive region from the hand (m).
    pub beta_placement: f64,
    #[serde(default)]
    pub profile: Profile,
    /// Symmetric per-joint torque bounds (N·m).
    pub torque_limits: Vec<f64>,
    #[serde(default = "default_gripper_base")]
    pub gripper_base_attachment: String,
    /// Regions are skipped beyond this many sigmas.
    #[serde(default = "default_cutoff")]
    pub region_cutoff_sigmas: f64,
}

fn default_gripper_base() -> String {
    "gripper_base".to_owned()
}

fn default_cutoff() -> f64 {
    5.0
}

impl VmcParams {
    pub fn validate(&self) -> Result<()> {
        self.spring1.validate("controller.spring1")?;
        self.spring2.validate("controller.spring2")?;
        self.damper.validate("controller.damper")?;
        for (i, r) in self.repulsive.iter().enumerate() {
            r.params.validate(&format!("controller.repulsive[{i}]"))?;
            r.placement.validate(&format!("controller.repulsive[{i}].placement"))?;
        }
        if !(self.alpha_default >= 0.0) {
            return Err(Error::invalid("controller.alpha_default", "must be >= 0"));
        }
        if !(self.beta_placement > 0.0) {
            return Err(Error::invalid("controller.beta_placement", "must be > 0"));
        }
        if self.torque_limits.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::invalid("controller.torque_limits", "must be > 0 elementwise"));
        }
        if !(self.region_cutoff_sigmas > 0.0) {
            return Err(Error::invalid("controller.region_cutoff_sigmas", "must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    pub grasp: GraspSpec,
    #[serde(flatten)]
    pub params: VmcParams,
}

impl ControllerConfig {
    pub fn new(grasp: GraspSpec, params: VmcParams) -> Result<Self> {
        let c = Self { grasp, params };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.grasp.validate()?;
        self.params.validate()
    }

    /// The snap spring as currently active, `None` when the profile disables it.
    pub fn active_spring2(&self) -> Option<SaturatedSpringParams> {
        match self.params.profile {
            Profile::Authoritative => Some(self.params.spring2),
            Profile::Cooperative => None,
        }
    }

    /// Effective snap-spring force bound: zero in the cooperative profile.
    pub fn spring2_f_max(&self) -> f64 {
        self.active_spring2().map_or(0.0, |s| s.f_max)
    }
}

/// Switches the robot profile. The configured snap spring is kept, so going
/// back to `authoritative` restores it exactly.
pub fn apply_profile(config: &ControllerConfig, profile: Profile) -> ControllerConfig {
    let mut out = config.clone();
    out.params.profile = profile;
    out
}

/// Centers of every configured repulsive region for the given hand pose.
pub fn place_repulsive_regions(hand_pose: &Pose, params: &VmcParams) -> Vec<Vector3<f64>> {
    params
        .repulsive
        .iter()
        .map(|r| {
            let direction = match &r.placement.direction {
                RegionDirection::TowardBase { elevation_deg } => {
                    let h = Vector3::new(-hand_pose.position.x, -hand_pose.position.y, 0.0);
                    // Directly above the base: fall back to the palm normal.
                    let h = if h.norm() < 1e-9 {
                        hand_pose.orientation * Vector3::x()
                    } else {
                        h.normalize()
                    };
                    let e = elevation_deg.to_radians();
                    h * e.cos() + Vector3::z() * e.sin()
                }
                RegionDirection::HandAxis { axis } => hand_pose.orientation * Vector3::from(*axis).normalize(),
            };
            let distance = r.placement.distance.unwrap_or(params.beta_placement);
            hand_pose.position + direction * distance
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ComponentId {
    Spring1 { pair: usize },
    Spring2 { pair: usize },
    Damper { pair: usize },
    Repulsive { region: usize, finger: usize },
}

impl fmt::Display for ComponentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ComponentId::Spring1 { pair } => write!(f, "spring1[{pair}]"),
            ComponentId::Spring2 { pair } => write!(f, "spring2[{pair}]"),
            ComponentId::Damper { pair } => write!(f, "damper[{pair}]"),
            ComponentId::Repulsive { region, finger } => write!(f, "repulsive[{region}][{finger}]"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentForce {
    pub component: ComponentId,
    /// Which gripper point the force acts on.
    pub pair: usize,
    pub point: Vector3<f64>,
    pub force: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorqueClamp {
    pub joint: usize,
    pub requested: f64,
    pub applied: f64,
}

/// Everything the controller needs for one tick.
#[derive(Debug, Clone)]
pub struct ControlInput<'a> {
    pub state: &'a JointState,
    pub hand_pose: Pose,
    pub hand_velocity: Vector3<f64>,
    /// World-frame angular velocity of the hand (rad/s).
    pub hand_angular_velocity: Vector3<f64>,
    /// Pose of the held object (the hand pose composed with the in-hand transform).
    pub object_pose: Pose,
    pub alpha: f64,
    pub previous_direction: Option<Vector3<f64>>,
}

#[derive(Debug, Clone)]
pub struct ControllerOutput {
    pub tau: Vec<f64>,
    pub forces: Vec<ComponentForce>,
    pub clamped: Vec<TorqueClamp>,
    pub pairs: [PairedPointState; 3],
    pub grasp_points: [Vector3<f64>; 3],
    pub pair_distances: [f64; 3],
    pub region_centers: Vec<Vector3<f64>>,
    pub offset_direction: Vector3<f64>,
    /// Torques before clamping.
    pub tau_unclamped: Vec<f64>,
}

fn finite_or(component: ComponentId, f: Vector3<f64>) -> Result<Vector3<f64>> {
    if f.iter().all(|x| x.is_finite()) {
        Ok(f)
    } else {
        Err(Error::NonFiniteComponent {
            component: component.to_string(),
        })
    }
}

/// `τ = Σ J_iᵀ F_i` over every spring, damper and repulsive force, then clamped.
pub fn compute_torques(
    chain: &KinematicChain,
    input: &ControlInput<'_>,
    config: &ControllerConfig,
) -> Result<ControllerOutput> {
    let params = &config.params;
    let state = input.state;
    chain.check_dims(&state.q)?;
    chain.check_dims(&state.qdot)?;
    if params.torque_limits.len() != chain.dof() {
        return Err(Error::invalid(
            "controller.torque_limits",
            format!("expected {} entries, got {}", chain.dof(), params.torque_limits.len()),
        ));
    }
    let gripper_base = chain.point_position(state, &params.gripper_base_attachment)?;
    let pp = paired_points(
        chain,
        state,
        &input.object_pose,
        &RigidVelocity {
            linear: input.hand_velocity,
            angular: input.hand_angular_velocity,
            origin: input.hand_pose.position,
        },
        &config.grasp,
        input.alpha,
        &gripper_base,
        input.previous_direction,
    )?;

    let mut forces = Vec::with_capacity(12);
    let spring2 = config.active_spring2();
    for (i, pair) in pp.pairs.iter().enumerate() {
        let id = ComponentId::Spring1 { pair: i };
        let f = finite_or(id, saturated_spring_force(&params.spring1, &pair.p)?)?;
        forces.push(ComponentForce { component: id, pair: i, point: pair.gripper_point, force: f });
        if let Some(s2) = &spring2 {
            let id = ComponentId::Spring2 { pair: i };
            let f = finite_or(id, saturated_spring_force(s2, &pair.p)?)?;
            forces.push(ComponentForce { component: id, pair: i, point: pair.gripper_point, force: f });
        }
        let id = ComponentId::Damper { pair: i };
        let f = finite_or(id, damper_force(&params.damper, &pair.p, &pair.pdot)?)?;
        forces.push(ComponentForce { component: id, pair: i, point: pair.gripper_point, force: f });
    }

    let region_centers = place_repulsive_regions(&input.hand_pose, params);
    for (r, (spec, center)) in params.repulsive.iter().zip(&region_centers).enumerate() {
        let cutoff = params.region_cutoff_sigmas * spec.params.sigma;
        // Fingers only: pairs 0 and 1.
        for finger in 0..2 {
            let point = pp.pairs[finger].gripper_point;
            let p_r = point - center;
            if p_r.norm() > cutoff {
                continue;
            }
            let id = ComponentId::Repulsive { region: r, finger };
            let f = finite_or(id, repulsive_force(&spec.params, &p_r)?)?;
            forces.push(ComponentForce { component: id, pair: finger, point, force: f });
        }
    }

    let n = chain.dof();
    let mut tau = DVector::<f64>::zeros(n);
    for cf in &forces {
        tau += pp.jacobians[cf.pair].transpose() * cf.force;
    }
    let tau_unclamped: Vec<f64> = tau.iter().copied().collect();
    let mut clamped = Vec::new();
    let tau = tau_unclamped
        .iter()
        .zip(&params.torque_limits)
        .enumerate()
        .map(|(j, (&t, &limit))| {
            let applied = t.clamp(-limit, limit);
            if applied != t {
                clamped.push(TorqueClamp { joint: j, requested: t, applied });
            }
            applied
        })
        .collect();

    Ok(ControllerOutput {
        tau,
        forces,
        clamped,
        pair_distances: pp.pairs.map(|p| p.p.norm()),
        pairs: pp.pairs,
        grasp_points: pp.grasp_points,
        region_centers,
        offset_direction: pp.offset_direction,
        tau_unclamped,
    })
}

/// Potential energy stored in the attraction springs for the given pairs.
pub fn spring_energy(config: &ControllerConfig, pairs: &[PairedPointState]) -> Result<f64> {
    let mut total = 0.0;
    for pair in pairs {
        total += saturated_spring_potential(&config.params.spring1, &pair.p)?;
        if let Some(s2) = config.active_spring2() {
            total += saturated_spring_potential(&s2, &pair.p)?;
        }
    }
    Ok(total)
}

/// Energy stored in the repulsive regions, evaluated at the finger points.
pub fn repulsive_region_energy(
    config: &ControllerConfig,
    pairs: &[PairedPointState],
    centers: &[Vector3<f64>],
) -> Result<f64> {
    let mut total = 0.0;
    for (spec, center) in config.params.repulsive.iter().zip(centers) {
        for pair in pairs.iter().take(2) {
            total += repulsive_energy(&spec.params, &(pair.gripper_point - center))?;
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::default_session_config;
    use nalgebra::UnitQuaternion;
    use std::f64::consts::FRAC_PI_2;

    fn params() -> VmcParams {
        default_session_config().controller
    }

    fn with_direction(direction: RegionDirection) -> VmcParams {
        let mut p = params();
        p.repulsive[0].placement = RegionPlacement { direction, distance: None };
        p
    }

    #[test]
    fn region_along_hand_axis() {
        let p = with_direction(RegionDirection::HandAxis { axis: [1.0, 0.0, 0.0] });
        let centers = place_repulsive_regions(&Pose::identity(), &p);
        assert_eq!(centers.len(), 1);
        assert!((centers[0] - Vector3::new(0.23, 0.0, 0.0)).norm() < 1e-15);

        let d = Vector3::new(0.3, -0.2, 0.5);
        let moved = place_repulsive_regions(&Pose::from_translation(d), &p);
        assert!((moved[0] - centers[0] - d).norm() < 1e-15);

        let rot = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), FRAC_PI_2);
        let rotated = place_repulsive_regions(&Pose::new(d, rot), &p);
        assert!((rotated[0] - (d + Vector3::new(0.0, 0.23, 0.0))).norm() < 1e-12);
    }

    #[test]
    fn region_toward_base() {
        let p = with_direction(RegionDirection::TowardBase { elevation_deg: -90.0 });
        let hand = Pose::from_translation(Vector3::new(0.6, 0.0, 0.3));
        let c = place_repulsive_regions(&hand, &p)[0];
        assert!((c - Vector3::new(0.6, 0.0, 0.07)).norm() < 1e-12);

        let p = with_direction(RegionDirection::TowardBase { elevation_deg: 0.0 });
        let hand = Pose::from_translation(Vector3::new(0.0, 0.5, 0.3));
        let c = place_repulsive_regions(&hand, &p)[0];
        assert!((c - Vector3::new(0.0, 0.27, 0.3)).norm() < 1e-12);

        // Orientation does not move a base-facing region.
        let rot = UnitQuaternion::from_euler_angles(0.3, -0.7, 1.9);
        let c2 = place_repulsive_regions(&Pose::new(hand.position, rot), &p)[0];
        assert!((c - c2).norm() < 1e-15);
    }

    #[test]
    fn placement_validation() {
        let bad = RegionPlacement { direction: RegionDirection::HandAxis { axis: [0.0; 3] }, distance: None };
        assert!(bad.validate("r").is_err());
        let bad = RegionPlacement { direction: RegionDirection::TowardBase { elevation_deg: 120.0 }, distance: None };
        assert!(bad.validate("r").is_err());
        let bad = RegionPlacement { direction: RegionDirection::default(), distance: Some(-0.1) };
        assert!(bad.validate("r").is_err());
        assert!(RegionPlacement::default().validate("r").is_ok());
    }

    #[test]
    fn profile_round_trip() {
        let cfg = ControllerConfig {
            grasp: crate::scenario::ObjectKind::CardboardBox.spec().grasp,
            params: params(),
        };
        let coop = apply_profile(&cfg, Profile::Cooperative);
        assert_eq!(coop.spring2_f_max(), 0.0);
        assert!(coop.active_spring2().is_none());
        assert_eq!(apply_profile(&cfg, Profile::Authoritative), cfg);
        assert_eq!(apply_profile(&coop, Profile::Authoritative), cfg);
        assert!("sideways".parse::<Profile>().is_err());
        assert_eq!("cooperative".parse::<Profile>().unwrap(), Profile::Cooperative);
    }
}
