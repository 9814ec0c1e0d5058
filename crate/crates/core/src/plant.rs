//! Gravity-compensated arm as a damped double integrator per joint, plus the
//! kinematic hand/object/finger state.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{JointState, KinematicChain, Pose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantConfig {
    /// Per-joint effective inertia (kg·m²).
    pub inertia: Vec<f64>,
    /// Per-joint viscous friction (N·m·s/rad).
    pub joint_friction: Vec<f64>,
    /// Integration step (s).
    pub dt: f64,
    /// Time for the fingers to close once commanded (s).
    #[serde(default = "default_finger_close_time")]
    pub finger_close_time: f64,
    /// Standard deviation of the simulated hand-tracking position noise (m).
    #[serde(default)]
    pub hand_noise_std: f64,
}

fn default_finger_close_time() -> f64 {
    0.3
}

impl PlantConfig {
    pub fn uniform(dof: usize, inertia: f64, friction: f64, dt: f64) -> Self {
        Self {
            inertia: vec![inertia; dof],
            joint_friction: vec![friction; dof],
            dt,
            finger_close_time: default_finger_close_time(),
            hand_noise_std: 0.0,
        }
    }

    pub fn validate(&self, dof: usize) -> Result<()> {
        if self.inertia.len() != dof {
            return Err(Error::invalid("plant.inertia", format!("expected {dof} entries")));
        }
        if self.joint_friction.len() != dof {
            return Err(Error::invalid("plant.joint_friction", format!("expected {dof} entries")));
        }
        if self.inertia.iter().any(|m| !(*m > 0.0)) {
            return Err(Error::invalid("plant.inertia", "must be > 0 elementwise"));
        }
        if self.joint_friction.iter().any(|b| !(*b >= 0.0)) {
            return Err(Error::invalid("plant.joint_friction", "must be >= 0 elementwise"));
        }
        if !(self.dt > 0.0 && self.dt <= 0.01) {
            return Err(Error::invalid("plant.dt", "must be in (0, 0.01]"));
        }
        if !(self.finger_close_time >= 0.0) {
            return Err(Error::invalid("plant.finger_close_time", "must be >= 0"));
        }
        if !(self.hand_noise_std >= 0.0) {
            return Err(Error::invalid("plant.hand_noise_std", "must be >= 0"));
        }
        Ok(())
    }
}

/// Plant parameters bound to a chain's joint limits.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantParams {
    pub inertia: Vec<f64>,
    pub joint_friction: Vec<f64>,
    pub dt: f64,
    pub joint_limits: Vec<Option<(f64, f64)>>,
    pub finger_close_time: f64,
}

impl PlantParams {
    pub fn new(config: &PlantConfig, chain: &KinematicChain) -> Result<Self> {
        config.validate(chain.dof())?;
        Ok(Self {
            inertia: config.inertia.clone(),
            joint_friction: config.joint_friction.clone(),
            dt: config.dt,
            joint_limits: chain.joints.iter().map(|j| j.limits).collect(),
            finger_close_time: config.finger_close_time,
        })
    }

    /// `½ Σ m_i q̇_i²`.
    pub fn kinetic_energy(&self, qdot: &[f64]) -> f64 {
        0.5 * self.inertia.iter().zip(qdot).map(|(m, v)| m * v * v).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fingers {
    /// 0 = open, 1 = closed.
    pub closure: f64,
    pub closing: bool,
}

impl Fingers {
    pub fn closed(&self) -> bool {
        self.closure >= 1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub t: f64,
    pub joints: JointState,
    pub hand_pose: Pose,
    /// Fixed transform of the object in the hand frame.
    pub object_in_hand: Pose,
    pub object_pose: Pose,
    pub fingers: Fingers,
}

impl SimState {
    pub fn new(joints: JointState, hand_pose: Pose, object_in_hand: Pose) -> Self {
        Self {
            t: 0.0,
            joints,
            hand_pose,
            object_in_hand,
            object_pose: hand_pose.compose(&object_in_hand),
            fingers: Fingers {
                closure: 0.0,
                closing: false,
            },
        }
    }

    /// Moves the hand; the held object follows rigidly.
    pub fn set_hand_pose(&mut self, hand_pose: Pose) {
        self.hand_pose = hand_pose;
        self.object_pose = hand_pose.compose(&self.object_in_hand);
    }

    pub fn fingers_closed(&self) -> bool {
        self.fingers.closed()
    }
}

/// Semi-implicit Euler step of the joints plus the finger closure timer.
pub fn step(state: &SimState, tau: &[f64], params: &PlantParams) -> Result<SimState> {
    let n = params.inertia.len();
    if tau.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: tau.len(),
        });
    }
    let mut next = state.clone();
    let dt = params.dt;
    for j in 0..n {
        let qdot = state.joints.qdot[j];
        let qddot = (tau[j] - params.joint_friction[j] * qdot) / params.inertia[j];
        let mut v = qdot + qddot * dt;
        let mut q = state.joints.q[j] + v * dt;
        if let Some((lo, hi)) = params.joint_limits[j] {
            if q < lo || q > hi {
                q = q.clamp(lo, hi);
                v = 0.0;
            }
        }
        if !q.is_finite() || !v.is_finite() {
            return Err(Error::PlantDiverged { joint: j });
        }
        next.joints.q[j] = q;
        next.joints.qdot[j] = v;
    }
    if next.fingers.closing && !next.fingers.closed() {
        next.fingers.closure = if params.finger_close_time > 0.0 {
            (next.fingers.closure + dt / params.finger_close_time).min(1.0)
        } else {
            1.0
        };
    }
    next.t = state.t + dt;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(inertia: f64, friction: f64) -> PlantParams {
        PlantParams {
            inertia: vec![inertia],
            joint_friction: vec![friction],
            dt: 0.001,
            joint_limits: vec![None],
            finger_close_time: 0.3,
        }
    }

    fn state(q: f64, qdot: f64) -> SimState {
        SimState::new(
            JointState { q: vec![q], qdot: vec![qdot] },
            Pose::identity(),
            Pose::identity(),
        )
    }

    #[test]
    fn equilibrium_is_kept() {
        let p = single(1.0, 2.0);
        let s = state(0.4, 0.0);
        let next = step(&s, &[0.0], &p).unwrap();
        assert_eq!(next.joints, s.joints);
        assert_eq!(next.t, 0.001);
    }

    #[test]
    fn constant_torque_integrates() {
        let p = single(1.0, 0.0);
        let mut s = state(0.0, 0.0);
        for _ in 0..1000 {
            s = step(&s, &[1.0], &p).unwrap();
        }
        assert!((s.joints.qdot[0] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn friction_decay_matches_exponential() {
        let (m, b) = (1.0, 2.0);
        let p = single(m, b);
        let mut s = state(0.0, 1.0);
        for _ in 0..1000 {
            s = step(&s, &[0.0], &p).unwrap();
        }
        let exact = (-b / m * 1.0f64).exp();
        assert!((s.joints.qdot[0] - exact).abs() / exact < 0.01);
    }

    #[test]
    fn limit_clamps_and_stops() {
        let mut p = single(1.0, 0.0);
        p.joint_limits[0] = Some((-0.5, 0.5));
        let mut s = state(0.499, 5.0);
        s = step(&s, &[0.0], &p).unwrap();
        assert_eq!(s.joints.q[0], 0.5);
        assert_eq!(s.joints.qdot[0], 0.0);
    }

    #[test]
    fn diverged_state_is_reported() {
        let p = single(1.0, 0.0);
        let s = state(0.0, 0.0);
        assert!(matches!(step(&s, &[f64::INFINITY], &p), Err(Error::PlantDiverged { joint: 0 })));
        assert!(step(&s, &[0.0, 0.0], &p).is_err());
    }

    #[test]
    fn fingers_close_over_time() {
        let p = single(1.0, 0.0);
        let mut s = state(0.0, 0.0);
        s.fingers.closing = true;
        let mut ticks = 0;
        while !s.fingers_closed() {
            s = step(&s, &[0.0], &p).unwrap();
            ticks += 1;
        }
        assert!((299..=301).contains(&ticks), "{ticks}");
    }
}
