//! Final-approach and grasp state machine.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

// Absorbs rounding when the dwell clock is built from many small steps.
const CLOCK_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Phase {
    Tracking,
    FinalApproach,
    Grasping,
    Done,
}

impl Phase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::Tracking => "TRACKING",
            Phase::FinalApproach => "FINAL_APPROACH",
            Phase::Grasping => "GRASPING",
            Phase::Done => "DONE",
        }
    }
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GripperCommand {
    None,
    CloseFingers,
    OpenFingers,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FsmConfig {
    /// All pair distances must be below this to start the final approach (m).
    pub d_activate: f64,
    /// All pair distances must stay below this during the dwell (m).
    pub d_grasp: f64,
    /// Dwell before closing (s).
    pub t_dwell: f64,
    /// Hand speed considered "still" (m/s).
    pub v_low: f64,
    /// Offset reduction rate during the final approach (m/s).
    pub ramp_rate: f64,
    /// Offset restored on reset (m). Taken from the controller section when
    /// loaded from the config file.
    #[serde(default = "default_alpha")]
    pub alpha_default: f64,
}

fn default_alpha() -> f64 {
    0.10
}

impl Default for FsmConfig {
    fn default() -> Self {
        Self {
            d_activate: 0.10,
            d_grasp: 0.05,
            t_dwell: 1.0,
            v_low: 0.03,
            ramp_rate: 0.2,
            alpha_default: 0.10,
        }
    }
}

impl FsmConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("gripper.d_activate", self.d_activate),
            ("gripper.d_grasp", self.d_grasp),
            ("gripper.t_dwell", self.t_dwell),
            ("gripper.v_low", self.v_low),
            ("gripper.ramp_rate", self.ramp_rate),
        ];
        for (key, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(key, "must be > 0"));
            }
        }
        if !(self.alpha_default >= 0.0) {
            return Err(Error::invalid("gripper.alpha_default", "must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FsmObservation {
    pub pair_distances: [f64; 3],
    pub hand_speed: f64,
    pub fingers_closed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GripperFsm {
    pub phase: Phase,
    pub alpha: f64,
    pub dwell_clock: f64,
    pub config: FsmConfig,
}

impl GripperFsm {
    pub fn new(config: FsmConfig) -> Self {
        Self {
            phase: Phase::Tracking,
            alpha: config.alpha_default,
            dwell_clock: 0.0,
            config,
        }
    }

    fn reset(&mut self) {
        self.phase = Phase::Tracking;
        self.alpha = self.config.alpha_default;
        self.dwell_clock = 0.0;
    }

    /// Advances the machine by one tick and returns the gripper command for it.
    pub fn step(&mut self, obs: &FsmObservation, dt: f64) -> Result<GripperCommand> {
        if !(dt > 0.0) {
            return Err(Error::InvalidTimeStep(dt));
        }
        let c = self.config;
        let max_distance = obs.pair_distances.iter().copied().fold(0.0, f64::max);
        let hand_still = obs.hand_speed < c.v_low;
        let near = max_distance < c.d_activate;

        match self.phase {
            Phase::Done => Ok(GripperCommand::None),
            Phase::Tracking => {
                if hand_still && near {
                    self.phase = Phase::FinalApproach;
                    self.dwell_clock = 0.0;
                }
                Ok(GripperCommand::None)
            }
            Phase::FinalApproach | Phase::Grasping if !(hand_still && near) => {
                self.reset();
                Ok(GripperCommand::OpenFingers)
            }
            Phase::FinalApproach => {
                self.alpha = (self.alpha - c.ramp_rate * dt).max(0.0);
                if max_distance < c.d_grasp {
                    self.dwell_clock += dt;
                } else {
                    self.dwell_clock = 0.0;
                }
                if self.alpha == 0.0 && self.dwell_clock >= c.t_dwell - CLOCK_EPS {
                    self.phase = Phase::Grasping;
                    Ok(GripperCommand::CloseFingers)
                } else {
                    Ok(GripperCommand::None)
                }
            }
            Phase::Grasping => {
                if obs.fingers_closed {
                    self.phase = Phase::Done;
                }
                Ok(GripperCommand::None)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(d: [f64; 3], speed: f64) -> FsmObservation {
        FsmObservation {
            pair_distances: d,
            hand_speed: speed,
            fingers_closed: false,
        }
    }

    #[test]
    fn dwell_leads_to_grasp() {
        let mut fsm = GripperFsm::new(FsmConfig::default());
        let dt = 0.001;
        let mut closes = 0;
        for _ in 0..1200 {
            if fsm.step(&obs([0.04; 3], 0.01), dt).unwrap() == GripperCommand::CloseFingers {
                closes += 1;
            }
        }
        assert_eq!(fsm.phase, Phase::Grasping);
        assert_eq!(closes, 1);
        assert_eq!(fsm.alpha, 0.0);
    }

    #[test]
    fn hand_motion_resets() {
        let mut fsm = GripperFsm::new(FsmConfig::default());
        fsm.step(&obs([0.04; 3], 0.0), 0.001).unwrap();
        fsm.step(&obs([0.04; 3], 0.0), 0.001).unwrap();
        assert_eq!(fsm.phase, Phase::FinalApproach);
        assert!(fsm.alpha < 0.1);
        let cmd = fsm.step(&obs([0.04; 3], 0.5), 0.001).unwrap();
        assert_eq!(cmd, GripperCommand::OpenFingers);
        assert_eq!(fsm.phase, Phase::Tracking);
        assert_eq!(fsm.alpha, 0.10);
    }

    #[test]
    fn all_distances_required() {
        let mut fsm = GripperFsm::new(FsmConfig::default());
        for _ in 0..100 {
            fsm.step(&obs([0.2, 0.04, 0.04], 0.0), 0.001).unwrap();
        }
        assert_eq!(fsm.phase, Phase::Tracking);
    }

    #[test]
    fn rejects_bad_dt() {
        let mut fsm = GripperFsm::new(FsmConfig::default());
        assert!(fsm.step(&obs([0.0; 3], 0.0), -0.1).is_err());
        assert!(fsm.step(&obs([0.0; 3], 0.0), 0.0).is_err());
    }

    #[test]
    fn closed_fingers_finish() {
        let mut fsm = GripperFsm::new(FsmConfig::default());
        for _ in 0..1100 {
            fsm.step(&obs([0.01; 3], 0.0), 0.001).unwrap();
        }
        assert_eq!(fsm.phase, Phase::Grasping);
        let mut o = obs([0.01; 3], 0.0);
        o.fingers_closed = true;
        fsm.step(&o, 0.001).unwrap();
        assert_eq!(fsm.phase, Phase::Done);
        // Absorbing, even with a moving hand.
        assert_eq!(fsm.step(&obs([1.0; 3], 5.0), 0.001).unwrap(), GripperCommand::None);
        assert_eq!(fsm.phase, Phase::Done);
    }
}
