//! Interaction layer for human-to-robot handover built from virtual mechanisms
//! (saturated springs, variable dampers and repulsive regions) acting between
//! gripper and object point pairs, with a simulated torque-driven arm, a grasp
//! state machine, hand-pose filtering and an experiment harness.

pub mod config;
pub mod controller;
pub mod error;
pub mod gripper;
pub mod hand_signal;
pub mod kinematics;
pub mod metrics;
pub mod plant;
pub mod scenario;
pub mod session;
pub mod virtual_mechanisms;

pub use config::{default_session_config, SessionConfig};
pub use controller::{compute_torques, ControllerConfig, Profile, VmcParams};
pub use error::{Error, Result};
pub use gripper::{GripperCommand, GripperFsm, Phase};
pub use kinematics::{JointState, KinematicChain, Pose};
pub use metrics::{compute_metrics, RunMetrics};
pub use scenario::{execute, execute_batch, ExecuteConfig, ObjectKind, RunOutcome, ScenarioScript};
pub use session::{run_session, Session, SessionSetup, TrajectoryLog};
