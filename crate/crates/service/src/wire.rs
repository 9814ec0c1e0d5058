//! JSON message schema spoken between the live server and steering clients.
//!
//! Every frame is one WebSocket text message holding a [`WireMessage`]. The
//! envelope fields sit beside `kind` and `payload`:
//!
//! ```json
//! {"v":1,"session_id":"…","seq":7,"kind":"hand_pose_cmd",
//!  "payload":{"position":[0.55,0.0,0.3],"orientation":[0.0,0.0,1.0,0.0]}}
//! ```
//!
//! `seq` increases by one per message in each direction of a connection.
//! Quaternions are `[x, y, z, w]`.

use handover_core::controller::Profile;
use handover_core::gripper::{GripperCommand, Phase};
use handover_core::kinematics::Pose;
use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

pub const WIRE_VERSION: u32 = 1;

/// Accepted deviation of a commanded quaternion from unit norm.
pub const QUATERNION_NORM_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireMessage {
    pub v: u32,
    pub session_id: String,
    pub seq: u64,
    #[serde(flatten)]
    pub body: Body,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum Body {
    StateUpdate(Box<StateUpdate>),
    HandPoseCmd(PoseMsg),
    ProfileCmd(ProfileCmd),
    LifecycleCmd(LifecycleCmd),
    Ack(Ack),
    Error(ErrorPayload),
}

impl Body {
    pub fn kind(&self) -> &'static str {
        match self {
            Body::StateUpdate(_) => "state_update",
            Body::HandPoseCmd(_) => "hand_pose_cmd",
            Body::ProfileCmd(_) => "profile_cmd",
            Body::LifecycleCmd(_) => "lifecycle_cmd",
            Body::Ack(_) => "ack",
            Body::Error(_) => "error",
        }
    }

    /// Kinds a client may send.
    pub fn is_command(&self) -> bool {
        matches!(self, Body::HandPoseCmd(_) | Body::ProfileCmd(_) | Body::LifecycleCmd(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseMsg {
    pub position: [f64; 3],
    /// `[x, y, z, w]`.
    pub orientation: [f64; 4],
}

impl PoseMsg {
    pub fn from_pose(pose: &Pose) -> Self {
        let q = pose.orientation.quaternion();
        Self {
            position: pose.position.into(),
            orientation: [q.i, q.j, q.k, q.w],
        }
    }

    pub fn to_pose(&self) -> Result<Pose, String> {
        if !self.position.iter().chain(&self.orientation).all(|v| v.is_finite()) {
            return Err("pose contains non-finite values".to_owned());
        }
        let [x, y, z, w] = self.orientation;
        let q = Quaternion::new(w, x, y, z);
        if (q.norm() - 1.0).abs() > QUATERNION_NORM_TOLERANCE {
            return Err(format!("orientation norm {} is not 1", q.norm()));
        }
        Ok(Pose::new(
            Vector3::from(self.position),
            UnitQuaternion::from_quaternion(q),
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileCmd {
    pub profile: Profile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lifecycle {
    Start,
    Pause,
    Reset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LifecycleCmd {
    pub action: Lifecycle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Steering,
    Observer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    /// Sequence number of the acknowledged command; absent for the greeting
    /// sent on connect.
    pub ref_seq: Option<u64>,
    /// `connect` or the acknowledged command kind.
    pub command: String,
    /// False when the command left the session unchanged.
    pub changed: bool,
    pub role: Role,
    pub running: bool,
    pub profile: Profile,
    pub spring2_f_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    /// Not JSON, or not a valid message.
    Malformed,
    UnsupportedVersion,
    /// A server-to-client kind was sent by a client.
    UnexpectedKind,
    SessionMismatch,
    /// `seq` did not increase.
    StaleSeq,
    /// Commands from an observer connection.
    ReadOnly,
    /// Valid command refused in the current state.
    Rejected,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorPayload {
    pub code: ErrorCode,
    pub message: String,
    pub ref_seq: Option<u64>,
}

/// One snapshot of the live session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateUpdate {
    /// Simulated time (s).
    pub t: f64,
    /// Control ticks executed since the last reset.
    pub tick: u64,
    pub running: bool,
    pub q: Vec<f64>,
    pub qdot: Vec<f64>,
    pub alpha: f64,
    pub phase: Phase,
    /// Last gripper action other than `none`.
    pub last_command: GripperCommand,
    pub profile: Profile,
    pub spring2_f_max: f64,
    pub hand_pose: PoseMsg,
    pub gripper_points: [[f64; 3]; 3],
    pub target_points: [[f64; 3]; 3],
    pub grasp_points: [[f64; 3]; 3],
    pub pair_distances: [f64; 3],
    pub region_centers: Vec<[f64; 3]>,
    pub region_sigmas: Vec<f64>,
    pub finger_closure: f64,
    /// State frames discarded for this connection so far.
    pub dropped: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeError {
    pub code: ErrorCode,
    pub message: String,
    pub seq: Option<u64>,
}

/// Parses one text frame.
pub fn decode(text: &str) -> Result<WireMessage, DecodeError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| DecodeError {
        code: ErrorCode::Malformed,
        message: format!("invalid JSON: {e}"),
        seq: None,
    })?;
    let seq = value.get("seq").and_then(|s| s.as_u64());
    match value.get("v").and_then(|v| v.as_u64()) {
        Some(v) if v == WIRE_VERSION as u64 => {}
        Some(v) => {
            return Err(DecodeError {
                code: ErrorCode::UnsupportedVersion,
                message: format!("unsupported version {v}, expected {WIRE_VERSION}"),
                seq,
            })
        }
        None => {
            return Err(DecodeError {
                code: ErrorCode::Malformed,
                message: "missing field `v`".to_owned(),
                seq,
            })
        }
    }
    serde_json::from_value(value).map_err(|e| DecodeError {
        code: ErrorCode::Malformed,
        message: e.to_string(),
        seq,
    })
}

pub fn encode(msg: &WireMessage) -> String {
    serde_json::to_string(msg).expect("wire messages always serialize")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn envelope_layout() {
        let msg = WireMessage {
            v: WIRE_VERSION,
            session_id: "s".into(),
            seq: 3,
            body: Body::LifecycleCmd(LifecycleCmd { action: Lifecycle::Start }),
        };
        let text = encode(&msg);
        assert_eq!(
            text,
            r#"{"v":1,"session_id":"s","seq":3,"kind":"lifecycle_cmd","payload":{"action":"start"}}"#
        );
        assert_eq!(decode(&text).unwrap(), msg);
    }

    #[test]
    fn decode_errors() {
        assert_eq!(decode("{").unwrap_err().code, ErrorCode::Malformed);
        let e = decode(r#"{"v":2,"session_id":"s","seq":1,"kind":"ack"}"#).unwrap_err();
        assert_eq!((e.code, e.seq), (ErrorCode::UnsupportedVersion, Some(1)));
        let e = decode(r#"{"v":1,"session_id":"s","seq":4,"kind":"teleport","payload":{}}"#).unwrap_err();
        assert_eq!((e.code, e.seq), (ErrorCode::Malformed, Some(4)));
    }

    #[test]
    fn pose_round_trip() {
        let pose = Pose::new(
            Vector3::new(0.5, -0.1, 0.3),
            UnitQuaternion::from_euler_angles(0.1, 0.2, 0.3),
        );
        let back = PoseMsg::from_pose(&pose).to_pose().unwrap();
        assert!((back.position - pose.position).norm() < 1e-15);
        assert!(back.orientation.angle_to(&pose.orientation) < 1e-12);
        let bad = PoseMsg { position: [0.0; 3], orientation: [0.0, 0.0, 0.0, 2.0] };
        assert!(bad.to_pose().is_err());
    }
}
