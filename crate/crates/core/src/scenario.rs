//! Object catalog, scripted hand trajectories and the experiment drivers.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use nalgebra::{Unit, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::SessionConfig;
use crate::controller::{apply_profile, ControllerConfig, Profile};
use crate::error::{Error, Result};
use crate::kinematics::{rotation_from_rpy, JointState, KinematicChain, Pose};
use crate::metrics::{compute_metrics_with, RunMetrics, SuccessCriteria};
use crate::session::{run_session, HandSource, RunOptions, SessionEvents, SessionSetup, TrajectoryLog};
use crate::virtual_mechanisms::{default_link_length, GraspSpec};

const OBJECTS: &str = include_str!("../data/objects.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectKind {
    CardboardBox,
    Banana,
    Spoon,
    PlasticCup,
}

impl ObjectKind {
    pub const ALL: [ObjectKind; 4] = [
        ObjectKind::CardboardBox,
        ObjectKind::Banana,
        ObjectKind::Spoon,
        ObjectKind::PlasticCup,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ObjectKind::CardboardBox => "cardboard_box",
            ObjectKind::Banana => "banana",
            ObjectKind::Spoon => "spoon",
            ObjectKind::PlasticCup => "plastic_cup",
        }
    }

    pub fn spec(&self) -> ObjectSpec {
        let table: HashMap<String, ObjectFile> =
            serde_json::from_str(OBJECTS).expect("bundled object catalog parses");
        let entry = &table[self.name()];
        let grasp = GraspSpec {
            left: entry.grasp.left,
            right: entry.grasp.right,
            back: entry.grasp.back,
            gripper_attachments: [
                "left_finger".to_owned(),
                "right_finger".to_owned(),
                "wrist_back".to_owned(),
            ],
            link_length: default_link_length(),
        };
        ObjectSpec {
            kind: *self,
            grasp,
            in_hand: Pose::new(Vector3::from(entry.in_hand.xyz), rotation_from_rpy(entry.in_hand.rpy)),
        }
    }
}

impl std::str::FromStr for ObjectKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ObjectKind::ALL
            .into_iter()
            .find(|o| o.name() == s)
            .ok_or_else(|| Error::invalid("object", format!("unknown object `{s}`")))
    }
}

#[derive(Debug, Deserialize)]
struct XyzRpy {
    xyz: [f64; 3],
    rpy: [f64; 3],
}

#[derive(Debug, Deserialize)]
struct GraspFile {
    left: [f64; 3],
    right: [f64; 3],
    back: [f64; 3],
}

#[derive(Debug, Deserialize)]
struct ObjectFile {
    in_hand: XyzRpy,
    grasp: GraspFile,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectSpec {
    pub kind: ObjectKind,
    pub grasp: GraspSpec,
    /// Object frame relative to the hand frame.
    pub in_hand: Pose,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    /// Timed from the start of robot motion.
    AfterRobotStart,
    /// Timed from the first entry into the final approach.
    AfterFinalApproach,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Motion {
    Hold,
    /// Straight-line hand displacement (m, world frame).
    Translation { displacement: [f64; 3] },
    /// Rotation of the hand about its own position, about a world axis (rad).
    Rotation { axis: [f64; 3], angle: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub trigger: Trigger,
    /// Delay after the trigger (s).
    pub start: f64,
    pub duration: f64,
    pub motion: Motion,
}

impl Segment {
    fn progress(&self, t: f64, events: &SessionEvents) -> f64 {
        let origin = match self.trigger {
            Trigger::AfterRobotStart => 0.0,
            Trigger::AfterFinalApproach => match events.final_approach_at {
                Some(at) => at,
                None => return 0.0,
            },
        };
        let s = ((t - origin - self.start) / self.duration).clamp(0.0, 1.0);
        // Smoothstep: zero velocity at both ends.
        s * s * (3.0 - 2.0 * s)
    }

    fn apply(&self, pose: &Pose, s: f64) -> Pose {
        match &self.motion {
            Motion::Hold => *pose,
            Motion::Translation { displacement } => {
                Pose::new(pose.position + Vector3::from(*displacement) * s, pose.orientation)
            }
            Motion::Rotation { axis, angle } => {
                let axis = Unit::new_normalize(Vector3::from(*axis));
                let rot = UnitQuaternion::from_axis_angle(&axis, angle * s);
                Pose::new(pose.position, rot * pose.orientation)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioScript {
    pub id: String,
    /// Grouping label for aggregate tables.
    #[serde(default)]
    pub condition: String,
    pub object: ObjectKind,
    pub robot_start: JointState,
    pub hand_start: Pose,
    #[serde(default)]
    pub segments: Vec<Segment>,
    #[serde(default)]
    pub seed: u64,
    /// Simulated time budget (s).
    #[serde(default = "default_timeout")]
    pub timeout: f64,
}

fn default_timeout() -> f64 {
    30.0
}

impl ScenarioScript {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Self = serde_json::from_str(text).map_err(|source| Error::Parse {
            what: "scenario",
            source,
        })?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.hand_start.is_finite() {
            return Err(Error::invalid("hand_start", "must be finite"));
        }
        if !(self.timeout > 0.0) {
            return Err(Error::invalid("timeout", "must be > 0"));
        }
        let mut last_end: HashMap<&'static str, f64> = HashMap::new();
        for (i, seg) in self.segments.iter().enumerate() {
            if !(seg.duration > 0.0) || !(seg.start >= 0.0) {
                return Err(Error::invalid(
                    format!("segments[{i}]"),
                    "start must be >= 0 and duration > 0",
                ));
            }
            let key = match seg.trigger {
                Trigger::AfterRobotStart => "robot_start",
                Trigger::AfterFinalApproach => "final_approach",
            };
            let end = last_end.entry(key).or_insert(0.0);
            if seg.start < *end - 1e-12 {
                return Err(Error::invalid(
                    format!("segments[{i}]"),
                    "segments with the same trigger must be time-ordered and non-overlapping",
                ));
            }
            *end = seg.start + seg.duration;
            let magnitude_ok = match &seg.motion {
                Motion::Hold => true,
                Motion::Translation { displacement } => {
                    let d = Vector3::from(*displacement);
                    d.iter().all(|v| v.is_finite()) && d.norm() <= MAX_DISPLACEMENT
                }
                Motion::Rotation { axis, angle } => {
                    Vector3::from(*axis).norm() > 1e-9 && angle.is_finite() && angle.abs() <= PI
                }
            };
            if !magnitude_ok {
                return Err(Error::invalid(format!("segments[{i}].motion"), "magnitude out of bounds"));
            }
        }
        Ok(())
    }

    /// True hand pose at time `t`, given the loop events so far.
    pub fn hand_pose_at(&self, t: f64, events: &SessionEvents) -> Pose {
        self.segments.iter().fold(self.hand_start, |pose, seg| {
            seg.apply(&pose, seg.progress(t, events))
        })
    }
}

/// Largest displacement a segment may script (m).
pub const MAX_DISPLACEMENT: f64 = 3.0;

/// Adapts a script to the session's hand source.
pub struct ScriptedHand<'a>(pub &'a ScenarioScript);

impl HandSource for ScriptedHand<'_> {
    fn hand_pose(&mut self, t: f64, events: &SessionEvents) -> Pose {
        self.0.hand_pose_at(t, events)
    }
}

/// The shared scene: where the human holds objects and where the robot waits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    pub hand_nominal: Pose,
    pub robot_ready: Vec<f64>,
    /// Axis-aligned box the hand must stay inside (m).
    pub hand_min: [f64; 3],
    pub hand_max: [f64; 3],
    /// Largest deviation of the rotated approach direction from straight down (deg).
    pub max_approach_tilt_deg: f64,
    /// Shoulder position of the arm (m).
    pub shoulder: [f64; 3],
    /// Distance behind the finger midpoint, along the approach, of the wrist center (m).
    pub wrist_standoff: f64,
    /// Largest shoulder-to-wrist distance a grasp pose may require (m).
    pub max_wrist_reach: f64,
}

impl Default for Workspace {
    fn default() -> Self {
        Self {
            // Palm normal (hand +x) facing the robot at the origin.
            hand_nominal: Pose::new(
                Vector3::new(0.55, 0.0, 0.30),
                UnitQuaternion::from_axis_angle(&Vector3::z_axis(), PI),
            ),
            robot_ready: vec![0.0, -FRAC_PI_4, 0.0, -3.0 * FRAC_PI_4, 0.0, FRAC_PI_2, FRAC_PI_4],
            hand_min: [0.40, -0.30, 0.15],
            hand_max: [0.70, 0.30, 0.50],
            max_approach_tilt_deg: 60.0,
            shoulder: [0.0, 0.0, 0.333],
            wrist_standoff: 0.30,
            max_wrist_reach: 0.80,
        }
    }
}

impl Workspace {
    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|i| p[i] >= self.hand_min[i] && p[i] <= self.hand_max[i])
    }

    /// Whether the grasp on an object held at `hand` can be approached from
    /// above and reached by the arm.
    pub fn approach_feasible(&self, object: &ObjectSpec, hand: &Pose) -> bool {
        let [l, r, b] = object.grasp.raw_points();
        let obj = hand.compose(&object.in_hand);
        let mid = obj.transform_point(&((l + r) * 0.5));
        let approach = obj.orientation * ((l + r) * 0.5 - b).normalize();
        let tilt = approach.dot(&-Vector3::z()).clamp(-1.0, 1.0).acos().to_degrees();
        let wrist = mid - approach * self.wrist_standoff;
        tilt <= self.max_approach_tilt_deg
            && (wrist - Vector3::from(self.shoulder)).norm() <= self.max_wrist_reach
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionKind {
    Translation,
    Rotation,
}

impl MotionKind {
    pub fn name(&self) -> &'static str {
        match self {
            MotionKind::Translation => "translation",
            MotionKind::Rotation => "rotation",
        }
    }
}

impl std::str::FromStr for MotionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "translation" => Ok(MotionKind::Translation),
            "rotation" => Ok(MotionKind::Rotation),
            other => Err(Error::invalid("motion", format!("unknown motion `{other}`"))),
        }
    }
}

fn unit_vector(rng: &mut impl Rng) -> Vector3<f64> {
    // Uniform on the sphere: z uniform in [-1, 1], azimuth uniform.
    let z: f64 = rng.gen_range(-1.0..=1.0);
    let phi: f64 = rng.gen_range(0.0..2.0 * PI);
    let r = (1.0 - z * z).max(0.0).sqrt();
    Vector3::new(r * phi.cos(), r * phi.sin(), z)
}

const MAX_ATTEMPTS: usize = 10_000;

/// Random translation of `magnitude_range` whose end pose stays in the
/// workspace with a reachable grasp.
pub fn sample_translation(
    rng: &mut impl Rng,
    hand: &Pose,
    object: &ObjectSpec,
    magnitude_range: (f64, f64),
    ws: &Workspace,
) -> Result<Vector3<f64>> {
    for _ in 0..MAX_ATTEMPTS {
        let d = unit_vector(rng) * rng.gen_range(magnitude_range.0..=magnitude_range.1);
        let end = Pose::new(hand.position + d, hand.orientation);
        if ws.contains(&end.position) && ws.approach_feasible(object, &end) {
            return Ok(d);
        }
    }
    Err(Error::SamplingExhausted(MAX_ATTEMPTS))
}

/// Random rotation (axis, angle in rad) that keeps the grasp approachable.
pub fn sample_rotation(
    rng: &mut impl Rng,
    hand: &Pose,
    object: &ObjectSpec,
    angle_range_deg: (f64, f64),
    ws: &Workspace,
) -> Result<(Vector3<f64>, f64)> {
    for _ in 0..MAX_ATTEMPTS {
        let axis = unit_vector(rng);
        let angle = rng.gen_range(angle_range_deg.0..=angle_range_deg.1).to_radians();
        let rot = UnitQuaternion::from_axis_angle(&Unit::new_normalize(axis), angle);
        if ws.approach_feasible(object, &Pose::new(hand.position, rot * hand.orientation)) {
            return Ok((axis, angle));
        }
    }
    Err(Error::SamplingExhausted(MAX_ATTEMPTS))
}

/// Experiment I: fixed start, one random motion 0.3 s after the robot starts.
pub fn generate_experiment1(
    seed: u64,
    object: ObjectKind,
    motion: MotionKind,
    n: usize,
    ws: &Workspace,
) -> Result<Vec<ScenarioScript>> {
    if n == 0 {
        return Err(Error::invalid("runs", "must be >= 1"));
    }
    let spec = object.spec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let condition = format!("{}/{}", object.name(), motion.name());
    (0..n)
        .map(|i| {
            let hand = ws.hand_nominal;
            let motion = match motion {
                MotionKind::Translation => {
                    let d = sample_translation(&mut rng, &hand, &spec, (0.1, 0.4), ws)?;
                    Motion::Translation { displacement: d.into() }
                }
                MotionKind::Rotation => {
                    let (axis, angle) = sample_rotation(&mut rng, &hand, &spec, (20.0, 90.0), ws)?;
                    Motion::Rotation { axis: axis.into(), angle }
                }
            };
            Ok(ScenarioScript {
                id: format!("exp1-{}-{:03}", condition.replace('/', "-"), i),
                condition: condition.clone(),
                object,
                robot_start: JointState::at_rest(ws.robot_ready.clone()),
                hand_start: hand,
                segments: vec![Segment {
                    trigger: Trigger::AfterRobotStart,
                    start: 0.3,
                    duration: 1.0,
                    motion,
                }],
                seed: rng.gen(),
                timeout: default_timeout(),
            })
        })
        .collect()
}

/// Where Experiment II start poses are drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartSampling {
    /// Center of the joint-space sampling box, one per start family.
    pub centers: Vec<Vec<f64>>,
    /// Half-widths of the sampling box (rad).
    pub half_widths: Vec<f64>,
    /// Allowed distance between the finger midpoint and the grasp center (m).
    pub distance_range: (f64, f64),
    /// Family index whose starts must be below the hand.
    pub below_family: usize,
    /// How far below the hand a below-hand start must be (m).
    pub below_margin: f64,
}

impl Default for StartSampling {
    fn default() -> Self {
        Self {
            centers: vec![
                vec![0.0, -FRAC_PI_4, 0.0, -3.0 * FRAC_PI_4, 0.0, FRAC_PI_2, FRAC_PI_4],
                vec![0.0, 0.35, 0.0, -2.2, 0.0, 2.4, FRAC_PI_4],
            ],
            half_widths: vec![0.6, 0.35, 0.5, 0.35, 0.5, 0.35, 0.6],
            distance_range: (0.4, 0.9),
            below_family: 1,
            below_margin: 0.05,
        }
    }
}

/// Finger midpoint and grasp center for a start configuration.
pub fn start_geometry(
    chain: &KinematicChain,
    q: &[f64],
    object: &ObjectSpec,
    hand: &Pose,
) -> Result<(Vector3<f64>, Vector3<f64>)> {
    let state = JointState::at_rest(q.to_vec());
    let left = chain.point_position(&state, &object.grasp.gripper_attachments[0])?;
    let right = chain.point_position(&state, &object.grasp.gripper_attachments[1])?;
    let [l, r, _] = object.grasp.raw_points();
    let obj = hand.compose(&object.in_hand);
    Ok(((left + right) * 0.5, obj.transform_point(&((l + r) * 0.5))))
}

/// Experiment II: random start poses (alternating above- and below-hand
/// families), a static hand until the final approach starts, then one random
/// displacement.
pub fn generate_experiment2(
    seed: u64,
    n: usize,
    chain: &KinematicChain,
    ws: &Workspace,
    sampling: &StartSampling,
) -> Result<Vec<ScenarioScript>> {
    if n == 0 {
        return Err(Error::invalid("runs", "must be >= 1"));
    }
    let object = ObjectKind::CardboardBox;
    let spec = object.spec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hand = ws.hand_nominal;
    let mut scripts = Vec::with_capacity(n);
    for i in 0..n {
        let family = i % sampling.centers.len();
        let center = &sampling.centers[family];
        let mut chosen = None;
        for _ in 0..MAX_ATTEMPTS {
            let mut q: Vec<f64> = center
                .iter()
                .zip(&sampling.half_widths)
                .map(|(c, w)| c + rng.gen_range(-*w..=*w))
                .collect();
            chain.clamp_to_limits(&mut q);
            let (fingers, target) = start_geometry(chain, &q, &spec, &hand)?;
            let d = (fingers - target).norm();
            if d < sampling.distance_range.0 || d > sampling.distance_range.1 {
                continue;
            }
            let below = fingers.z < hand.position.z - sampling.below_margin;
            if family == sampling.below_family && !below {
                continue;
            }
            chosen = Some(q);
            break;
        }
        let q = chosen.ok_or(Error::SamplingExhausted(MAX_ATTEMPTS))?;
        let d = sample_translation(&mut rng, &hand, &spec, (0.1, 0.3), ws)?;
        scripts.push(ScenarioScript {
            id: format!("exp2-{i:03}"),
            condition: "cardboard_box/random_start".to_owned(),
            object,
            robot_start: JointState::at_rest(q),
            hand_start: hand,
            segments: vec![Segment {
                trigger: Trigger::AfterFinalApproach,
                start: 0.2,
                duration: 1.0,
                motion: Motion::Translation { displacement: d.into() },
            }],
            seed: rng.gen(),
            timeout: default_timeout(),
        });
    }
    Ok(scripts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum FailureReason {
    /// The fingers never closed within the time budget.
    Timeout,
    /// The fingers closed with the gripper too far from the grasp pose.
    GraspError,
    /// The simulation itself failed; excluded from success-rate denominators.
    System(String),
}

impl std::fmt::Display for FailureReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FailureReason::Timeout => f.write_str("timeout"),
            FailureReason::GraspError => f.write_str("grasp_error"),
            FailureReason::System(detail) => write!(f, "system: {detail}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub script_id: String,
    pub condition: String,
    pub success: bool,
    pub failure_reason: Option<FailureReason>,
    pub metrics: Option<RunMetrics>,
    #[serde(skip)]
    pub log: Option<TrajectoryLog>,
}

impl RunOutcome {
    pub fn is_system_failure(&self) -> bool {
        matches!(self.failure_reason, Some(FailureReason::System(_)))
    }
}

/// What every run of a batch shares.
#[derive(Debug, Clone)]
pub struct ExecuteConfig {
    pub chain: KinematicChain,
    pub session: SessionConfig,
    pub profile: Profile,
    pub criteria: SuccessCriteria,
    pub keep_log: bool,
}

impl ExecuteConfig {
    pub fn setup_for(&self, script: &ScenarioScript) -> Result<SessionSetup> {
        let spec = script.object.spec();
        let controller = apply_profile(
            &ControllerConfig::new(spec.grasp, self.session.controller.clone())?,
            self.profile,
        );
        SessionSetup::new(
            self.chain.clone(),
            controller,
            self.session.clone(),
            spec.in_hand,
            script.seed,
        )
    }
}

/// Runs one scenario until finger closure or timeout and scores it.
pub fn execute(script: &ScenarioScript, cfg: &ExecuteConfig) -> RunOutcome {
    let system = |e: Error| RunOutcome {
        script_id: script.id.clone(),
        condition: script.condition.clone(),
        success: false,
        failure_reason: Some(FailureReason::System(e.to_string())),
        metrics: None,
        log: None,
    };
    if let Err(e) = script.validate() {
        return system(e);
    }
    let setup = match cfg.setup_for(script) {
        Ok(s) => s,
        Err(e) => return system(e),
    };
    let log = match run_session(
        setup,
        script.robot_start.clone(),
        &mut ScriptedHand(script),
        RunOptions {
            duration: script.timeout,
            stop_on_done: true,
        },
        &script.id,
    ) {
        Ok(log) => log,
        Err(e) => return system(e),
    };
    let metrics = match compute_metrics_with(&log, &cfg.criteria) {
        Ok(m) => m,
        Err(e) => return system(e),
    };
    let done = log.records.last().is_some_and(|r| r.phase == crate::gripper::Phase::Done);
    let failure_reason = if metrics.success {
        None
    } else if done {
        Some(FailureReason::GraspError)
    } else {
        Some(FailureReason::Timeout)
    };
    RunOutcome {
        script_id: script.id.clone(),
        condition: script.condition.clone(),
        success: metrics.success,
        failure_reason,
        metrics: Some(metrics),
        log: cfg.keep_log.then_some(log),
    }
}

/// Executes scripts in parallel; the result order matches `scripts`.
pub fn execute_batch(scripts: &[ScenarioScript], cfg: &ExecuteConfig) -> Vec<RunOutcome> {
    scripts.par_iter().map(|s| execute(s, cfg)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_is_valid() {
        for kind in ObjectKind::ALL {
            let spec = kind.spec();
            spec.grasp.validate().unwrap();
            assert_eq!(kind.name().parse::<ObjectKind>().unwrap(), kind);
        }
        assert!("anvil".parse::<ObjectKind>().is_err());
    }

    #[test]
    fn overlapping_segments_rejected() {
        let ws = Workspace::default();
        let seg = |start: f64| Segment {
            trigger: Trigger::AfterRobotStart,
            start,
            duration: 1.0,
            motion: Motion::Hold,
        };
        let mut s = ScenarioScript {
            id: "x".into(),
            condition: String::new(),
            object: ObjectKind::CardboardBox,
            robot_start: JointState::at_rest(ws.robot_ready.clone()),
            hand_start: ws.hand_nominal,
            segments: vec![seg(0.0), seg(1.0)],
            seed: 0,
            timeout: 30.0,
        };
        s.validate().unwrap();
        s.segments = vec![seg(0.0), seg(0.5)];
        assert!(s.validate().is_err());
    }

    #[test]
    fn final_approach_segments_wait_for_trigger() {
        let ws = Workspace::default();
        let s = ScenarioScript {
            id: "x".into(),
            condition: String::new(),
            object: ObjectKind::CardboardBox,
            robot_start: JointState::at_rest(ws.robot_ready.clone()),
            hand_start: ws.hand_nominal,
            segments: vec![Segment {
                trigger: Trigger::AfterFinalApproach,
                start: 0.0,
                duration: 1.0,
                motion: Motion::Translation { displacement: [0.1, 0.0, 0.0] },
            }],
            seed: 0,
            timeout: 30.0,
        };
        let none = SessionEvents::default();
        assert_eq!(s.hand_pose_at(10.0, &none), ws.hand_nominal);
        let fired = SessionEvents { final_approach_at: Some(2.0) };
        let p = s.hand_pose_at(3.5, &fired);
        assert!((p.position - ws.hand_nominal.position - Vector3::new(0.1, 0.0, 0.0)).norm() < 1e-12);
    }
}
