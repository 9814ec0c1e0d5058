//! The closed control loop: hand filtering, virtual mechanism, gripper state
//! machine and plant, advanced one fixed tick at a time.

use std::io::Write;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::SessionConfig;
use crate::controller::{
    compute_torques, repulsive_region_energy, spring_energy, ControlInput, ControllerConfig,
};
use crate::error::{Error, Result};
use crate::gripper::{FsmObservation, GripperCommand, GripperFsm, Phase};
use crate::hand_signal::{angular_velocity, KalmanCvState, LowPassState};
use crate::kinematics::{JointState, KinematicChain, Pose};
use crate::plant::{self, PlantParams, SimState};
use crate::virtual_mechanisms::RigidVelocity;

/// Times of loop events a scripted hand may react to.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionEvents {
    /// First entry into the final approach.
    pub final_approach_at: Option<f64>,
}

/// Supplies the true hand pose at each tick.
pub trait HandSource {
    fn hand_pose(&mut self, t: f64, events: &SessionEvents) -> Pose;
}

/// A hand that never moves.
#[derive(Debug, Clone, Copy)]
pub struct StaticHand(pub Pose);

impl HandSource for StaticHand {
    fn hand_pose(&mut self, _t: f64, _events: &SessionEvents) -> Pose {
        self.0
    }
}

impl<F: FnMut(f64, &SessionEvents) -> Pose> HandSource for F {
    fn hand_pose(&mut self, t: f64, events: &SessionEvents) -> Pose {
        self(t, events)
    }
}

/// Everything fixed for the lifetime of a session.
#[derive(Debug, Clone)]
pub struct SessionSetup {
    pub chain: KinematicChain,
    pub controller: ControllerConfig,
    pub config: SessionConfig,
    pub plant: PlantParams,
    pub object_in_hand: Pose,
    pub seed: u64,
}

impl SessionSetup {
    pub fn new(
        chain: KinematicChain,
        controller: ControllerConfig,
        config: SessionConfig,
        object_in_hand: Pose,
        seed: u64,
    ) -> Result<Self> {
        controller.validate()?;
        config.validate(chain.dof())?;
        let plant = PlantParams::new(&config.plant, &chain)?;
        Ok(Self {
            chain,
            controller,
            config,
            plant,
            object_in_hand,
            seed,
        })
    }

    /// SHA-256 over the serialized configuration, for reproducibility records.
    pub fn config_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.chain.name.as_bytes());
        for joint in &self.chain.joints {
            hasher.update(format!("{:?}{:?}{:?}", joint.axis, joint.origin, joint.limits).as_bytes());
        }
        hasher.update(serde_json::to_vec(&self.controller).unwrap_or_default());
        hasher.update(serde_json::to_vec(&self.config).unwrap_or_default());
        hasher.update(serde_json::to_vec(&self.object_in_hand).unwrap_or_default());
        hasher.update(self.seed.to_le_bytes());
        format!("{:x}", hasher.finalize())
    }
}

/// One row of the trajectory log, describing the state the controller acted on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub t: f64,
    pub q: Vec<f64>,
    pub qdot: Vec<f64>,
    pub tau: Vec<f64>,
    pub alpha: f64,
    pub phase: Phase,
    pub command: GripperCommand,
    pub gripper_points: [Vector3<f64>; 3],
    pub target_points: [Vector3<f64>; 3],
    /// Object-fixed points (targets without the offset).
    pub grasp_points: [Vector3<f64>; 3],
    /// Net virtual force on each gripper point.
    pub point_forces: [Vector3<f64>; 3],
    pub hand_raw: Pose,
    pub hand_filtered: Pose,
    pub hand_velocity: Vector3<f64>,
    pub hand_angular_velocity: Vector3<f64>,
    /// Fastest held-object grasp point, as seen by the state machine (m/s).
    pub hand_speed: f64,
    pub object_pose: Pose,
    pub region_centers: Vec<Vector3<f64>>,
    pub clamped_joints: usize,
    pub finger_closure: f64,
    pub spring_energy: f64,
    pub region_energy: f64,
    pub kinetic_energy: f64,
}

impl TickRecord {
    pub fn pair_distances(&self) -> [f64; 3] {
        [0, 1, 2].map(|i| (self.target_points[i] - self.gripper_points[i]).norm())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub config_hash: String,
    pub dt: f64,
    pub chain: String,
    pub profile: String,
    pub seed: u64,
    #[serde(default)]
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub header: LogHeader,
    pub records: Vec<TickRecord>,
}

pub const CSV_COLUMNS: &[&str] = &[
    "t", "phase", "command", "alpha", "q", "qdot", "tau", "gripper_points", "target_points",
    "grasp_points", "point_forces", "hand_raw", "hand_filtered", "hand_velocity",
    "hand_angular_velocity", "hand_speed", "object_pose",
    "region_centers", "clamped_joints", "finger_closure", "spring_energy", "region_energy",
    "kinetic_energy",
];

fn join(values: impl IntoIterator<Item = f64>) -> String {
    values
        .into_iter()
        .map(|v| format!("{v}"))
        .collect::<Vec<_>>()
        .join(";")
}

fn join_points(points: &[Vector3<f64>]) -> String {
    join(points.iter().flat_map(|p| [p.x, p.y, p.z]))
}

fn join_pose(pose: &Pose) -> String {
    let q = pose.orientation.coords;
    join([pose.position.x, pose.position.y, pose.position.z, q.x, q.y, q.z, q.w])
}

impl TrajectoryLog {
    /// Newline-delimited JSON: the header line, then one record per line.
    pub fn write_ndjson<W: Write>(&self, mut w: W, stride: usize) -> Result<()> {
        serde_json::to_writer(&mut w, &self.header).map_err(std::io::Error::from)?;
        writeln!(w)?;
        for r in self.strided(stride) {
            serde_json::to_writer(&mut w, r).map_err(std::io::Error::from)?;
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_ndjson(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::invalid("log", "empty file"))?;
        let header: LogHeader = serde_json::from_str(header).map_err(|source| Error::Parse {
            what: "log header",
            source,
        })?;
        let records = lines
            .map(|l| {
                serde_json::from_str(l).map_err(|source| Error::Parse {
                    what: "log record",
                    source,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { header, records })
    }

    /// Columnar CSV. Vector-valued cells hold `;`-separated components; poses
    /// are `x;y;z;qx;qy;qz;qw`. The first line is a `#`-comment carrying the
    /// config hash.
    pub fn write_csv<W: Write>(&self, mut w: W, stride: usize) -> Result<()> {
        writeln!(
            w,
            "# config_hash={} dt={} chain={} profile={} seed={} label={}",
            self.header.config_hash,
            self.header.dt,
            self.header.chain,
            self.header.profile,
            self.header.seed,
            self.header.label
        )?;
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(CSV_COLUMNS)?;
        for r in self.strided(stride) {
            csv.write_record([
                format!("{}", r.t),
                r.phase.to_string(),
                format!("{:?}", r.command).to_lowercase(),
                format!("{}", r.alpha),
                join(r.q.iter().copied()),
                join(r.qdot.iter().copied()),
                join(r.tau.iter().copied()),
                join_points(&r.gripper_points),
                join_points(&r.target_points),
                join_points(&r.grasp_points),
                join_points(&r.point_forces),
                join_pose(&r.hand_raw),
                join_pose(&r.hand_filtered),
                join_points(&[r.hand_velocity]),
                join_points(&[r.hand_angular_velocity]),
                format!("{}", r.hand_speed),
                join_pose(&r.object_pose),
                join_points(&r.region_centers),
                r.clamped_joints.to_string(),
                format!("{}", r.finger_closure),
                format!("{}", r.spring_energy),
                format!("{}", r.region_energy),
                format!("{}", r.kinetic_energy),
            ])?;
        }
        csv.flush()?;
        Ok(())
    }

    /// Every `stride`-th record, always keeping the last one.
    fn strided(&self, stride: usize) -> impl Iterator<Item = &TickRecord> {
        let stride = stride.max(1);
        let last = self.records.len().saturating_sub(1);
        self.records
            .iter()
            .enumerate()
            .filter(move |(i, _)| i % stride == 0 || *i == last)
            .map(|(_, r)| r)
    }
}

/// Live loop state. Owned by exactly one driver.
#[derive(Debug, Clone)]
pub struct Session {
    pub setup: SessionSetup,
    pub state: SimState,
    pub fsm: GripperFsm,
    lowpass: LowPassState,
    kalman: KalmanCvState,
    previous_direction: Option<Vector3<f64>>,
    pub events: SessionEvents,
    pub ticks: usize,
    rng: ChaCha8Rng,
    noise: Option<Normal<f64>>,
}

impl Session {
    pub fn new(setup: SessionSetup, start: JointState, hand_pose: Pose) -> Result<Self> {
        setup.chain.check_dims(&start.q)?;
        setup.chain.check_dims(&start.qdot)?;
        let filter = setup.config.hand_filter;
        let lowpass = LowPassState::new(filter.cutoff_hz, hand_pose)?;
        let kalman = KalmanCvState::new(hand_pose.position, &filter);
        let fsm = GripperFsm::new(setup.config.fsm_config());
        let noise_std = setup.config.plant.hand_noise_std;
        let noise = if noise_std > 0.0 {
            Some(Normal::new(0.0, noise_std).map_err(|e| Error::invalid("plant.hand_noise_std", e.to_string()))?)
        } else {
            None
        };
        let state = SimState::new(start, hand_pose, setup.object_in_hand);
        let rng = ChaCha8Rng::seed_from_u64(setup.seed);
        Ok(Self {
            setup,
            state,
            fsm,
            lowpass,
            kalman,
            previous_direction: None,
            events: SessionEvents::default(),
            ticks: 0,
            rng,
            noise,
        })
    }

    pub fn dt(&self) -> f64 {
        self.setup.plant.dt
    }

    /// Switches the controller profile between ticks.
    pub fn set_profile(&mut self, profile: crate::controller::Profile) {
        self.setup.controller = crate::controller::apply_profile(&self.setup.controller, profile);
    }

    /// Advances one tick with the given true hand pose and returns the record
    /// of the state the controller acted on.
    pub fn tick(&mut self, hand_pose: Pose) -> Result<TickRecord> {
        let tick = self.ticks;
        self.tick_inner(hand_pose)
            .map_err(|e| Error::AtTick { tick, source: Box::new(e) })
    }

    fn tick_inner(&mut self, hand_pose: Pose) -> Result<TickRecord> {
        let dt = self.dt();
        self.state.set_hand_pose(hand_pose);
        let mut measured = hand_pose;
        if let Some(noise) = &self.noise {
            measured.position += Vector3::from_fn(|_, _| noise.sample(&mut self.rng));
        }
        let previous = self.lowpass.last_output;
        let filtered = self.lowpass.update(&measured, dt)?;
        let hand_velocity = self.kalman.update(&measured.position, dt)?;
        let hand_angular_velocity = angular_velocity(&previous.orientation, &filtered.orientation, dt);
        let object_estimate = filtered.compose(&self.setup.object_in_hand);
        // Stillness is judged on the held object: a hand turning in place moves it.
        let motion = RigidVelocity {
            linear: hand_velocity,
            angular: hand_angular_velocity,
            origin: filtered.position,
        };
        let hand_speed = self
            .setup
            .controller
            .grasp
            .raw_points()
            .iter()
            .map(|p| motion.at(&object_estimate.transform_point(p)).norm())
            .fold(0.0, f64::max);

        let alpha = self.fsm.alpha;
        let out = compute_torques(
            &self.setup.chain,
            &ControlInput {
                state: &self.state.joints,
                hand_pose: filtered,
                hand_velocity,
                hand_angular_velocity,
                object_pose: object_estimate,
                alpha,
                previous_direction: self.previous_direction,
            },
            &self.setup.controller,
        )?;
        self.previous_direction = Some(out.offset_direction);

        let command = self.fsm.step(
            &FsmObservation {
                pair_distances: out.pair_distances,
                hand_speed,
                fingers_closed: self.state.fingers_closed(),
            },
            dt,
        )?;
        if self.fsm.phase == Phase::FinalApproach && self.events.final_approach_at.is_none() {
            self.events.final_approach_at = Some(self.state.t);
        }

        let mut point_forces = [Vector3::zeros(); 3];
        for f in &out.forces {
            point_forces[f.pair] += f.force;
        }
        let record = TickRecord {
            t: self.state.t,
            q: self.state.joints.q.clone(),
            qdot: self.state.joints.qdot.clone(),
            tau: out.tau.clone(),
            alpha,
            phase: self.fsm.phase,
            command,
            gripper_points: out.pairs.map(|p| p.gripper_point),
            target_points: out.pairs.map(|p| p.target_point),
            grasp_points: out.grasp_points,
            point_forces,
            hand_raw: hand_pose,
            hand_filtered: filtered,
            hand_velocity,
            hand_angular_velocity,
            hand_speed,
            object_pose: self.state.object_pose,
            region_centers: out.region_centers.clone(),
            clamped_joints: out.clamped.len(),
            finger_closure: self.state.fingers.closure,
            spring_energy: spring_energy(&self.setup.controller, &out.pairs)?,
            region_energy: repulsive_region_energy(&self.setup.controller, &out.pairs, &out.region_centers)?,
            kinetic_energy: self.setup.plant.kinetic_energy(&self.state.joints.qdot),
        };

        match command {
            GripperCommand::CloseFingers => self.state.fingers.closing = true,
            GripperCommand::OpenFingers => {
                self.state.fingers.closing = false;
                self.state.fingers.closure = 0.0;
            }
            GripperCommand::None => {}
        }
        self.state = plant::step(&self.state, &out.tau, &self.setup.plant)?;
        self.ticks += 1;
        Ok(record)
    }

    pub fn header(&self, label: impl Into<String>) -> LogHeader {
        LogHeader {
            config_hash: self.setup.config_hash(),
            dt: self.dt(),
            chain: self.setup.chain.name.clone(),
            profile: self.setup.controller.params.profile.to_string(),
            seed: self.setup.seed,
            label: label.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    /// Simulated time budget (s).
    pub duration: f64,
    /// End the run at the tick the state machine reaches DONE.
    pub stop_on_done: bool,
}

/// Runs the closed loop for `options.duration` seconds of simulated time.
pub fn run_session(
    setup: SessionSetup,
    start: JointState,
    hand: &mut dyn HandSource,
    options: RunOptions,
    label: &str,
) -> Result<TrajectoryLog> {
    let events = SessionEvents::default();
    let first = hand.hand_pose(0.0, &events);
    let mut session = Session::new(setup, start, first)?;
    let ticks = (options.duration / session.dt()).round() as usize;
    let mut records = Vec::with_capacity(ticks.min(1 << 16));
    for _ in 0..ticks {
        let pose = hand.hand_pose(session.state.t, &session.events);
        let record = session.tick(pose)?;
        let done = record.phase == Phase::Done;
        records.push(record);
        if done && options.stop_on_done {
            break;
        }
    }
    Ok(TrajectoryLog {
        header: session.header(label),
        records,
    })
}
