//! Acceptance checks. Each returns a [`Check`] carrying the measured numbers,
//! so the same code backs both the acceptance report and ordinary tests.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use handover_core::config::default_session_config;
use handover_core::controller::{compute_torques, ControlInput, ControllerConfig, Profile};
use handover_core::gripper::{FsmObservation, GripperCommand, GripperFsm, Phase};
use handover_core::kinematics::{load_chain, JointState, Pose, PANDA_CHAIN};
use handover_core::metrics::{aggregate, SuccessCriteria};
use handover_core::scenario::{
    execute_batch, generate_experiment1, generate_experiment2, ExecuteConfig, MotionKind, ObjectKind,
    StartSampling, Workspace,
};
use handover_core::session::{run_session, RunOptions, Session, SessionSetup, StaticHand};
use handover_core::virtual_mechanisms::{
    damper_force, repulsive_energy, repulsive_force, saturated_spring_force, saturated_spring_potential,
    RepulsiveRegionParams, SaturatedSpringParams, VariableDamperParams,
};
use nalgebra::{Unit, UnitQuaternion, Vector3};
use proptest::prelude::*;
use proptest::test_runner::{Config as ProptestConfig, TestCaseError, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::oracle::{self, FkOracle, RefCommand, RefFsm, RefPhase, V3};

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self { name, passed, detail }
    }
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

fn arr(v: &Vector3<f64>) -> V3 {
    [v.x, v.y, v.z]
}

fn rel_err(got: &Vector3<f64>, want: &V3) -> f64 {
    let want = Vector3::from(*want);
    let scale = want.norm();
    if scale == 0.0 {
        got.norm()
    } else {
        (got - want).norm() / scale
    }
}

fn log_uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo.ln()..hi.ln())).exp()
}

fn random_direction(rng: &mut impl Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

pub const FORCE_LAW_SAMPLES: usize = 10_000;
pub const FORCE_LAW_REL_TOL: f64 = 1e-9;
pub const FORCE_LAW_BUDGET: Duration = Duration::from_secs(1);

/// Spring, damper and repulsive forces against the scalar oracle on random
/// parameters and arguments.
pub fn force_laws(samples: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let started = Instant::now();
    let mut worst = [0.0f64; 3];
    for _ in 0..samples {
        let f_max = rng.gen_range(0.5..100.0);
        let k = log_uniform(&mut rng, 1.0, 5000.0);
        let p = random_direction(&mut rng) * log_uniform(&mut rng, 1e-5, 2.0);
        let got = saturated_spring_force(&SaturatedSpringParams { f_max, k }, &p).unwrap();
        worst[0] = worst[0].max(rel_err(&got, &oracle::spring_force(f_max, k, &arr(&p))));

        let c1 = rng.gen_range(0.0..100.0);
        let c2 = rng.gen_range(-c1..100.0);
        let beta_d = log_uniform(&mut rng, 0.1, 100.0);
        let pdot = random_direction(&mut rng) * rng.gen_range(1e-4..2.0);
        let got = damper_force(&VariableDamperParams { c1, c2, beta_d }, &p, &pdot).unwrap();
        let want = oracle::damper_force(c1, c2, beta_d, &arr(&p), &arr(&pdot));
        worst[1] = worst[1].max(rel_err(&got, &want));

        let sigma = rng.gen_range(0.01..0.5);
        let p_r = random_direction(&mut rng) * rng.gen_range(1e-4..4.0) * sigma;
        let got = repulsive_force(&RepulsiveRegionParams { f_max, sigma }, &p_r).unwrap();
        worst[2] = worst[2].max(rel_err(&got, &oracle::repulsive_force(f_max, sigma, &arr(&p_r))));
    }
    let elapsed = started.elapsed();
    let max = worst.iter().copied().fold(0.0, f64::max);
    Check::new(
        "force_law_oracles",
        max <= FORCE_LAW_REL_TOL && elapsed < FORCE_LAW_BUDGET,
        format!(
            "{samples} samples, max rel err spring {:.1e} damper {:.1e} repulsive {:.1e} (tol {FORCE_LAW_REL_TOL:.0e}), {:.3} s (budget 1 s)",
            worst[0],
            worst[1],
            worst[2],
            elapsed.as_secs_f64()
        ),
    )
}

pub const GRADIENT_STEP: f64 = 1e-5;
pub const GRADIENT_ABS_TOL: f64 = 1e-6;

/// Spring and repulsive forces on a point equal the negative gradient of
/// their energies with respect to that point, for the configured parameters.
pub fn conservative_forces(samples: usize, seed: u64) -> Check {
    let params = default_session_config().controller;
    let springs = [params.spring1, params.spring2];
    let regions: Vec<RepulsiveRegionParams> = params.repulsive.iter().map(|r| r.params).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = GRADIENT_STEP;
    let (mut worst_spring, mut worst_region, mut worst_extrapolated) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..samples {
        let target = random_direction(&mut rng) * rng.gen_range(0.0..0.3);
        let x = target + random_direction(&mut rng) * rng.gen_range(1e-3..0.5);
        for s in &springs {
            // p = target − x, so the force on x is −∂U/∂x.
            let u = |x: &V3| saturated_spring_potential(s, &(target - Vector3::from(*x))).unwrap();
            let g = Vector3::from(oracle::gradient(&u, &arr(&x), h));
            let f = saturated_spring_force(s, &(target - x)).unwrap();
            worst_spring = worst_spring.max((f + g).amax());
            // Diagnostic only: removes the h² truncation term.
            let g_half = Vector3::from(oracle::gradient(&u, &arr(&x), h / 2.0));
            worst_extrapolated = worst_extrapolated.max((f + (4.0 * g_half - g) / 3.0).amax());
        }
        for r in &regions {
            let center = target;
            let x = center + random_direction(&mut rng) * rng.gen_range(0.0..4.0) * r.sigma;
            let e = |x: &V3| repulsive_energy(r, &(Vector3::from(*x) - center)).unwrap();
            let g = Vector3::from(oracle::gradient(&e, &arr(&x), h));
            let f = repulsive_force(r, &(x - center)).unwrap();
            worst_region = worst_region.max((f + g).amax());
            let g_half = Vector3::from(oracle::gradient(&e, &arr(&x), h / 2.0));
            worst_extrapolated = worst_extrapolated.max((f + (4.0 * g_half - g) / 3.0).amax());
        }
    }
    // The energies themselves agree with the oracle closed forms.
    let mut worst_energy = 0.0f64;
    for _ in 0..samples {
        let p = random_direction(&mut rng) * rng.gen_range(0.0..0.5);
        for s in &springs {
            let got = saturated_spring_potential(s, &p).unwrap();
            worst_energy = worst_energy.max((got - oracle::spring_potential(s.f_max, s.k, &arr(&p))).abs());
        }
        for r in &regions {
            let got = repulsive_energy(r, &p).unwrap();
            worst_energy = worst_energy.max((got - oracle::repulsive_energy(r.f_max, r.sigma, &arr(&p))).abs());
        }
    }
    let max = worst_spring.max(worst_region);
    Check::new(
        "conservative_forces",
        max <= GRADIENT_ABS_TOL && worst_energy <= 1e-9,
        format!(
            "{samples} samples, h={h:.0e}: |F + grad U| {worst_spring:.3e} N, |F + grad E| {worst_region:.3e} N (tol {GRADIENT_ABS_TOL:.0e}); energy vs oracle {worst_energy:.1e} J; extrapolated (h, h/2) residual {worst_extrapolated:.1e} N"
        ),
    )
}

pub const JACOBIAN_STEP: f64 = 1e-6;
pub const JACOBIAN_ABS_TOL: f64 = 1e-6;
pub const VIRTUAL_WORK_TOL: f64 = 1e-8;

fn random_hand(rng: &mut impl Rng, ws: &Workspace) -> Pose {
    let offset = Vector3::new(rng.gen_range(-0.15..0.15), rng.gen_range(-0.15..0.15), rng.gen_range(-0.15..0.15));
    let tilt = UnitQuaternion::from_axis_angle(&Unit::new_normalize(random_direction(rng)), rng.gen_range(0.0..1.0));
    Pose::new(ws.hand_nominal.position + offset, tilt * ws.hand_nominal.orientation)
}

/// Point Jacobians against finite differences of an independent forward
/// kinematics, and power balance of the torque mapping.
pub fn jacobian_and_virtual_work(configurations: usize, seed: u64) -> Check {
    let chain = load_chain(PANDA_CHAIN).unwrap();
    let fk = FkOracle::from_json(PANDA_CHAIN);
    let ws = Workspace::default();
    let session = default_session_config();
    let spec = ObjectKind::CardboardBox.spec();
    let controller = ControllerConfig::new(spec.grasp.clone(), session.controller.clone()).unwrap();
    let link = spec.grasp.link_length;
    let limits = fk.limits();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut worst_fk, mut worst_jac, mut worst_work) = (0.0f64, 0.0f64, 0.0f64);
    let attachments = ["left_finger", "right_finger", "wrist_back", "gripper_base", "elbow"];
    let gripper_point = |q: &[f64], i: usize| -> V3 {
        let l = fk.point(q, "left_finger");
        let r = fk.point(q, "right_finger");
        match i {
            0 => l,
            1 => r,
            _ => oracle::extended_back(&l, &r, &fk.point(q, "wrist_back"), link),
        }
    };
    for _ in 0..configurations {
        let q: Vec<f64> = limits.iter().map(|(lo, hi)| rng.gen_range(*lo..*hi)).collect();
        let qdot: Vec<f64> = (0..q.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let state = JointState { q: q.clone(), qdot: qdot.clone() };
        for name in attachments {
            let p = chain.point_position(&state, name).unwrap();
            worst_fk = worst_fk.max((p - Vector3::from(fk.point(&q, name))).amax());
            let jac = chain.point_jacobian(&state, name).unwrap();
            let fd = fk.jacobian(&q, JACOBIAN_STEP, |q| fk.point(q, name));
            for (j, col) in fd.iter().enumerate() {
                for i in 0..3 {
                    worst_jac = worst_jac.max((jac[(i, j)] - col[i]).abs());
                }
            }
        }

        let hand = random_hand(&mut rng, &ws);
        let input = ControlInput {
            state: &state,
            hand_pose: hand,
            hand_velocity: random_direction(&mut rng) * rng.gen_range(0.0..0.5),
            hand_angular_velocity: random_direction(&mut rng) * rng.gen_range(0.0..1.0),
            object_pose: hand.compose(&spec.in_hand),
            alpha: rng.gen_range(0.0..0.1),
            previous_direction: None,
        };
        let out = compute_torques(&chain, &input, &controller).unwrap();
        let velocities: Vec<V3> = (0..3)
            .map(|i| {
                let jac = fk.jacobian(&q, JACOBIAN_STEP, |q| gripper_point(q, i));
                [0, 1, 2].map(|r| jac.iter().zip(&qdot).map(|(col, qd)| col[r] * qd).sum())
            })
            .collect();
        let joint_power: f64 = out.tau_unclamped.iter().zip(&qdot).map(|(t, qd)| t * qd).sum();
        let (mut point_power, mut scale) = (0.0, 1.0);
        for cf in &out.forces {
            let v = Vector3::from(velocities[cf.pair]);
            point_power += cf.force.dot(&v);
            scale += cf.force.norm() * v.norm();
        }
        worst_work = worst_work.max((joint_power - point_power).abs() / scale);
    }
    Check::new(
        "jacobian_virtual_work",
        worst_fk <= 1e-9 && worst_jac <= JACOBIAN_ABS_TOL && worst_work <= VIRTUAL_WORK_TOL,
        format!(
            "{configurations} configurations: FK vs homogeneous oracle {worst_fk:.1e} m, Jacobian vs finite differences {worst_jac:.1e} (tol {JACOBIAN_ABS_TOL:.0e}), scaled power mismatch {worst_work:.1e} (tol {VIRTUAL_WORK_TOL:.0e})"
        ),
    )
}

pub const PEAK_REL_TOL: f64 = 1e-3;

/// Largest repulsive force magnitude along a ray sits at `sigma` and equals `f_max`.
pub fn peak_repulsion(seed: u64) -> Check {
    let mut cases: Vec<RepulsiveRegionParams> =
        default_session_config().controller.repulsive.iter().map(|r| r.params).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..50 {
        cases.push(RepulsiveRegionParams { f_max: rng.gen_range(1.0..100.0), sigma: rng.gen_range(0.01..0.5) });
    }
    let (mut worst_r, mut worst_f) = (0.0f64, 0.0f64);
    for r in &cases {
        let dir = random_direction(&mut rng);
        let magnitude = |d: f64| repulsive_force(r, &(dir * d)).unwrap().norm();
        let at = oracle::golden_section_max(magnitude, 0.0, 5.0 * r.sigma, 1e-9 * r.sigma);
        worst_r = worst_r.max((at - r.sigma).abs() / r.sigma);
        worst_f = worst_f.max((magnitude(at) - r.f_max).abs() / r.f_max);
    }
    Check::new(
        "peak_repulsion",
        worst_r <= PEAK_REL_TOL && worst_f <= PEAK_REL_TOL,
        format!(
            "{} regions: argmax |F| off sigma by {:.1e} rel, peak off f_max by {:.1e} rel (tol {PEAK_REL_TOL:.0e})",
            cases.len(),
            worst_r,
            worst_f
        ),
    )
}

pub const PASSIVITY_TOL: f64 = 1e-6;
pub const PASSIVITY_DURATION: f64 = 10.0;

/// Virtual spring energy plus kinetic energy never rises from one tick to the
/// next with a static hand and no repulsive regions.
pub fn passivity() -> Check {
    let chain = load_chain(PANDA_CHAIN).unwrap();
    let ws = Workspace::default();
    let mut session = default_session_config();
    session.controller.repulsive.clear();
    let spec = ObjectKind::CardboardBox.spec();
    let controller = ControllerConfig::new(spec.grasp.clone(), session.controller.clone()).unwrap();
    let setup = SessionSetup::new(chain, controller, session, spec.in_hand, 0).unwrap();
    let start = JointState::at_rest(ws.robot_ready.clone());
    let options = RunOptions { duration: PASSIVITY_DURATION, stop_on_done: false };
    let log = run_session(setup, start, &mut StaticHand(ws.hand_nominal), options, "passivity").unwrap();
    let energy: Vec<f64> = log.records.iter().map(|r| r.spring_energy + r.kinetic_energy).collect();
    let worst = energy.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    let end = log.records.last().map_or(0.0, |r| r.t);
    Check::new(
        "passivity",
        worst <= PASSIVITY_TOL && end >= PASSIVITY_DURATION - 2e-3,
        format!(
            "{} ticks over {end:.2} s: energy {:.3} J -> {:.3} J, largest per-tick increase {worst:.1e} J (tol {PASSIVITY_TOL:.0e})",
            energy.len(),
            energy[0],
            energy[energy.len() - 1]
        ),
    )
}

fn ref_phase(p: Phase) -> RefPhase {
    match p {
        Phase::Tracking => RefPhase::Tracking,
        Phase::FinalApproach => RefPhase::FinalApproach,
        Phase::Grasping => RefPhase::Grasping,
        Phase::Done => RefPhase::Done,
    }
}

fn ref_command(c: GripperCommand) -> RefCommand {
    match c {
        GripperCommand::None => RefCommand::None,
        GripperCommand::CloseFingers => RefCommand::Close,
        GripperCommand::OpenFingers => RefCommand::Open,
    }
}

/// A stretch of constant observations.
#[derive(Debug, Clone, Copy)]
pub struct Segment {
    pub distances: [f64; 3],
    pub speed: f64,
    pub ticks: usize,
}

fn distance_strategy() -> impl Strategy<Value = f64> {
    prop_oneof![
        0.0..0.05f64,
        0.05..0.10f64,
        0.10..0.5f64,
        Just(0.05),
        Just(0.10),
        Just(0.05 - 1e-12),
        Just(0.10 - 1e-12),
    ]
}

fn segment_strategy() -> impl Strategy<Value = Segment> {
    let speed = prop_oneof![0.0..0.03f64, 0.03..0.5f64, Just(0.03)];
    let any = (
        [distance_strategy(), distance_strategy(), distance_strategy()],
        speed,
        prop_oneof![1..50usize, 50..2500usize],
    );
    // Still and inside the grasp radius long enough to close.
    let settle = ([0.0..0.05f64, 0.0..0.05f64, 0.0..0.05f64], 0.0..0.03f64, 900..2500usize);
    prop_oneof![2 => any, 1 => settle].prop_map(|(distances, speed, ticks)| Segment { distances, speed, ticks })
}

pub fn stream_strategy() -> impl Strategy<Value = (Vec<Segment>, usize, usize)> {
    // Segments, time step in ms, finger closing delay in ticks.
    (proptest::collection::vec(segment_strategy(), 1..16), 1..=4usize, 0..400usize)
}

/// Steps the real state machine and the transcribed rules side by side and
/// reports the first divergence.
pub fn compare_fsm(segments: &[Segment], dt_ms: usize, close_delay: usize) -> Result<usize, String> {
    let config = default_session_config().fsm_config();
    let dt = dt_ms as f64 * 1e-3;
    let mut fsm = GripperFsm::new(config);
    let mut reference = RefFsm {
        phase: RefPhase::Tracking,
        alpha: config.alpha_default,
        inside_ticks: 0,
        d_activate: 0.10,
        d_grasp: 0.05,
        t_dwell: 1.0,
        v_low: config.v_low,
        ramp_rate: config.ramp_rate,
        alpha_default: 0.10,
    };
    let mut closing_since: Option<usize> = None;
    let mut tick = 0;
    let mut closes = 0;
    for seg in segments {
        for _ in 0..seg.ticks {
            let closed = closing_since.is_some_and(|t0| tick >= t0 + close_delay);
            let obs = FsmObservation { pair_distances: seg.distances, hand_speed: seg.speed, fingers_closed: closed };
            let cmd = fsm.step(&obs, dt).map_err(|e| e.to_string())?;
            let want = reference.step(seg.distances, seg.speed, closed, dt);
            if ref_command(cmd) != want || ref_phase(fsm.phase) != reference.phase || fsm.alpha != reference.alpha {
                return Err(format!(
                    "tick {tick}: got {:?}/{:?}/alpha {}, rules give {:?}/{:?}/alpha {} for {:?}",
                    fsm.phase, cmd, fsm.alpha, reference.phase, want, reference.alpha, seg
                ));
            }
            match cmd {
                GripperCommand::CloseFingers => {
                    closes += 1;
                    closing_since = Some(tick);
                }
                GripperCommand::OpenFingers => closing_since = None,
                GripperCommand::None => {}
            }
            tick += 1;
        }
    }
    Ok(closes)
}

pub const FSM_CASES: u32 = 512;

/// The state machine follows the activation, dwell and reset rules on random
/// observation streams.
pub fn fsm_protocol(cases: u32) -> Check {
    let mut runner = TestRunner::new(ProptestConfig { cases, failure_persistence: None, ..ProptestConfig::default() });
    let grasps = std::cell::Cell::new(0usize);
    let result = runner.run(&stream_strategy(), |(segments, dt_ms, delay)| {
        let closes = compare_fsm(&segments, dt_ms, delay).map_err(TestCaseError::fail)?;
        grasps.set(grasps.get() + closes);
        Ok(())
    });
    // A still hand held inside the grasp radius closes after exactly 1 s.
    let mut fsm = GripperFsm::new(default_session_config().fsm_config());
    let obs = |d: f64| FsmObservation { pair_distances: [d; 3], hand_speed: 0.0, fingers_closed: false };
    let mut close_tick = None;
    fsm.step(&obs(0.04), 1e-3).unwrap();
    for i in 1..=1001 {
        if fsm.step(&obs(0.04), 1e-3).unwrap() == GripperCommand::CloseFingers {
            close_tick = Some(i);
            break;
        }
    }
    let passed = result.is_ok() && close_tick == Some(1000);
    let detail = match &result {
        Ok(()) => format!(
            "{cases} random streams matched the rules tick by tick ({} closures); still hand closes after {} ticks of 1 ms",
            grasps.get(),
            close_tick.map_or("no".to_owned(), |t| t.to_string())
        ),
        Err(e) => format!("{e}"),
    };
    Check::new("fsm_protocol", passed, detail)
}

fn execute_config(keep_log: bool) -> ExecuteConfig {
    ExecuteConfig {
        chain: load_chain(PANDA_CHAIN).unwrap(),
        session: default_session_config(),
        profile: Profile::Authoritative,
        criteria: SuccessCriteria::default(),
        keep_log,
    }
}

pub const EXP1_RUNS: usize = 20;
pub const EXP1_MIN_SR: f64 = 95.0;
pub const EXP1_MAX_E_D_CM: f64 = 5.0;
pub const EXP1_MAX_E_THETA_DEG: f64 = 8.0;
pub const EXP1_MAX_T_A: f64 = 15.0;
pub const EXP1_BUDGET: Duration = Duration::from_secs(600);

/// Experiment I: box and cup, translations and rotations, 20 runs each.
pub fn experiment1(runs: usize, seed: u64) -> Check {
    let started = Instant::now();
    let ws = Workspace::default();
    let mut scripts = Vec::new();
    for (i, object) in [ObjectKind::CardboardBox, ObjectKind::PlasticCup].into_iter().enumerate() {
        for (j, motion) in [MotionKind::Translation, MotionKind::Rotation].into_iter().enumerate() {
            let s = seed + (2 * i + j) as u64;
            scripts.extend(generate_experiment1(s, object, motion, runs, &ws).unwrap());
        }
    }
    let outcomes = execute_batch(&scripts, &execute_config(false));
    let table = aggregate(&outcomes, |o| o.condition.clone()).unwrap();
    let elapsed = started.elapsed();
    let mut passed = elapsed < EXP1_BUDGET && table.rows.len() == 4;
    let mut parts = Vec::new();
    for row in &table.rows {
        let (t_a, e_d, e_theta) = (row.stats[0].0, row.stats[4].0, row.stats[8].0);
        let ok = row.sr >= EXP1_MIN_SR
            && row.attempts == runs
            && e_d <= EXP1_MAX_E_D_CM
            && e_theta <= EXP1_MAX_E_THETA_DEG
            && t_a <= EXP1_MAX_T_A;
        passed &= ok;
        parts.push(format!(
            "{} SR {:.0}% e_d {e_d:.2} cm e_theta {e_theta:.2} deg t_a {t_a:.2} s",
            row.condition, row.sr
        ));
    }
    Check::new(
        "experiment1",
        passed,
        format!("{}; {:.1} s", parts.join("; "), elapsed.as_secs_f64()),
    )
}

pub const EXP2_RUNS: usize = 20;
pub const EXP2_MIN_HAND_DISTANCE: f64 = 0.08;

/// Experiment II: random starts, displacement after the final approach begins.
pub fn experiment2(runs: usize, seed: u64) -> Check {
    let ws = Workspace::default();
    let cfg = execute_config(true);
    let sampling = StartSampling::default();
    let scripts = generate_experiment2(seed, runs, &cfg.chain, &ws, &sampling).unwrap();
    let outcomes = execute_batch(&scripts, &cfg);
    let successes = outcomes.iter().filter(|o| o.success).count();
    let mut below = 0;
    let mut min_distance = f64::INFINITY;
    for (i, o) in outcomes.iter().enumerate() {
        if i % sampling.centers.len() != sampling.below_family {
            continue;
        }
        below += 1;
        let log = o.log.as_ref().expect("log kept");
        for r in &log.records {
            for finger in &r.gripper_points[..2] {
                min_distance = min_distance.min((finger - r.hand_raw.position).norm());
            }
        }
    }
    let passed = successes == runs && below > 0 && min_distance >= EXP2_MIN_HAND_DISTANCE;
    Check::new(
        "experiment2",
        passed,
        format!(
            "SR {:.0}% ({successes}/{runs}); {below} below-hand starts, closest finger to hand center {:.1} cm (floor {:.0} cm)",
            100.0 * successes as f64 / runs as f64,
            100.0 * min_distance,
            100.0 * EXP2_MIN_HAND_DISTANCE
        ),
    )
}

pub const COOPERATIVE_DISTANCE: f64 = 0.5;
pub const COOPERATIVE_WAIT: f64 = 15.0;
pub const COOPERATIVE_NEAR: f64 = 0.15;

fn midpoint(points: &[Vector3<f64>; 3]) -> Vector3<f64> {
    (points[0] + points[1]) * 0.5
}

/// Cooperative profile: no grasp while the object waits 0.5 m away, grasp
/// once it is brought within 15 cm of the gripper.
pub fn cooperative_profile() -> Check {
    let chain = load_chain(PANDA_CHAIN).unwrap();
    let ws = Workspace::default();
    let session = default_session_config();
    let spec = ObjectKind::CardboardBox.spec();
    let controller = apply_cooperative(&spec);
    let spring2_f_max = controller.spring2_f_max();
    let setup = SessionSetup::new(chain.clone(), controller, session, spec.in_hand, 0).unwrap();

    // Object placed so its grasp center is 0.5 m from the finger midpoint.
    let start = JointState::at_rest(ws.robot_ready.clone());
    let (fingers, target) =
        handover_core::scenario::start_geometry(&chain, &ws.robot_ready, &spec, &ws.hand_nominal).unwrap();
    let dir = (target - fingers).normalize();
    let far = Pose::new(
        ws.hand_nominal.position + (fingers + dir * COOPERATIVE_DISTANCE - target),
        ws.hand_nominal.orientation,
    );
    let mut sim = Session::new(setup, start, far).unwrap();
    let wait_ticks = (COOPERATIVE_WAIT / sim.dt()).round() as usize;
    let mut grasp_at = None;
    let mut last = None;
    for _ in 0..wait_ticks {
        let r = sim.tick(far).unwrap();
        if grasp_at.is_none() && matches!(r.phase, Phase::Grasping | Phase::Done) {
            grasp_at = Some(r.t);
        }
        last = Some(r);
    }
    let last = last.unwrap();
    let gap_after_wait = (midpoint(&last.grasp_points) - midpoint(&last.gripper_points)).norm();

    // Bring the object to 12 cm of the finger midpoint over one second.
    let done_after = grasp_at.is_none().then(|| bring_close(&mut sim, far, &last)).flatten();

    // The same approach from a fresh session, so the second stage is shown
    // even when the first one already failed.
    let fresh = {
        let setup = SessionSetup::new(chain, apply_cooperative(&spec), default_session_config(), spec.in_hand, 0)
            .unwrap();
        let start = JointState::at_rest(ws.robot_ready.clone());
        let mut sim = Session::new(setup, start, far).unwrap();
        let first = sim.tick(far).unwrap();
        bring_close(&mut sim, far, &first)
    };

    let passed = spring2_f_max == 0.0 && grasp_at.is_none() && done_after.is_some();
    let waited = match grasp_at {
        None => format!("no grasp within {COOPERATIVE_WAIT:.0} s (gap {:.1} cm)", 100.0 * gap_after_wait),
        Some(t) => format!(
            "grasp started at {t:.2} s while the object stayed {:.0} cm away",
            100.0 * COOPERATIVE_DISTANCE
        ),
    };
    let brought = match (grasp_at, done_after) {
        (None, Some(t)) => format!("brought within {:.0} cm, grasp completed {t:.2} s later", 100.0 * COOPERATIVE_NEAR),
        (None, None) => "no grasp after bringing it close".to_owned(),
        (Some(_), _) => "second stage not reached".to_owned(),
    };
    let fresh = match fresh {
        Some(t) => format!("from rest, bringing it close grasps in {t:.2} s"),
        None => "from rest, bringing it close does not grasp".to_owned(),
    };
    Check::new(
        "cooperative_profile",
        passed,
        format!("spring2 f_max {spring2_f_max}; {waited}; {brought}; {fresh}"),
    )
}

fn apply_cooperative(spec: &handover_core::scenario::ObjectSpec) -> ControllerConfig {
    handover_core::controller::apply_profile(
        &ControllerConfig::new(spec.grasp.clone(), default_session_config().controller).unwrap(),
        Profile::Cooperative,
    )
}

/// Moves the hand over one second so the grasp center ends 12 cm from the
/// finger midpoint, then waits up to 20 s. Returns the time to DONE.
fn bring_close(sim: &mut Session, from: Pose, last: &handover_core::session::TickRecord) -> Option<f64> {
    let f = midpoint(&last.gripper_points);
    let t = midpoint(&last.grasp_points);
    let d = (t - f).normalize();
    let shift = (f + d * (COOPERATIVE_NEAR - 0.03)) - t;
    let t0 = sim.state.t;
    let bring_ticks = (1.0 / sim.dt()).round() as usize;
    for i in 1..=(20.0 / sim.dt()) as usize {
        let s = (i as f64 / bring_ticks as f64).min(1.0);
        let r = sim.tick(Pose::new(from.position + shift * s, from.orientation)).unwrap();
        if r.phase == Phase::Done {
            return Some(r.t - t0);
        }
    }
    None
}

/// The `handover` binary built next to this test executable, if any.
pub fn cli_binary() -> Option<PathBuf> {
    let exe = std::env::current_exe().ok()?;
    let mut dir = exe.parent()?;
    if dir.ends_with("deps") {
        dir = dir.parent()?;
    }
    let bin = dir.join(format!("handover{}", std::env::consts::EXE_SUFFIX));
    bin.is_file().then_some(bin)
}

fn cli_batch(bin: &Path, out: &Path, seed: u64, runs: usize) -> Result<Vec<u8>, String> {
    let status = Command::new(bin)
        .args(["batch", "--experiment", "exp1", "--object", "cardboard_box", "--runs"])
        .arg(runs.to_string())
        .arg("--seed")
        .arg(seed.to_string())
        .arg("--out")
        .arg(out)
        .env("RUST_LOG", "warn")
        .output()
        .map_err(|e| e.to_string())?;
    if !status.status.success() {
        return Err(String::from_utf8_lossy(&status.stderr).into_owned());
    }
    std::fs::read(out.join("summary.csv")).map_err(|e| e.to_string())
}

fn library_batch(out: &Path, seed: u64, runs: usize) -> Result<Vec<u8>, String> {
    use handover_service::commands::{batch, BatchArgs, Experiment};
    let bundle = handover_service::ConfigBundle::load(&Default::default()).map_err(|e| e.to_string())?;
    let args = BatchArgs {
        experiment: Experiment::Exp1,
        objects: vec![ObjectKind::CardboardBox],
        motions: vec![],
        runs,
        seed,
    };
    batch(&bundle, &args, out).map_err(|e| e.to_string())?;
    std::fs::read(out.join("summary.csv")).map_err(|e| e.to_string())
}

/// Two identical batch invocations write byte-identical summaries.
pub fn determinism(runs: usize, seed: u64) -> Check {
    let dir = tempfile::tempdir().unwrap();
    let bin = cli_binary();
    let run = |name: &str| match &bin {
        Some(b) => cli_batch(b, &dir.path().join(name), seed, runs),
        None => library_batch(&dir.path().join(name), seed, runs),
    };
    let via = if bin.is_some() { "handover batch" } else { "batch command in process" };
    match (run("a"), run("b")) {
        (Ok(a), Ok(b)) => Check::new(
            "determinism",
            a == b && !a.is_empty(),
            format!(
                "{via}, {runs} runs per condition, seed {seed}: summaries {} ({} bytes)",
                if a == b { "byte-identical" } else { "differ" },
                a.len()
            ),
        ),
        (Err(e), _) | (_, Err(e)) => Check::new("determinism", false, format!("{via} failed: {e}")),
    }
}
