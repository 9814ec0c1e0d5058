use handover_core::config::default_session_config;
use handover_core::controller::{ControllerConfig, Profile};
use handover_core::gripper::Phase;
use handover_core::kinematics::{load_chain, JointState, PANDA_CHAIN};
use handover_core::scenario::{ObjectKind, Workspace};
use handover_core::session::{run_session, RunOptions, Session, SessionSetup, StaticHand};

fn setup(with_regions: bool) -> SessionSetup {
    let mut session = default_session_config();
    if !with_regions {
        session.controller.repulsive.clear();
    }
    let spec = ObjectKind::CardboardBox.spec();
    let controller = ControllerConfig::new(spec.grasp.clone(), session.controller.clone()).unwrap();
    SessionSetup::new(load_chain(PANDA_CHAIN).unwrap(), controller, session, spec.in_hand, 0).unwrap()
}

#[test]
fn energy_never_rises_with_a_still_hand() {
    let ws = Workspace::default();
    let options = RunOptions { duration: 10.0, stop_on_done: false };
    let start = JointState::at_rest(ws.robot_ready.clone());
    let log = run_session(setup(false), start, &mut StaticHand(ws.hand_nominal), options, "p").unwrap();
    assert_eq!(log.records.len(), 10_000);
    let e: Vec<f64> = log.records.iter().map(|r| r.spring_energy + r.kinetic_energy).collect();
    for (i, w) in e.windows(2).enumerate() {
        assert!(w[1] - w[0] <= 1e-6, "tick {i}: {} -> {}", w[0], w[1]);
    }
    // The grasp completes along the way, so the spring energy drains.
    assert!(log.records.iter().any(|r| r.phase == Phase::Done));
    assert!(e[e.len() - 1] < 1e-3 * e[0]);
}

#[test]
fn profile_switch_toggles_only_the_snap_spring() {
    let ws = Workspace::default();
    let mut s = Session::new(setup(true), JointState::at_rest(ws.robot_ready.clone()), ws.hand_nominal).unwrap();
    let configured = s.setup.controller.params.spring2;
    s.set_profile(Profile::Cooperative);
    assert_eq!(s.setup.controller.spring2_f_max(), 0.0);
    assert_eq!(s.setup.controller.params.spring1, default_session_config().controller.spring1);
    s.set_profile(Profile::Authoritative);
    assert_eq!(s.setup.controller.active_spring2(), Some(configured));
}

#[test]
fn records_report_offset_targets() {
    let ws = Workspace::default();
    let mut s = Session::new(setup(true), JointState::at_rest(ws.robot_ready.clone()), ws.hand_nominal).unwrap();
    let r = s.tick(ws.hand_nominal).unwrap();
    assert_eq!(r.phase, Phase::Tracking);
    for i in 0..3 {
        let offset = (r.target_points[i] - r.grasp_points[i]).norm();
        assert!((offset - r.alpha).abs() < 1e-12);
    }
    assert_eq!(r.region_centers.len(), 1);
    assert!((r.region_centers[0] - ws.hand_nominal.position).norm() - 0.23 < 1e-12);
}
