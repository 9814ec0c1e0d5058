use handover_core::gripper::{FsmConfig, FsmObservation, GripperCommand, GripperFsm, Phase};
use proptest::prelude::*;

const DT: f64 = 0.001;

#[derive(Debug, Clone, Copy)]
struct Tick {
    d: [f64; 3],
    speed: f64,
}

fn stream() -> impl Strategy<Value = Vec<Tick>> {
    let d = prop_oneof![0.0..0.05f64, 0.05..0.10f64, 0.10..0.3f64, Just(0.05), Just(0.10)];
    let seg = (
        [d.clone(), d.clone(), d],
        prop_oneof![0.0..0.03f64, 0.03..0.3f64],
        prop_oneof![1..40usize, 40..1600usize],
    );
    proptest::collection::vec(seg, 1..12).prop_map(|segs| {
        segs.into_iter()
            .flat_map(|(d, speed, n)| std::iter::repeat_n(Tick { d, speed }, n))
            .collect()
    })
}

fn near(t: &Tick, c: &FsmConfig) -> bool {
    t.d.iter().all(|d| *d < c.d_activate) && t.speed < c.v_low
}

fn inside(t: &Tick, c: &FsmConfig) -> bool {
    t.d.iter().all(|d| *d < c.d_grasp)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn transitions_follow_the_thresholds(ticks in stream(), close_delay in 0..300usize) {
        let c = FsmConfig::default();
        let mut fsm = GripperFsm::new(c);
        let mut closed_at: Option<usize> = None;
        // Consecutive final-approach ticks spent inside the grasp radius.
        let mut inside_run = 0usize;
        for (i, t) in ticks.iter().enumerate() {
            let before = fsm.phase;
            let alpha_before = fsm.alpha;
            let closed = closed_at.is_some_and(|c0| i >= c0 + close_delay);
            let obs = FsmObservation { pair_distances: t.d, hand_speed: t.speed, fingers_closed: closed };
            let cmd = fsm.step(&obs, DT).unwrap();

            prop_assert!(fsm.alpha >= 0.0 && fsm.alpha <= c.alpha_default);
            match before {
                Phase::Tracking => {
                    let want = if near(t, &c) { Phase::FinalApproach } else { Phase::Tracking };
                    prop_assert_eq!(fsm.phase, want);
                    prop_assert_eq!(cmd, GripperCommand::None);
                }
                Phase::FinalApproach | Phase::Grasping if !near(t, &c) => {
                    prop_assert_eq!(fsm.phase, Phase::Tracking);
                    prop_assert_eq!(fsm.alpha, c.alpha_default);
                    prop_assert_eq!(cmd, GripperCommand::OpenFingers);
                    closed_at = None;
                }
                Phase::FinalApproach => {
                    prop_assert!(fsm.alpha <= alpha_before);
                    inside_run = if inside(t, &c) { inside_run + 1 } else { 0 };
                    if cmd == GripperCommand::CloseFingers {
                        // At least one second inside, with the offset fully removed.
                        prop_assert!(inside_run >= 1000, "closed after {inside_run} ticks");
                        prop_assert_eq!(fsm.alpha, 0.0);
                        prop_assert_eq!(fsm.phase, Phase::Grasping);
                        closed_at = Some(i);
                    } else {
                        prop_assert!(inside_run < 1000 || fsm.alpha > 0.0);
                        prop_assert_eq!(fsm.phase, Phase::FinalApproach);
                    }
                }
                Phase::Grasping => {
                    let want = if closed { Phase::Done } else { Phase::Grasping };
                    prop_assert_eq!(fsm.phase, want);
                }
                Phase::Done => {
                    prop_assert_eq!(fsm.phase, Phase::Done);
                    prop_assert_eq!(cmd, GripperCommand::None);
                }
            }
            if fsm.phase != Phase::FinalApproach {
                inside_run = 0;
            }
        }
    }
}

fn obs(d: f64, speed: f64) -> FsmObservation {
    FsmObservation { pair_distances: [d; 3], hand_speed: speed, fingers_closed: false }
}

#[test]
fn offset_ramps_to_zero_then_dwell_completes() {
    let c = FsmConfig::default();
    let mut fsm = GripperFsm::new(c);
    fsm.step(&obs(0.09, 0.0), DT).unwrap();
    assert_eq!(fsm.phase, Phase::FinalApproach);
    let ramp_ticks = (c.alpha_default / c.ramp_rate / DT).round() as usize;
    for _ in 0..ramp_ticks {
        fsm.step(&obs(0.09, 0.0), DT).unwrap();
    }
    assert!(fsm.alpha < 1e-9);
    // Outside the grasp radius the dwell never starts.
    for _ in 0..3000 {
        assert_eq!(fsm.step(&obs(0.06, 0.0), DT).unwrap(), GripperCommand::None);
    }
    let mut closed_after = None;
    for i in 1..=1000 {
        if fsm.step(&obs(0.049, 0.0), DT).unwrap() == GripperCommand::CloseFingers {
            closed_after = Some(i);
        }
    }
    assert_eq!(closed_after, Some(1000));
}

#[test]
fn leaving_mid_dwell_restarts_from_the_default_offset() {
    let c = FsmConfig::default();
    let mut fsm = GripperFsm::new(c);
    for _ in 0..800 {
        fsm.step(&obs(0.04, 0.0), DT).unwrap();
    }
    assert_eq!(fsm.phase, Phase::FinalApproach);
    assert_eq!(fsm.step(&obs(0.12, 0.0), DT).unwrap(), GripperCommand::OpenFingers);
    assert_eq!((fsm.phase, fsm.alpha, fsm.dwell_clock), (Phase::Tracking, c.alpha_default, 0.0));
    // A moving hand resets just the same.
    for _ in 0..10 {
        fsm.step(&obs(0.04, 0.0), DT).unwrap();
    }
    assert_eq!(fsm.step(&obs(0.04, 0.5), DT).unwrap(), GripperCommand::OpenFingers);
    assert_eq!(fsm.phase, Phase::Tracking);
}

#[test]
fn bad_time_step_is_rejected() {
    let mut fsm = GripperFsm::new(FsmConfig::default());
    assert!(fsm.step(&obs(0.0, 0.0), 0.0).is_err());
    assert!(fsm.step(&obs(0.0, 0.0), f64::NAN).is_err());
}
