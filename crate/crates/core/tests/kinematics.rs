use handover_core::config::default_session_config;
use handover_core::controller::{compute_torques, ControlInput, ControllerConfig};
use handover_core::kinematics::{load_chain, JointState, KinematicChain, Pose, PANDA_CHAIN, PLANAR2_CHAIN};
use handover_core::scenario::{ObjectKind, Workspace};
use nalgebra::{DVector, Vector3};
use proptest::prelude::*;

fn panda() -> KinematicChain {
    load_chain(PANDA_CHAIN).unwrap()
}

fn panda_q() -> impl Strategy<Value = Vec<f64>> {
    let chain = panda();
    chain
        .joints
        .iter()
        .map(|j| {
            let (lo, hi) = j.limits.unwrap();
            lo..hi
        })
        .collect::<Vec<_>>()
}

fn fd_jacobian(chain: &KinematicChain, q: &[f64], name: &str, h: f64) -> Vec<Vector3<f64>> {
    (0..q.len())
        .map(|j| {
            let mut a = q.to_vec();
            let mut b = q.to_vec();
            a[j] += h;
            b[j] -= h;
            let pa = chain.point_position(&JointState::at_rest(a), name).unwrap();
            let pb = chain.point_position(&JointState::at_rest(b), name).unwrap();
            (pa - pb) / (2.0 * h)
        })
        .collect()
}

proptest! {
    #[test]
    fn planar_tip_matches_closed_form(q1 in -3.0..3.0f64, q2 in -3.0..3.0f64) {
        let chain = load_chain(PLANAR2_CHAIN).unwrap();
        let state = JointState::at_rest(vec![q1, q2]);
        let tip = chain.point_position(&state, "tip").unwrap();
        let want = Vector3::new(q1.cos() + (q1 + q2).cos(), q1.sin() + (q1 + q2).sin(), 0.0);
        prop_assert!((tip - want).amax() < 1e-12);
        let jac = chain.point_jacobian(&state, "tip").unwrap();
        let s12 = (q1 + q2).sin();
        let c12 = (q1 + q2).cos();
        let want_j = [
            [-q1.sin() - s12, -s12],
            [q1.cos() + c12, c12],
        ];
        for r in 0..2 {
            for c in 0..2 {
                prop_assert!((jac[(r, c)] - want_j[r][c]).abs() < 1e-12);
            }
        }
        // A point on the first link does not move with the second joint.
        let mid = chain.point_jacobian(&state, "mid").unwrap();
        prop_assert!(mid.column(1).norm() == 0.0);
    }

    #[test]
    fn jacobian_matches_finite_differences(q in panda_q()) {
        let chain = panda();
        for name in ["left_finger", "right_finger", "wrist_back", "gripper_base", "elbow"] {
            let jac = chain.point_jacobian(&JointState::at_rest(q.clone()), name).unwrap();
            for (j, col) in fd_jacobian(&chain, &q, name, 1e-6).iter().enumerate() {
                for i in 0..3 {
                    prop_assert!((jac[(i, j)] - col[i]).abs() < 1e-6, "{name} ({i},{j})");
                }
            }
        }
    }

    #[test]
    fn rotation_part_is_orthonormal(q in panda_q()) {
        let frames = panda().frames(&q).unwrap();
        for body in &frames.bodies {
            let r = body.rotation.to_rotation_matrix();
            let m = r.matrix();
            prop_assert!((m.transpose() * m - nalgebra::Matrix3::identity()).amax() < 1e-12);
        }
    }

    #[test]
    fn torques_do_the_same_work_as_point_forces(
        q in panda_q(),
        qdot in proptest::collection::vec(-1.0..1.0f64, 7),
        offset in [-0.15..0.15f64, -0.15..0.15f64, -0.15..0.15f64],
        alpha in 0.0..0.1f64,
    ) {
        let chain = panda();
        let ws = Workspace::default();
        let spec = ObjectKind::CardboardBox.spec();
        let controller = ControllerConfig::new(spec.grasp.clone(), default_session_config().controller).unwrap();
        let state = JointState { q, qdot };
        let hand = Pose::new(ws.hand_nominal.position + Vector3::from(offset), ws.hand_nominal.orientation);
        let input = ControlInput {
            state: &state,
            hand_pose: hand,
            hand_velocity: Vector3::new(0.1, -0.2, 0.05),
            hand_angular_velocity: Vector3::new(0.0, 0.3, 0.1),
            object_pose: hand.compose(&spec.in_hand),
            alpha,
            previous_direction: None,
        };
        let out = compute_torques(&chain, &input, &controller).unwrap();
        let frames = chain.frames(&state.q).unwrap();
        let qdot = DVector::from_column_slice(&state.qdot);
        let body = chain.attachment("left_finger").unwrap().body;
        let joint_power: f64 = out.tau_unclamped.iter().zip(qdot.iter()).map(|(t, v)| t * v).sum();
        let mut point_power = 0.0;
        let mut scale = 1.0;
        for f in &out.forces {
            let v = frames.point_jacobian_world(body, &f.point) * &qdot;
            let v = Vector3::new(v[0], v[1], v[2]);
            point_power += f.force.dot(&v);
            scale += f.force.norm() * v.norm();
        }
        prop_assert!((joint_power - point_power).abs() <= 1e-8 * scale);

        // Clamping only ever shrinks a torque onto its bound.
        let limits = &controller.params.torque_limits;
        for (j, (t, raw)) in out.tau.iter().zip(&out.tau_unclamped).enumerate() {
            prop_assert!(t.abs() <= limits[j]);
            if raw.abs() <= limits[j] {
                prop_assert_eq!(t, raw);
            } else {
                prop_assert_eq!(*t, raw.signum() * limits[j]);
                prop_assert!(out.clamped.iter().any(|c| c.joint == j));
            }
        }
    }
}

#[test]
fn limits_clamp_in_place() {
    let chain = panda();
    let mut q = vec![10.0; 7];
    chain.clamp_to_limits(&mut q);
    for (v, j) in q.iter().zip(&chain.joints) {
        assert_eq!(*v, j.limits.unwrap().1);
    }
}

#[test]
fn dimension_mismatch_is_an_error() {
    let chain = panda();
    assert!(chain.frames(&[0.0; 6]).is_err());
    assert!(chain.point_position(&JointState::zeros(7), "nope").is_err());
}
