mod common;

use std::f64::consts::PI;
use std::time::Instant;

use knee_motion::dynamics::{
    forward_dynamics, heel_position, inertia_matrix, joint_positions, kinetic_energy, JointState, ModelParams,
};
use nalgebra::Vector3;
use proptest::prelude::*;

#[test]
fn matches_lagrangian_oracle() {
    let start = Instant::now();
    let r = common::dynamics_oracle(1000, 11);
    let elapsed = start.elapsed().as_secs_f64();
    eprintln!("{r:?} in {elapsed:.2} s");
    assert!(r.inertia <= 1e-6, "{r:?}");
    assert!(r.coriolis <= 1e-6, "{r:?}");
    assert!(r.gravity <= 1e-6, "{r:?}");
    assert!(r.skew_exact);
    assert!(elapsed < 10.0, "{elapsed} s");
}

#[test]
fn free_chain_conserves_energy() {
    let drift = common::free_chain_drift([PI / 2.0 + 0.1, PI - 0.3, 2.0 * PI - 0.4], [0.5, -1.0, 2.0], 1e-4, 1.0);
    eprintln!("drift {drift:e}");
    assert!(drift < 1e-6, "drift {drift}");
}

#[test]
fn knee_only_conserves_energy() {
    let drift = common::knee_only_drift(1e-4, 1.0);
    eprintln!("drift {drift:e}");
    assert!(drift < 1e-6, "drift {drift}");
}

#[test]
fn straight_chain_geometry() {
    let p = ModelParams::default();
    // stance leg vertical, swing leg hanging straight
    let q = Vector3::new(PI / 2.0, PI, 2.0 * PI);
    let [hip, knee, heel] = joint_positions(&p, &q);
    assert!(hip.x.abs() < 1e-12 && (hip.y - p.link1.length).abs() < 1e-12);
    assert!((knee.y - (p.link1.length - p.link2.length)).abs() < 1e-12);
    assert!((heel.y - (p.link1.length - p.link2.length - p.link3.length)).abs() < 1e-12);
    assert_eq!(heel_position(&p, &q), heel);
}

proptest! {
    #[test]
    fn inertia_is_symmetric_positive_definite(q2 in 0.0f64..6.3, q3 in 0.0f64..6.3, q1 in 0.0f64..3.2) {
        let p = ModelParams::default();
        let h = inertia_matrix(&p, &Vector3::new(q1, q2, q3));
        prop_assert_eq!(h, h.transpose());
        prop_assert!(h.cholesky().is_some());
    }

    #[test]
    fn kinetic_energy_is_positive(q in proptest::array::uniform3(0.0f64..6.3), v in proptest::array::uniform3(-5.0f64..5.0)) {
        prop_assume!(v.iter().any(|x| x.abs() > 1e-3));
        let p = ModelParams::default();
        prop_assert!(kinetic_energy(&p, &JointState::new(q, v)) > 0.0);
    }

    #[test]
    fn forward_dynamics_inverts_equations_of_motion(q in proptest::array::uniform3(0.0f64..6.3), v in proptest::array::uniform3(-5.0f64..5.0), tau in proptest::array::uniform3(-20.0f64..20.0)) {
        use knee_motion::dynamics::{coriolis_terms, gravity_vector};
        let p = ModelParams::default();
        let s = JointState::new(q, v);
        let a = forward_dynamics(&p, &s, &Vector3::from(tau)).unwrap();
        let lhs = inertia_matrix(&p, &s.q) * a + coriolis_terms(&p, &s.q, &s.qdot).force(&s.qdot) + gravity_vector(&p, &s.q);
        prop_assert!((lhs - Vector3::from(tau)).amax() < 1e-9);
    }
}
