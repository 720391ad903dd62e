//! Three-link swing model: inertia matrix, gravity, energy and a short free
//! fall of the unactuated chain.

use std::f64::consts::PI;

use knee_motion::dynamics::{
    forward_dynamics, gravity_vector, heel_position, inertia_matrix, total_energy, JointState, ModelParams,
};
use knee_motion::ode::rk4_step;
use nalgebra::Vector3;

fn main() -> knee_motion::Result<()> {
    let p = match std::env::args().nth(1) {
        Some(path) => ModelParams::load(path)?,
        None => ModelParams::default(),
    };
    println!("{}", p.to_config_string());

    // stance leg vertical, thigh hanging, knee flexed by 0.4 rad
    let q0 = [PI / 2.0, PI, 2.0 * PI - 0.4];
    let s = JointState::new(q0, [0.0, 1.5, -2.0]);
    println!("H =\n{:.4}", inertia_matrix(&p, &s.q));
    println!("g = {:.4}", gravity_vector(&p, &s.q).transpose());

    let mut f = |_t: f64, x: &[f64; 6]| {
        let s = JointState::new([x[0], x[1], x[2]], [x[3], x[4], x[5]]);
        let a = forward_dynamics(&p, &s, &Vector3::zeros()).expect("H is positive definite");
        [x[3], x[4], x[5], a[0], a[1], a[2]]
    };
    let dt = 1e-4;
    let mut x = [q0[0], q0[1], q0[2], 0.0, 1.5, -2.0];
    let e0 = total_energy(&p, &s);
    for k in 0..=2000 {
        if k % 500 == 0 {
            let s = JointState::new([x[0], x[1], x[2]], [x[3], x[4], x[5]]);
            let heel = heel_position(&p, &s.q);
            println!(
                "t = {:.2} s  q3 = {:.4}  heel = ({:+.3}, {:+.3}) m  energy drift {:.1e}",
                k as f64 * dt,
                x[2],
                heel.x,
                heel.y,
                (total_energy(&p, &s) - e0) / e0
            );
        }
        x = rk4_step(&mut f, k as f64 * dt, &x, dt);
    }
    Ok(())
}
