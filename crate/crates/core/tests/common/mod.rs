#![allow(dead_code)]

pub mod lagrange;

use knee_motion::adaptive::{TrainingTrial, TRAINING_CADENCES};
use knee_motion::dynamics::{knee_acceleration, ModelParams};
use knee_motion::gait::{
    detect_events, synth_gait, synth_gait_exact, DerivedTrial, GaitCondition, SynthProfile, DEFAULT_SMOOTHING_WINDOW,
};
use knee_motion::inertial::{
    analyze_trial, integrate_knee, solve_via_point, Direction, KneeState, TrialAnalysis, DEFAULT_SUBSTEPS,
};
use rayon::prelude::*;

pub const TRIALS_PER_CADENCE: u64 = 5;

/// Seed of trial `k` at `cadence` within a suite.
pub fn seed(base: u64, cadence: f64, k: u64) -> u64 {
    base + cadence as u64 * 10 + k
}

/// Analyzed synthetic trials: `TRIALS_PER_CADENCE` per training cadence.
pub fn suite(base: u64, condition: GaitCondition) -> Vec<(f64, TrialAnalysis)> {
    let p = ModelParams::default();
    let profile = SynthProfile::with_condition(condition);
    let jobs: Vec<(f64, u64)> = TRAINING_CADENCES
        .iter()
        .flat_map(|&c| (0..TRIALS_PER_CADENCE).map(move |k| (c, k)))
        .collect();
    jobs.par_iter()
        .map(|&(c, k)| {
            let t = synth_gait(c, &profile, seed(base, c, k)).unwrap();
            (
                c,
                analyze_trial(&p, &t, DEFAULT_SMOOTHING_WINDOW, DEFAULT_SUBSTEPS).unwrap(),
            )
        })
        .collect()
}

pub fn training(suite: &[(f64, TrialAnalysis)]) -> Vec<TrainingTrial> {
    suite
        .iter()
        .map(|(c, a)| TrainingTrial::from_analysis(a, *c).unwrap())
        .collect()
}

/// Worst relative disagreement between the model dynamics and the oracle.
#[derive(Debug, Clone, Copy)]
pub struct OracleReport {
    pub states: usize,
    pub inertia: f64,
    pub coriolis: f64,
    pub gravity: f64,
    /// `S + Sᵀ` is exactly zero at every state.
    pub skew_exact: bool,
}

fn rel(a: &[f64], b: &[f64]) -> f64 {
    let num = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let den = b.iter().map(|y| y.abs()).fold(0.0, f64::max);
    num / den.max(1e-12)
}

/// Random states and link parameters scaled ±30 % around the defaults.
pub fn dynamics_oracle(states: usize, seed: u64) -> OracleReport {
    use knee_motion::dynamics::{coriolis_terms, gravity_vector, inertia_matrix};
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut report = OracleReport {
        states,
        inertia: 0.0,
        coriolis: 0.0,
        gravity: 0.0,
        skew_exact: true,
    };
    for _ in 0..states {
        let mut p = ModelParams::default();
        for l in [&mut p.link1, &mut p.link2, &mut p.link3] {
            l.mass *= rng.random_range(0.7..1.3);
            l.length *= rng.random_range(0.7..1.3);
            l.com = l.length * rng.random_range(0.1..0.9);
            l.inertia *= rng.random_range(0.7..1.3);
        }
        let q = [
            rng.random_range(0.0..PI),
            rng.random_range(0.0..2.0 * PI),
            rng.random_range(0.0..2.0 * PI),
        ];
        let qd = [
            rng.random_range(-8.0..8.0),
            rng.random_range(-8.0..8.0),
            rng.random_range(-8.0..8.0),
        ];
        let (qv, qdv) = (Vector3::from(q), Vector3::from(qd));

        let h = inertia_matrix(&p, &qv);
        report.inertia = report
            .inertia
            .max(rel(h.as_slice(), lagrange::inertia(&p, &q).as_slice()));
        let terms = coriolis_terms(&p, &qv, &qdv);
        let c = terms.force(&qdv);
        report.coriolis = report
            .coriolis
            .max(rel(c.as_slice(), lagrange::coriolis(&p, &q, &qd).as_slice()));
        let g = gravity_vector(&p, &qv);
        report.gravity = report
            .gravity
            .max(rel(g.as_slice(), lagrange::gravity(&p, &q).as_slice()));
        report.skew_exact &= (terms.s + terms.s.transpose()).iter().all(|&v| v == 0.0);
    }
    report
}

/// Largest relative energy change of the unactuated chain over `seconds`.
pub fn free_chain_drift(q0: [f64; 3], qd0: [f64; 3], dt: f64, seconds: f64) -> f64 {
    use knee_motion::dynamics::{forward_dynamics, JointState};
    use knee_motion::ode::rk4_step;
    use nalgebra::Vector3;

    let p = ModelParams::default();
    let mut f = |_t: f64, x: &[f64; 6]| {
        let s = JointState::new([x[0], x[1], x[2]], [x[3], x[4], x[5]]);
        let a = forward_dynamics(&p, &s, &Vector3::zeros()).unwrap();
        [x[3], x[4], x[5], a[0], a[1], a[2]]
    };
    let mut x = [q0[0], q0[1], q0[2], qd0[0], qd0[1], qd0[2]];
    let e0 = lagrange::energy(&p, &q0, &qd0);
    let steps = (seconds / dt).round() as usize;
    let mut worst: f64 = 0.0;
    for k in 0..steps {
        x = rk4_step(&mut f, k as f64 * dt, &x, dt);
        if k % 100 == 99 || k + 1 == steps {
            let e = lagrange::energy(&p, &[x[0], x[1], x[2]], &[x[3], x[4], x[5]]);
            worst = worst.max((e - e0).abs() / e0.abs());
        }
    }
    worst
}

/// Largest relative knee energy change with the stance leg and thigh held still.
pub fn knee_only_drift(dt: f64, seconds: f64) -> f64 {
    use knee_motion::gait::{DerivedTrial, GaitTrial};
    use knee_motion::inertial::{integrate_knee, Direction, KneeState};
    use std::f64::consts::PI;

    let p = ModelParams::default();
    let n = (seconds / 0.01).round() as usize + 1;
    let (q1, q2) = (PI / 2.0, PI);
    let base = GaitTrial::new(0.01, 0.0, [vec![q1; n], vec![q2; n], vec![2.0 * PI; n]]).unwrap();
    let z = || vec![0.0; n];
    let d = DerivedTrial::with_exact_derivatives(base, [z(), z(), z()], [z(), z(), z()]).unwrap();
    let ic = KneeState::new(2.0 * PI - 0.5, 1.0);
    let s = integrate_knee(&p, &d, ic, 0.0, seconds, Direction::Forward, dt).unwrap();
    // full-chain energy with only the knee moving
    let energy = |k: &KneeState| lagrange::energy(&p, &[q1, q2, k.q3], &[0.0, 0.0, k.q3dot]);
    let e0 = energy(&ic);
    s.states
        .iter()
        .map(|k| (energy(k) - e0).abs() / e0.abs())
        .fold(0.0, f64::max)
}

/// Newton shooting on the start state so that a forward solve hits `via` at `t_q`.
pub fn shoot(p: &ModelParams, d: &DerivedTrial, via: KneeState, t_q: f64, dt: f64) -> KneeState {
    let ts = d.span().0;
    let hit = |x: [f64; 2]| {
        let s = integrate_knee(p, d, KneeState::new(x[0], x[1]), ts, t_q, Direction::Forward, dt).unwrap();
        let e = s.last().unwrap();
        [e.q3 - via.q3, e.q3dot - via.q3dot]
    };
    let mut x = [via.q3, via.q3dot];
    for _ in 0..30 {
        let r = hit(x);
        if r[0].abs().max(r[1].abs()) < 1e-13 {
            break;
        }
        let eps = 1e-6;
        let mut jac = [[0.0; 2]; 2];
        for j in 0..2 {
            let mut xp = x;
            xp[j] += eps;
            let mut xm = x;
            xm[j] -= eps;
            let (rp, rm) = (hit(xp), hit(xm));
            for i in 0..2 {
                jac[i][j] = (rp[i] - rm[i]) / (2.0 * eps);
            }
        }
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        x[0] -= (jac[1][1] * r[0] - jac[0][1] * r[1]) / det;
        x[1] -= (-jac[1][0] * r[0] + jac[0][0] * r[1]) / det;
    }
    KneeState::new(x[0], x[1])
}

/// Intact limbs from the generator with the knee replaced by an exact
/// zero-torque solution through the generator's peak-flexion knee state.
pub fn inertial_reference(cadence: f64, seed: u64) -> DerivedTrial {
    let p = ModelParams::default();
    let d = synth_gait_exact(cadence, &SynthProfile::default(), seed).unwrap();
    let i = d.base.nearest_index(detect_events(&d).unwrap().max_flexion);
    let via = KneeState::new(d.base.q3()[i], d.qdot[2][i]);
    let traj = solve_via_point(&p, &d, via, d.time(i), d.span(), d.base.dt / 10.0).unwrap();
    let mut base = d.base.clone();
    base.q[2] = traj.angles();
    let qdd: Vec<f64> = (0..d.len())
        .map(|k| {
            let s = traj.states()[k];
            knee_acceleration(&p, &d.intact_at(k), s.q3, s.q3dot, 0.0, 0.0)
        })
        .collect();
    let qd: Vec<f64> = traj.states().iter().map(|s| s.q3dot).collect();
    DerivedTrial::with_exact_derivatives(
        base,
        [d.qdot[0].clone(), d.qdot[1].clone(), qd],
        [d.qddot[0].clone(), d.qddot[1].clone(), qdd],
    )
    .unwrap()
}

/// Worst-case via-point errors over random problems.
#[derive(Debug, Clone, Copy)]
pub struct ViaReport {
    pub problems: usize,
    /// Distance of the stored via state from the requested one.
    pub via: f64,
    /// Forward re-integration from the solved start, compared at the via time.
    pub reintegration: f64,
    /// Sup-norm distance of the knee angle from the shooting solution.
    pub shooting: f64,
}

/// Random cadences, trials, via times and via states near the trial's own knee.
pub fn via_point_problems(problems: usize, seed: u64) -> ViaReport {
    use rand::{Rng, SeedableRng};
    let p = ModelParams::default();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut r = ViaReport {
        problems,
        via: 0.0,
        reintegration: 0.0,
        shooting: 0.0,
    };
    for _ in 0..problems {
        let d = synth_gait_exact(rng.random_range(80.0..130.0), &SynthProfile::default(), rng.random()).unwrap();
        let span = d.span();
        let dt = d.base.dt / 10.0;
        let i = rng.random_range(d.len() / 5..4 * d.len() / 5);
        let t_q = d.time(i);
        let via = KneeState::new(
            d.base.q3()[i] + rng.random_range(-0.05..0.05),
            d.qdot[2][i] + rng.random_range(-0.5..0.5),
        );
        let traj = solve_via_point(&p, &d, via, t_q, span, dt).unwrap();
        let at = traj.states()[i];
        r.via = r.via.max((at.q3 - via.q3).abs().max((at.q3dot - via.q3dot).abs()));

        let again = integrate_knee(&p, &d, traj.states()[0], span.0, t_q, Direction::Forward, dt).unwrap();
        r.reintegration = r.reintegration.max((again.last().unwrap().q3 - via.q3).abs());

        let start = shoot(&p, &d, via, t_q, dt);
        let oracle = integrate_knee(&p, &d, start, span.0, span.1, Direction::Forward, dt).unwrap();
        let sup = oracle
            .states
            .iter()
            .zip(traj.states())
            .map(|(a, b)| (a.q3 - b.q3).abs())
            .fold(0.0, f64::max);
        r.shooting = r.shooting.max(sup);
    }
    r
}
