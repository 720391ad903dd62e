//! Dynamics of the three-link chain rebuilt from link center-of-mass
//! positions alone, by finite differences.

use knee_motion::dynamics::{LinkParams, ModelParams};
use nalgebra::{Matrix3, Vector3};

const FD_STEP: f64 = 1e-3;

/// Five-point central difference of `f` at `x` along coordinate `k`.
fn d5<const N: usize, F: Fn(&[f64; 3]) -> [f64; N]>(f: &F, x: &[f64; 3], k: usize) -> [f64; N] {
    let at = |s: f64| {
        let mut y = *x;
        y[k] += s * FD_STEP;
        f(&y)
    };
    let (m2, m1, p1, p2) = (at(-2.0), at(-1.0), at(1.0), at(2.0));
    let mut out = [0.0; N];
    for i in 0..N {
        out[i] = (m2[i] - 8.0 * m1[i] + 8.0 * p1[i] - p2[i]) / (12.0 * FD_STEP);
    }
    out
}

fn links(p: &ModelParams) -> [LinkParams; 3] {
    [p.link1, p.link2, p.link3]
}

/// Center-of-mass positions `[x1, y1, x2, y2, x3, y3]`.
fn com_positions(p: &ModelParams, q: &[f64; 3]) -> [f64; 6] {
    let [l1, l2, l3] = links(p);
    let a = [q[0], q[0] + q[1], q[0] + q[1] + q[2]];
    let hip = [l1.length * a[0].cos(), l1.length * a[0].sin()];
    let knee = [hip[0] + l2.length * a[1].cos(), hip[1] + l2.length * a[1].sin()];
    [
        l1.com * a[0].cos(),
        l1.com * a[0].sin(),
        hip[0] + l2.com * a[1].cos(),
        hip[1] + l2.com * a[1].sin(),
        knee[0] + l3.com * a[2].cos(),
        knee[1] + l3.com * a[2].sin(),
    ]
}

pub fn kinetic(p: &ModelParams, q: &[f64; 3], qd: &[f64; 3]) -> f64 {
    let f = |x: &[f64; 3]| com_positions(p, x);
    let cols = [d5(&f, q, 0), d5(&f, q, 1), d5(&f, q, 2)];
    let mut v = [0.0; 6];
    for (k, col) in cols.iter().enumerate() {
        for i in 0..6 {
            v[i] += col[i] * qd[k];
        }
    }
    let omega = [qd[0], qd[0] + qd[1], qd[0] + qd[1] + qd[2]];
    links(p)
        .iter()
        .enumerate()
        .map(|(j, l)| 0.5 * l.mass * (v[2 * j].powi(2) + v[2 * j + 1].powi(2)) + 0.5 * l.inertia * omega[j].powi(2))
        .sum()
}

pub fn potential(p: &ModelParams, q: &[f64; 3]) -> f64 {
    let c = com_positions(p, q);
    p.gravity
        * links(p)
            .iter()
            .enumerate()
            .map(|(j, l)| l.mass * c[2 * j + 1])
            .sum::<f64>()
}

/// Inertia matrix by polarization of the kinetic energy.
pub fn inertia(p: &ModelParams, q: &[f64; 3]) -> Matrix3<f64> {
    let e = |i: usize| {
        let mut v = [0.0; 3];
        v[i] = 1.0;
        v
    };
    let mut h = Matrix3::zeros();
    for i in 0..3 {
        h[(i, i)] = 2.0 * kinetic(p, q, &e(i));
        for j in 0..i {
            let mut both = e(i);
            both[j] = 1.0;
            let v = kinetic(p, q, &both) - 0.5 * h[(i, i)] - 0.5 * h[(j, j)];
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    h
}

pub fn gravity(p: &ModelParams, q: &[f64; 3]) -> Vector3<f64> {
    let f = |x: &[f64; 3]| [potential(p, x)];
    Vector3::new(d5(&f, q, 0)[0], d5(&f, q, 1)[0], d5(&f, q, 2)[0])
}

/// Velocity terms of the Euler–Lagrange equations:
/// `Σ_k ∂H/∂q_k q̇_k q̇ − ½ (q̇ᵀ ∂H/∂q_i q̇)_i`.
pub fn coriolis(p: &ModelParams, q: &[f64; 3], qd: &[f64; 3]) -> Vector3<f64> {
    let f = |x: &[f64; 3]| {
        let h = inertia(p, x);
        let mut flat = [0.0; 9];
        flat.copy_from_slice(h.as_slice());
        flat
    };
    let dh: Vec<Matrix3<f64>> = (0..3).map(|k| Matrix3::from_column_slice(&d5(&f, q, k))).collect();
    let v = Vector3::from(*qd);
    let mut c = Vector3::zeros();
    for k in 0..3 {
        c += dh[k] * v * qd[k];
    }
    for i in 0..3 {
        c[i] -= 0.5 * v.dot(&(dh[i] * v));
    }
    c
}

pub fn energy(p: &ModelParams, q: &[f64; 3], qd: &[f64; 3]) -> f64 {
    kinetic(p, q, qd) + potential(p, q)
}
