//! Planar three-link model of the swing phase.
//!
//! Link 1 is the stance leg pivoting on the floor at the origin, link 2 the
//! thigh with the prosthetic socket and link 3 the prosthetic shank and foot.
//! `q1` is the absolute angle of link 1 measured from the horizontal
//! (counterclockwise positive); `q2` and `q3` are relative joint angles. The
//! knee is fully extended at `q3 = 2π` and flexion decreases `q3`.
//!
//! The trunk is held vertical and carries no dynamic terms.

use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inertial description of one rigid link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    /// Mass (kg).
    #[serde(rename = "m")]
    pub mass: f64,
    /// Length (m).
    #[serde(rename = "l")]
    pub length: f64,
    /// Distance of the center of mass from the proximal end (m).
    #[serde(rename = "lg")]
    pub com: f64,
    /// Moment of inertia about the center of mass (kg·m²).
    #[serde(rename = "I")]
    pub inertia: f64,
}

impl LinkParams {
    pub const fn new(mass: f64, length: f64, com: f64, inertia: f64) -> Self {
        Self {
            mass,
            length,
            com,
            inertia,
        }
    }

    /// Lightweight single-axis prosthetic shank and foot.
    pub const PROSTHESIS: LinkParams = LinkParams::new(1.0, 0.501, 0.425, 0.0238);

    fn validate(&self, name: &str) -> Result<()> {
        let all = [self.mass, self.length, self.com, self.inertia];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::param(name, "non-finite value"));
        }
        if self.mass <= 0.0 {
            return Err(Error::param(format!("{name}.m"), "mass must be positive"));
        }
        if self.length <= 0.0 {
            return Err(Error::param(format!("{name}.l"), "length must be positive"));
        }
        if self.com < 0.0 || self.com > self.length {
            return Err(Error::param(
                format!("{name}.lg"),
                "center of mass must lie on the link (0 <= lg <= l)",
            ));
        }
        if self.inertia < 0.0 {
            return Err(Error::param(format!("{name}.I"), "inertia must be nonnegative"));
        }
        Ok(())
    }
}

/// Parameters of the three-link swing model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub link1: LinkParams,
    pub link2: LinkParams,
    pub link3: LinkParams,
    /// Gravitational acceleration (m/s²).
    #[serde(default = "default_gravity")]
    pub gravity: f64,
}

fn default_gravity() -> f64 {
    9.81
}

/// Mean body mass of the reference walkers (kg).
pub const REFERENCE_BODY_MASS: f64 = 65.9;
/// Mean body height of the reference walkers (m).
pub const REFERENCE_HEIGHT: f64 = 1.74;

impl Default for ModelParams {
    fn default() -> Self {
        Self::from_anthropometry(REFERENCE_BODY_MASS, REFERENCE_HEIGHT)
    }
}

impl ModelParams {
    /// Intact-limb parameters from segment fractions of body mass and height,
    /// combined with the default prosthetic shank.
    ///
    /// The stance leg is the whole leg with the knee held straight: length is
    /// the greater-trochanter height (0.530 H), mass 0.161 M, center of mass
    /// 0.447 of the length below the hip and radius of gyration 0.326 L. The
    /// thigh uses 0.245 H, 0.100 M, 0.433 L and 0.323 L.
    pub fn from_anthropometry(body_mass: f64, height: f64) -> Self {
        let leg_len = 0.530 * height;
        let leg_mass = 0.161 * body_mass;
        let leg_rg = 0.326 * leg_len;
        // link 1 is measured from the floor pivot, so the proximal end is the foot
        let link1 = LinkParams::new(leg_mass, leg_len, (1.0 - 0.447) * leg_len, leg_mass * leg_rg * leg_rg);

        let thigh_len = 0.245 * height;
        let thigh_mass = 0.100 * body_mass;
        let thigh_rg = 0.323 * thigh_len;
        let link2 = LinkParams::new(
            thigh_mass,
            thigh_len,
            0.433 * thigh_len,
            thigh_mass * thigh_rg * thigh_rg,
        );

        Self {
            link1,
            link2,
            link3: LinkParams::PROSTHESIS,
            gravity: default_gravity(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.link1.validate("link1")?;
        self.link2.validate("link2")?;
        self.link3.validate("link3")?;
        if !self.gravity.is_finite() || self.gravity < 0.0 {
            return Err(Error::param("gravity", "must be finite and nonnegative"));
        }
        Ok(())
    }

    /// Parses the key-value model file (`link{1,2,3}.{m,l,lg,I}`, `gravity`).
    pub fn from_config_str(text: &str) -> Result<Self> {
        let params: ModelParams = toml::from_str(text).map_err(|e| Error::Format {
            context: "model parameters".into(),
            reason: e.to_string(),
        })?;
        params.validate()?;
        Ok(params)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_config_str(&text).map_err(|e| match e {
            Error::Format { reason, .. } => Error::Format {
                context: path.display().to_string(),
                reason,
            },
            other => other,
        })
    }

    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("gravity = {:?}\n", self.gravity));
        for (name, link) in [("link1", &self.link1), ("link2", &self.link2), ("link3", &self.link3)] {
            out.push_str(&format!(
                "\n[{name}]\nm = {:?}\nl = {:?}\nlg = {:?}\nI = {:?}\n",
                link.mass, link.length, link.com, link.inertia
            ));
        }
        out
    }

    /// Inertia of link 3 about the knee axis.
    pub fn knee_inertia(&self) -> f64 {
        let l3 = &self.link3;
        l3.inertia + l3.mass * l3.com * l3.com
    }
}

/// Joint configuration and velocity of the three-link chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointState {
    pub q: Vector3<f64>,
    pub qdot: Vector3<f64>,
}

impl JointState {
    pub fn new(q: [f64; 3], qdot: [f64; 3]) -> Self {
        Self {
            q: Vector3::from(q),
            qdot: Vector3::from(qdot),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(self.qdot.iter()).all(|v| v.is_finite())
    }
}

/// Stance leg and thigh state: the exogenous input of the knee dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct IntactState {
    pub q: [f64; 2],
    pub qdot: [f64; 2],
    pub qddot: [f64; 2],
}

/// Inertia matrix `H(q)`.
pub fn inertia_matrix(p: &ModelParams, q: &Vector3<f64>) -> Matrix3<f64> {
    let (l1, l2, l3) = (&p.link1, &p.link2, &p.link3);
    let c2 = q[1].cos();
    let c3 = q[2].cos();
    let c23 = (q[1] + q[2]).cos();

    let a1 = l1.inertia + l1.mass * l1.com * l1.com;
    let a2 = l2.inertia + l2.mass * l2.com * l2.com;
    let a3 = p.knee_inertia();
    let k2 = (l2.mass * l2.com + l3.mass * l2.length) * l1.length;
    let k3 = l3.mass * l2.length * l3.com;
    let k13 = l3.mass * l1.length * l3.com;

    let h33 = a3;
    let h23 = a3 + k3 * c3;
    let h13 = h23 + k13 * c23;
    let h22 = a2 + l3.mass * l2.length * l2.length + a3 + 2.0 * k3 * c3;
    let h12 = h22 + k2 * c2 + k13 * c23;
    let h11 = a1
        + a2
        + a3
        + (l2.mass + l3.mass) * l1.length * l1.length
        + l3.mass * l2.length * l2.length
        + 2.0 * k2 * c2
        + 2.0 * k3 * c3
        + 2.0 * k13 * c23;

    Matrix3::new(h11, h12, h13, h12, h22, h23, h13, h23, h33)
}

/// Partial derivatives `∂H/∂q_k` for k = 1, 2, 3. `H` does not depend on `q1`.
pub fn inertia_partials(p: &ModelParams, q: &Vector3<f64>) -> [Matrix3<f64>; 3] {
    let (l1, l2, l3) = (&p.link1, &p.link2, &p.link3);
    let s2 = q[1].sin();
    let s3 = q[2].sin();
    let s23 = (q[1] + q[2]).sin();
    let k2 = (l2.mass * l2.com + l3.mass * l2.length) * l1.length;
    let k3 = l3.mass * l2.length * l3.com;
    let k13 = l3.mass * l1.length * l3.com;

    let d2_11 = -2.0 * k2 * s2 - 2.0 * k13 * s23;
    let d2_12 = -k2 * s2 - k13 * s23;
    let d2_13 = -k13 * s23;
    let dq2 = Matrix3::new(d2_11, d2_12, d2_13, d2_12, 0.0, 0.0, d2_13, 0.0, 0.0);

    let d3_11 = -2.0 * k3 * s3 - 2.0 * k13 * s23;
    let d3_12 = -2.0 * k3 * s3 - k13 * s23;
    let d3_13 = -k3 * s3 - k13 * s23;
    let d3_22 = -2.0 * k3 * s3;
    let d3_23 = -k3 * s3;
    let dq3 = Matrix3::new(d3_11, d3_12, d3_13, d3_12, d3_22, d3_23, d3_13, d3_23, 0.0);

    [Matrix3::zeros(), dq2, dq3]
}

/// Velocity-dependent terms in Arimoto form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoriolisTerms {
    /// Time derivative of `H` along the motion.
    pub hdot: Matrix3<f64>,
    /// Skew-symmetric part of the centrifugal/Coriolis force.
    pub s: Matrix3<f64>,
}

impl CoriolisTerms {
    /// Full centrifugal/Coriolis force `(1/2)·Ḣ·q̇ + S·q̇`.
    pub fn force(&self, qdot: &Vector3<f64>) -> Vector3<f64> {
        0.5 * self.hdot * qdot + self.s * qdot
    }
}

/// `Ḣ` and the skew-symmetric `S` with `S_ij = ½ Σ_k (∂_j h_ik − ∂_i h_jk) q̇_k`.
pub fn coriolis_terms(p: &ModelParams, q: &Vector3<f64>, qdot: &Vector3<f64>) -> CoriolisTerms {
    let dh = inertia_partials(p, q);
    let mut hdot = Matrix3::zeros();
    for (k, d) in dh.iter().enumerate() {
        hdot += d * qdot[k];
    }
    let mut s = Matrix3::zeros();
    for i in 0..3 {
        for j in (i + 1)..3 {
            let mut acc = 0.0;
            for k in 0..3 {
                acc += (dh[j][(i, k)] - dh[i][(j, k)]) * qdot[k];
            }
            s[(i, j)] = 0.5 * acc;
            s[(j, i)] = -0.5 * acc;
        }
    }
    CoriolisTerms { hdot, s }
}

/// Gravity torque vector `g(q) = ∂P/∂q`.
pub fn gravity_vector(p: &ModelParams, q: &Vector3<f64>) -> Vector3<f64> {
    let (l1, l2, l3) = (&p.link1, &p.link2, &p.link3);
    let c1 = q[0].cos();
    let c12 = (q[0] + q[1]).cos();
    let c123 = (q[0] + q[1] + q[2]).cos();
    let g3 = l3.mass * l3.com * c123;
    let g2 = (l2.mass * l2.com + l3.mass * l2.length) * c12 + g3;
    let g1 = (l1.mass * l1.com + (l2.mass + l3.mass) * l1.length) * c1 + g2;
    Vector3::new(g1, g2, g3) * p.gravity
}

/// Joint accelerations of the free chain under joint torques `tau`.
pub fn forward_dynamics(p: &ModelParams, state: &JointState, tau: &Vector3<f64>) -> Result<Vector3<f64>> {
    let h = inertia_matrix(p, &state.q);
    let c = coriolis_terms(p, &state.q, &state.qdot).force(&state.qdot);
    let rhs = tau - c - gravity_vector(p, &state.q);
    h.cholesky()
        .map(|ch| ch.solve(&rhs))
        .ok_or_else(|| Error::Numerical("inertia matrix is not positive definite".into()))
}

/// Knee acceleration with the stance leg and thigh following a prescribed motion.
///
/// `tau3` is the knee actuator torque and `f_damp` the end-stop damping force;
/// both zero gives the unactuated (inertial) knee. The knee's own velocity
/// does not appear in the knee row of the chain dynamics.
pub fn knee_acceleration(p: &ModelParams, intact: &IntactState, q3: f64, _q3dot: f64, tau3: f64, f_damp: f64) -> f64 {
    let (l1, l2, l3) = (&p.link1, &p.link2, &p.link3);
    let [q1, q2] = intact.q;
    let [q1d, q2d] = intact.qdot;
    let [q1dd, q2dd] = intact.qddot;

    let mlg = l3.mass * l3.com;
    let h33 = p.knee_inertia();
    let h32 = h33 + mlg * l2.length * q3.cos();
    let h31 = h32 + mlg * l1.length * (q2 + q3).cos();
    let velocity = mlg * (l1.length * (q2 + q3).sin() * q1d * q1d + l2.length * q3.sin() * (q1d + q2d) * (q1d + q2d));
    let gravity = mlg * (q1 + q2 + q3).cos() * p.gravity;

    (tau3 + f_damp - h31 * q1dd - h32 * q2dd - velocity - gravity) / h33
}

/// Planar position of a point in the model frame (floor is `y = 0`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

/// Hip, knee and heel positions for a configuration.
pub fn joint_positions(p: &ModelParams, q: &Vector3<f64>) -> [Point; 3] {
    let a1 = q[0];
    let a2 = a1 + q[1];
    let a3 = a2 + q[2];
    let hip = Point {
        x: p.link1.length * a1.cos(),
        y: p.link1.length * a1.sin(),
    };
    let knee = Point {
        x: hip.x + p.link2.length * a2.cos(),
        y: hip.y + p.link2.length * a2.sin(),
    };
    let heel = Point {
        x: knee.x + p.link3.length * a3.cos(),
        y: knee.y + p.link3.length * a3.sin(),
    };
    [hip, knee, heel]
}

/// Distal end of the prosthetic shank; negative `y` means below the floor.
pub fn heel_position(p: &ModelParams, q: &Vector3<f64>) -> Point {
    joint_positions(p, q)[2]
}

/// Gravitational potential energy relative to the floor.
pub fn potential_energy(p: &ModelParams, q: &Vector3<f64>) -> f64 {
    let (l1, l2, l3) = (&p.link1, &p.link2, &p.link3);
    let s1 = q[0].sin();
    let s12 = (q[0] + q[1]).sin();
    let s123 = (q[0] + q[1] + q[2]).sin();
    let y1 = l1.com * s1;
    let y2 = l1.length * s1 + l2.com * s12;
    let y3 = l1.length * s1 + l2.length * s12 + l3.com * s123;
    p.gravity * (l1.mass * y1 + l2.mass * y2 + l3.mass * y3)
}

pub fn kinetic_energy(p: &ModelParams, state: &JointState) -> f64 {
    0.5 * state.qdot.dot(&(inertia_matrix(p, &state.q) * state.qdot))
}

pub fn total_energy(p: &ModelParams, state: &JointState) -> f64 {
    kinetic_energy(p, state) + potential_energy(p, &state.q)
}
