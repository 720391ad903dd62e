//! Parametric swing-phase generator used in place of motion-capture data.
//!
//! The intact joints follow low-order Fourier series in gait-cycle phase,
//! evaluated over the swing window that ends at heel contact (phase 1). The
//! knee follows a closed-form flexion bump that peaks in early swing and
//! returns to full extension at heel contact. Amplitudes grow linearly with
//! cadence, so the toe-off state carries the walking rate. This is a stand-in
//! for recorded gait, not a model of it.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DerivedTrial, GaitTrial};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GaitCondition {
    /// Constant-velocity walking.
    Steady,
    /// Final step before stopping: the intact limbs decelerate to rest.
    Termination,
    /// First step from standing: the intact limbs start at rest.
    Initiation,
}

impl std::str::FromStr for GaitCondition {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "steady" => Ok(Self::Steady),
            "termination" => Ok(Self::Termination),
            "initiation" => Ok(Self::Initiation),
            other => Err(Error::param("condition", format!("unknown condition {other:?}"))),
        }
    }
}

impl std::fmt::Display for GaitCondition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Steady => "steady",
            Self::Termination => "termination",
            Self::Initiation => "initiation",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthProfile {
    pub condition: GaitCondition,
    /// Swing duration as a fraction of the step period `60 / cadence`.
    pub swing_fraction: f64,
    /// Sampling rate (Hz).
    pub sample_rate: f64,
    /// Relative amplitude jitter per joint (uniform, ±).
    pub amplitude_jitter: f64,
    /// Gait-cycle phase jitter per intact joint (uniform, ±).
    pub phase_jitter: f64,
    /// Angle offset jitter per intact joint (rad, uniform, ±).
    pub offset_jitter: f64,
    /// Relative amplitude change of the intact joints per 100 bpm.
    pub intact_gain: f64,
    /// Relative amplitude change of the knee flexion per 100 bpm.
    pub knee_gain: f64,
}

impl Default for SynthProfile {
    fn default() -> Self {
        Self {
            condition: GaitCondition::Steady,
            swing_fraction: 0.8,
            sample_rate: 100.0,
            amplitude_jitter: 0.03,
            phase_jitter: 0.005,
            offset_jitter: 0.01,
            intact_gain: 0.8,
            knee_gain: 0.5,
        }
    }
}

impl SynthProfile {
    pub fn with_condition(condition: GaitCondition) -> Self {
        Self {
            condition,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.swing_fraction > 0.0 && self.swing_fraction < 2.0) {
            return Err(Error::param("swing_fraction", "must lie in (0, 2)"));
        }
        if !(self.sample_rate > 0.0) {
            return Err(Error::param("sample_rate", "must be positive"));
        }
        for (name, v) in [
            ("amplitude_jitter", self.amplitude_jitter),
            ("phase_jitter", self.phase_jitter),
            ("offset_jitter", self.offset_jitter),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::param(name, "must be finite and nonnegative"));
            }
        }
        Ok(())
    }
}

pub const MIN_CADENCE: f64 = 60.0;
pub const MAX_CADENCE: f64 = 140.0;

/// Per-joint random perturbation of one trial.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct Jitter {
    amplitude: f64,
    phase: f64,
    offset: f64,
}

/// Closed-form joint trajectories of one synthetic swing.
#[derive(Debug, Clone, PartialEq)]
pub struct SwingPattern {
    pub cadence: f64,
    pub condition: GaitCondition,
    /// Swing duration (s), aligned to the sampling grid.
    pub duration: f64,
    pub samples: usize,
    /// Swing window length in gait-cycle phase.
    window: f64,
    intact_scale: f64,
    knee_scale: f64,
    jitter: [Jitter; 3],
}

/// Angle, velocity and acceleration of the three joints at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointSample {
    pub q: [f64; 3],
    pub qdot: [f64; 3],
    pub qddot: [f64; 3],
}

impl SwingPattern {
    pub fn new(cadence: f64, profile: &SynthProfile, seed: u64) -> Result<Self> {
        if !(MIN_CADENCE..=MAX_CADENCE).contains(&cadence) {
            return Err(Error::param(
                "cadence",
                format!("{cadence} bpm is outside [{MIN_CADENCE}, {MAX_CADENCE}]"),
            ));
        }
        profile.validate()?;
        let step_period = 60.0 / cadence;
        let nominal = profile.swing_fraction * step_period;
        let samples = (nominal * profile.sample_rate).round() as usize + 1;
        let duration = (samples - 1) as f64 / profile.sample_rate;

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |scale: f64| {
            if scale > 0.0 {
                rng.random_range(-scale..=scale)
            } else {
                0.0
            }
        };
        let mut jitter = [Jitter::default(); 3];
        for (k, j) in jitter.iter_mut().enumerate() {
            j.amplitude = draw(profile.amplitude_jitter);
            if k < 2 {
                j.phase = draw(profile.phase_jitter);
                j.offset = draw(profile.offset_jitter);
            }
        }
        let rel = (cadence - 100.0) / 100.0;
        Ok(Self {
            cadence,
            condition: profile.condition,
            duration,
            samples,
            window: profile.swing_fraction / 2.0,
            intact_scale: 1.0 + profile.intact_gain * rel,
            knee_scale: 1.0 + profile.knee_gain * rel,
            jitter,
        })
    }

    /// Normalized time warp `w(s)` and its first two derivatives in `s`.
    fn warp(&self, s: f64) -> (f64, f64, f64) {
        match self.condition {
            GaitCondition::Steady => (s, 1.0, 0.0),
            GaitCondition::Termination => (s - 0.5 * s * s, 1.0 - s, -1.0),
            // unused: initiation has its own intact closed form
            GaitCondition::Initiation => (s, 1.0, 0.0),
        }
    }

    pub fn eval(&self, t: f64) -> JointSample {
        let s = t / self.duration;
        let (q1, q2) = match self.condition {
            GaitCondition::Initiation => self.initiation_intact(s),
            _ => self.periodic_intact(s),
        };
        let knee = self.knee(s);
        JointSample {
            q: [q1.0, q2.0, knee.0],
            qdot: [q1.1, q2.1, knee.1],
            qddot: [q1.2, q2.2, knee.2],
        }
    }

    /// Stance-leg and thigh angles from the cycle-phase Fourier series.
    fn periodic_intact(&self, s: f64) -> (Triple, Triple) {
        let (w, dw, ddw) = self.warp(s);
        let rate = self.window / self.duration;
        let phi = 1.0 - self.window + self.window * w;
        let dphi = rate * dw;
        let ddphi = rate * ddw / self.duration;
        let chain = |f: Triple| (f.0, f.1 * dphi, f.2 * dphi * dphi + f.1 * ddphi);

        // stance leg deviation from vertical, positive with the hip behind the foot
        let js = self.jitter[0];
        let a = 0.263 * self.intact_scale * (1.0 + js.amplitude);
        let x = 2.0 * PI * (phi + js.phase - 0.8);
        let stance = chain((
            -0.03 + js.offset - a * x.sin(),
            -a * 2.0 * PI * x.cos(),
            a * 4.0 * PI * PI * x.sin(),
        ));

        // thigh flexion from vertical
        let jt = self.jitter[1];
        let amp = self.intact_scale * (1.0 + jt.amplitude);
        let (b1, b2) = (0.30 * amp, 0.03 * amp);
        let y = 2.0 * PI * (phi + jt.phase - 0.9);
        let thigh = chain((
            0.13 + jt.offset + b1 * y.cos() + b2 * (2.0 * y).cos(),
            -2.0 * PI * (b1 * y.sin() + 2.0 * b2 * (2.0 * y).sin()),
            -4.0 * PI * PI * (b1 * y.cos() + 4.0 * b2 * (2.0 * y).cos()),
        ));
        to_joint_angles(stance, thigh)
    }

    /// Intact motion starting from rest and ending at walking speed.
    fn initiation_intact(&self, s: f64) -> (Triple, Triple) {
        let t = self.duration;
        // p(s) = s²(2 − s): p'(0) = 0, p(1) = 1, p'(1) = 1
        let p = (
            s * s * (2.0 - s),
            (4.0 * s - 3.0 * s * s) / t,
            (4.0 - 6.0 * s) / (t * t),
        );
        let ramp = |start: f64, end: f64| (start + (end - start) * p.0, (end - start) * p.1, (end - start) * p.2);
        let js = self.jitter[0];
        let jt = self.jitter[1];
        let stance = ramp(0.02 + js.offset, -0.30 * self.intact_scale * (1.0 + js.amplitude));
        let gain = self.intact_scale * (1.0 + jt.amplitude);
        let thigh = ramp(-0.05 + jt.offset, 0.40 * gain);
        // late-swing overshoot of hip flexion, s²(1 − s), as in steady walking
        let b = THIGH_OVERSHOOT * gain;
        let thigh = (
            thigh.0 + b * s * s * (1.0 - s),
            thigh.1 + b * (2.0 * s - 3.0 * s * s) / t,
            thigh.2 + b * (2.0 - 6.0 * s) / (t * t),
        );
        to_joint_angles(stance, thigh)
    }

    /// Knee angle `2π − (1 − s)²(k0 + k1 s + k2 s²)`.
    fn knee(&self, s: f64) -> Triple {
        let scale = self.knee_scale * (1.0 + self.jitter[2].amplitude);
        let (k0, k1, k2) = match self.condition {
            GaitCondition::Initiation => (0.25, 3.6, 2.8),
            _ => (0.65, 4.22, 3.657),
        };
        let (k0, k1, k2) = (k0 * scale, k1 * scale, k2 * scale);
        let u = 1.0 - s;
        let poly = k0 + k1 * s + k2 * s * s;
        let dpoly = k1 + 2.0 * k2 * s;
        let flex = u * u * poly;
        let dflex = -2.0 * u * poly + u * u * dpoly;
        let ddflex = 2.0 * poly - 4.0 * u * dpoly + u * u * 2.0 * k2;
        let t = self.duration;
        (2.0 * PI - flex, -dflex / t, -ddflex / (t * t))
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.duration / (self.samples - 1) as f64
    }
}

type Triple = (f64, f64, f64);

const THIGH_OVERSHOOT: f64 = 1.3;

/// `q1 = π/2 + stance`, `q1 + q2 = 3π/2 + thigh`.
fn to_joint_angles(stance: Triple, thigh: Triple) -> (Triple, Triple) {
    let q1 = (0.5 * PI + stance.0, stance.1, stance.2);
    let q2 = (1.5 * PI + thigh.0 - q1.0, thigh.1 - q1.1, thigh.2 - q1.2);
    (q1, q2)
}

/// Synthetic swing-phase trial sampled at the profile rate.
pub fn synth_gait(cadence: f64, profile: &SynthProfile, seed: u64) -> Result<GaitTrial> {
    Ok(synth_gait_exact(cadence, profile, seed)?.base)
}

/// Synthetic trial together with its analytic velocities and accelerations.
pub fn synth_gait_exact(cadence: f64, profile: &SynthProfile, seed: u64) -> Result<DerivedTrial> {
    let pattern = SwingPattern::new(cadence, profile, seed)?;
    let n = pattern.samples;
    let mut q: [Vec<f64>; 3] = Default::default();
    let mut qd: [Vec<f64>; 3] = Default::default();
    let mut qdd: [Vec<f64>; 3] = Default::default();
    for i in 0..n {
        let s = pattern.eval(pattern.time(i));
        for j in 0..3 {
            q[j].push(s.q[j]);
            qd[j].push(s.qdot[j]);
            qdd[j].push(s.qddot[j]);
        }
    }
    let trial = GaitTrial::new(1.0 / profile.sample_rate, 0.0, q)?.with_cadence(cadence);
    DerivedTrial::with_exact_derivatives(trial, qd, qdd)
}
