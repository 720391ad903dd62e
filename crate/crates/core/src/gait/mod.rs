//! Swing-phase gait trials: data model, CSV ingestion, synthetic generation,
//! smoothing/differentiation and event detection.

mod csv_io;
mod diff;
mod events;
mod synth;

pub(crate) use csv_io::fmt17;
pub use csv_io::{load_csv, load_meta, write_csv, write_meta, TrialMeta};
pub use diff::{differentiate, Smoothing, DEFAULT_SMOOTHING_WINDOW};
pub use events::detect_events;
pub use synth::{synth_gait, synth_gait_exact, GaitCondition, SwingPattern, SynthProfile, MAX_CADENCE, MIN_CADENCE};

use std::f64::consts::PI;

use crate::dynamics::IntactState;
use crate::error::{Error, Result};
use crate::spline::CubicSpline;

/// Uniformly sampled joint angles for one swing phase.
#[derive(Debug, Clone, PartialEq)]
pub struct GaitTrial {
    /// Sample interval (s).
    pub dt: f64,
    /// Time of the first sample (s).
    pub t0: f64,
    /// Angle series `q1`, `q2`, `q3` (rad).
    pub q: [Vec<f64>; 3],
    /// Cadence label in steps per minute, if known.
    pub cadence: Option<f64>,
    pub meta: TrialMeta,
    pub events: Option<GaitEvents>,
}

impl GaitTrial {
    pub fn new(dt: f64, t0: f64, q: [Vec<f64>; 3]) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::param("dt", "sample interval must be positive"));
        }
        if !t0.is_finite() {
            return Err(Error::param("t0", "start time must be finite"));
        }
        let n = q[0].len();
        if q.iter().any(|s| s.len() != n) {
            return Err(Error::param("q", "angle series have different lengths"));
        }
        if n < 2 {
            return Err(Error::param("q", "a trial needs at least two samples"));
        }
        if q.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::param("q", "non-finite angle"));
        }
        Ok(Self {
            dt,
            t0,
            q,
            cadence: None,
            meta: TrialMeta::default(),
            events: None,
        })
    }

    pub fn with_cadence(mut self, cadence: f64) -> Self {
        self.cadence = Some(cadence);
        self
    }

    pub fn len(&self) -> usize {
        self.q[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.time(i)).collect()
    }

    pub fn end_time(&self) -> f64 {
        self.time(self.len() - 1)
    }

    pub fn q1(&self) -> &[f64] {
        &self.q[0]
    }

    pub fn q2(&self) -> &[f64] {
        &self.q[1]
    }

    pub fn q3(&self) -> &[f64] {
        &self.q[2]
    }

    /// Index of the sample nearest to `t`, clamped to the trial.
    pub fn nearest_index(&self, t: f64) -> usize {
        let i = ((t - self.t0) / self.dt).round();
        (i.max(0.0) as usize).min(self.len() - 1)
    }

    /// Knee angles stay in `(π, 2π + 0.1)` under the extension-at-2π convention.
    pub fn check_knee_range(&self) -> Result<()> {
        match self.q3().iter().position(|&v| !(v > PI && v < 2.0 * PI + 0.1)) {
            Some(i) => Err(Error::DegenerateTrial(format!(
                "knee angle {:.4} at sample {i} is outside (π, 2π + 0.1)",
                self.q3()[i]
            ))),
            None => Ok(()),
        }
    }

    /// Same trial with every time shifted by `offset`.
    pub fn time_shifted(&self, offset: f64) -> Self {
        let mut out = self.clone();
        out.t0 += offset;
        if let Some(ev) = &mut out.events {
            *ev = ev.shifted(offset);
        }
        out
    }
}

/// Swing-phase event times (s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaitEvents {
    pub toe_off: f64,
    /// Maximum knee flexion, end of the initial swing.
    pub max_flexion: f64,
    /// Maximum knee extension velocity, end of the mid-swing.
    pub max_ext_velocity: f64,
    pub heel_contact: f64,
}

impl GaitEvents {
    pub fn validate(&self) -> Result<()> {
        let ok = self.toe_off <= self.max_flexion
            && self.max_flexion < self.max_ext_velocity
            && self.max_ext_velocity <= self.heel_contact;
        if ok {
            Ok(())
        } else {
            Err(Error::DegenerateTrial(format!(
                "event order violated: toe-off {:.3}, max flexion {:.3}, max extension velocity {:.3}, heel contact {:.3}",
                self.toe_off, self.max_flexion, self.max_ext_velocity, self.heel_contact
            )))
        }
    }

    pub fn shifted(&self, offset: f64) -> Self {
        Self {
            toe_off: self.toe_off + offset,
            max_flexion: self.max_flexion + offset,
            max_ext_velocity: self.max_ext_velocity + offset,
            heel_contact: self.heel_contact + offset,
        }
    }

    /// `(start, end)` of the initial, mid and terminal swing.
    pub fn phases(&self) -> [(f64, f64); 3] {
        [
            (self.toe_off, self.max_flexion),
            (self.max_flexion, self.max_ext_velocity),
            (self.max_ext_velocity, self.heel_contact),
        ]
    }
}

pub const PHASE_NAMES: [&str; 3] = ["initial", "mid", "terminal"];

/// A trial with joint velocities and accelerations.
#[derive(Debug, Clone)]
pub struct DerivedTrial {
    pub base: GaitTrial,
    pub qdot: [Vec<f64>; 3],
    pub qddot: [Vec<f64>; 3],
    pub smoothing: Smoothing,
}

impl DerivedTrial {
    /// Wraps externally known (e.g. analytic) derivatives.
    pub fn with_exact_derivatives(base: GaitTrial, qdot: [Vec<f64>; 3], qddot: [Vec<f64>; 3]) -> Result<Self> {
        let n = base.len();
        if qdot.iter().chain(qddot.iter()).any(|s| s.len() != n) {
            return Err(Error::param(
                "derivatives",
                "derivative series length differs from the trial",
            ));
        }
        Ok(Self {
            base,
            qdot,
            qddot,
            smoothing: Smoothing::Exact,
        })
    }

    pub fn len(&self) -> usize {
        self.base.len()
    }

    pub fn is_empty(&self) -> bool {
        self.base.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.base.time(i)
    }

    pub fn span(&self) -> (f64, f64) {
        (self.base.t0, self.base.end_time())
    }

    pub fn intact_at(&self, i: usize) -> IntactState {
        IntactState {
            q: [self.base.q[0][i], self.base.q[1][i]],
            qdot: [self.qdot[0][i], self.qdot[1][i]],
            qddot: [self.qddot[0][i], self.qddot[1][i]],
        }
    }

    /// Regressor `[q1, q̇1, q2, q̇2, 1]` at sample `i`.
    pub fn theta12(&self, i: usize) -> [f64; 5] {
        [
            self.base.q[0][i],
            self.qdot[0][i],
            self.base.q[1][i],
            self.qdot[1][i],
            1.0,
        ]
    }

    /// Regressor at toe-off (the first sample).
    pub fn toe_off_state(&self) -> [f64; 5] {
        self.theta12(0)
    }

    /// Knee state `[q3, q̇3]` at sample `i`.
    pub fn knee_at(&self, i: usize) -> [f64; 2] {
        [self.base.q[2][i], self.qdot[2][i]]
    }

    pub fn interpolator(&self) -> Result<IntactInterpolator> {
        IntactInterpolator::new(self)
    }
}

/// Off-grid evaluation of the intact states by natural cubic splines.
#[derive(Debug, Clone)]
pub struct IntactInterpolator {
    splines: [CubicSpline; 6],
    span: (f64, f64),
}

impl IntactInterpolator {
    pub fn new(d: &DerivedTrial) -> Result<Self> {
        let b = &d.base;
        let mk = |y: &[f64]| CubicSpline::uniform(b.t0, b.dt, y);
        Ok(Self {
            splines: [
                mk(&b.q[0])?,
                mk(&b.q[1])?,
                mk(&d.qdot[0])?,
                mk(&d.qdot[1])?,
                mk(&d.qddot[0])?,
                mk(&d.qddot[1])?,
            ],
            span: d.span(),
        })
    }

    pub fn at(&self, t: f64) -> IntactState {
        let s = &self.splines;
        IntactState {
            q: [s[0].eval(t), s[1].eval(t)],
            qdot: [s[2].eval(t), s[3].eval(t)],
            qddot: [s[4].eval(t), s[5].eval(t)],
        }
    }

    pub fn theta12(&self, t: f64) -> [f64; 5] {
        let st = self.at(t);
        [st.q[0], st.qdot[0], st.q[1], st.qdot[1], 1.0]
    }

    pub fn span(&self) -> (f64, f64) {
        self.span
    }
}
