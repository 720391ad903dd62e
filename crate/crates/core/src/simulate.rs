//! PD-tracked swing of the prosthetic knee with end-stop damping and lock.

use std::fmt::Write as _;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::adaptive::AdaptiveRegressor;
use crate::dynamics::{heel_position, knee_acceleration, ModelParams};
use crate::error::{Error, Result};
use crate::gait::{detect_events, fmt17, DerivedTrial, GaitEvents};
use crate::inertial::{knot_times, InertialTrajectory, KneeState};
use crate::ode::{rk4_step, substep_count};
use crate::spline::CubicSpline;
use crate::synergy::LinearKneeMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerGains {
    /// Proportional gain (N·m/rad).
    pub kp: f64,
    /// Derivative gain (N·m·s/rad).
    pub kd: f64,
}

impl Default for ControllerGains {
    fn default() -> Self {
        Self { kp: 60.0, kd: 4.0 }
    }
}

impl ControllerGains {
    pub const OFF: Self = Self { kp: 0.0, kd: 0.0 };

    /// `kp > 0`, `kd ≥ 0`; the all-zero pair is also accepted (control off).
    pub fn validate(&self) -> Result<()> {
        if !(self.kp.is_finite() && self.kd.is_finite()) || self.kd < 0.0 || self.kp < 0.0 {
            return Err(Error::param(
                "gains",
                format!("kp = {}, kd = {} must be finite and nonnegative", self.kp, self.kd),
            ));
        }
        if self.kp == 0.0 && self.kd != 0.0 {
            return Err(Error::param("gains.kp", "must be positive when kd is set"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DampingParams {
    /// Damping gain (N·m·s/rad).
    pub kf: f64,
    /// Sigmoid slope (1/rad).
    pub steepness: f64,
    /// Extension limit (rad).
    pub limit: f64,
    /// Clamp the knee at the limit once it gets there while extending.
    pub lock: bool,
}

impl Default for DampingParams {
    fn default() -> Self {
        Self {
            kf: 30.0,
            steepness: 300.0,
            limit: 2.0 * std::f64::consts::PI,
            lock: true,
        }
    }
}

impl DampingParams {
    pub const OFF: Self = Self {
        kf: 0.0,
        steepness: 300.0,
        limit: 2.0 * std::f64::consts::PI,
        lock: false,
    };

    pub fn validate(&self) -> Result<()> {
        if !(self.kf >= 0.0 && self.kf.is_finite()) {
            return Err(Error::param("damping.kf", "must be finite and nonnegative"));
        }
        if !(self.steepness > 0.0 && self.steepness.is_finite()) {
            return Err(Error::param("damping.steepness", "must be positive"));
        }
        if !self.limit.is_finite() {
            return Err(Error::param("damping.limit", "must be finite"));
        }
        Ok(())
    }
}

/// End-stop damping `Kf·(σ(k·(limit − q3)) − 1)·q̇3` with the logistic σ.
pub fn damping_force(q3: f64, q3dot: f64, d: &DampingParams) -> f64 {
    let z = d.steepness * (d.limit - q3);
    // σ(z) − 1 = −σ(−z), evaluated without overflow on either side
    let minus = if z >= 0.0 {
        let e = (-z).exp();
        -e / (1.0 + e)
    } else {
        -1.0 / (1.0 + z.exp())
    };
    d.kf * minus * q3dot
}

/// `τ = −Kp·(q3 − q3d) − Kd·(q̇3 − q̇3d)`.
pub fn pd_torque(state: &KneeState, desired: &KneeState, g: &ControllerGains) -> f64 {
    -g.kp * (state.q3 - desired.q3) - g.kd * (state.q3dot - desired.q3dot)
}

/// Where the desired knee state comes from.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum DesiredSource {
    Fixed(LinearKneeMap),
    /// Realized once from the intact state at the first sample.
    Adaptive(AdaptiveRegressor),
    Replay(InertialTrajectory),
}

enum Desired {
    Map(LinearKneeMap),
    Replay(CubicSpline, CubicSpline),
}

/// One closed-loop swing.
#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub times: Vec<f64>,
    pub states: Vec<KneeState>,
    pub desired: Vec<KneeState>,
    /// Actuator torque (N·m), zero once locked.
    pub torque: Vec<f64>,
    pub damping: Vec<f64>,
    pub locked: Vec<bool>,
    pub lock_time: Option<f64>,
    /// The map used when the source was a regressor.
    pub realized: Option<LinearKneeMap>,
}

/// Column names of [`SimResult::to_csv`].
pub const SIM_HEADER: &str = "t,q3,q3dot,q3d,q3d_dot,tau,f_damp,locked";

impl SimResult {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn angles(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.q3).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{SIM_HEADER}\n");
        for i in 0..self.len() {
            let (s, d) = (self.states[i], self.desired[i]);
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                fmt17(self.times[i]),
                fmt17(s.q3),
                fmt17(s.q3dot),
                fmt17(d.q3),
                fmt17(d.q3dot),
                fmt17(self.torque[i]),
                fmt17(self.damping[i]),
                u8::from(self.locked[i])
            );
        }
        out
    }

    /// Events of the simulated knee on the intact trial's grid.
    pub fn events(&self, intact: &DerivedTrial) -> Result<GaitEvents> {
        let mut base = intact.base.clone();
        base.q[2] = self.angles();
        let qd: Vec<f64> = self.states.iter().map(|s| s.q3dot).collect();
        let d = DerivedTrial::with_exact_derivatives(
            base,
            [intact.qdot[0].clone(), intact.qdot[1].clone(), qd],
            [
                intact.qddot[0].clone(),
                intact.qddot[1].clone(),
                vec![0.0; intact.len()],
            ],
        )?;
        detect_events(&d)
    }
}

/// Simulates the knee over the intact trial's span from `ic` at its first sample.
///
/// RK4 with at most `dt` per substep, the intact states interpolated between
/// samples; output is on the trial grid. With zero gains and
/// [`DampingParams::OFF`] this is exactly the forward inertial integration.
#[allow(clippy::too_many_arguments)]
pub fn simulate_swing(
    p: &ModelParams,
    intact: &DerivedTrial,
    source: &DesiredSource,
    gains: &ControllerGains,
    damping: &DampingParams,
    ic: KneeState,
    dt: f64,
) -> Result<SimResult> {
    gains.validate()?;
    damping.validate()?;
    if !(dt > 0.0) {
        return Err(Error::param("dt", "integration step must be positive"));
    }
    if !ic.is_finite() {
        return Err(Error::param("initial state", "must be finite"));
    }
    let interp = intact.interpolator()?;
    let (realized, desired) = match source {
        DesiredSource::Fixed(m) => (None, Desired::Map(*m)),
        DesiredSource::Adaptive(r) => {
            let m = r.realize_a(&intact.toe_off_state());
            (Some(m), Desired::Map(m))
        }
        DesiredSource::Replay(traj) => {
            let (a, v) = traj.interpolants()?;
            (None, Desired::Replay(a, v))
        }
    };
    let desired_at = |t: f64| -> KneeState {
        match &desired {
            Desired::Map(m) => m.predict(&interp.theta12(t)),
            Desired::Replay(a, v) => KneeState::new(a.eval(t), v.eval(t)),
        }
    };
    let mut rhs = |t: f64, x: &[f64; 2]| -> [f64; 2] {
        let s = KneeState::new(x[0], x[1]);
        let tau = if gains.kp == 0.0 && gains.kd == 0.0 {
            0.0
        } else {
            pd_torque(&s, &desired_at(t), gains)
        };
        let f = if damping.kf == 0.0 {
            0.0
        } else {
            damping_force(x[0], x[1], damping)
        };
        [x[1], knee_acceleration(p, &interp.at(t), x[0], x[1], tau, f)]
    };

    let (t_start, t_end) = intact.span();
    let knots = knot_times(&intact.base, t_start, t_end);
    let mut out = SimResult {
        times: Vec::with_capacity(knots.len()),
        states: Vec::with_capacity(knots.len()),
        desired: Vec::with_capacity(knots.len()),
        torque: Vec::with_capacity(knots.len()),
        damping: Vec::with_capacity(knots.len()),
        locked: Vec::with_capacity(knots.len()),
        lock_time: None,
        realized,
    };
    let mut x = ic.to_array();
    let record = |out: &mut SimResult, t: f64, x: [f64; 2]| {
        let s = KneeState::from_array(x);
        let d = desired_at(t);
        let locked = out.lock_time.is_some();
        out.times.push(t);
        out.states.push(s);
        out.desired.push(d);
        out.torque.push(if locked { 0.0 } else { pd_torque(&s, &d, gains) });
        out.damping.push(if locked {
            0.0
        } else {
            damping_force(s.q3, s.q3dot, damping)
        });
        out.locked.push(locked);
    };
    record(&mut out, knots[0], x);
    for w in knots.windows(2) {
        let (a, b) = (w[0], w[1]);
        if out.lock_time.is_none() {
            let n = substep_count(b - a, dt);
            let h = (b - a) / n as f64;
            for k in 0..n {
                let t = a + k as f64 * h;
                x = rk4_step(&mut rhs, t, &x, h);
                if !(x[0].is_finite() && x[1].is_finite()) {
                    return Err(Error::Numerical(format!(
                        "knee state diverged at t = {:.4} s (kp = {}, kd = {})",
                        t + h,
                        gains.kp,
                        gains.kd
                    )));
                }
                if damping.lock && x[0] >= damping.limit && x[1] > 0.0 {
                    x = [damping.limit, 0.0];
                    out.lock_time = Some(t + h);
                    break;
                }
            }
        }
        record(&mut out, b, x);
    }
    Ok(out)
}

/// Lowest heel height over the swing; negative means the foot hit the floor.
pub fn min_clearance(r: &SimResult, p: &ModelParams, intact: &DerivedTrial) -> f64 {
    (0..r.len().min(intact.len()))
        .map(|i| {
            heel_position(
                p,
                &Vector3::new(intact.base.q[0][i], intact.base.q[1][i], r.states[i].q3),
            )
            .y
        })
        .fold(f64::INFINITY, f64::min)
}

pub fn final_knee_angle(r: &SimResult) -> f64 {
    r.states.last().map_or(f64::NAN, |s| s.q3)
}

/// Peak absolute and RMS torque over one phase.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TorqueStats {
    pub peak: f64,
    pub rms: f64,
}

/// Torque statistics over the initial, mid and terminal swing, from the
/// samples inside each closed phase interval.
pub fn torque_phase_stats(r: &SimResult, events: &GaitEvents) -> Result<[TorqueStats; 3]> {
    events.validate()?;
    let tol = 1e-9;
    let mut out = [TorqueStats::default(); 3];
    for (k, (a, b)) in events.phases().into_iter().enumerate() {
        let taus: Vec<f64> = r
            .times
            .iter()
            .zip(&r.torque)
            .filter(|(t, _)| **t >= a - tol && **t <= b + tol)
            .map(|(_, &tau)| tau)
            .collect();
        if taus.is_empty() {
            return Err(Error::DegenerateTrial(format!("no samples in phase [{a:.3}, {b:.3}]")));
        }
        out[k] = TorqueStats {
            peak: taus.iter().fold(0.0, |m, v| m.max(v.abs())),
            rms: (taus.iter().map(|v| v * v).sum::<f64>() / taus.len() as f64).sqrt(),
        };
    }
    Ok(out)
}
