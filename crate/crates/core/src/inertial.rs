//! Zero-torque ("inertial") knee motion driven by the recorded intact limbs.
//!
//! The knee row of the chain dynamics, with the stance leg and thigh
//! prescribed, is a two-state ODE in `[q3, q̇3]`. A trajectory that passes
//! through a chosen state at an interior time is built from a reverse-time
//! integration back to the start of the span and a forward integration to its
//! end. The via time is chosen in the mid-swing to best match the reference
//! knee angle.

use rayon::prelude::*;

use crate::dynamics::{knee_acceleration, ModelParams};
use crate::error::{Error, Result};
use crate::gait::{DerivedTrial, GaitEvents, GaitTrial, IntactInterpolator};
use crate::ode::march_knots;
use crate::spline::CubicSpline;

/// RK4 substeps per sample interval.
pub const DEFAULT_SUBSTEPS: usize = 10;

const SPAN_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KneeState {
    /// Knee angle (rad).
    pub q3: f64,
    /// Knee velocity (rad/s).
    pub q3dot: f64,
}

impl KneeState {
    pub const fn new(q3: f64, q3dot: f64) -> Self {
        Self { q3, q3dot }
    }

    pub fn is_finite(&self) -> bool {
        self.q3.is_finite() && self.q3dot.is_finite()
    }

    pub(crate) fn to_array(self) -> [f64; 2] {
        [self.q3, self.q3dot]
    }

    pub(crate) fn from_array(x: [f64; 2]) -> Self {
        Self::new(x[0], x[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    /// Reverse-time integration from the state given at the end of the range.
    Backward,
}

/// Knee states at increasing times.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct KneeSeries {
    pub times: Vec<f64>,
    pub states: Vec<KneeState>,
}

impl KneeSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn angles(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.q3).collect()
    }

    pub fn velocities(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.q3dot).collect()
    }

    pub fn first(&self) -> Option<&KneeState> {
        self.states.first()
    }

    pub fn last(&self) -> Option<&KneeState> {
        self.states.last()
    }
}

/// Right-hand side of the unactuated knee ODE for one trial.
pub(crate) struct KneeField<'a> {
    pub params: &'a ModelParams,
    pub intact: IntactInterpolator,
}

impl<'a> KneeField<'a> {
    pub fn new(params: &'a ModelParams, d: &DerivedTrial) -> Result<Self> {
        Ok(Self {
            params,
            intact: d.interpolator()?,
        })
    }

    pub fn rhs(&self, t: f64, x: &[f64; 2]) -> [f64; 2] {
        let intact = self.intact.at(t);
        [x[1], knee_acceleration(self.params, &intact, x[0], x[1], 0.0, 0.0)]
    }

    fn check_range(&self, start: f64, end: f64) -> Result<()> {
        let (a, b) = self.intact.span();
        if start < a - SPAN_TOL || end > b + SPAN_TOL || !(start <= end) {
            return Err(Error::OutOfSpan {
                start,
                end,
                span_start: a,
                span_end: b,
            });
        }
        Ok(())
    }

    /// Integrates from `knots[0]` through every knot (ascending or descending).
    fn march(&self, knots: &[f64], ic: KneeState, max_step: f64) -> Vec<KneeState> {
        march_knots(knots, ic.to_array(), max_step, |t, x| self.rhs(t, x))
            .into_iter()
            .map(KneeState::from_array)
            .collect()
    }
}

/// `start`, every trial sample strictly inside `(start, end)`, and `end`.
pub(crate) fn knot_times(trial: &GaitTrial, start: f64, end: f64) -> Vec<f64> {
    let mut knots = vec![start];
    let eps = 1e-9 * trial.dt;
    let first = ((start - trial.t0) / trial.dt).floor().max(0.0) as usize;
    for i in first..trial.len() {
        let t = trial.time(i);
        if t > start + eps && t < end - eps {
            knots.push(t);
        }
    }
    if end > start {
        knots.push(end);
    }
    knots
}

/// Integrates the unactuated knee over `[t_start, t_end]` with classic RK4.
///
/// `Forward` starts from `ic` at `t_start`; `Backward` starts from `ic` at
/// `t_end` and runs in reversal time. The result holds the state at the range
/// ends and at every trial sample in between, in increasing time, with at
/// most `dt` between RK4 substeps. Intact states between samples come from
/// cubic-spline interpolation of the trial.
pub fn integrate_knee(
    p: &ModelParams,
    d: &DerivedTrial,
    ic: KneeState,
    t_start: f64,
    t_end: f64,
    direction: Direction,
    dt: f64,
) -> Result<KneeSeries> {
    if !(dt > 0.0) {
        return Err(Error::param("dt", "integration step must be positive"));
    }
    let field = KneeField::new(p, d)?;
    field.check_range(t_start, t_end)?;
    Ok(integrate_with(&field, &d.base, ic, t_start, t_end, direction, dt))
}

fn integrate_with(
    field: &KneeField,
    trial: &GaitTrial,
    ic: KneeState,
    t_start: f64,
    t_end: f64,
    direction: Direction,
    dt: f64,
) -> KneeSeries {
    let mut times = knot_times(trial, t_start, t_end);
    let states = match direction {
        Direction::Forward => field.march(&times, ic, dt),
        Direction::Backward => {
            times.reverse();
            let mut s = field.march(&times, ic, dt);
            times.reverse();
            s.reverse();
            s
        }
    };
    KneeSeries { times, states }
}

/// A knee trajectory through a via state.
#[derive(Debug, Clone, PartialEq)]
pub struct InertialTrajectory {
    /// Via time `T0` (s).
    pub t0_anchor: f64,
    /// State imposed at `T0`.
    pub via: KneeState,
    pub series: KneeSeries,
}

impl InertialTrajectory {
    pub fn times(&self) -> &[f64] {
        &self.series.times
    }

    pub fn states(&self) -> &[KneeState] {
        &self.series.states
    }

    pub fn angles(&self) -> Vec<f64> {
        self.series.angles()
    }

    /// State at the via time.
    pub fn at_anchor(&self) -> KneeState {
        self.via
    }

    /// True when the trajectory is sampled exactly on the trial grid.
    pub fn on_grid(&self, trial: &GaitTrial) -> bool {
        self.series.len() == trial.len()
            && self
                .series
                .times
                .iter()
                .enumerate()
                .all(|(i, &t)| (t - trial.time(i)).abs() <= 1e-9 * trial.dt)
    }

    /// The trial with its knee angle replaced by this trajectory.
    pub fn to_gait_trial(&self, trial: &GaitTrial) -> Result<GaitTrial> {
        if !self.on_grid(trial) {
            return Err(Error::param("trajectory", "not sampled on the trial grid"));
        }
        let mut out = trial.clone();
        out.q[2] = self.angles();
        out.events = None;
        Ok(out)
    }

    /// Cubic-spline interpolants of angle and velocity.
    pub fn interpolants(&self) -> Result<(CubicSpline, CubicSpline)> {
        Ok((
            CubicSpline::natural(&self.series.times, &self.series.angles())?,
            CubicSpline::natural(&self.series.times, &self.series.velocities())?,
        ))
    }
}

/// Solves the via-point problem on `span = (t_s, t_f)` with `x(t_q) = via`.
pub fn solve_via_point(
    p: &ModelParams,
    d: &DerivedTrial,
    via: KneeState,
    t_q: f64,
    span: (f64, f64),
    dt: f64,
) -> Result<InertialTrajectory> {
    if !(dt > 0.0) {
        return Err(Error::param("dt", "integration step must be positive"));
    }
    let field = KneeField::new(p, d)?;
    field.check_range(span.0, span.1)?;
    solve_via_with(&field, &d.base, via, t_q, span, dt)
}

fn solve_via_with(
    field: &KneeField,
    trial: &GaitTrial,
    via: KneeState,
    t_q: f64,
    span: (f64, f64),
    dt: f64,
) -> Result<InertialTrajectory> {
    let (t_s, t_f) = span;
    if !(t_q >= t_s && t_q <= t_f) {
        return Err(Error::param(
            "via time",
            format!("{t_q} lies outside the span [{t_s}, {t_f}]"),
        ));
    }
    let back = integrate_with(field, trial, via, t_s, t_q, Direction::Backward, dt);
    let fwd = integrate_with(field, trial, via, t_q, t_f, Direction::Forward, dt);

    let mut series = back;
    // both legs share the via state; keep it once
    if let Some(last) = series.states.last_mut() {
        *last = via;
    }
    series.times.extend_from_slice(&fwd.times[1..]);
    series.states.extend_from_slice(&fwd.states[1..]);
    if series.times.len() >= 2 && series.times[0] == series.times[1] {
        series.times.remove(0);
        series.states.remove(0);
    }
    Ok(InertialTrajectory {
        t0_anchor: t_q,
        via,
        series,
    })
}

/// Outcome of the via-time search.
#[derive(Debug, Clone)]
pub struct T0Search {
    pub t0: f64,
    pub trajectory: InertialTrajectory,
    /// Squared-error integral over the mid-swing at `t0`.
    pub cost: f64,
    /// Every evaluated `(t0, cost)` pair.
    pub candidates: Vec<(f64, f64)>,
}

/// Picks the via time in `[t1, t2]` that best matches the reference knee angle
/// over the mid-swing.
///
/// Candidates are trial samples every `grid_step` (rounded to a whole number
/// of samples, at least one); the via state is the reference angle and
/// velocity at the candidate. The earliest minimizer wins ties.
pub fn optimize_t0(
    p: &ModelParams,
    d: &DerivedTrial,
    events: &GaitEvents,
    dt: f64,
    grid_step: f64,
) -> Result<T0Search> {
    events.validate()?;
    if !(dt > 0.0) {
        return Err(Error::param("dt", "integration step must be positive"));
    }
    if !(grid_step > 0.0) {
        return Err(Error::param("grid_step", "must be positive"));
    }
    let field = KneeField::new(p, d)?;
    let trial = &d.base;
    let span = d.span();
    let i1 = trial.nearest_index(events.max_flexion);
    let i2 = trial.nearest_index(events.max_ext_velocity);
    if i1 >= i2 {
        return Err(Error::DegenerateTrial(
            "maximum flexion does not precede maximum extension velocity".into(),
        ));
    }
    let stride = ((grid_step / trial.dt).round() as usize).max(1);
    let idx: Vec<usize> = (i1..=i2).step_by(stride).collect();
    let times = trial.times();
    let reference = trial.q3();

    let evaluated: Vec<Result<(f64, InertialTrajectory)>> = idx
        .par_iter()
        .map(|&i| {
            let via = KneeState::new(reference[i], d.qdot[2][i]);
            let traj = solve_via_with(&field, trial, via, trial.time(i), span, dt)?;
            let cost = squared_error(&times, reference, &traj.angles(), i1, i2);
            Ok((cost, traj))
        })
        .collect();

    let mut candidates = Vec::with_capacity(idx.len());
    let mut best: Option<(usize, f64)> = None;
    for (k, r) in evaluated.iter().enumerate() {
        let cost = match r {
            Ok((c, _)) => *c,
            Err(e) => return Err(Error::Numerical(e.to_string())),
        };
        if !cost.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite matching cost at t0 = {}",
                trial.time(idx[k])
            )));
        }
        candidates.push((trial.time(idx[k]), cost));
        if best.is_none_or(|(_, c)| cost < c) {
            best = Some((k, cost));
        }
    }
    let (k, cost) = best.expect("at least one candidate");
    let trajectory = evaluated.into_iter().nth(k).expect("index in range")?.1;
    Ok(T0Search {
        t0: trial.time(idx[k]),
        trajectory,
        cost,
        candidates,
    })
}

/// Trapezoid integral of `(a − b)²` between samples `i1` and `i2`.
fn squared_error(times: &[f64], a: &[f64], b: &[f64], i1: usize, i2: usize) -> f64 {
    (i1..i2)
        .map(|i| {
            let e0 = a[i] - b[i];
            let e1 = a[i + 1] - b[i + 1];
            0.5 * (times[i + 1] - times[i]) * (e0 * e0 + e1 * e1)
        })
        .sum()
}

/// Mean absolute difference between two series over `[t1, t2]`.
///
/// Both series share the grid `times`; partial intervals at the ends are
/// linearly interpolated before the trapezoid rule is applied.
pub fn phase_error(times: &[f64], reference: &[f64], generated: &[f64], t1: f64, t2: f64) -> Result<f64> {
    if times.len() != reference.len() || times.len() != generated.len() {
        return Err(Error::param("series", "length mismatch"));
    }
    if !(t2 > t1) {
        return Err(Error::param("phase", format!("empty interval [{t1}, {t2}]")));
    }
    let n = times.len();
    if n < 2 || t1 < times[0] - SPAN_TOL || t2 > times[n - 1] + SPAN_TOL {
        return Err(Error::OutOfSpan {
            start: t1,
            end: t2,
            span_start: times[0],
            span_end: times[n.saturating_sub(1)],
        });
    }
    let err: Vec<f64> = reference.iter().zip(generated).map(|(r, g)| (r - g).abs()).collect();
    let at = |t: f64| -> f64 {
        let i = times.partition_point(|&x| x <= t).clamp(1, n - 1) - 1;
        let w = (t - times[i]) / (times[i + 1] - times[i]);
        err[i] + w * (err[i + 1] - err[i])
    };
    let mut pts: Vec<(f64, f64)> = vec![(t1, at(t1))];
    for i in 0..n {
        if times[i] > t1 && times[i] < t2 {
            pts.push((times[i], err[i]));
        }
    }
    pts.push((t2, at(t2)));
    let integral: f64 = pts
        .windows(2)
        .map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1))
        .sum();
    Ok(integral / (t2 - t1))
}

/// Mean absolute knee-angle error of `trajectory` in the initial, mid and
/// terminal swing.
pub fn phase_errors(d: &DerivedTrial, events: &GaitEvents, trajectory: &InertialTrajectory) -> Result<[f64; 3]> {
    let times = trajectory.times();
    let reference: Vec<f64> = times
        .iter()
        .map(|&t| {
            let i = d.base.nearest_index(t);
            d.base.q3()[i]
        })
        .collect();
    if !trajectory.on_grid(&d.base) {
        return Err(Error::param("trajectory", "not sampled on the trial grid"));
    }
    let mut out = [0.0; 3];
    for (k, (a, b)) in events.phases().into_iter().enumerate() {
        out[k] = phase_error(times, &reference, &trajectory.angles(), a, b)?;
    }
    Ok(out)
}

/// Derivatives, events and the fitted inertial motion of one trial.
#[derive(Debug, Clone)]
pub struct TrialAnalysis {
    pub derived: DerivedTrial,
    pub events: GaitEvents,
    pub search: T0Search,
    /// Mean absolute knee error per swing phase.
    pub phase_errors: [f64; 3],
}

impl TrialAnalysis {
    pub fn trajectory(&self) -> &InertialTrajectory {
        &self.search.trajectory
    }
}

/// Smooths and differentiates `trial`, detects its events and fits the
/// inertial motion with `substeps` RK4 steps per sample and a one-sample T0 grid.
pub fn analyze_trial(p: &ModelParams, trial: &GaitTrial, window: usize, substeps: usize) -> Result<TrialAnalysis> {
    let derived = crate::gait::differentiate(trial, window)?;
    analyze_derived(p, derived, substeps)
}

/// [`analyze_trial`] for a trial that already carries derivatives.
pub fn analyze_derived(p: &ModelParams, derived: DerivedTrial, substeps: usize) -> Result<TrialAnalysis> {
    let events = crate::gait::detect_events(&derived)?;
    let dt = derived.base.dt / substeps.max(1) as f64;
    let search = optimize_t0(p, &derived, &events, dt, derived.base.dt)?;
    let phase_errors = phase_errors(&derived, &events, &search.trajectory)?;
    Ok(TrialAnalysis {
        derived,
        events,
        search,
        phase_errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gait::{synth_gait_exact, SynthProfile};

    #[test]
    fn phase_error_closed_forms() {
        let t: Vec<f64> = (0..11).map(|i| i as f64 * 0.1).collect();
        let a = vec![1.0; 11];
        assert_eq!(phase_error(&t, &a, &a, 0.0, 1.0).unwrap(), 0.0);
        let b: Vec<f64> = a.iter().map(|v| v - 0.3).collect();
        assert!((phase_error(&t, &a, &b, 0.2, 0.7).unwrap() - 0.3).abs() < 1e-12);

        // |r − g| = t on [0, 1]; mean over [0.25, 0.75] is 0.5
        let g: Vec<f64> = t.iter().map(|x| 1.0 - x).collect();
        assert!((phase_error(&t, &a, &g, 0.25, 0.75).unwrap() - 0.5).abs() < 1e-12);
        // piecewise-linear tent 0 → 1 → 0 on [0, 1]: mean 0.5
        let tent: Vec<f64> = t.iter().map(|x| 1.0 - (1.0 - 2.0 * x).abs()).collect();
        assert!((phase_error(&t, &tent, &[0.0; 11], 0.0, 1.0).unwrap() - 0.5).abs() < 1e-12);

        assert!(phase_error(&t, &a, &a, 0.5, 0.5).is_err());
        assert!(phase_error(&t, &a, &a, 0.5, 1.5).is_err());
    }

    #[test]
    fn degenerate_via_at_start_is_forward_solve() {
        let p = ModelParams::default();
        let d = synth_gait_exact(100.0, &SynthProfile::default(), 1).unwrap();
        let (ts, tf) = d.span();
        let ic = KneeState::new(d.base.q3()[0], d.qdot[2][0]);
        let via = solve_via_point(&p, &d, ic, ts, (ts, tf), 1e-3).unwrap();
        let fwd = integrate_knee(&p, &d, ic, ts, tf, Direction::Forward, 1e-3).unwrap();
        assert_eq!(via.series, fwd);
        assert_eq!(via.at_anchor(), ic);
    }

    #[test]
    fn via_outside_span_is_rejected() {
        let p = ModelParams::default();
        let d = synth_gait_exact(100.0, &SynthProfile::default(), 1).unwrap();
        let (ts, tf) = d.span();
        assert!(solve_via_point(&p, &d, KneeState::default(), tf + 0.1, (ts, tf), 1e-3).is_err());
        assert!(matches!(
            integrate_knee(&p, &d, KneeState::default(), ts - 0.5, tf, Direction::Forward, 1e-3),
            Err(Error::OutOfSpan { .. })
        ));
    }
}
