use super::{DerivedTrial, GaitEvents};
use crate::error::{Error, Result};

/// Longest tolerated plateau of a global extremum (s).
const MAX_PLATEAU: f64 = 0.05;
const PLATEAU_TOL: f64 = 1e-12;

/// Detects toe-off, maximum flexion, maximum extension velocity and heel
/// contact on a trial spanning exactly one swing phase.
///
/// Maximum flexion is the global minimum of `q3`; maximum extension velocity
/// is the maximum of `q̇3` strictly between maximum flexion and heel contact.
/// Ties go to the earliest sample.
pub fn detect_events(d: &DerivedTrial) -> Result<GaitEvents> {
    let n = d.len();
    let q3 = d.base.q3();
    let i1 = arg_extreme(q3, 0..n, |a, b| a < b);
    check_plateau(q3, i1, d.base.dt, "maximum knee flexion")?;
    if i1 == 0 || i1 + 2 >= n {
        return Err(Error::DegenerateTrial(
            "no interior knee flexion peak (knee angle is monotone near the trial ends)".into(),
        ));
    }
    let v3 = &d.qdot[2];
    let i2 = arg_extreme(v3, i1 + 1..n - 1, |a, b| a > b);
    check_plateau(v3, i2, d.base.dt, "maximum extension velocity")?;

    let ev = GaitEvents {
        toe_off: d.time(0),
        max_flexion: d.time(i1),
        max_ext_velocity: d.time(i2),
        heel_contact: d.time(n - 1),
    };
    ev.validate()?;
    Ok(ev)
}

fn arg_extreme(x: &[f64], range: std::ops::Range<usize>, better: impl Fn(f64, f64) -> bool) -> usize {
    let mut best = range.start;
    for i in range {
        if better(x[i], x[best]) {
            best = i;
        }
    }
    best
}

fn check_plateau(x: &[f64], at: usize, dt: f64, what: &str) -> Result<()> {
    let v = x[at];
    let same: Vec<usize> = (0..x.len()).filter(|&i| (x[i] - v).abs() <= PLATEAU_TOL).collect();
    let width = (same[same.len() - 1] - same[0]) as f64 * dt;
    if width > MAX_PLATEAU {
        return Err(Error::DegenerateTrial(format!(
            "{what} is not unique: plateau of {:.0} ms",
            width * 1e3
        )));
    }
    Ok(())
}
