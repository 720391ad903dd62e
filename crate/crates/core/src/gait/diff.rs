use super::{DerivedTrial, GaitTrial};
use crate::error::{Error, Result};

/// Default moving-average window (samples at 100 Hz).
pub const DEFAULT_SMOOTHING_WINDOW: usize = 5;

/// How the derivative series of a [`DerivedTrial`] were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Smoothing {
    /// Centered moving average of `window` samples (odd) before differencing.
    MovingAverage { window: usize },
    /// Derivatives supplied from a closed form or an integrator.
    Exact,
}

/// Zero-phase moving average followed by central differences.
///
/// The window shrinks symmetrically near the ends so that the filter never
/// shifts phase; endpoints use one-sided second-order differences.
pub fn differentiate(trial: &GaitTrial, window: usize) -> Result<DerivedTrial> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(Error::param(
            "smoothing window",
            "must be a positive odd number of samples",
        ));
    }
    let n = trial.len();
    if n < 2 * window + 5 {
        return Err(Error::DegenerateTrial(format!(
            "trial too short for differentiation: {n} samples, need at least {}",
            2 * window + 5
        )));
    }
    let mut qdot: [Vec<f64>; 3] = Default::default();
    let mut qddot: [Vec<f64>; 3] = Default::default();
    for j in 0..3 {
        let smooth = moving_average(&trial.q[j], window);
        qdot[j] = first_difference(&smooth, trial.dt);
        qddot[j] = second_difference(&smooth, trial.dt);
    }
    Ok(DerivedTrial {
        base: trial.clone(),
        qdot,
        qddot,
        smoothing: Smoothing::MovingAverage { window },
    })
}

fn moving_average(x: &[f64], window: usize) -> Vec<f64> {
    let n = x.len();
    let half = window / 2;
    (0..n)
        .map(|i| {
            let h = half.min(i).min(n - 1 - i);
            let sum: f64 = x[i - h..=i + h].iter().sum();
            sum / (2 * h + 1) as f64
        })
        .collect()
}

fn first_difference(x: &[f64], h: f64) -> Vec<f64> {
    let n = x.len();
    let mut d = vec![0.0; n];
    d[0] = (-3.0 * x[0] + 4.0 * x[1] - x[2]) / (2.0 * h);
    d[n - 1] = (3.0 * x[n - 1] - 4.0 * x[n - 2] + x[n - 3]) / (2.0 * h);
    for i in 1..n - 1 {
        d[i] = (x[i + 1] - x[i - 1]) / (2.0 * h);
    }
    d
}

fn second_difference(x: &[f64], h: f64) -> Vec<f64> {
    let n = x.len();
    let h2 = h * h;
    let mut d = vec![0.0; n];
    d[0] = (2.0 * x[0] - 5.0 * x[1] + 4.0 * x[2] - x[3]) / h2;
    d[n - 1] = (2.0 * x[n - 1] - 5.0 * x[n - 2] + 4.0 * x[n - 3] - x[n - 4]) / h2;
    for i in 1..n - 1 {
        d[i] = (x[i + 1] - 2.0 * x[i] + x[i - 1]) / h2;
    }
    d
}
