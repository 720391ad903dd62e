//! Walking-speed adaptation from the intact-limb state at toe-off.
//!
//! Cadence is estimated linearly from the toe-off regressor `θTO`, and the
//! knee map `A` is made an affine function of `θTO`: `a_ij = β_ijᵀ·θTO`. The
//! matrix is realized once at toe-off and frozen for the rest of the swing.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, Matrix2x5, Vector5};

use crate::error::{Error, Result};
use crate::gait::fmt17;
use crate::inertial::{KneeState, TrialAnalysis};
use crate::lstsq;
use crate::synergy::{fit_a, knee_samples, LinearKneeMap};
use crate::textio::{write_block, Blocks};

/// Default training cadences (steps/min).
pub const TRAINING_CADENCES: [f64; 4] = [85.0, 100.0, 115.0, 130.0];

/// One labeled swing for fitting.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTrial {
    pub cadence: f64,
    /// `[q1, q̇1, q2, q̇2, 1]` at toe-off.
    pub theta_to: [f64; 5],
    /// `(θ12(t), [q3, q̇3](t))` pairs.
    pub samples: Vec<([f64; 5], [f64; 2])>,
}

impl TrainingTrial {
    pub fn from_analysis(a: &TrialAnalysis, cadence: f64) -> Result<Self> {
        Ok(Self {
            cadence,
            theta_to: a.derived.toe_off_state(),
            samples: knee_samples(&a.derived, a.trajectory())?,
        })
    }
}

fn distinct(values: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.into_iter().collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Linear cadence estimate `v = cᵀ·θTO`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CadenceEstimator {
    pub c: [f64; 5],
}

impl CadenceEstimator {
    pub fn estimate(&self, theta_to: &[f64; 5]) -> f64 {
        self.c.iter().zip(theta_to).map(|(a, b)| a * b).sum()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("cadence-estimator\n");
        write_block(&mut out, "c", &DMatrix::from_row_slice(1, 5, &self.c));
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let b = Blocks::parse(text)?;
        b.expect_kind("cadence-estimator")?;
        let m = b.get("c", Some(1), Some(5))?;
        Ok(Self {
            c: [m[0], m[1], m[2], m[3], m[4]],
        })
    }
}

/// Least-squares cadence estimator over `(θTO, cadence)` pairs.
pub fn fit_cadence(pairs: &[([f64; 5], f64)]) -> Result<CadenceEstimator> {
    if pairs.len() < 5 {
        return Err(Error::param(
            "trials",
            format!("need at least 5 trials, found {}", pairs.len()),
        ));
    }
    if distinct(pairs.iter().map(|p| p.1)).len() < 2 {
        return Err(Error::param("trials", "need at least two distinct cadences"));
    }
    let x = DMatrix::from_fn(pairs.len(), 5, |i, j| pairs[i].0[j]);
    let y = DMatrix::from_fn(pairs.len(), 1, |i, _| pairs[i].1);
    let sol = lstsq::solve(&x, &y, "toe-off states for cadence")?;
    Ok(CadenceEstimator {
        c: [sol.x[0], sol.x[1], sol.x[2], sol.x[3], sol.x[4]],
    })
}

/// How the β coefficients are identified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FitMode {
    /// One least-squares problem over every sample of every trial.
    #[default]
    Joint,
    /// Per-trial `A`, then each `a_ij` regressed on the trial's `θTO`.
    TwoStage,
}

impl std::str::FromStr for FitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "joint" => Ok(Self::Joint),
            "two-stage" | "two_stage" => Ok(Self::TwoStage),
            _ => Err(Error::param(
                "fit_mode",
                format!("unknown mode {s:?} (joint, two-stage)"),
            )),
        }
    }
}

/// `a_ij = β_ijᵀ·θTO`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveRegressor {
    /// `beta[i][j]` is `β_ij`.
    pub beta: [[[f64; 5]; 5]; 2],
    /// Distinct training cadences.
    pub cadences: Vec<f64>,
}

impl AdaptiveRegressor {
    /// The knee map for a swing starting at `theta_to`.
    pub fn realize_a(&self, theta_to: &[f64; 5]) -> LinearKneeMap {
        let to = Vector5::from_row_slice(theta_to);
        LinearKneeMap::new(Matrix2x5::from_fn(|i, j| {
            Vector5::from_row_slice(&self.beta[i][j]).dot(&to)
        }))
    }

    pub fn predict(&self, theta_to: &[f64; 5], theta12: &[f64; 5]) -> KneeState {
        self.realize_a(theta_to).predict(theta12)
    }

    pub fn is_finite(&self) -> bool {
        self.beta.iter().flatten().flatten().all(|v| v.is_finite())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("adaptive-regressor\n");
        let b = DMatrix::from_fn(10, 5, |r, k| self.beta[r / 5][r % 5][k]);
        write_block(&mut out, "beta", &b);
        write_block(
            &mut out,
            "cadences",
            &DMatrix::from_row_slice(1, self.cadences.len(), &self.cadences),
        );
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let b = Blocks::parse(text)?;
        b.expect_kind("adaptive-regressor")?;
        let m = b.get("beta", Some(10), Some(5))?;
        let mut beta = [[[0.0; 5]; 5]; 2];
        for r in 0..10 {
            for k in 0..5 {
                beta[r / 5][r % 5][k] = m[(r, k)];
            }
        }
        let cadences = b.get("cadences", Some(1), None)?.iter().copied().collect();
        Ok(Self { beta, cadences })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_text(path.as_ref(), &self.to_text())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_text(&load_text(path)?).map_err(|e| e.context(path.display()))
    }
}

pub(crate) fn save_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub(crate) fn load_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))
}

/// Fits the adaptive regressor on trials from at least two cadences.
pub fn fit_adaptive(trials: &[TrainingTrial], mode: FitMode) -> Result<AdaptiveRegressor> {
    let cadences = distinct(trials.iter().map(|t| t.cadence));
    if cadences.len() < 2 {
        return Err(Error::param("trials", "need at least two distinct cadences"));
    }
    let beta = match mode {
        FitMode::Joint => fit_joint(trials)?,
        FitMode::TwoStage => fit_two_stage(trials)?,
    };
    Ok(AdaptiveRegressor { beta, cadences })
}

fn fit_joint(trials: &[TrainingTrial]) -> Result<[[[f64; 5]; 5]; 2]> {
    let rows: usize = trials.iter().map(|t| t.samples.len()).sum();
    let mut x = DMatrix::zeros(rows, 25);
    let mut y = DMatrix::zeros(rows, 2);
    let mut r = 0;
    for t in trials {
        for (th, knee) in &t.samples {
            // feature (j, k) = θ12_j(t)·θTO_k
            for j in 0..5 {
                for k in 0..5 {
                    x[(r, j * 5 + k)] = th[j] * t.theta_to[k];
                }
            }
            y[(r, 0)] = knee[0];
            y[(r, 1)] = knee[1];
            r += 1;
        }
    }
    let sol = lstsq::solve(&x, &y, "adaptive regressor (θ12 ⊗ θTO)")?;
    let mut beta = [[[0.0; 5]; 5]; 2];
    for (i, bi) in beta.iter_mut().enumerate() {
        for (j, bij) in bi.iter_mut().enumerate() {
            for (k, v) in bij.iter_mut().enumerate() {
                *v = sol.x[(j * 5 + k, i)];
            }
        }
    }
    Ok(beta)
}

fn fit_two_stage(trials: &[TrainingTrial]) -> Result<[[[f64; 5]; 5]; 2]> {
    let maps: Vec<LinearKneeMap> = trials
        .iter()
        .map(|t| fit_a(&t.samples).map(|f| f.map))
        .collect::<Result<_>>()?;
    let x = DMatrix::from_fn(trials.len(), 5, |r, k| trials[r].theta_to[k]);
    let y = DMatrix::from_fn(trials.len(), 10, |r, c| maps[r].a[(c / 5, c % 5)]);
    let sol = lstsq::solve(&x, &y, "toe-off states for per-trial coefficients")?;
    let mut beta = [[[0.0; 5]; 5]; 2];
    for c in 0..10 {
        for (k, b) in beta[c / 5][c % 5].iter_mut().enumerate() {
            *b = sol.x[(k, c)];
        }
    }
    Ok(beta)
}

/// RMS knee-angle and velocity error of the adaptive map on one trial.
pub fn adaptive_rms(r: &AdaptiveRegressor, t: &TrainingTrial) -> [f64; 2] {
    let a = r.realize_a(&t.theta_to);
    let n = t.samples.len().max(1) as f64;
    let mut ss = [0.0; 2];
    for (th, y) in &t.samples {
        let k = a.predict(th);
        ss[0] += (k.q3 - y[0]).powi(2);
        ss[1] += (k.q3dot - y[1]).powi(2);
    }
    [(ss[0] / n).sqrt(), (ss[1] / n).sqrt()]
}

/// R² of every `a_ij` regressed linearly on cadence, for one group.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffTrendReport {
    pub group: String,
    pub r2: [[f64; 5]; 2],
    /// Set where the coefficient does not vary (R² reported as 0).
    pub degenerate: [[bool; 5]; 2],
    pub slope: [[f64; 5]; 2],
    pub intercept: [[f64; 5]; 2],
}

/// Column names of [`CoeffTrendReport::to_csv`].
pub const TREND_HEADER: &str = "group,output,a1,a2,a3,a4,a5,degenerate";

impl CoeffTrendReport {
    /// Two rows (`q3d`, `q3d_dot`) of R² values.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (i, name) in ["q3d", "q3d_dot"].iter().enumerate() {
            let vals: Vec<String> = self.r2[i].iter().map(|&v| fmt17(v)).collect();
            let flags: Vec<&str> = self.degenerate[i].iter().map(|&d| if d { "1" } else { "0" }).collect();
            let _ = writeln!(out, "{},{name},{},{}", self.group, vals.join(","), flags.join(""));
        }
        out
    }
}

/// Ordinary least squares of each `a_ij` on cadence.
pub fn coeff_trend_r2(group: &str, per_cadence: &[(f64, LinearKneeMap)]) -> Result<CoeffTrendReport> {
    let n_distinct = distinct(per_cadence.iter().map(|p| p.0)).len();
    if n_distinct < 3 {
        return Err(Error::param(
            "cadences",
            format!("group {group:?} has {n_distinct} distinct cadences, need at least 3"),
        ));
    }
    let n = per_cadence.len() as f64;
    let mean_v = per_cadence.iter().map(|p| p.0).sum::<f64>() / n;
    let sxx: f64 = per_cadence.iter().map(|p| (p.0 - mean_v).powi(2)).sum();
    let mut rep = CoeffTrendReport {
        group: group.to_string(),
        r2: [[0.0; 5]; 2],
        degenerate: [[false; 5]; 2],
        slope: [[0.0; 5]; 2],
        intercept: [[0.0; 5]; 2],
    };
    for i in 0..2 {
        for j in 0..5 {
            let ys: Vec<f64> = per_cadence.iter().map(|p| p.1.a[(i, j)]).collect();
            let mean_y = ys.iter().sum::<f64>() / n;
            let sxy: f64 = per_cadence
                .iter()
                .zip(&ys)
                .map(|(p, y)| (p.0 - mean_v) * (y - mean_y))
                .sum();
            let slope = sxy / sxx;
            let intercept = mean_y - slope * mean_v;
            let ss_tot: f64 = ys.iter().map(|y| (y - mean_y).powi(2)).sum();
            let ss_res: f64 = per_cadence
                .iter()
                .zip(&ys)
                .map(|(p, y)| (y - intercept - slope * p.0).powi(2))
                .sum();
            rep.slope[i][j] = slope;
            rep.intercept[i][j] = intercept;
            if ss_tot <= f64::EPSILON * f64::EPSILON * n * mean_y * mean_y {
                rep.degenerate[i][j] = true;
            } else {
                rep.r2[i][j] = (1.0 - ss_res / ss_tot).clamp(0.0, 1.0);
            }
        }
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn estimator_example() {
        let e = CadenceEstimator {
            c: [0.0, 0.0, 0.0, 0.0, 100.0],
        };
        assert_eq!(e.estimate(&[1.3, -2.0, 3.1, 0.4, 1.0]), 100.0);
        assert_eq!(CadenceEstimator::from_text(&e.to_text()).unwrap(), e);
    }

    #[test]
    fn zero_beta_gives_zero_map() {
        let r = AdaptiveRegressor {
            beta: [[[0.0; 5]; 5]; 2],
            cadences: vec![85.0, 100.0],
        };
        assert_eq!(r.realize_a(&[1.0, 2.0, 3.0, 4.0, 1.0]), LinearKneeMap::zero());
        assert_eq!(AdaptiveRegressor::from_text(&r.to_text()).unwrap(), r);
    }

    fn map_with(f: impl Fn(usize, usize) -> f64) -> LinearKneeMap {
        LinearKneeMap::new(Matrix2x5::from_fn(f))
    }

    #[test]
    fn trend_examples() {
        let lin: Vec<_> = [80.0, 100.0, 120.0]
            .iter()
            .map(|&v| (v, map_with(|i, j| v * (i + j) as f64 + 1.0)))
            .collect();
        let rep = coeff_trend_r2("s", &lin).unwrap();
        // a_00 is the constant 1
        assert!(rep.degenerate[0][0] && rep.r2[0][0] == 0.0);
        assert!((rep.r2[1][4] - 1.0).abs() < 1e-12);

        // cadence + (+e, −2e, +e): SS_res = 6e², SS_tot = 800 + 6e² (slope stays 1)
        let e = 0.5;
        let noisy: Vec<_> = [(80.0, e), (100.0, -2.0 * e), (120.0, e)]
            .iter()
            .map(|&(v, n)| (v, map_with(|_, _| v + n)))
            .collect();
        let rep = coeff_trend_r2("s", &noisy).unwrap();
        let expected = 1.0 - 6.0 * e * e / (800.0 + 6.0 * e * e);
        assert!((rep.r2[0][0] - expected).abs() < 1e-12);
        assert_eq!(rep.to_csv().lines().count(), 2);

        assert!(coeff_trend_r2("s", &noisy[..2]).is_err());
    }
}
