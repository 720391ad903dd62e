//! Kinematic synergies of the swing leg and linear knee maps.
//!
//! A data matrix stacks `[q1, q̇1, q2, q̇2, q3, q̇3]` per sample (intact states
//! and the inertial knee), mean-removed. Its SVD gives the synergies; the
//! truncated decomposition induces an affine map from intact states to knee
//! states, and [`LinearKneeMap`] is the direct least-squares version of that
//! map.

use std::path::Path;

use nalgebra::{DMatrix, DVector, Matrix2x5, SMatrix, Vector6};

use crate::error::{Error, Result};
use crate::gait::DerivedTrial;
use crate::inertial::{InertialTrajectory, KneeState};
use crate::lstsq;
use crate::textio::{write_block, Blocks};

/// Rows of the data matrix.
pub const STATE_NAMES: [&str; 6] = ["q1", "q1dot", "q2", "q2dot", "q3", "q3dot"];

/// Default truncation rank.
pub const DEFAULT_RANK: usize = 4;

/// Relative cutoff for the pseudoinverse of the intact block.
pub const PINV_TOL: f64 = 1e-10;

/// Mean-removed 6×n data matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    /// Centered (and optionally scaled) samples, one per column.
    pub x: DMatrix<f64>,
    pub x0: Vector6<f64>,
    /// Per-row standard deviation when z-scored.
    pub scale: Option<Vector6<f64>>,
}

impl DataMatrix {
    /// Centers raw samples (6×n, one per column).
    pub fn from_raw(raw: DMatrix<f64>) -> Result<Self> {
        if raw.nrows() != 6 {
            return Err(Error::param(
                "data matrix",
                format!("expected 6 rows, found {}", raw.nrows()),
            ));
        }
        if raw.ncols() == 0 {
            return Err(Error::param("data matrix", "no samples"));
        }
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite entry in the data matrix".into()));
        }
        // shifted mean: exact for constant rows
        let x0: Vector6<f64> = Vector6::from_iterator(raw.row_iter().map(|r| {
            let first = r[0];
            first + r.iter().map(|v| v - first).sum::<f64>() / r.len() as f64
        }));
        let mut x = raw;
        for (i, mut row) in x.row_iter_mut().enumerate() {
            row.add_scalar_mut(-x0[i]);
        }
        Ok(Self { x, x0, scale: None })
    }

    /// Pools several trials with their knee trajectories into one matrix.
    pub fn pooled<'a>(items: impl IntoIterator<Item = (&'a DerivedTrial, &'a InertialTrajectory)>) -> Result<Self> {
        let mut cols: Vec<f64> = Vec::new();
        for (d, knee) in items {
            cols.extend(stack(d, knee)?.iter());
        }
        let n = cols.len() / 6;
        Self::from_raw(DMatrix::from_vec(6, n, cols))
    }

    /// Divides each row by its standard deviation (rows with zero spread are left as is).
    pub fn zscored(mut self) -> Self {
        let n = self.x.ncols() as f64;
        let sd = Vector6::from_iterator(self.x.row_iter().map(|r| {
            let s = (r.norm_squared() / n).sqrt();
            if s > 0.0 {
                s
            } else {
                1.0
            }
        }));
        for (i, mut row) in self.x.row_iter_mut().enumerate() {
            row.unscale_mut(sd[i]);
        }
        self.scale = Some(sd);
        self
    }

    pub fn n(&self) -> usize {
        self.x.ncols()
    }

    /// The stacked samples before centering.
    pub fn raw(&self) -> DMatrix<f64> {
        let mut out = self.x.clone();
        for (i, mut row) in out.row_iter_mut().enumerate() {
            if let Some(s) = &self.scale {
                row.scale_mut(s[i]);
            }
            row.add_scalar_mut(self.x0[i]);
        }
        out
    }
}

/// Raw 6×n samples of one trial.
fn stack(d: &DerivedTrial, knee: &InertialTrajectory) -> Result<DMatrix<f64>> {
    if !knee.on_grid(&d.base) {
        return Err(Error::param(
            "knee trajectory",
            format!(
                "{} states do not match the {}-sample trial grid",
                knee.series.len(),
                d.len()
            ),
        ));
    }
    let b = &d.base;
    Ok(DMatrix::from_fn(6, d.len(), |r, c| match r {
        0 => b.q[0][c],
        1 => d.qdot[0][c],
        2 => b.q[1][c],
        3 => d.qdot[1][c],
        4 => knee.states()[c].q3,
        _ => knee.states()[c].q3dot,
    }))
}

/// Data matrix of one trial and its knee trajectory.
pub fn build_data_matrix(d: &DerivedTrial, knee: &InertialTrajectory) -> Result<DataMatrix> {
    DataMatrix::from_raw(stack(d, knee)?)
}

/// Thin SVD of a data matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SynergyModel {
    pub u: SMatrix<f64, 6, 6>,
    /// Singular values, nonincreasing.
    pub s: Vector6<f64>,
    /// Right singular vectors, n×6.
    pub v: DMatrix<f64>,
    pub x0: Vector6<f64>,
    pub scale: Option<Vector6<f64>>,
    /// Truncation rank.
    pub r: usize,
}

/// SVD of `x` with singular values sorted and signs fixed so that the
/// largest-magnitude entry of every left singular vector is positive.
pub fn decompose(x: &DataMatrix) -> Result<SynergyModel> {
    let n = x.n();
    if n < 6 {
        return Err(Error::param(
            "data matrix",
            format!("need at least 6 samples, found {n}"),
        ));
    }
    let svd = x.x.clone().svd(true, true);
    let u = svd.u.expect("u requested");
    let vt = svd.v_t.expect("v_t requested");
    let mut order: Vec<usize> = (0..6).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));

    let mut um = SMatrix::<f64, 6, 6>::zeros();
    let mut v = DMatrix::zeros(n, 6);
    let mut s = Vector6::zeros();
    for (k, &j) in order.iter().enumerate() {
        let col = u.column(j);
        let pivot = col
            .iter()
            .copied()
            .max_by(|a, b| a.abs().total_cmp(&b.abs()))
            .unwrap_or(1.0);
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        um.set_column(k, &(col * sign));
        v.set_column(k, &(vt.row(j).transpose() * sign));
        s[k] = svd.singular_values[j];
    }
    Ok(SynergyModel {
        u: um,
        s,
        v,
        x0: x.x0,
        scale: x.scale,
        r: DEFAULT_RANK,
    })
}

impl SynergyModel {
    pub fn with_rank(mut self, r: usize) -> Result<Self> {
        if r == 0 || r > 6 {
            return Err(Error::param("rank", format!("must be in 1..=6, found {r}")));
        }
        self.r = r;
        Ok(self)
    }

    /// `U_r·S_r·V_rᵀ` in the (centered, scaled) data coordinates.
    pub fn reconstruct(&self, r: usize) -> DMatrix<f64> {
        let r = r.min(6);
        let mut out = DMatrix::zeros(6, self.v.nrows());
        for k in 0..r {
            out += self.u.column(k) * self.v.column(k).transpose() * self.s[k];
        }
        out
    }

    pub fn contribution_ratios(&self) -> Result<[f64; 6]> {
        contribution_ratios(self.s.as_slice())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("synergy-model\n");
        let row = |v: &Vector6<f64>| DMatrix::from_row_slice(1, 6, v.as_slice());
        write_block(&mut out, "r", &DMatrix::from_element(1, 1, self.r as f64));
        write_block(&mut out, "U", &DMatrix::from_column_slice(6, 6, self.u.as_slice()));
        write_block(&mut out, "s", &row(&self.s));
        write_block(&mut out, "x0", &row(&self.x0));
        if let Some(sc) = &self.scale {
            write_block(&mut out, "scale", &row(sc));
        }
        write_block(&mut out, "V", &self.v);
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let b = Blocks::parse(text)?;
        b.expect_kind("synergy-model")?;
        let vec6 = |name: &str| -> Result<Vector6<f64>> {
            Ok(Vector6::from_row_slice(b.get(name, Some(1), Some(6))?.as_slice()))
        };
        let r = b.get("r", Some(1), Some(1))?[0];
        let m = Self {
            u: SMatrix::<f64, 6, 6>::from_column_slice(b.get("U", Some(6), Some(6))?.as_slice()),
            s: vec6("s")?,
            v: b.get("V", None, Some(6))?.clone(),
            x0: vec6("x0")?,
            scale: if b.has("scale") { Some(vec6("scale")?) } else { None },
            r: 0,
        };
        m.with_rank(r as usize)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_text(&text).map_err(|e| e.context(path.display()))
    }
}

/// `s_i² / Σ s_j²`.
pub fn contribution_ratios(s: &[f64]) -> Result<[f64; 6]> {
    if s.len() != 6 {
        return Err(Error::param(
            "singular values",
            format!("expected 6, found {}", s.len()),
        ));
    }
    if s.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::param("singular values", "must be finite and nonnegative"));
    }
    let total: f64 = s.iter().map(|v| v * v).sum();
    if total == 0.0 {
        return Err(Error::param("singular values", "all zero"));
    }
    let mut out = [0.0; 6];
    for (o, v) in out.iter_mut().zip(s) {
        *o = v * v / total;
    }
    Ok(out)
}

/// Running sums of the ratios.
pub fn cumulative(ratios: &[f64; 6]) -> [f64; 6] {
    let mut acc = 0.0;
    ratios.map(|r| {
        acc += r;
        acc
    })
}

/// Knee state implied by the rank-`m.r` synergies for intact state
/// `[q1, q̇1, q2, q̇2]`.
pub fn synergy_map(m: &SynergyModel, theta12: [f64; 4]) -> Result<KneeState> {
    let r = m.r;
    if r == 0 || r > 6 {
        return Err(Error::param("rank", format!("must be in 1..=6, found {r}")));
    }
    let scale = m.scale.unwrap_or_else(|| Vector6::repeat(1.0));
    let mut us = DMatrix::zeros(6, r);
    for k in 0..r {
        us.set_column(k, &(m.u.column(k) * m.s[k]));
    }
    let upper = us.rows(0, 4).into_owned();
    let (pinv, rank) = lstsq::pseudo_inverse(&upper, PINV_TOL);
    if rank < r.min(4) {
        return Err(Error::RankDeficient {
            context: "synergy map intact block".into(),
            rank,
            required: r.min(4),
        });
    }
    let z = DVector::from_fn(4, |i, _| (theta12[i] - m.x0[i]) / scale[i]);
    let out = us.rows(4, 2) * (pinv * z);
    Ok(KneeState::new(out[0] * scale[4] + m.x0[4], out[1] * scale[5] + m.x0[5]))
}

/// Affine map `θ3 = A·[q1, q̇1, q2, q̇2, 1]ᵀ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearKneeMap {
    pub a: Matrix2x5<f64>,
}

/// A fitted map with its training residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct KneeMapFit {
    pub map: LinearKneeMap,
    /// RMS residual of angle and velocity.
    pub rms: [f64; 2],
    pub samples: usize,
}

impl LinearKneeMap {
    pub fn new(a: Matrix2x5<f64>) -> Self {
        Self { a }
    }

    pub fn zero() -> Self {
        Self::new(Matrix2x5::zeros())
    }

    pub fn predict(&self, theta12: &[f64; 5]) -> KneeState {
        let y = self.a * nalgebra::Vector5::from_row_slice(theta12);
        KneeState::new(y[0], y[1])
    }

    pub fn is_finite(&self) -> bool {
        self.a.iter().all(|v| v.is_finite())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("linear-knee-map\n");
        write_block(&mut out, "A", &DMatrix::from_column_slice(2, 5, self.a.as_slice()));
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let b = Blocks::parse(text)?;
        b.expect_kind("linear-knee-map")?;
        Ok(Self::new(Matrix2x5::from_column_slice(
            b.get("A", Some(2), Some(5))?.as_slice(),
        )))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_text(&text).map_err(|e| e.context(path.display()))
    }
}

/// Least-squares `A` over `(θ12, [q3, q̇3])` pairs.
pub fn fit_a(samples: &[([f64; 5], [f64; 2])]) -> Result<KneeMapFit> {
    let n = samples.len();
    let x = DMatrix::from_fn(n, 5, |i, j| samples[i].0[j]);
    let y = DMatrix::from_fn(n, 2, |i, j| samples[i].1[j]);
    let sol = lstsq::solve(&x, &y, "knee map regressors")?;
    let rms = sol.rms();
    Ok(KneeMapFit {
        map: LinearKneeMap::new(Matrix2x5::from_fn(|i, j| sol.x[(j, i)])),
        rms: [rms[0], rms[1]],
        samples: n,
    })
}

/// Training pairs of one trial: intact regressor and inertial knee state per sample.
pub fn knee_samples(d: &DerivedTrial, knee: &InertialTrajectory) -> Result<Vec<([f64; 5], [f64; 2])>> {
    if !knee.on_grid(&d.base) {
        return Err(Error::param("knee trajectory", "not sampled on the trial grid"));
    }
    Ok((0..d.len())
        .map(|i| {
            let s = knee.states()[i];
            (d.theta12(i), [s.q3, s.q3dot])
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_examples() {
        assert_eq!(
            contribution_ratios(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap(),
            [1.0, 0.0, 0.0, 0.0, 0.0, 0.0]
        );
        let r = contribution_ratios(&[2.0, 1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert!((r[0] - 0.8).abs() < 1e-15 && (r[1] - 0.2).abs() < 1e-15);
        assert!(contribution_ratios(&[0.0; 6]).is_err());
        let c = cumulative(&r);
        assert!((c[5] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn two_sample_center() {
        let raw = DMatrix::from_fn(6, 2, |i, j| (i as f64) + 2.0 * j as f64);
        let x = DataMatrix::from_raw(raw.clone()).unwrap();
        for i in 0..6 {
            assert_eq!(x.x0[i], i as f64 + 1.0);
            assert_eq!(x.x[(i, 0)], -1.0);
            assert_eq!(x.x[(i, 1)], 1.0);
        }
        assert_eq!(x.raw(), raw);
    }

    #[test]
    fn constant_data() {
        let raw = DMatrix::from_element(6, 10, 0.7);
        let x = DataMatrix::from_raw(raw).unwrap();
        assert!(x.x.iter().all(|&v| v == 0.0));
        assert!(x.x0.iter().all(|&v| v == 0.7));
    }

    #[test]
    fn mean_state_maps_to_mean_knee() {
        let raw = DMatrix::from_fn(6, 40, |i, j| ((i * j * j + 3 * j) as f64 * 0.37).sin() + i as f64);
        let m = decompose(&DataMatrix::from_raw(raw).unwrap()).unwrap();
        let k = synergy_map(&m, [m.x0[0], m.x0[1], m.x0[2], m.x0[3]]).unwrap();
        assert!((k.q3 - m.x0[4]).abs() < 1e-12 && (k.q3dot - m.x0[5]).abs() < 1e-12);
    }

    #[test]
    fn text_round_trip() {
        let raw = DMatrix::from_fn(6, 12, |i, j| ((i + 1) as f64 * (j as f64 * 0.3).cos()) + 0.1 * j as f64);
        let m = decompose(&DataMatrix::from_raw(raw).unwrap().zscored()).unwrap();
        assert_eq!(SynergyModel::from_text(&m.to_text()).unwrap(), m);
        let a = LinearKneeMap::new(Matrix2x5::from_fn(|i, j| (i * 5 + j) as f64 / 7.0));
        assert_eq!(LinearKneeMap::from_text(&a.to_text()).unwrap(), a);
        assert!(LinearKneeMap::from_text(&m.to_text()).is_err());
    }
}
