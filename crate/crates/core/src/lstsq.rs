//! Dense least squares by SVD with rank reporting.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Singular values below this fraction of the largest count as zero.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct LstsqSolution {
    /// Minimizer of `‖A·x − b‖²`, one column per right-hand side.
    pub x: DMatrix<f64>,
    /// Residual `b − A·x`.
    pub residual: DMatrix<f64>,
}

impl LstsqSolution {
    /// Root-mean-square residual of each right-hand side.
    pub fn rms(&self) -> Vec<f64> {
        let n = self.residual.nrows().max(1) as f64;
        self.residual
            .column_iter()
            .map(|c| (c.norm_squared() / n).sqrt())
            .collect()
    }
}

/// Solves `min ‖A·x − b‖` for full column rank `A`.
///
/// Columns are scaled to unit norm before the SVD so that the rank test is
/// not fooled by mixed units. `context` names the problem in errors.
pub fn solve(a: &DMatrix<f64>, b: &DMatrix<f64>, context: &str) -> Result<LstsqSolution> {
    let (m, n) = a.shape();
    if b.nrows() != m {
        return Err(Error::param(
            context,
            format!("{m} equations but {} targets", b.nrows()),
        ));
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("{context}: non-finite regressor or target")));
    }
    if m < n {
        return Err(Error::RankDeficient {
            context: context.to_string(),
            rank: m,
            required: n,
        });
    }
    let norms: Vec<f64> = a.column_iter().map(|c| c.norm()).collect();
    let mut scaled = a.clone();
    for (j, &nj) in norms.iter().enumerate() {
        if nj > 0.0 {
            scaled.column_mut(j).unscale_mut(nj);
        }
    }
    let svd = scaled.svd(true, true);
    let s_max = svd.singular_values.max();
    let rank = svd.singular_values.iter().filter(|&&s| s > RANK_TOL * s_max).count();
    if s_max == 0.0 || rank < n {
        return Err(Error::RankDeficient {
            context: context.to_string(),
            rank,
            required: n,
        });
    }
    let mut x = svd
        .solve(b, RANK_TOL * s_max)
        .map_err(|e| Error::Numerical(format!("{context}: {e}")))?;
    for (j, &nj) in norms.iter().enumerate() {
        x.row_mut(j).unscale_mut(nj);
    }
    let residual = b - a * &x;
    Ok(LstsqSolution { x, residual })
}

/// Moore–Penrose pseudoinverse with singular values below `rel_tol·s_max` dropped.
/// Returns the pseudoinverse and the numerical rank.
pub fn pseudo_inverse(a: &DMatrix<f64>, rel_tol: f64) -> (DMatrix<f64>, usize) {
    let svd = a.clone().svd(true, true);
    let s_max = svd.singular_values.max();
    let cut = rel_tol * s_max;
    let u = svd.u.expect("u requested");
    let vt = svd.v_t.expect("v_t requested");
    let mut out = DMatrix::zeros(a.ncols(), a.nrows());
    let mut rank = 0;
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cut && s > 0.0 {
            rank += 1;
            out += vt.row(k).transpose() * u.column(k).transpose() / s;
        }
    }
    (out, rank)
}
