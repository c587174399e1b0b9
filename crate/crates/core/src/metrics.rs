//! Recovery metrics against a known ground truth.

use serde::Serialize;

use crate::error::{NmfError, Result};
use crate::linalg::{pseudo_inverse_with_rank, spectral_norm, DenseMatrix, DEFAULT_PINV_REL_TOL};

/// Best match of one ground-truth column among the columns of an estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnMatch {
    /// `min_{j, sigma} |a* - sigma A^j|_2`.
    pub error: f64,
    pub column: Option<usize>,
    pub scale: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Distance from `a_star` to the closest scaled column of `a`.
///
/// The optimal scale is the projection coefficient; the residual is formed
/// explicitly rather than through `|a*|^2 - <a, a*>^2 / |a|^2`, which loses
/// all precision near zero error. Zero columns are skipped, ties go to the
/// smaller index.
pub fn column_correlation_error(a_star: &[f64], a: &DenseMatrix) -> Result<ColumnMatch> {
    if a_star.len() != a.rows() {
        return Err(NmfError::ShapeMismatch {
            op: "column_correlation_error",
            expected: format!("vector of length {}", a.rows()),
            got: format!("{}", a_star.len()),
        });
    }
    let mut best = ColumnMatch { error: dot(a_star, a_star).sqrt(), column: None, scale: 0.0 };
    for j in 0..a.cols() {
        let col = a.column(j);
        let nn = dot(col, col);
        if nn == 0.0 {
            continue;
        }
        let scale = dot(col, a_star) / nn;
        let err = a_star.iter().zip(col).map(|(t, c)| (t - scale * c).powi(2)).sum::<f64>().sqrt();
        if best.column.is_none() || err < best.error {
            best = ColumnMatch { error: err, column: Some(j), scale };
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorReport {
    pub per_column: Vec<f64>,
    pub total: f64,
    /// Matched estimate column per ground-truth column; `None` when the
    /// estimate has no nonzero column.
    #[serde(rename = "matches")]
    pub matched_columns: Vec<Option<usize>>,
    #[serde(rename = "scales")]
    pub matched_scales: Vec<f64>,
}

/// Sum of per-column correlation errors of `a` against every column of
/// `a_star`. Many ground-truth columns may match the same estimate column.
pub fn total_correlation_error(a: &DenseMatrix, a_star: &DenseMatrix) -> Result<ErrorReport> {
    if a.rows() != a_star.rows() {
        return Err(NmfError::ShapeMismatch {
            op: "total_correlation_error",
            expected: format!("estimate with {} rows", a_star.rows()),
            got: format!("{}x{}", a.rows(), a.cols()),
        });
    }
    let matches =
        (0..a_star.cols()).map(|i| column_correlation_error(a_star.column(i), a)).collect::<Result<Vec<_>>>()?;
    let per_column: Vec<f64> = matches.iter().map(|m| m.error).collect();
    Ok(ErrorReport {
        total: per_column.iter().sum(),
        per_column,
        matched_columns: matches.iter().map(|m| m.column).collect(),
        matched_scales: matches.iter().map(|m| m.scale).collect(),
    })
}

/// `A = A* (Sigma + E) + N` with `Sigma` diagonal, `E` off-diagonal and
/// `N` orthogonal to the column space of `A*`.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub sigma: DenseMatrix,
    pub e: DenseMatrix,
    pub n: DenseMatrix,
    pub sigma_min_diag: f64,
    pub e_norm: f64,
    pub n_norm: f64,
}

impl Decomposition {
    pub fn reconstruct(&self, a_star: &DenseMatrix) -> Result<DenseMatrix> {
        a_star.matmul(&self.sigma.try_add(&self.e)?)?.try_add(&self.n)
    }
}

/// Cached pseudo-inverse of a ground truth, for decomposing many iterates.
#[derive(Debug, Clone)]
pub struct Decomposer {
    a_star: DenseMatrix,
    pinv: DenseMatrix,
}

impl Decomposer {
    pub fn new(a_star: &DenseMatrix) -> Result<Self> {
        let p = pseudo_inverse_with_rank(a_star, DEFAULT_PINV_REL_TOL)?;
        if p.rank < a_star.cols() {
            return Err(NmfError::RankDeficient { what: "ground truth A*", rank: p.rank, needed: a_star.cols() });
        }
        Ok(Self { a_star: a_star.clone(), pinv: p.matrix })
    }

    pub fn a_star(&self) -> &DenseMatrix {
        &self.a_star
    }

    pub fn decompose(&self, a: &DenseMatrix) -> Result<Decomposition> {
        if a.rows() != self.a_star.rows() {
            return Err(NmfError::ShapeMismatch {
                op: "decompose",
                expected: format!("{} rows", self.a_star.rows()),
                got: format!("{}x{}", a.rows(), a.cols()),
            });
        }
        let c = self.pinv.matmul(a)?;
        let (d, k) = c.shape();
        let sigma = DenseMatrix::from_fn(d, k, |i, j| if i == j { c.get(i, j) } else { 0.0 })?;
        let e = DenseMatrix::from_fn(d, k, |i, j| if i == j { 0.0 } else { c.get(i, j) })?;
        let n = a.try_sub(&self.a_star.matmul(&c)?)?;
        let sigma_min_diag = sigma.diagonal().into_iter().fold(f64::INFINITY, f64::min);
        Ok(Decomposition { e_norm: spectral_norm(&e)?, n_norm: spectral_norm(&n)?, sigma, e, n, sigma_min_diag })
    }
}

/// One-shot [`Decomposer::decompose`].
pub fn decompose(a: &DenseMatrix, a_star: &DenseMatrix) -> Result<Decomposition> {
    Decomposer::new(a_star)?.decompose(a)
}

/// `(|(1/n) Z Z^T|_2, max_j |z_j|_2)` for noise samples in the columns of `zeta`.
pub fn noise_moments(zeta: &DenseMatrix) -> Result<(f64, f64)> {
    let n = zeta.cols();
    if n < 2 {
        return Err(NmfError::InvalidParameter("noise moments need at least 2 samples".into()));
    }
    let z = zeta.as_nalgebra();
    let second = DenseMatrix::from_nalgebra(z * z.transpose() / n as f64)?;
    let gamma1 = spectral_norm(&second)?;
    let gamma2 = (0..n).map(|j| dot(zeta.column(j), zeta.column(j)).sqrt()).fold(0.0, f64::max);
    Ok((gamma1, gamma2))
}
