//! Dense real matrices and the handful of factorizations the solvers need.
//!
//! Storage is column-major (nalgebra's layout), which is also the on-disk
//! order of the harness binary format. Every public constructor rejects
//! NaN and infinite entries.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, SymmetricEigen, SVD};

use crate::error::{NmfError, Result};

/// Default relative cutoff for treating singular values as zero.
pub const DEFAULT_PINV_REL_TOL: f64 = 1e-12;

const SVD_MAX_ITER: usize = 10_000;

/// Dense `rows x cols` matrix of finite `f64` values.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    inner: DMatrix<f64>,
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DenseMatrix({}x{}) {:?}", self.rows(), self.cols(), self.inner.as_slice())
    }
}

impl DenseMatrix {
    /// Wraps an nalgebra matrix after checking shape and finiteness.
    pub fn from_nalgebra(inner: DMatrix<f64>) -> Result<Self> {
        let m = Self { inner };
        m.validate()?;
        Ok(m)
    }

    /// Wraps without validation. Used for results of arithmetic on
    /// already-validated operands.
    pub(crate) fn wrap(inner: DMatrix<f64>) -> Self {
        Self { inner }
    }

    pub fn from_row_slice(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        check_len(rows, cols, data.len())?;
        Self::from_nalgebra(DMatrix::from_row_slice(rows, cols, data))
    }

    pub fn from_column_slice(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        check_len(rows, cols, data.len())?;
        Self::from_nalgebra(DMatrix::from_column_slice(rows, cols, data))
    }

    /// Builds from nested rows; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(NmfError::ShapeMismatch {
                op: "from_rows",
                expected: format!("rows of length {c}"),
                got: "ragged rows".into(),
            });
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::from_row_slice(r, c, &flat)
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        Self::from_nalgebra(DMatrix::from_fn(rows, cols, f))
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        Self::from_nalgebra(DMatrix::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::from_nalgebra(DMatrix::identity(n, n))
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        let n = diag.len();
        Self::from_fn(n, n, |i, j| if i == j { diag[i] } else { 0.0 })
    }

    fn validate(&self) -> Result<()> {
        let (rows, cols) = self.inner.shape();
        if rows == 0 || cols == 0 {
            return Err(NmfError::Empty { rows, cols });
        }
        check_finite(&self.inner)
    }

    /// Re-checks finiteness; arithmetic on valid matrices can still overflow.
    pub fn ensure_finite(&self) -> Result<()> {
        check_finite(&self.inner)
    }

    pub fn rows(&self) -> usize {
        self.inner.nrows()
    }

    pub fn cols(&self) -> usize {
        self.inner.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.inner.shape()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.inner[(row, col)]
    }

    /// Column-major entries.
    pub fn as_slice(&self) -> &[f64] {
        self.inner.as_slice()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        let r = self.rows();
        &self.inner.as_slice()[j * r..(j + 1) * r]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows()).map(|i| (0..self.cols()).map(|j| self.get(i, j)).collect()).collect()
    }

    pub fn as_nalgebra(&self) -> &DMatrix<f64> {
        &self.inner
    }

    pub fn into_nalgebra(self) -> DMatrix<f64> {
        self.inner
    }

    pub fn transpose(&self) -> DenseMatrix {
        Self::wrap(self.inner.transpose())
    }

    pub fn scale(&self, factor: f64) -> DenseMatrix {
        Self::wrap(&self.inner * factor)
    }

    pub fn map(&self, f: impl FnMut(f64) -> f64) -> DenseMatrix {
        Self::wrap(self.inner.map(f))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.inner.norm()
    }

    pub fn max_abs(&self) -> f64 {
        self.inner.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.inner.diagonal().iter().copied().collect()
    }

    pub fn is_nonnegative(&self) -> bool {
        self.inner.iter().all(|&v| v >= 0.0)
    }

    /// Product with shape checking.
    pub fn matmul(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols() != rhs.rows() {
            return Err(NmfError::ShapeMismatch {
                op: "matmul",
                expected: format!("rhs with {} rows", self.cols()),
                got: format!("{}x{}", rhs.rows(), rhs.cols()),
            });
        }
        Ok(Self::wrap(&self.inner * &rhs.inner))
    }

    pub fn try_sub(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        same_shape("sub", self, rhs)?;
        Ok(Self::wrap(&self.inner - &rhs.inner))
    }

    pub fn try_add(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        same_shape("add", self, rhs)?;
        Ok(Self::wrap(&self.inner + &rhs.inner))
    }

    /// Columns `start..start + len`.
    pub fn column_range(&self, start: usize, len: usize) -> DenseMatrix {
        Self::wrap(self.inner.columns(start, len).into_owned())
    }

    /// Columns in the given order (repeats allowed).
    pub fn select_columns(&self, idx: &[usize]) -> DenseMatrix {
        Self::wrap(self.inner.select_columns(idx))
    }
}

impl<'a> Mul<&'a DenseMatrix> for &'a DenseMatrix {
    type Output = DenseMatrix;

    /// Panics on shape mismatch; use [`DenseMatrix::matmul`] for a checked product.
    fn mul(self, rhs: &'a DenseMatrix) -> DenseMatrix {
        self.matmul(rhs).expect("matrix product shape mismatch")
    }
}

impl<'a> Sub<&'a DenseMatrix> for &'a DenseMatrix {
    type Output = DenseMatrix;

    fn sub(self, rhs: &'a DenseMatrix) -> DenseMatrix {
        self.try_sub(rhs).expect("matrix difference shape mismatch")
    }
}

impl<'a> Add<&'a DenseMatrix> for &'a DenseMatrix {
    type Output = DenseMatrix;

    fn add(self, rhs: &'a DenseMatrix) -> DenseMatrix {
        self.try_add(rhs).expect("matrix sum shape mismatch")
    }
}

fn check_len(rows: usize, cols: usize, len: usize) -> Result<()> {
    if rows * cols != len {
        return Err(NmfError::ShapeMismatch {
            op: "construct",
            expected: format!("{} entries for {rows}x{cols}", rows * cols),
            got: format!("{len} entries"),
        });
    }
    Ok(())
}

fn check_finite(m: &DMatrix<f64>) -> Result<()> {
    let rows = m.nrows();
    match m.iter().position(|v| !v.is_finite()) {
        Some(k) => Err(NmfError::NonFinite { row: k % rows, col: k / rows }),
        None => Ok(()),
    }
}

fn same_shape(op: &'static str, a: &DenseMatrix, b: &DenseMatrix) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(NmfError::ShapeMismatch {
            op,
            expected: format!("{}x{}", a.rows(), a.cols()),
            got: format!("{}x{}", b.rows(), b.cols()),
        });
    }
    Ok(())
}

/// Thin SVD `M = U diag(s) V^T` with singular values sorted nonincreasing.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    pub left: DenseMatrix,
    pub singular_values: Vec<f64>,
    pub right: DenseMatrix,
}

impl SvdFactors {
    pub fn reconstruct(&self) -> DenseMatrix {
        let s = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&self.singular_values));
        DenseMatrix::wrap(self.left.as_nalgebra() * s * self.right.as_nalgebra().transpose())
    }

    /// Number of singular values above `rel_tol * s_max`.
    pub fn rank(&self, rel_tol: f64) -> usize {
        let cutoff = rel_tol * self.singular_values.first().copied().unwrap_or(0.0);
        self.singular_values.iter().filter(|&&s| s > cutoff).count()
    }
}

fn raw_svd(m: &DenseMatrix) -> Result<SVD<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    m.ensure_finite()?;
    let (rows, cols) = m.shape();
    SVD::try_new(m.inner.clone(), true, true, f64::EPSILON, SVD_MAX_ITER)
        .ok_or(NmfError::SvdNoConvergence { rows, cols })
}

pub fn svd(m: &DenseMatrix) -> Result<SvdFactors> {
    let mut dec = raw_svd(m)?;
    dec.sort_by_singular_values();
    let (rows, cols) = m.shape();
    let left = dec.u.take().ok_or(NmfError::SvdNoConvergence { rows, cols })?;
    let v_t = dec.v_t.take().ok_or(NmfError::SvdNoConvergence { rows, cols })?;
    Ok(SvdFactors {
        left: DenseMatrix::wrap(left),
        singular_values: dec.singular_values.iter().copied().collect(),
        right: DenseMatrix::wrap(v_t.transpose()),
    })
}

/// Moore-Penrose pseudo-inverse together with the numerical rank used.
#[derive(Debug, Clone)]
pub struct PseudoInverse {
    pub matrix: DenseMatrix,
    pub rank: usize,
    pub singular_values: Vec<f64>,
}

/// Pseudo-inverse that also reports the retained rank.
pub fn pseudo_inverse_with_rank(m: &DenseMatrix, rel_tol: f64) -> Result<PseudoInverse> {
    if !(rel_tol > 0.0 && rel_tol < 1.0) {
        return Err(NmfError::InvalidParameter(format!("pseudo-inverse rel_tol must be in (0, 1), got {rel_tol}")));
    }
    let f = svd(m)?;
    let rank = f.rank(rel_tol);
    let (rows, cols) = m.shape();
    // V_r diag(1/s_r) U_r^T
    let mut pinv = DMatrix::zeros(cols, rows);
    for k in 0..rank {
        let inv = 1.0 / f.singular_values[k];
        let v = f.right.inner.column(k);
        let u = f.left.inner.column(k);
        pinv.ger(inv, &v, &u, 1.0);
    }
    Ok(PseudoInverse { matrix: DenseMatrix::wrap(pinv), rank, singular_values: f.singular_values })
}

/// `M^+`, with singular values below `rel_tol * s_max` treated as zero.
pub fn pseudo_inverse(m: &DenseMatrix, rel_tol: f64) -> Result<DenseMatrix> {
    Ok(pseudo_inverse_with_rank(m, rel_tol)?.matrix)
}

/// Largest singular value.
pub fn spectral_norm(m: &DenseMatrix) -> Result<f64> {
    let dec = raw_svd(m)?;
    Ok(dec.singular_values.iter().fold(0.0, |a: f64, &s| a.max(s)))
}

/// Power iteration on `M^T M` from the normalized all-ones vector.
///
/// Cheaper than [`spectral_norm`] but can undershoot when the start vector
/// is (nearly) orthogonal to the top right singular vector.
pub fn spectral_norm_power(m: &DenseMatrix, max_iter: usize, tol: f64) -> Result<f64> {
    m.ensure_finite()?;
    let a = &m.inner;
    let n = a.ncols();
    let mut v = nalgebra::DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut sigma = 0.0;
    for _ in 0..max_iter {
        let w = a.tr_mul(&(a * &v));
        let norm = w.norm();
        if norm == 0.0 {
            return Ok(0.0);
        }
        let next = norm.sqrt();
        v = w / norm;
        if (next - sigma).abs() <= tol * next {
            return Ok(next);
        }
        sigma = next;
    }
    Ok(sigma)
}

/// `phi_alpha`: keeps entries `>= alpha`, zeroes everything else.
pub fn threshold_elementwise(v: &DenseMatrix, alpha: f64) -> Result<DenseMatrix> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(NmfError::InvalidParameter(format!("threshold must be >= 0, got {alpha}")));
    }
    v.ensure_finite()?;
    Ok(v.map(|e| if e >= alpha { e } else { 0.0 }))
}

/// `C = Basis^+ Target`, the least-squares coefficients of `Target` in the
/// column space of `Basis`.
pub fn least_squares_coefficients(basis: &DenseMatrix, target: &DenseMatrix) -> Result<DenseMatrix> {
    if basis.rows() != target.rows() {
        return Err(NmfError::ShapeMismatch {
            op: "least_squares_coefficients",
            expected: format!("target with {} rows", basis.rows()),
            got: format!("{}x{}", target.rows(), target.cols()),
        });
    }
    let pinv = pseudo_inverse(basis, DEFAULT_PINV_REL_TOL)?;
    pinv.matmul(target)
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(m: &DenseMatrix) -> Result<Vec<f64>> {
    if m.rows() != m.cols() {
        return Err(NmfError::ShapeMismatch {
            op: "symmetric_eigenvalues",
            expected: "square matrix".into(),
            got: format!("{}x{}", m.rows(), m.cols()),
        });
    }
    m.ensure_finite()?;
    let mut ev: Vec<f64> = SymmetricEigen::new(m.inner.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// Symmetric square root factor `L` with `L L^T = M` for symmetric PSD `M`.
/// Slightly negative eigenvalues from rounding are clamped to zero.
pub fn psd_sqrt(m: &DenseMatrix) -> Result<DenseMatrix> {
    m.ensure_finite()?;
    let eig = SymmetricEigen::new(m.inner.clone());
    let scale = eig.eigenvalues.iter().fold(0.0_f64, |a, &l| a.max(l.abs()));
    if eig.eigenvalues.iter().any(|&l| l < -1e-10 * scale.max(1.0)) {
        return Err(NmfError::InvalidParameter("matrix is not positive semidefinite".into()));
    }
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let mut l = eig.eigenvectors.clone();
    for (j, r) in roots.iter().enumerate() {
        l.column_mut(j).scale_mut(*r);
    }
    Ok(DenseMatrix::wrap(&l * eig.eigenvectors.transpose()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> DenseMatrix {
        DenseMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn close(a: &DenseMatrix, b: &DenseMatrix, tol: f64) -> bool {
        a.shape() == b.shape() && a.try_sub(b).unwrap().max_abs() <= tol
    }

    #[test]
    fn constructors_reject_non_finite_and_empty() {
        assert!(matches!(
            DenseMatrix::from_row_slice(1, 2, &[1.0, f64::NAN]),
            Err(NmfError::NonFinite { row: 0, col: 1 })
        ));
        assert!(DenseMatrix::from_row_slice(1, 1, &[f64::INFINITY]).is_err());
        assert!(matches!(DenseMatrix::zeros(0, 3), Err(NmfError::Empty { .. })));
        assert!(DenseMatrix::from_row_slice(2, 2, &[1.0; 3]).is_err());
    }

    #[test]
    fn pinv_of_identity() {
        let i3 = DenseMatrix::identity(3).unwrap();
        assert!(close(&pseudo_inverse(&i3, DEFAULT_PINV_REL_TOL).unwrap(), &i3, 1e-14));
    }

    #[test]
    fn pinv_of_rank_deficient_diagonal() {
        let p = pseudo_inverse_with_rank(&m(&[&[2.0, 0.0], &[0.0, 0.0]]), DEFAULT_PINV_REL_TOL).unwrap();
        assert_eq!(p.rank, 1);
        assert!(close(&p.matrix, &m(&[&[0.5, 0.0], &[0.0, 0.0]]), 1e-14));
    }

    #[test]
    fn pinv_of_invertible_is_inverse() {
        let p = pseudo_inverse(&m(&[&[1.0, 1.0], &[0.0, 1.0]]), DEFAULT_PINV_REL_TOL).unwrap();
        assert!(close(&p, &m(&[&[1.0, -1.0], &[0.0, 1.0]]), 1e-12));
    }

    #[test]
    fn pinv_rejects_bad_tolerance() {
        let i = DenseMatrix::identity(2).unwrap();
        assert!(pseudo_inverse(&i, 0.0).is_err());
        assert!(pseudo_inverse(&i, 1.0).is_err());
    }

    #[test]
    fn pinv_of_wide_matrix_has_transposed_shape() {
        let a = m(&[&[1.0, 2.0, 3.0], &[0.0, 1.0, 4.0]]);
        let p = pseudo_inverse(&a, DEFAULT_PINV_REL_TOL).unwrap();
        assert_eq!(p.shape(), (3, 2));
        assert!(close(&(&a * &p), &DenseMatrix::identity(2).unwrap(), 1e-12));
    }

    #[test]
    fn spectral_norm_examples() {
        assert!((spectral_norm(&m(&[&[3.0, 0.0], &[0.0, 1.0]])).unwrap() - 3.0).abs() < 1e-12);
        assert_eq!(spectral_norm(&DenseMatrix::zeros(3, 2).unwrap()).unwrap(), 0.0);
        let nil = m(&[&[0.0, 1.0], &[0.0, 0.0]]);
        let oracle = svd(&nil).unwrap().singular_values[0];
        assert!((oracle - 1.0).abs() < 1e-12);
        assert!((spectral_norm(&nil).unwrap() - oracle).abs() < 1e-8);
        assert!((spectral_norm_power(&nil, 1000, 1e-10).unwrap() - oracle).abs() < 1e-8);
    }

    #[test]
    fn power_iteration_misses_orthogonal_top_direction() {
        // ones vector lies in the null space of [1, -1]; the SVD route does not care
        let a = m(&[&[1.0, -1.0]]);
        assert_eq!(spectral_norm_power(&a, 1000, 1e-10).unwrap(), 0.0);
        assert!((spectral_norm(&a).unwrap() - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn threshold_examples() {
        let v = m(&[&[0.3], &[0.2], &[-0.1]]);
        assert_eq!(threshold_elementwise(&v, 0.25).unwrap(), m(&[&[0.3], &[0.0], &[0.0]]));
        let pos = m(&[&[0.0, 0.7], &[1e-9, 3.0]]);
        assert_eq!(threshold_elementwise(&pos, 0.0).unwrap(), pos);
        let edge = m(&[&[0.25]]);
        assert_eq!(threshold_elementwise(&edge, 0.25).unwrap(), edge);
        assert!(threshold_elementwise(&edge, -0.1).is_err());
    }

    #[test]
    fn least_squares_examples() {
        let t = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let i = DenseMatrix::identity(2).unwrap();
        assert!(close(&least_squares_coefficients(&i, &t).unwrap(), &t, 1e-14));

        let basis = m(&[&[1.0, 0.0], &[1.0, 1.0], &[0.0, 2.0]]);
        assert!(close(&least_squares_coefficients(&basis, &basis).unwrap(), &i, 1e-12));

        // projection oracle <b,t>/<b,b>
        let b = m(&[&[1.0], &[1.0]]);
        let target = m(&[&[0.0], &[2.0]]);
        let oracle = (1.0 * 0.0 + 1.0 * 2.0) / (1.0 + 1.0);
        let c = least_squares_coefficients(&b, &target).unwrap();
        assert!((c.get(0, 0) - oracle).abs() < 1e-14);

        assert!(least_squares_coefficients(&b, &i.column_range(0, 1).transpose()).is_err());
    }

    #[test]
    fn svd_reconstructs_and_sorts() {
        let a = m(&[&[1.0, 2.0], &[3.0, -4.0], &[0.5, 0.0]]);
        let f = svd(&a).unwrap();
        assert!(f.singular_values.windows(2).all(|w| w[0] >= w[1]));
        let rel = f.reconstruct().try_sub(&a).unwrap().frobenius_norm() / a.frobenius_norm();
        assert!(rel < 1e-12);
    }

    #[test]
    fn psd_sqrt_squares_back() {
        let c = m(&[&[1.0, 0.5, 0.25], &[0.5, 1.0, 0.5], &[0.25, 0.5, 1.0]]);
        let l = psd_sqrt(&c).unwrap();
        assert!(close(&(&l * &l.transpose()), &c, 1e-12));
        assert!(psd_sqrt(&m(&[&[1.0, 0.0], &[0.0, -1.0]])).is_err());
    }
}
