//! Reference NMF solvers: multiplicative updates (MU), hierarchical
//! alternating least squares (HALS) and alternating non-negative least
//! squares by projected gradient (ANLS).
//!
//! All three minimize `|Y - A X|_F` over `A, X >= 0` and are monotone in
//! that objective.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::RngExt;
use serde::{Deserialize, Serialize};

use crate::error::{NmfError, Result};
use crate::linalg::{spectral_norm, DenseMatrix};
use crate::metrics::{total_correlation_error, Decomposer};
use crate::rng::seeded;
use crate::trace::{log10_error, RunTrace, TraceRecord};

/// Default denominator floor for MU and HALS.
pub const DEFAULT_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineAlgorithm {
    Mu,
    Hals,
    Anls,
}

impl BaselineAlgorithm {
    pub fn name(self) -> &'static str {
        match self {
            BaselineAlgorithm::Mu => "mu",
            BaselineAlgorithm::Hals => "hals",
            BaselineAlgorithm::Anls => "anls",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineConfig {
    pub algorithm: BaselineAlgorithm,
    pub outer_iters: usize,
    /// Projected-gradient steps per ANLS half-step.
    #[serde(default = "default_inner")]
    pub inner_iters: usize,
    #[serde(default = "default_eps")]
    pub epsilon_floor: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_inner() -> usize {
    20
}

fn default_eps() -> f64 {
    DEFAULT_EPSILON
}

impl BaselineConfig {
    pub fn new(algorithm: BaselineAlgorithm, outer_iters: usize) -> Self {
        Self { algorithm, outer_iters, inner_iters: default_inner(), epsilon_floor: DEFAULT_EPSILON, seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon_floor > 0.0 && self.epsilon_floor.is_finite()) {
            return Err(NmfError::InvalidParameter(format!("epsilon floor must be > 0, got {}", self.epsilon_floor)));
        }
        Ok(())
    }
}

fn check_shapes(op: &'static str, a: &DenseMatrix, x: &DenseMatrix, y: &DenseMatrix) -> Result<()> {
    if a.rows() != y.rows() || a.cols() != x.rows() || x.cols() != y.cols() {
        return Err(NmfError::ShapeMismatch {
            op,
            expected: "A: W x D, X: D x n, Y: W x n".to_string(),
            got: format!("A: {}x{}, X: {}x{}, Y: {}x{}", a.rows(), a.cols(), x.rows(), x.cols(), y.rows(), y.cols()),
        });
    }
    Ok(())
}

pub fn objective(a: &DenseMatrix, x: &DenseMatrix, y: &DenseMatrix) -> Result<f64> {
    Ok(y.try_sub(&a.matmul(x)?)?.frobenius_norm())
}

/// One round of Lee-Seung Frobenius updates, `X` first.
pub fn mu_step(a: &DenseMatrix, x: &DenseMatrix, y: &DenseMatrix, eps: f64) -> Result<(DenseMatrix, DenseMatrix)> {
    check_shapes("mu_step", a, x, y)?;
    for (name, m) in [("A", a), ("X", x), ("Y", y)] {
        if !m.is_nonnegative() {
            return Err(NmfError::NegativeInput(format!(
                "multiplicative update needs nonnegative {name}; data with negative entries is unsupported"
            )));
        }
    }
    let (a, x, y) = (a.as_nalgebra(), x.as_nalgebra(), y.as_nalgebra());
    let num = a.tr_mul(y);
    let den = a.tr_mul(a) * x;
    let x_new = x.zip_zip_map(&num, &den, |v, n, d| v * n / (d + eps));
    let num = y * x_new.transpose();
    let den = a * (&x_new * x_new.transpose());
    let a_new = a.zip_zip_map(&num, &den, |v, n, d| v * n / (d + eps));
    Ok((DenseMatrix::wrap(a_new), DenseMatrix::wrap(x_new)))
}

/// One HALS sweep: columns of `A` in order, then rows of `X` in order.
pub fn hals_step(a: &DenseMatrix, x: &DenseMatrix, y: &DenseMatrix, eps: f64) -> Result<(DenseMatrix, DenseMatrix)> {
    check_shapes("hals_step", a, x, y)?;
    let d = a.cols();
    let y = y.as_nalgebra();
    let mut a = a.as_nalgebra().clone();
    let mut x = x.as_nalgebra().clone();

    let yxt = y * x.transpose();
    let xxt = &x * x.transpose();
    for j in 0..d {
        let denom = xxt[(j, j)] + eps;
        let update = (yxt.column(j) - &a * xxt.column(j)) / denom;
        let col = (a.column(j) + update).map(|v| v.max(0.0));
        a.set_column(j, &col);
    }

    let aty = a.tr_mul(y);
    let ata = a.tr_mul(&a);
    for j in 0..d {
        let denom = ata[(j, j)] + eps;
        let update = (aty.row(j) - ata.row(j) * &x) / denom;
        let row = (x.row(j) + update).map(|v| v.max(0.0));
        x.set_row(j, &row);
    }
    Ok((DenseMatrix::wrap(a), DenseMatrix::wrap(x)))
}

/// Projected gradient on `min_{X >= 0} |Y - A X|` with step `1 / |A^T A|_2`,
/// `inner_iters` times, then the same for `A` with `X` fixed.
pub fn anls_step(
    a: &DenseMatrix,
    x: &DenseMatrix,
    y: &DenseMatrix,
    inner_iters: usize,
) -> Result<(DenseMatrix, DenseMatrix)> {
    check_shapes("anls_step", a, x, y)?;
    if inner_iters == 0 {
        return Ok((a.clone(), x.clone()));
    }
    let yn = y.as_nalgebra();
    let an = a.as_nalgebra();

    let ata = an.tr_mul(an);
    let aty = an.tr_mul(yn);
    let mut xn = x.as_nalgebra().clone();
    let lip = spectral_norm(&DenseMatrix::wrap(ata.clone()))?;
    if lip > 0.0 {
        for _ in 0..inner_iters {
            let grad = &ata * &xn - &aty;
            xn = (xn - grad / lip).map(|v| v.max(0.0));
        }
    }

    let xxt = &xn * xn.transpose();
    let yxt = yn * xn.transpose();
    let mut a_new: DMatrix<f64> = an.clone();
    let lip = spectral_norm(&DenseMatrix::wrap(xxt.clone()))?;
    if lip > 0.0 {
        for _ in 0..inner_iters {
            let grad = &a_new * &xxt - &yxt;
            a_new = (a_new - grad / lip).map(|v| v.max(0.0));
        }
    }
    Ok((DenseMatrix::wrap(a_new), DenseMatrix::wrap(xn)))
}

#[derive(Debug, Clone)]
pub struct BaselineResult {
    pub a: DenseMatrix,
    pub x: DenseMatrix,
    pub trace: RunTrace,
}

/// Runs a baseline from `a0` with `X` initialized `Unif[0, 1)` from the
/// config seed. `A0` is projected onto the nonnegative orthant before the
/// first step. Records use stage 0 and the outer iteration as `iter`.
pub fn run_baseline(
    cfg: &BaselineConfig,
    y: &DenseMatrix,
    a0: &DenseMatrix,
    truth: Option<&DenseMatrix>,
    eval_every: usize,
    mut observer: impl FnMut(&TraceRecord),
) -> Result<BaselineResult> {
    cfg.validate()?;
    if cfg.algorithm == BaselineAlgorithm::Mu && !y.is_nonnegative() {
        return Err(NmfError::NegativeInput("multiplicative update refuses data with negative entries".into()));
    }
    let d = a0.cols();
    let n = y.cols();
    let mut rng = seeded(cfg.seed);
    let mut x = DenseMatrix::from_fn(d, n, |_, _| rng.random::<f64>())?;
    check_shapes("run_baseline", a0, &x, y)?;
    let decomposer = truth.map(Decomposer::new).transpose()?;
    let eval_every = eval_every.max(1);

    let started = Instant::now();
    let mut trace = RunTrace::default();
    let mut emit = |iter: usize, a: &DenseMatrix, x: &DenseMatrix, trace: &mut RunTrace| -> Result<()> {
        let (err, e, nn) = match &decomposer {
            Some(dec) => {
                let parts = dec.decompose(a)?;
                (total_correlation_error(a, dec.a_star())?.total, Some(parts.e_norm), Some(parts.n_norm))
            }
            None => (objective(a, x, y)?, None, None),
        };
        let rec = TraceRecord {
            stage: 0,
            iter,
            seconds: started.elapsed().as_secs_f64(),
            alpha: None,
            total_error: err,
            log10_error: log10_error(err),
            e_norm: e,
            n_norm: nn,
        };
        observer(&rec);
        trace.push(rec);
        Ok(())
    };

    emit(0, a0, &x, &mut trace)?;
    let mut a = a0.clone();
    if cfg.outer_iters > 0 {
        a = a.map(|v| v.max(0.0));
    }
    for it in 1..=cfg.outer_iters {
        let (na, nx) = match cfg.algorithm {
            BaselineAlgorithm::Mu => mu_step(&a, &x, y, cfg.epsilon_floor)?,
            BaselineAlgorithm::Hals => hals_step(&a, &x, y, cfg.epsilon_floor)?,
            BaselineAlgorithm::Anls => anls_step(&a, &x, y, cfg.inner_iters)?,
        };
        na.ensure_finite()?;
        nx.ensure_finite()?;
        a = na;
        x = nx;
        if it % eval_every == 0 || it == cfg.outer_iters {
            emit(it, &a, &x, &mut trace)?;
        }
    }
    Ok(BaselineResult { a, x, trace })
}
