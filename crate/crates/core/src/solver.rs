//! Alternating non-negative gradient descent (AND).
//!
//! The solver runs in stages. Each stage fixes a decoding matrix, the
//! pseudo-inverse of the working matrix at the start of the stage, and a
//! threshold `alpha`. Every iteration decodes `z = phi_alpha(A0^+ y)` and
//! takes a gradient step `A <- A + eta (y - A z) z^T`. With full-batch
//! updates the decoded `Z` is constant within a stage, so the step is
//! applied through the Gram matrices `Y Z^T` and `Z Z^T`.

use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{NmfError, Result};
use crate::linalg::{
    pseudo_inverse_with_rank, spectral_norm, threshold_elementwise, DenseMatrix, DEFAULT_PINV_REL_TOL,
};
use crate::metrics::{total_correlation_error, Decomposer};
use crate::rng::seeded;
use crate::trace::{log10_error, RunTrace, TraceRecord};

/// Any entry of the working matrix above this magnitude aborts the run.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

/// Per-stage decoding thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum ThresholdSchedule {
    Constant {
        value: f64,
    },
    /// `start * ratio^j` for stage `j`.
    Geometric {
        start: f64,
        ratio: f64,
    },
    /// `(lambda |E_0|_2 / r)^(2 / (q + 1))`, clamped to `(0, 1/4]`, where
    /// `E_0` is the off-diagonal error at the start of the stage.
    TheoryDriven {
        lambda: f64,
        r: f64,
        q: f64,
    },
}

impl Default for ThresholdSchedule {
    fn default() -> Self {
        ThresholdSchedule::Geometric { start: 0.1, ratio: 1.0 / 1.1 }
    }
}

impl ThresholdSchedule {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            ThresholdSchedule::Constant { value } => value >= 0.0 && value.is_finite(),
            ThresholdSchedule::Geometric { start, ratio } => {
                start > 0.0 && start.is_finite() && ratio > 0.0 && ratio <= 1.0
            }
            ThresholdSchedule::TheoryDriven { lambda, r, q } => {
                lambda > 0.0 && r >= 1.0 && q >= 1.0 && lambda.is_finite() && r.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(NmfError::InvalidParameter(format!("invalid threshold schedule {self:?}")))
        }
    }
}

/// Threshold for stage `j`. `e_norm` is required by the theory-driven rule.
pub fn stage_threshold(schedule: &ThresholdSchedule, j: usize, e_norm: Option<f64>) -> Result<f64> {
    schedule.validate()?;
    match *schedule {
        ThresholdSchedule::Constant { value } => Ok(value),
        ThresholdSchedule::Geometric { start, ratio } => Ok(start * ratio.powi(j as i32)),
        ThresholdSchedule::TheoryDriven { lambda, r, q } => {
            let e = e_norm.ok_or_else(|| {
                NmfError::InvalidParameter("theory-driven threshold needs an estimate of |E|_2".into())
            })?;
            if !(e >= 0.0 && e.is_finite()) {
                return Err(NmfError::InvalidParameter(format!("|E|_2 estimate must be >= 0, got {e}")));
            }
            let alpha = (lambda * e / r).powf(2.0 / (q + 1.0));
            Ok(alpha.clamp(f64::MIN_POSITIVE, 0.25))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", deny_unknown_fields)]
pub enum BatchMode {
    /// Every iteration uses the whole dataset.
    #[default]
    Full,
    /// Every iteration uses `size` columns, cycling through seeded
    /// permutations of the dataset. `size >= n` is the full batch.
    Minibatch { size: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AndConfig {
    pub stages: usize,
    pub iters_per_stage: usize,
    /// Fixed step; `None` uses `0.5 / (|Z Z^T|_2 + 1e-12)` from the first
    /// decode of each stage.
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default)]
    pub schedule: ThresholdSchedule,
    #[serde(default)]
    pub batch: BatchMode,
    #[serde(default = "default_pinv_tol")]
    pub pinv_rel_tol: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_pinv_tol() -> f64 {
    DEFAULT_PINV_REL_TOL
}

impl Default for AndConfig {
    fn default() -> Self {
        Self {
            stages: 30,
            iters_per_stage: 50,
            eta: None,
            schedule: ThresholdSchedule::default(),
            batch: BatchMode::Full,
            pinv_rel_tol: DEFAULT_PINV_REL_TOL,
            seed: 0,
        }
    }
}

impl AndConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(NmfError::InvalidParameter(m));
        if self.stages == 0 {
            return bad("stages must be >= 1".into());
        }
        if self.iters_per_stage == 0 {
            return bad("iterations per stage must be >= 1".into());
        }
        if let Some(eta) = self.eta {
            if !(eta > 0.0 && eta.is_finite()) {
                return bad(format!("step size must be > 0, got {eta}"));
            }
        }
        if let BatchMode::Minibatch { size: 0 } = self.batch {
            return bad("minibatch size must be >= 1".into());
        }
        if !(self.pinv_rel_tol > 0.0 && self.pinv_rel_tol < 1.0) {
            return bad(format!("pinv_rel_tol must be in (0, 1), got {}", self.pinv_rel_tol));
        }
        self.schedule.validate()
    }
}

/// `Z = phi_alpha(Pinv Y)`.
pub fn decode(pinv: &DenseMatrix, y: &DenseMatrix, alpha: f64) -> Result<DenseMatrix> {
    if pinv.cols() != y.rows() {
        return Err(NmfError::ShapeMismatch {
            op: "decode",
            expected: format!("Y with {} rows", pinv.cols()),
            got: format!("{}x{}", y.rows(), y.cols()),
        });
    }
    threshold_elementwise(&pinv.matmul(y)?, alpha)
}

/// `A + eta (Y - A Z) Z^T`, accumulated over all columns of `Y`.
pub fn gradient_update(a: &DenseMatrix, y: &DenseMatrix, z: &DenseMatrix, eta: f64) -> Result<DenseMatrix> {
    if a.rows() != y.rows() || a.cols() != z.rows() || y.cols() != z.cols() {
        return Err(NmfError::ShapeMismatch {
            op: "gradient_update",
            expected: format!("Y: {}x n, Z: {}x n with equal n", a.rows(), a.cols()),
            got: format!("Y: {}x{}, Z: {}x{}", y.rows(), y.cols(), z.rows(), z.cols()),
        });
    }
    let residual = y.try_sub(&a.matmul(z)?)?;
    let step = residual.matmul(&z.transpose())?.scale(eta);
    a.try_add(&step)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Record every `eval_every`-th iteration (the last iteration of each
    /// stage is always recorded).
    pub eval_every: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { eval_every: 1 }
    }
}

impl RunOptions {
    /// Every iteration for `D <= 50`, every 10th otherwise.
    pub fn for_topics(d: usize) -> Self {
        Self { eval_every: if d <= 50 { 1 } else { 10 } }
    }
}

#[derive(Debug, Clone)]
pub struct AndResult {
    pub a: DenseMatrix,
    pub trace: RunTrace,
    /// Pseudo-inverse computations performed (one per stage).
    pub pinv_count: usize,
    pub alphas: Vec<f64>,
    pub etas: Vec<f64>,
}

/// Runs AND from `a0` on observations `y` (`W x n`). With `truth` the trace
/// carries correlation errors and the `(Sigma, E, N)` norms.
pub fn run(a0: &DenseMatrix, y: &DenseMatrix, cfg: &AndConfig, truth: Option<&DenseMatrix>) -> Result<AndResult> {
    run_observed(a0, y, cfg, truth, RunOptions::default(), |_| {})
}

/// [`run`] with a callback invoked on every trace record as it is produced.
pub fn run_observed(
    a0: &DenseMatrix,
    y: &DenseMatrix,
    cfg: &AndConfig,
    truth: Option<&DenseMatrix>,
    opts: RunOptions,
    mut observer: impl FnMut(&TraceRecord),
) -> Result<AndResult> {
    cfg.validate()?;
    if a0.rows() != y.rows() {
        return Err(NmfError::ShapeMismatch {
            op: "run",
            expected: format!("Y with {} rows", a0.rows()),
            got: format!("{}x{}", y.rows(), y.cols()),
        });
    }
    let decomposer = match truth {
        Some(t) => {
            if t.shape() != a0.shape() {
                return Err(NmfError::ShapeMismatch {
                    op: "run",
                    expected: format!("truth of shape {}x{}", a0.rows(), a0.cols()),
                    got: format!("{}x{}", t.rows(), t.cols()),
                });
            }
            Some(Decomposer::new(t)?)
        }
        None => None,
    };
    let eval_every = opts.eval_every.max(1);
    let n = y.cols();
    let batch_size = match cfg.batch {
        BatchMode::Full => n,
        BatchMode::Minibatch { size } => size.min(n),
    };
    let mut batches = BatchCursor::new(n, batch_size, cfg.seed);

    let started = Instant::now();
    let mut trace = RunTrace::default();
    let mut emit = |rec: TraceRecord, trace: &mut RunTrace| {
        observer(&rec);
        trace.push(rec);
    };
    let record =
        |a: &DenseMatrix, z: Option<(&DenseMatrix, &DenseMatrix)>| -> Result<(f64, Option<f64>, Option<f64>)> {
            match &decomposer {
                Some(dec) => {
                    let err = total_correlation_error(a, dec.a_star())?.total;
                    let parts = dec.decompose(a)?;
                    Ok((err, Some(parts.e_norm), Some(parts.n_norm)))
                }
                None => {
                    let res = match z {
                        Some((yb, zb)) => yb.try_sub(&a.matmul(zb)?)?.frobenius_norm(),
                        None => f64::NAN,
                    };
                    Ok((res, None, None))
                }
            }
        };

    let mut a = a0.clone();
    a.ensure_finite()?;
    let mut pinv_count = 0;
    let mut alphas = Vec::with_capacity(cfg.stages);
    let mut etas = Vec::with_capacity(cfg.stages);

    if decomposer.is_some() {
        let (err, e, nn) = record(&a, None)?;
        emit(
            TraceRecord {
                stage: 0,
                iter: 0,
                seconds: started.elapsed().as_secs_f64(),
                alpha: None,
                total_error: err,
                log10_error: log10_error(err),
                e_norm: e,
                n_norm: nn,
            },
            &mut trace,
        );
    }

    for stage in 0..cfg.stages {
        let pinv = pseudo_inverse_with_rank(&a, cfg.pinv_rel_tol)?;
        pinv_count += 1;
        if stage == 0 && pinv.rank < a.cols() {
            return Err(NmfError::RankDeficient { what: "initial matrix A0", rank: pinv.rank, needed: a.cols() });
        }
        let alpha = match (&cfg.schedule, &decomposer) {
            (ThresholdSchedule::TheoryDriven { .. }, Some(dec)) => {
                stage_threshold(&cfg.schedule, stage, Some(dec.decompose(&a)?.e_norm))?
            }
            (ThresholdSchedule::TheoryDriven { .. }, None) => {
                stage_threshold(&ThresholdSchedule::default(), stage, None)?
            }
            (s, _) => stage_threshold(s, stage, None)?,
        };
        alphas.push(alpha);

        let mut eta = cfg.eta;
        let mut full: Option<(DenseMatrix, DenseMatrix, DenseMatrix, DenseMatrix)> = None;
        for iter in 1..=cfg.iters_per_stage {
            // Full batch: Z is fixed for the whole stage, decode once.
            let fresh;
            let (yb, z, yzt, zzt) = if batch_size == n {
                if full.is_none() {
                    let z = decode(&pinv.matrix, y, alpha)?;
                    let (yzt, zzt) = grams(y, &z)?;
                    full = Some((y.clone(), z, yzt, zzt));
                }
                let f = full.as_ref().expect("decoded above");
                (&f.0, &f.1, &f.2, &f.3)
            } else {
                let yb = y.select_columns(&batches.next_batch());
                let z = decode(&pinv.matrix, &yb, alpha)?;
                let (yzt, zzt) = grams(&yb, &z)?;
                fresh = (yb, z, yzt, zzt);
                (&fresh.0, &fresh.1, &fresh.2, &fresh.3)
            };
            let step = match eta {
                Some(e) => e,
                None => {
                    let e = 0.5 / (spectral_norm(zzt)? + 1e-12);
                    eta = Some(e);
                    e
                }
            };
            if iter == 1 {
                etas.push(step);
            }
            // A + eta (Y Z^T - A Z Z^T) == A + eta (Y - A Z) Z^T
            let grad = yzt.try_sub(&a.matmul(zzt)?)?;
            a = a.try_add(&grad.scale(step))?;
            let magnitude = a.max_abs();
            if !(magnitude <= DIVERGENCE_LIMIT) {
                return Err(NmfError::Diverged { stage, iter, magnitude });
            }

            if iter % eval_every == 0 || iter == cfg.iters_per_stage {
                let (err, e, nn) = record(&a, Some((yb, z)))?;
                emit(
                    TraceRecord {
                        stage,
                        iter,
                        seconds: started.elapsed().as_secs_f64(),
                        alpha: Some(alpha),
                        total_error: err,
                        log10_error: log10_error(err),
                        e_norm: e,
                        n_norm: nn,
                    },
                    &mut trace,
                );
            }
        }
    }
    Ok(AndResult { a, trace, pinv_count, alphas, etas })
}

fn grams(y: &DenseMatrix, z: &DenseMatrix) -> Result<(DenseMatrix, DenseMatrix)> {
    let zt = z.transpose();
    Ok((y.matmul(&zt)?, z.matmul(&zt)?))
}

/// Cycles through seeded permutations of `0..n` in windows of `size`.
struct BatchCursor {
    order: Vec<usize>,
    pos: usize,
    size: usize,
    rng: crate::rng::SeededRng,
}

impl BatchCursor {
    fn new(n: usize, size: usize, seed: u64) -> Self {
        let mut rng = seeded(seed);
        let mut order: Vec<usize> = (0..n).collect();
        if size < n {
            order.shuffle(&mut rng);
        }
        Self { order, pos: 0, size, rng }
    }

    fn next_batch(&mut self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.size);
        while out.len() < self.size {
            if self.pos == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}
