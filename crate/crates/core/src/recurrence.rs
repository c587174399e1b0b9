//! Numerical check of the stage update recurrence.
//!
//! For `M_{t+1} = M_t (I - eta L) + eta Q L + eta R_t` with `L` PSD,
//! `eta * lambda_max(L) < 1` and `|R_t|_2 <= c`, the distance to the fixed
//! point obeys
//!
//! `|M_t - Q|_2 <= |M_0 - Q|_2 (1 - eta lambda_min(L))^t + c / lambda_min(L)`.
//!
//! `M_t` plays the role of `Sigma_t + E_t`, the working matrix expressed in
//! the ground-truth basis.

use rand_distr::{Distribution, StandardNormal};

use crate::error::{NmfError, Result};
use crate::linalg::{spectral_norm, symmetric_eigenvalues, DenseMatrix};
use crate::rng::seeded;

#[derive(Debug, Clone)]
pub struct RecurrenceReport {
    /// `|M_t - Q|_2` for `t = 0..=steps`.
    pub distances: Vec<f64>,
    /// Right-hand side of the bound for the same `t`.
    pub bounds: Vec<f64>,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub first_violation: Option<usize>,
}

impl RecurrenceReport {
    pub fn holds(&self) -> bool {
        self.first_violation.is_none()
    }
}

#[derive(Debug, Clone)]
pub struct RecurrenceInputs<'a> {
    pub sigma0: &'a DenseMatrix,
    pub e0: &'a DenseMatrix,
    pub lambda: &'a DenseMatrix,
    pub target: &'a DenseMatrix,
    pub r_bound: f64,
    pub eta: f64,
    pub steps: usize,
}

fn precondition(msg: impl Into<String>) -> NmfError {
    NmfError::Precondition(msg.into())
}

fn check(inp: &RecurrenceInputs<'_>) -> Result<(f64, f64)> {
    let d = inp.sigma0.rows();
    for (name, m) in [("Sigma0", inp.sigma0), ("E0", inp.e0), ("Lambda", inp.lambda), ("Q", inp.target)] {
        if m.shape() != (d, d) {
            return Err(precondition(format!("{name} must be {d}x{d}, got {}x{}", m.rows(), m.cols())));
        }
    }
    for i in 0..d {
        for j in 0..d {
            if i != j && inp.sigma0.get(i, j) != 0.0 {
                return Err(precondition("Sigma0 must be diagonal"));
            }
            if i == j && inp.e0.get(i, i) != 0.0 {
                return Err(precondition("E0 must have a zero diagonal"));
            }
            let (a, b) = (inp.lambda.get(i, j), inp.lambda.get(j, i));
            if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                return Err(precondition("Lambda must be symmetric"));
            }
        }
    }
    if !(inp.eta > 0.0 && inp.eta.is_finite()) {
        return Err(precondition(format!("eta must be > 0, got {}", inp.eta)));
    }
    if !(inp.r_bound >= 0.0 && inp.r_bound.is_finite()) {
        return Err(precondition(format!("R bound must be >= 0, got {}", inp.r_bound)));
    }
    let ev = symmetric_eigenvalues(inp.lambda)?;
    let (lmin, lmax) = (ev[0], ev[d - 1]);
    if lmin < -1e-12 * lmax.abs().max(1.0) {
        return Err(precondition(format!("Lambda must be PSD, lambda_min = {lmin}")));
    }
    if inp.eta * lmax >= 1.0 {
        return Err(precondition(format!("eta * lambda_max = {} must be < 1", inp.eta * lmax)));
    }
    Ok((lmin.max(0.0), lmax))
}

/// Iterates the recurrence with perturbations from `perturbation(t)` and
/// checks the bound at every step. Perturbations larger than `r_bound` in
/// spectral norm are rejected.
pub fn simulate_with(
    inp: &RecurrenceInputs<'_>,
    mut perturbation: impl FnMut(usize) -> DenseMatrix,
) -> Result<RecurrenceReport> {
    let (lambda_min, lambda_max) = check(inp)?;
    let d = inp.sigma0.rows();
    let l = inp.lambda.as_nalgebra();
    let contraction = nalgebra::DMatrix::identity(d, d) - l * inp.eta;
    let drift = inp.target.as_nalgebra() * l * inp.eta;

    let mut m = inp.sigma0.as_nalgebra() + inp.e0.as_nalgebra();
    let dist = |m: &nalgebra::DMatrix<f64>| spectral_norm(&DenseMatrix::wrap(m - inp.target.as_nalgebra()));
    let d0 = dist(&m)?;
    let rate = 1.0 - inp.eta * lambda_min;
    let floor = if inp.r_bound == 0.0 {
        0.0
    } else if lambda_min > 0.0 {
        inp.r_bound / lambda_min
    } else {
        f64::INFINITY
    };

    let mut distances = vec![d0];
    let mut bounds = vec![d0 + floor];
    let mut first_violation = None;
    for t in 0..inp.steps {
        let r = perturbation(t);
        if r.shape() != (d, d) {
            return Err(precondition("perturbation has the wrong shape"));
        }
        let rn = spectral_norm(&r)?;
        if rn > inp.r_bound * (1.0 + 1e-12) {
            return Err(precondition(format!("|R_{t}|_2 = {rn} exceeds bound {}", inp.r_bound)));
        }
        m = &m * &contraction + &drift + r.as_nalgebra() * inp.eta;
        let dt = dist(&m)?;
        let bt = d0 * rate.powi(t as i32 + 1) + floor;
        if first_violation.is_none() && dt > bt + 1e-12 * bt.max(1.0) {
            first_violation = Some(t + 1);
        }
        distances.push(dt);
        bounds.push(bt);
    }
    Ok(RecurrenceReport { distances, bounds, lambda_min, lambda_max, first_violation })
}

/// Gaussian perturbations rescaled to spectral norm exactly `r_bound`.
pub fn simulate_update_recurrence(inp: &RecurrenceInputs<'_>, seed: u64) -> Result<RecurrenceReport> {
    let d = inp.sigma0.rows();
    let mut rng = seeded(seed);
    let r_bound = inp.r_bound;
    simulate_with(inp, move |_| {
        if r_bound == 0.0 {
            return DenseMatrix::wrap(nalgebra::DMatrix::zeros(d, d));
        }
        let raw = nalgebra::DMatrix::from_fn(d, d, |_, _| {
            <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
        });
        let norm = spectral_norm(&DenseMatrix::wrap(raw.clone())).unwrap_or(1.0);
        DenseMatrix::wrap(raw * (r_bound / norm))
    })
}
