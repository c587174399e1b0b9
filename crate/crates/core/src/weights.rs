//! Weight distributions for the generative model `y = A* x`, and the
//! general correlation condition (GCC) parameters that characterize them.
//!
//! A weight vector `x` satisfies `(r, k, m, lambda)`-GCC when
//!
//! 1. `|x|_1 <= r` and every `x_i` lies in `[0, 1]`,
//! 2. `E[x_i^2] <= 2k / D`,
//! 3. `E[x_i x_j] <= m / D^2` for `i != j`,
//! 4. `E[x x^T] >= (k / D) * lambda * I`.
//!
//! The decay order `q` bounds how much mass nonzero weights put near zero:
//! `Pr[x_i <= a | x_i != 0] <= a^q`.

use std::fmt;

use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{NmfError, Result};
use crate::linalg::{psd_sqrt, symmetric_eigenvalues, DenseMatrix};
use crate::rng::{seeded, SeededRng};

/// Dirichlet concentration: one shared value or one per coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Concentration {
    Symmetric(f64),
    PerCoordinate(Vec<f64>),
}

impl Concentration {
    fn expand(&self, dim: usize) -> Vec<f64> {
        match self {
            Concentration::Symmetric(a) => vec![*a; dim],
            Concentration::PerCoordinate(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightFamily {
    /// Exactly `support` ones on a uniformly random support.
    SparseBinary {
        support: usize,
    },
    Dirichlet {
        concentration: Concentration,
    },
    /// Softmax of `Normal(mean, covariance)`.
    LogisticNormal {
        mean: Vec<f64>,
        covariance: Vec<Vec<f64>>,
    },
    /// Exactly `support` nonzeros, each uniform on `(floor, ceiling]`.
    SparseUniform {
        support: usize,
        floor: f64,
        ceiling: f64,
    },
}

impl WeightFamily {
    /// Zero-mean logistic normal with Toeplitz covariance `rho^|i-j|`.
    pub fn logistic_normal_toeplitz(dim: usize, rho: f64) -> Self {
        let covariance = (0..dim).map(|i| (0..dim).map(|j| rho.powi((i as i32 - j as i32).abs())).collect()).collect();
        WeightFamily::LogisticNormal { mean: vec![0.0; dim], covariance }
    }

    /// Symmetric Dirichlet whose concentrations sum to `total`.
    pub fn dirichlet_total(dim: usize, total: f64) -> Self {
        WeightFamily::Dirichlet { concentration: Concentration::Symmetric(total / dim as f64) }
    }

    pub fn name(&self) -> &'static str {
        match self {
            WeightFamily::SparseBinary { .. } => "sparse_binary",
            WeightFamily::Dirichlet { .. } => "dirichlet",
            WeightFamily::LogisticNormal { .. } => "logistic_normal",
            WeightFamily::SparseUniform { .. } => "sparse_uniform",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightSpec {
    pub family: WeightFamily,
    pub dim: usize,
    pub seed: u64,
}

impl WeightSpec {
    pub fn new(family: WeightFamily, dim: usize, seed: u64) -> Self {
        Self { family, dim, seed }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim;
        let bad = |msg: String| Err(NmfError::InvalidParameter(msg));
        if d == 0 {
            return bad("weight dimension must be positive".into());
        }
        match &self.family {
            WeightFamily::SparseBinary { support } => {
                if *support == 0 || *support > d {
                    return bad(format!("sparse binary support {support} not in 1..={d}"));
                }
            }
            WeightFamily::SparseUniform { support, floor, ceiling } => {
                if *support == 0 || *support > d {
                    return bad(format!("sparse uniform support {support} not in 1..={d}"));
                }
                if !(0.0 <= *floor && floor <= ceiling && *ceiling <= 1.0 && *ceiling > 0.0) {
                    return bad(format!("sparse uniform range ({floor}, {ceiling}] must lie in (0, 1]"));
                }
            }
            WeightFamily::Dirichlet { concentration } => {
                let c = concentration.expand(d);
                if c.len() != d {
                    return bad(format!("dirichlet has {} concentrations for dimension {d}", c.len()));
                }
                if c.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
                    return bad("dirichlet concentrations must be positive".into());
                }
            }
            WeightFamily::LogisticNormal { mean, covariance } => {
                if mean.len() != d || covariance.len() != d || covariance.iter().any(|r| r.len() != d) {
                    return bad(format!("logistic normal parameters must have dimension {d}"));
                }
                let cov = DenseMatrix::from_rows(covariance)?;
                for i in 0..d {
                    for j in 0..i {
                        let (a, b) = (cov.get(i, j), cov.get(j, i));
                        if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                            return bad("logistic normal covariance is not symmetric".into());
                        }
                    }
                }
                psd_sqrt(&cov)
                    .map_err(|_| NmfError::InvalidParameter("logistic normal covariance is not PSD".into()))?;
            }
        }
        Ok(())
    }
}

enum Sampler {
    SparseBinary(usize),
    SparseUniform(usize, f64, f64),
    Dirichlet(Vec<Gamma<f64>>),
    LogisticNormal(Vec<f64>, DenseMatrix),
}

impl Sampler {
    fn new(spec: &WeightSpec) -> Result<Self> {
        Ok(match &spec.family {
            WeightFamily::SparseBinary { support } => Sampler::SparseBinary(*support),
            WeightFamily::SparseUniform { support, floor, ceiling } => {
                Sampler::SparseUniform(*support, *floor, *ceiling)
            }
            WeightFamily::Dirichlet { concentration } => Sampler::Dirichlet(
                concentration
                    .expand(spec.dim)
                    .into_iter()
                    .map(|a| Gamma::new(a, 1.0).map_err(|e| NmfError::InvalidParameter(e.to_string())))
                    .collect::<Result<_>>()?,
            ),
            WeightFamily::LogisticNormal { mean, covariance } => {
                let root = psd_sqrt(&DenseMatrix::from_rows(covariance)?)?;
                Sampler::LogisticNormal(mean.clone(), root)
            }
        })
    }

    fn draw(&self, rng: &mut SeededRng, out: &mut [f64]) {
        use rand::RngExt;
        let d = out.len();
        out.fill(0.0);
        match self {
            Sampler::SparseBinary(s) => {
                for i in rand::seq::index::sample(rng, d, *s) {
                    out[i] = 1.0;
                }
            }
            Sampler::SparseUniform(s, lo, hi) => {
                for i in rand::seq::index::sample(rng, d, *s) {
                    let u: f64 = rng.random();
                    out[i] = hi - u * (hi - lo);
                }
            }
            Sampler::Dirichlet(gammas) => loop {
                for (o, g) in out.iter_mut().zip(gammas) {
                    *o = g.sample(rng);
                }
                let total: f64 = out.iter().sum();
                // underflow for very small concentrations; redraw
                if total > 0.0 && out.iter().all(|&v| v > 0.0) {
                    out.iter_mut().for_each(|v| *v /= total);
                    break;
                }
            },
            Sampler::LogisticNormal(mean, root) => {
                let z: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
                for (i, o) in out.iter_mut().enumerate() {
                    *o = mean[i] + (0..d).map(|j| root.get(i, j) * z[j]).sum::<f64>();
                }
                let max = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                out.iter_mut().for_each(|v| *v = (*v - max).exp());
                let total: f64 = out.iter().sum();
                out.iter_mut().for_each(|v| *v /= total);
            }
        }
    }
}

/// Draws `n` i.i.d. weight vectors as the columns of a `D x n` matrix.
pub fn sample_weights(spec: &WeightSpec, n: usize) -> Result<DenseMatrix> {
    spec.validate()?;
    if n == 0 {
        return Err(NmfError::InvalidParameter("sample count must be positive".into()));
    }
    let sampler = Sampler::new(spec)?;
    let mut rng = seeded(spec.seed);
    let d = spec.dim;
    let mut data = vec![0.0; d * n];
    for col in data.chunks_exact_mut(d) {
        sampler.draw(&mut rng, col);
    }
    DenseMatrix::from_column_slice(d, n, &data)
}

/// Decay order `q`; binary weights have `q = infinity`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DecayOrder {
    Finite(f64),
    Infinite,
    /// No closed form known; measure with [`decay_profile`].
    Empirical,
}

impl fmt::Display for DecayOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DecayOrder::Finite(q) => write!(f, "{q}"),
            DecayOrder::Infinite => f.write_str("inf"),
            DecayOrder::Empirical => f.write_str("empirical"),
        }
    }
}

impl Serialize for DecayOrder {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            DecayOrder::Finite(q) => s.serialize_f64(*q),
            other => s.serialize_str(&other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GccParams {
    pub r: f64,
    pub k: f64,
    pub m: f64,
    pub lambda: f64,
    pub q: DecayOrder,
}

impl GccParams {
    /// Which of conditions 2-4 these parameters fail on the second moment
    /// `delta` (`1e-9` slack). Empty when all hold.
    pub fn violations(&self, delta: &DenseMatrix) -> Result<Vec<String>> {
        let d = delta.rows();
        let df = d as f64;
        let mut out = Vec::new();
        let diag_max = (0..d).map(|i| delta.get(i, i)).fold(f64::NEG_INFINITY, f64::max);
        if diag_max > 2.0 * self.k / df + 1e-9 {
            out.push(format!("diagonal: max E[x_i^2] = {diag_max} > 2k/D = {}", 2.0 * self.k / df));
        }
        let off_max = off_diagonal_max(delta);
        if off_max > self.m / (df * df) + 1e-9 {
            out.push(format!("off-diagonal: max E[x_i x_j] = {off_max} > m/D^2 = {}", self.m / (df * df)));
        }
        let lmin = symmetric_eigenvalues(delta)?[0];
        let floor = self.k / df * self.lambda;
        if lmin < floor - 1e-9 {
            out.push(format!("eigenvalue: lambda_min = {lmin} < k*lambda/D = {floor}"));
        }
        Ok(out)
    }
}

fn off_diagonal_max(delta: &DenseMatrix) -> f64 {
    let d = delta.rows();
    let mut best = 0.0_f64;
    for j in 0..d {
        for i in 0..d {
            if i != j {
                best = best.max(delta.get(i, j));
            }
        }
    }
    best
}

/// Closed-form GCC parameters for the sparse binary and symmetric
/// Dirichlet families.
pub fn gcc_closed_form(spec: &WeightSpec) -> Result<GccParams> {
    spec.validate()?;
    let d = spec.dim as f64;
    match &spec.family {
        WeightFamily::SparseBinary { support } => {
            let s = *support as f64;
            Ok(GccParams { r: s, k: s, m: s * s, lambda: 1.0 - 1.0 / s, q: DecayOrder::Infinite })
        }
        WeightFamily::Dirichlet { concentration } => {
            let c = concentration.expand(spec.dim);
            if c.iter().any(|&a| a != c[0]) {
                return Err(NmfError::NoClosedForm("asymmetric dirichlet"));
            }
            let s = c[0] * d;
            Ok(GccParams {
                r: 1.0,
                k: 1.0,
                m: 1.0 / (s * d),
                lambda: (1.0 - 1.0 / s).max(0.0),
                q: DecayOrder::Empirical,
            })
        }
        WeightFamily::LogisticNormal { .. } => Err(NmfError::NoClosedForm("logistic normal")),
        WeightFamily::SparseUniform { .. } => Err(NmfError::NoClosedForm("sparse uniform")),
    }
}

/// Tightest empirical GCC parameters plus the raw moments they came from.
#[derive(Debug, Clone)]
pub struct GccReport {
    pub params: GccParams,
    /// `(1/n) X X^T`.
    pub second_moment: DenseMatrix,
    pub max_column_l1: f64,
    pub max_diagonal: f64,
    pub max_off_diagonal: f64,
    pub lambda_min: f64,
    pub samples: usize,
}

const UNIT_SLACK: f64 = 1e-9;
const MAX_LISTED_OFFENDERS: usize = 20;

/// Entries outside `[0, 1]` (with `1e-9` slack) as an error listing offenders.
pub fn validate_unit_range(x: &DenseMatrix) -> Result<()> {
    let mut count = 0;
    let mut offenders = Vec::new();
    for j in 0..x.cols() {
        for (i, &v) in x.column(j).iter().enumerate() {
            if !(-UNIT_SLACK..=1.0 + UNIT_SLACK).contains(&v) {
                count += 1;
                if offenders.len() < MAX_LISTED_OFFENDERS {
                    offenders.push((i, j, v));
                }
            }
        }
    }
    if count > 0 {
        return Err(NmfError::OutOfUnitRange { count, offenders });
    }
    Ok(())
}

/// Fits the tightest `(r, k, m, lambda)` satisfying each GCC condition on
/// the empirical second moment of the columns of `x` (`D x n`).
pub fn gcc_from_samples(x: &DenseMatrix) -> Result<GccReport> {
    validate_unit_range(x)?;
    let (d, n) = x.shape();
    let df = d as f64;
    let xa = x.as_nalgebra();
    let second_moment = DenseMatrix::from_nalgebra((xa * xa.transpose()) / n as f64)?;

    let max_column_l1 = (0..n).map(|j| x.column(j).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let max_diagonal = second_moment.diagonal().into_iter().fold(0.0, f64::max);
    let max_off_diagonal = off_diagonal_max(&second_moment);
    let lambda_min = symmetric_eigenvalues(&second_moment)?[0];

    let k = df / 2.0 * max_diagonal;
    let m = df * df * max_off_diagonal;
    let lambda = if k > 0.0 { (df * lambda_min / k).max(0.0) } else { 0.0 };
    Ok(GccReport {
        params: GccParams { r: max_column_l1, k, m, lambda, q: DecayOrder::Empirical },
        second_moment,
        max_column_l1,
        max_diagonal,
        max_off_diagonal,
        lambda_min,
        samples: n,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayRow {
    pub alpha: f64,
    /// `max_i Pr[x_i <= alpha | x_i != 0]`.
    pub max_conditional_cdf: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayProfile {
    pub rows: Vec<DecayRow>,
    pub q_hat: DecayOrder,
    /// Coordinates with no nonzero sample.
    pub skipped: Vec<usize>,
}

/// Empirical conditional CDF of nonzero weights on a grid of thresholds,
/// and the largest `q` with `cdf(a) <= a^q + 2/sqrt(n_i)` at every grid
/// point, `n_i` being the number of nonzeros of coordinate `i`.
pub fn decay_profile(x: &DenseMatrix, alphas: &[f64]) -> Result<DecayProfile> {
    if alphas.is_empty() {
        return Err(NmfError::InvalidParameter("decay profile needs at least one alpha".into()));
    }
    if let Some(a) = alphas.iter().find(|&&a| !(a > 0.0 && a < 1.0)) {
        return Err(NmfError::InvalidParameter(format!("decay alpha {a} not in (0, 1)")));
    }
    let (d, n) = x.shape();
    let mut skipped = Vec::new();
    let mut max_cdf = vec![0.0_f64; alphas.len()];
    let mut q_bound = f64::INFINITY;
    let mut nonzero = Vec::with_capacity(n);
    for i in 0..d {
        nonzero.clear();
        nonzero.extend((0..n).map(|j| x.get(i, j)).filter(|&v| v != 0.0));
        if nonzero.is_empty() {
            skipped.push(i);
            continue;
        }
        let count = nonzero.len() as f64;
        let slack = 2.0 / count.sqrt();
        for (slot, &a) in max_cdf.iter_mut().zip(alphas) {
            let cdf = nonzero.iter().filter(|&&v| v <= a).count() as f64 / count;
            *slot = slot.max(cdf);
            // need a^q >= cdf - slack; a in (0,1) so q <= ln(cdf - slack) / ln(a)
            let excess = cdf - slack;
            if excess > 0.0 {
                q_bound = q_bound.min(excess.ln() / a.ln());
            }
        }
    }
    let rows = alphas
        .iter()
        .zip(max_cdf)
        .map(|(&alpha, max_conditional_cdf)| DecayRow { alpha, max_conditional_cdf })
        .collect();
    let q_hat = if q_bound.is_infinite() { DecayOrder::Infinite } else { DecayOrder::Finite(q_bound) };
    Ok(DecayProfile { rows, q_hat, skipped })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary(support: usize, dim: usize, seed: u64) -> WeightSpec {
        WeightSpec::new(WeightFamily::SparseBinary { support }, dim, seed)
    }

    #[test]
    fn full_support_binary_is_all_ones() {
        let x = sample_weights(&binary(5, 5, 1), 50).unwrap();
        assert!(x.as_slice().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn binary_columns_have_exact_support() {
        let x = sample_weights(&binary(3, 10, 2), 200).unwrap();
        for j in 0..x.cols() {
            let col = x.column(j);
            assert_eq!(col.iter().filter(|&&v| v == 1.0).count(), 3);
            assert_eq!(col.iter().filter(|&&v| v == 0.0).count(), 7);
        }
    }

    #[test]
    fn binary_marginal_matches_support_ratio() {
        let n = 60_000;
        let x = sample_weights(&binary(2, 4, 3), n).unwrap();
        for i in 0..4 {
            let p = (0..n).map(|j| x.get(i, j)).sum::<f64>() / n as f64;
            assert!((p - 0.5).abs() < 0.01, "coordinate {i}: {p}");
        }
    }

    #[test]
    fn dirichlet_columns_on_simplex() {
        let spec = WeightSpec::new(WeightFamily::dirichlet_total(20, 5.0), 20, 4);
        let x = sample_weights(&spec, 500).unwrap();
        for j in 0..x.cols() {
            let col = x.column(j);
            assert!((col.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(col.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn logistic_normal_columns_on_simplex() {
        let spec = WeightSpec::new(WeightFamily::logistic_normal_toeplitz(8, 0.5), 8, 5);
        let x = sample_weights(&spec, 300).unwrap();
        for j in 0..x.cols() {
            assert!((x.column(j).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sparse_uniform_respects_range() {
        let spec = WeightSpec::new(WeightFamily::SparseUniform { support: 2, floor: 0.3, ceiling: 0.6 }, 6, 6);
        let x = sample_weights(&spec, 300).unwrap();
        for v in x.as_slice().iter().filter(|&&v| v != 0.0) {
            assert!(*v > 0.3 && *v <= 0.6);
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(sample_weights(&binary(0, 4, 0), 3).is_err());
        assert!(sample_weights(&binary(5, 4, 0), 3).is_err());
        let neg = WeightSpec::new(WeightFamily::Dirichlet { concentration: Concentration::Symmetric(-1.0) }, 4, 0);
        assert!(sample_weights(&neg, 3).is_err());
        let asym = WeightSpec::new(
            WeightFamily::LogisticNormal { mean: vec![0.0; 2], covariance: vec![vec![1.0, 0.5], vec![0.0, 1.0]] },
            2,
            0,
        );
        assert!(asym.validate().is_err());
        let indefinite = WeightSpec::new(
            WeightFamily::LogisticNormal { mean: vec![0.0; 2], covariance: vec![vec![1.0, 2.0], vec![2.0, 1.0]] },
            2,
            0,
        );
        assert!(indefinite.validate().is_err());
        assert!(sample_weights(&binary(1, 4, 0), 0).is_err());
    }

    #[test]
    fn sampling_is_reproducible() {
        let spec = WeightSpec::new(WeightFamily::logistic_normal_toeplitz(6, 0.5), 6, 77);
        let a = sample_weights(&spec, 100).unwrap();
        let b = sample_weights(&spec, 100).unwrap();
        assert!(a.as_slice().iter().zip(b.as_slice()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn closed_form_binary() {
        let p = gcc_closed_form(&binary(3, 10, 0)).unwrap();
        assert_eq!((p.r, p.k, p.m), (3.0, 3.0, 9.0));
        assert!((p.lambda - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(p.q, DecayOrder::Infinite);
        assert_eq!(gcc_closed_form(&binary(1, 10, 0)).unwrap().lambda, 0.0);
    }

    #[test]
    fn closed_form_dirichlet() {
        let d = 25;
        let spec =
            WeightSpec::new(WeightFamily::Dirichlet { concentration: Concentration::Symmetric(5.0 / d as f64) }, d, 0);
        let p = gcc_closed_form(&spec).unwrap();
        assert_eq!((p.r, p.k), (1.0, 1.0));
        assert!((p.m - 1.0 / (5.0 * d as f64)).abs() < 1e-15);
        assert!((p.lambda - 0.8).abs() < 1e-12);
        assert_eq!(p.q, DecayOrder::Empirical);
    }

    #[test]
    fn closed_form_unsupported_families() {
        let spec = WeightSpec::new(WeightFamily::logistic_normal_toeplitz(3, 0.5), 3, 0);
        assert!(matches!(gcc_closed_form(&spec), Err(NmfError::NoClosedForm(_))));
    }

    #[test]
    fn empirical_gcc_rank_one_column() {
        let x = DenseMatrix::from_column_slice(2, 1, &[1.0, 0.0]).unwrap();
        let rep = gcc_from_samples(&x).unwrap();
        assert_eq!(rep.params.r, 1.0);
        assert_eq!(rep.params.k, 1.0);
        assert_eq!(rep.params.m, 0.0);
        assert_eq!(rep.params.lambda, 0.0);
    }

    #[test]
    fn empirical_gcc_all_ones() {
        let x = DenseMatrix::from_fn(4, 10, |_, _| 1.0).unwrap();
        let rep = gcc_from_samples(&x).unwrap();
        assert_eq!(rep.params.r, 4.0);
        assert!(rep.params.lambda.abs() < 1e-12);
    }

    #[test]
    fn empirical_gcc_rejects_out_of_range() {
        let x = DenseMatrix::from_column_slice(2, 2, &[0.5, 1.5, -0.2, 0.0]).unwrap();
        match gcc_from_samples(&x) {
            Err(NmfError::OutOfUnitRange { count, offenders }) => {
                assert_eq!(count, 2);
                assert_eq!((offenders[0].0, offenders[0].1), (1, 0));
                assert_eq!((offenders[1].0, offenders[1].1), (0, 1));
            }
            other => panic!("expected range error, got {other:?}"),
        }
        // slack of 1e-9 is admitted
        let edge = DenseMatrix::from_column_slice(2, 1, &[1.0 + 5e-10, -5e-10]).unwrap();
        assert!(gcc_from_samples(&edge).is_ok());
    }

    #[test]
    fn decay_profile_binary_is_infinite() {
        let x = sample_weights(&binary(2, 5, 9), 400).unwrap();
        let p = decay_profile(&x, &[0.1, 0.5, 0.9]).unwrap();
        assert!(p.rows.iter().all(|r| r.max_conditional_cdf == 0.0));
        assert_eq!(p.q_hat, DecayOrder::Infinite);
    }

    #[test]
    fn decay_profile_constant_weights_on_grid() {
        let x = DenseMatrix::from_fn(3, 50, |i, j| if (i + j) % 2 == 0 { 0.9 } else { 0.0 }).unwrap();
        let grid: Vec<f64> = (1..=8).map(|k| k as f64 / 10.0).collect();
        let p = decay_profile(&x, &grid).unwrap();
        assert_eq!(p.q_hat, DecayOrder::Infinite);
    }

    #[test]
    fn decay_profile_uniform_is_order_one() {
        let spec = WeightSpec::new(WeightFamily::SparseUniform { support: 1, floor: 0.0, ceiling: 1.0 }, 2, 10);
        let x = sample_weights(&spec, 40_000).unwrap();
        let grid: Vec<f64> = (1..=9).map(|k| k as f64 / 10.0).collect();
        let p = decay_profile(&x, &grid).unwrap();
        for r in &p.rows {
            assert!((r.max_conditional_cdf - r.alpha).abs() < 0.02);
        }
        match p.q_hat {
            // the 2/sqrt(n) slack only loosens the bound, so q_hat >= 1
            DecayOrder::Finite(q) => assert!((1.0..1.2).contains(&q), "q_hat = {q}"),
            other => panic!("expected finite q, got {other}"),
        }
    }

    #[test]
    fn decay_profile_reports_skipped_and_rejects_empty_grid() {
        let x = DenseMatrix::from_rows(&[vec![0.5, 0.2], vec![0.0, 0.0]]).unwrap();
        let p = decay_profile(&x, &[0.3]).unwrap();
        assert_eq!(p.skipped, vec![1]);
        assert_eq!(p.rows[0].max_conditional_cdf, 0.5);
        assert!(decay_profile(&x, &[]).is_err());
        assert!(decay_profile(&x, &[1.0]).is_err());
    }
}
