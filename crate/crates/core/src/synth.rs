//! Ground-truth feature matrices, observation datasets and warm-start
//! initializations.

use rand::RngExt;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{NmfError, Result};
use crate::linalg::{spectral_norm, svd, DenseMatrix, DEFAULT_PINV_REL_TOL};
use crate::rng::{derive_seed, seeded};
use crate::weights::{sample_weights, WeightSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthKind {
    /// Entries i.i.d. `Unif[0, 1)`.
    Nonneg,
    /// Entries i.i.d. `Unif[-0.5, 0.5)`.
    Signed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    RandomUniformNonneg,
    RandomUniformSigned,
    LoadedFromFile(String),
}

#[derive(Debug, Clone)]
pub struct GroundTruth {
    /// `W x D` feature matrix `A*`.
    pub a_star: DenseMatrix,
    pub provenance: Provenance,
    pub condition_number: f64,
    /// Seed that produced `a_star` (after any rank-deficiency redraws).
    pub seed: Option<u64>,
}

const MAX_REDRAWS: usize = 16;

impl GroundTruth {
    /// Wraps an externally supplied matrix; columns must be nonzero and
    /// linearly independent.
    pub fn from_matrix(a_star: DenseMatrix, provenance: Provenance) -> Result<Self> {
        let d = a_star.cols();
        for j in 0..d {
            let norm = a_star.column(j).iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm <= 1e-12 {
                return Err(NmfError::InvalidParameter(format!("ground-truth column {j} is zero")));
            }
        }
        let f = svd(&a_star)?;
        let rank = f.rank(DEFAULT_PINV_REL_TOL);
        if rank < d {
            return Err(NmfError::RankDeficient { what: "ground truth", rank, needed: d });
        }
        let condition_number = f.singular_values[0] / f.singular_values[d - 1];
        Ok(Self { a_star, provenance, condition_number, seed: None })
    }

    pub fn words(&self) -> usize {
        self.a_star.rows()
    }

    pub fn topics(&self) -> usize {
        self.a_star.cols()
    }
}

/// Random `W x D` ground truth of full column rank.
pub fn generate_ground_truth(w: usize, d: usize, kind: TruthKind, seed: u64) -> Result<GroundTruth> {
    if d == 0 || w < d {
        return Err(NmfError::InvalidParameter(format!("ground truth needs W >= D >= 1, got W={w}, D={d}")));
    }
    let (lo, hi, provenance) = match kind {
        TruthKind::Nonneg => (0.0, 1.0, Provenance::RandomUniformNonneg),
        TruthKind::Signed => (-0.5, 0.5, Provenance::RandomUniformSigned),
    };
    let mut attempt_seed = seed;
    for attempt in 0..MAX_REDRAWS {
        if attempt > 0 {
            attempt_seed = derive_seed(seed, &format!("redraw-{attempt}"));
        }
        let mut rng = seeded(attempt_seed);
        let data: Vec<f64> = (0..w * d).map(|_| rng.random_range(lo..hi)).collect();
        let a_star = DenseMatrix::from_column_slice(w, d, &data)?;
        match GroundTruth::from_matrix(a_star, provenance.clone()) {
            Ok(mut gt) => {
                gt.seed = Some(attempt_seed);
                return Ok(gt);
            }
            Err(NmfError::RankDeficient { .. }) | Err(NmfError::InvalidParameter(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(NmfError::RankDeficient { what: "ground truth after redraws", rank: 0, needed: d })
}

/// Additive Gaussian observation noise `zeta ~ gamma * Normal(0, I / W)`,
/// scaled so that `|zeta|_2` is about `gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub gamma: f64,
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self { gamma: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(NmfError::InvalidParameter(format!("noise level must be >= 0, got {}", self.gamma)));
        }
        Ok(())
    }

    /// `|E[zeta zeta^T]|_2 = gamma^2 / W`.
    pub fn gamma1(&self, w: usize) -> f64 {
        self.gamma * self.gamma / w as f64
    }

    /// Typical per-sample norm; Gaussian noise has no hard bound.
    pub fn gamma2(&self) -> f64 {
        self.gamma
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    /// Observations `Y = A* X + Zeta`, `W x n`.
    pub y: DenseMatrix,
    /// Weights, `D x n`. Diagnostics only; solvers never see it.
    pub x: DenseMatrix,
    /// Noise, `W x n`.
    pub zeta: DenseMatrix,
}

/// Draws `n` observations. Weights come from `wspec` (with its own seed);
/// the noise stream is seeded by `seed`.
pub fn generate_dataset(
    gt: &GroundTruth,
    wspec: &WeightSpec,
    noise: NoiseSpec,
    n: usize,
    seed: u64,
) -> Result<Dataset> {
    noise.validate()?;
    if wspec.dim != gt.topics() {
        return Err(NmfError::ShapeMismatch {
            op: "generate_dataset",
            expected: format!("weight dimension {}", gt.topics()),
            got: format!("{}", wspec.dim),
        });
    }
    let x = sample_weights(wspec, n)?;
    let w = gt.words();
    let zeta = if noise.gamma == 0.0 {
        DenseMatrix::zeros(w, n)?
    } else {
        let mut rng = seeded(seed);
        let scale = noise.gamma / (w as f64).sqrt();
        let data: Vec<f64> = (0..w * n)
            .map(|_| scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
            .collect();
        DenseMatrix::from_column_slice(w, n, &data)?
    };
    let clean = gt.a_star.matmul(&x)?;
    let y = if noise.gamma == 0.0 { clean } else { clean.try_add(&zeta)? };
    y.ensure_finite()?;
    Ok(Dataset { y, x, zeta })
}

/// Warm start `A0 = A* (I + U) + N` with `U` entries `r_l * Unif[-0.05, 0.05)`
/// and `N` entries `r_n * Unif[-0.05, 0.05)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSpec {
    /// In-span level `r_l`.
    pub in_span: f64,
    /// Out-of-span level `r_n`.
    pub out_of_span: f64,
    pub seed: u64,
    /// Zero the diagonal of `U`.
    #[serde(default)]
    pub zero_diagonal: bool,
}

impl InitSpec {
    pub fn new(in_span: f64, out_of_span: f64, seed: u64) -> Self {
        Self { in_span, out_of_span, seed, zero_diagonal: false }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("in-span level", self.in_span), ("out-of-span level", self.out_of_span)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(NmfError::InvalidParameter(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Initialization {
    pub a0: DenseMatrix,
    pub u: DenseMatrix,
    pub n: DenseMatrix,
    /// `|offdiag(U)|_2`, a proxy for the in-span error level `ell`.
    pub ell: f64,
    /// `|N|_2`.
    pub rho: f64,
}

pub fn generate_initialization(gt: &GroundTruth, ispec: &InitSpec) -> Result<Initialization> {
    ispec.validate()?;
    let (w, d) = gt.a_star.shape();
    // separate streams so changing one level leaves the other draw intact
    let mut u_rng = seeded(derive_seed(ispec.seed, "in-span"));
    let mut n_rng = seeded(derive_seed(ispec.seed, "out-of-span"));
    let u = DenseMatrix::from_fn(d, d, |i, j| {
        let v = ispec.in_span * u_rng.random_range(-0.05..0.05);
        if ispec.zero_diagonal && i == j {
            0.0
        } else {
            v
        }
    })?;
    let n = DenseMatrix::from_fn(w, d, |_, _| ispec.out_of_span * n_rng.random_range(-0.05..0.05))?;
    let mixing = DenseMatrix::identity(d)?.try_add(&u)?;
    let a0 = gt.a_star.matmul(&mixing)?.try_add(&n)?;
    let off_u = DenseMatrix::from_fn(d, d, |i, j| if i == j { 0.0 } else { u.get(i, j) })?;
    Ok(Initialization { ell: spectral_norm(&off_u)?, rho: spectral_norm(&n)?, a0, u, n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::WeightFamily;

    #[test]
    fn ground_truth_ranges() {
        let g = generate_ground_truth(30, 5, TruthKind::Signed, 1).unwrap();
        assert!(g.a_star.as_slice().iter().all(|&v| (-0.5..0.5).contains(&v)));
        let g = generate_ground_truth(30, 5, TruthKind::Nonneg, 1).unwrap();
        assert!(g.a_star.as_slice().iter().all(|&v| (0.0..1.0).contains(&v)));
        assert!(g.condition_number >= 1.0);
    }

    #[test]
    fn ground_truth_full_rank_by_svd() {
        let g = generate_ground_truth(200, 20, TruthKind::Nonneg, 2).unwrap();
        let s = svd(&g.a_star).unwrap().singular_values;
        let rank = s.iter().filter(|&&v| v > 1e-10 * s[0]).count();
        assert_eq!(rank, 20);
    }

    #[test]
    fn ground_truth_rejects_wide() {
        assert!(generate_ground_truth(4, 5, TruthKind::Nonneg, 0).is_err());
    }

    #[test]
    fn from_matrix_rejects_dependent_columns() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![1.0, 2.0], vec![0.0, 0.0]]).unwrap();
        assert!(matches!(
            GroundTruth::from_matrix(a, Provenance::LoadedFromFile("x".into())),
            Err(NmfError::RankDeficient { .. })
        ));
    }

    #[test]
    fn noiseless_dataset_is_exact() {
        let g = generate_ground_truth(40, 6, TruthKind::Nonneg, 3).unwrap();
        let ws = WeightSpec::new(WeightFamily::dirichlet_total(6, 2.0), 6, 4);
        let ds = generate_dataset(&g, &ws, NoiseSpec::none(), 100, 5).unwrap();
        assert_eq!(ds.zeta.max_abs(), 0.0);
        assert_eq!(ds.y.try_sub(&g.a_star.matmul(&ds.x).unwrap()).unwrap().frobenius_norm(), 0.0);
    }

    #[test]
    fn binary_observations_are_sums_of_columns() {
        let g = generate_ground_truth(15, 5, TruthKind::Signed, 6).unwrap();
        let ws = WeightSpec::new(WeightFamily::SparseBinary { support: 2 }, 5, 7);
        let ds = generate_dataset(&g, &ws, NoiseSpec::none(), 30, 8).unwrap();
        for j in 0..30 {
            let support: Vec<usize> = (0..5).filter(|&i| ds.x.get(i, j) == 1.0).collect();
            assert_eq!(support.len(), 2);
            for r in 0..15 {
                let expect: f64 = support.iter().map(|&i| g.a_star.get(r, i)).sum();
                assert!((ds.y.get(r, j) - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn noise_norm_is_about_gamma() {
        let g = generate_ground_truth(200, 5, TruthKind::Nonneg, 9).unwrap();
        let ws = WeightSpec::new(WeightFamily::SparseBinary { support: 1 }, 5, 10);
        let gamma = 0.3;
        let ds = generate_dataset(&g, &ws, NoiseSpec { gamma }, 5000, 11).unwrap();
        let mean = (0..5000).map(|j| ds.zeta.column(j).iter().map(|v| v * v).sum::<f64>().sqrt()).sum::<f64>() / 5000.0;
        assert!((mean / gamma - 1.0).abs() < 0.05, "mean norm {mean}");
    }

    #[test]
    fn dataset_dimension_mismatch() {
        let g = generate_ground_truth(10, 3, TruthKind::Nonneg, 0).unwrap();
        let ws = WeightSpec::new(WeightFamily::SparseBinary { support: 1 }, 4, 0);
        assert!(generate_dataset(&g, &ws, NoiseSpec::none(), 5, 0).is_err());
        let ws = WeightSpec::new(WeightFamily::SparseBinary { support: 1 }, 3, 0);
        assert!(generate_dataset(&g, &ws, NoiseSpec { gamma: -1.0 }, 5, 0).is_err());
    }

    #[test]
    fn zero_levels_give_ground_truth() {
        let g = generate_ground_truth(20, 4, TruthKind::Nonneg, 12).unwrap();
        let init = generate_initialization(&g, &InitSpec::new(0.0, 0.0, 13)).unwrap();
        assert_eq!(init.a0, g.a_star);
    }

    #[test]
    fn in_span_perturbation_has_stated_range() {
        let g = generate_ground_truth(20, 4, TruthKind::Nonneg, 14).unwrap();
        let init = generate_initialization(&g, &InitSpec::new(1.0, 0.0, 15)).unwrap();
        assert!(init.u.as_slice().iter().all(|&v| (-0.05..0.05).contains(&v)));
        let expect = g.a_star.matmul(&init.u).unwrap();
        let diff = init.a0.try_sub(&g.a_star).unwrap();
        assert!(diff.try_sub(&expect).unwrap().max_abs() < 1e-14);
        assert_eq!(init.rho, 0.0);
    }

    #[test]
    fn zero_diagonal_flag() {
        let g = generate_ground_truth(20, 4, TruthKind::Nonneg, 16).unwrap();
        let mut spec = InitSpec::new(1.0, 0.0, 17);
        spec.zero_diagonal = true;
        let init = generate_initialization(&g, &spec).unwrap();
        assert!(init.u.diagonal().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn out_of_span_norm_is_linear_in_level() {
        let g = generate_ground_truth(50, 5, TruthKind::Nonneg, 18).unwrap();
        let norms: Vec<f64> = [1.0, 2.0, 8.0]
            .iter()
            .map(|&r| {
                let init = generate_initialization(&g, &InitSpec::new(1.0, r, 19)).unwrap();
                let in_span = g.a_star.matmul(&DenseMatrix::identity(5).unwrap().try_add(&init.u).unwrap()).unwrap();
                spectral_norm(&init.a0.try_sub(&in_span).unwrap()).unwrap()
            })
            .collect();
        assert!((norms[1] / norms[0] - 2.0).abs() < 1e-9);
        assert!((norms[2] / norms[0] - 8.0).abs() < 1e-9);
    }
}
