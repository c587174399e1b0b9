//! Experiment configuration.
//!
//! A config is a JSON object; unknown keys anywhere are rejected. Minimal
//! example:
//!
//! ```json
//! {
//!   "dataset": { "preset": "DIR" },
//!   "solvers": [ { "name": "and" }, { "name": "hals", "outer_iters": 200 } ]
//! }
//! ```
//!
//! Omitted fields take the preset defaults listed on [`Preset`].

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use andnmf::baselines::{BaselineAlgorithm, BaselineConfig, DEFAULT_EPSILON};
use andnmf::linalg::DEFAULT_PINV_REL_TOL;
use andnmf::rng::derive_seed;
use andnmf::solver::RunOptions;
use andnmf::synth::{InitSpec, NoiseSpec, TruthKind};
use andnmf::weights::{WeightFamily, WeightSpec};
use andnmf::{AndConfig, BatchMode, ThresholdSchedule};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};

/// Dataset recipes.
///
/// | preset        | A*              | weights                          | gamma | W, D, n          |
/// |---------------|-----------------|----------------------------------|-------|------------------|
/// | `DIR`         | `Unif[0,1)`     | Dirichlet, concentrations sum 5  | 0     | 200, 20, 2000    |
/// | `CTM`         | `Unif[0,1)`     | logistic normal, Toeplitz 0.5    | 0     | 200, 20, 2000    |
/// | `NEG`         | `Unif[-.5,.5)`  | logistic normal, Toeplitz 0.5    | 0     | 200, 20, 2000    |
/// | `NOISE`       | `Unif[0,1)`     | logistic normal, Toeplitz 0.5    | 0.01  | 200, 20, 2000    |
/// | `BINARY`      | `Unif[0,1)`     | sparse binary, support 3         | 0     | 200, 20, 2000    |
/// | `paper-scale` | `Unif[0,1)`     | Dirichlet, concentrations sum 5  | 0     | 1000, 100, 5000  |
///
/// AND defaults to 30 stages of 50 iterations with thresholds
/// `0.1 / 1.1^j`; `NOISE` uses 100 iterations per stage and `BINARY` a
/// constant threshold of 1/4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Preset {
    #[serde(rename = "DIR")]
    Dir,
    #[serde(rename = "CTM")]
    Ctm,
    #[serde(rename = "NEG")]
    Neg,
    #[serde(rename = "NOISE")]
    Noise,
    #[serde(rename = "BINARY")]
    Binary,
    #[serde(rename = "paper-scale")]
    PaperScale,
}

impl Preset {
    pub const ALL: [Preset; 6] =
        [Preset::Dir, Preset::Ctm, Preset::Neg, Preset::Noise, Preset::Binary, Preset::PaperScale];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Dir => "DIR",
            Preset::Ctm => "CTM",
            Preset::Neg => "NEG",
            Preset::Noise => "NOISE",
            Preset::Binary => "BINARY",
            Preset::PaperScale => "paper-scale",
        }
    }

    fn dims(self) -> (usize, usize, usize) {
        match self {
            Preset::PaperScale => (1000, 100, 5000),
            _ => (200, 20, 2000),
        }
    }

    fn truth_kind(self) -> TruthKind {
        match self {
            Preset::Neg => TruthKind::Signed,
            _ => TruthKind::Nonneg,
        }
    }

    fn default_gamma(self) -> f64 {
        match self {
            Preset::Noise => 0.01,
            _ => 0.0,
        }
    }

    fn iters_per_stage(self) -> usize {
        match self {
            Preset::Noise => 100,
            _ => 50,
        }
    }

    fn schedule(self) -> ThresholdSchedule {
        match self {
            Preset::Binary => ThresholdSchedule::Constant { value: 0.25 },
            _ => ThresholdSchedule::default(),
        }
    }

    fn is_dirichlet(self) -> bool {
        matches!(self, Preset::Dir | Preset::PaperScale)
    }

    fn is_logistic(self) -> bool {
        matches!(self, Preset::Ctm | Preset::Neg | Preset::Noise)
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL.into_iter().find(|p| p.name().eq_ignore_ascii_case(s)).ok_or_else(|| {
            let names: Vec<_> = Preset::ALL.iter().map(|p| p.name()).collect();
            HarnessError::Validation(format!("unknown preset {s:?}, expected one of {}", names.join(", ")))
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedOverrides {
    pub truth: Option<u64>,
    pub weights: Option<u64>,
    pub noise: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub preset: Preset,
    #[serde(rename = "W", default)]
    pub words: Option<usize>,
    #[serde(rename = "D", default)]
    pub topics: Option<usize>,
    #[serde(rename = "n", default)]
    pub samples: Option<usize>,
    /// Replaces the preset's weight family entirely.
    #[serde(default)]
    pub weights: Option<WeightFamily>,
    /// Sum of the Dirichlet concentrations (Dirichlet presets only).
    #[serde(default)]
    pub alpha_total: Option<f64>,
    /// Toeplitz correlation (logistic-normal presets only).
    #[serde(default)]
    pub rho: Option<f64>,
    /// Support size (`BINARY` only).
    #[serde(default)]
    pub support: Option<usize>,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub seeds: SeedOverrides,
}

impl DatasetConfig {
    pub fn preset(preset: Preset) -> Self {
        Self {
            preset,
            words: None,
            topics: None,
            samples: None,
            weights: None,
            alpha_total: None,
            rho: None,
            support: None,
            gamma: None,
            seeds: SeedOverrides::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitConfig {
    #[serde(default = "one")]
    pub in_span: f64,
    #[serde(default)]
    pub out_of_span: f64,
    #[serde(default)]
    pub zero_diagonal: bool,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn one() -> f64 {
    1.0
}

impl Default for InitConfig {
    fn default() -> Self {
        Self { in_span: 1.0, out_of_span: 0.0, zero_diagonal: false, seed: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AndSolverConfig {
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub stages: Option<usize>,
    #[serde(default)]
    pub iters_per_stage: Option<usize>,
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default)]
    pub schedule: Option<ThresholdSchedule>,
    #[serde(default)]
    pub batch: Option<BatchMode>,
    #[serde(default)]
    pub pinv_rel_tol: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineSolverConfig {
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub outer_iters: Option<usize>,
    #[serde(default)]
    pub inner_iters: Option<usize>,
    #[serde(default)]
    pub epsilon_floor: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum SolverConfig {
    And(AndSolverConfig),
    Mu(BaselineSolverConfig),
    Hals(BaselineSolverConfig),
    Anls(BaselineSolverConfig),
}

impl SolverConfig {
    pub fn name(&self) -> &'static str {
        match self {
            SolverConfig::And(_) => "and",
            SolverConfig::Mu(_) => "mu",
            SolverConfig::Hals(_) => "hals",
            SolverConfig::Anls(_) => "anls",
        }
    }

    fn label(&self) -> Option<&str> {
        match self {
            SolverConfig::And(c) => c.label.as_deref(),
            SolverConfig::Mu(c) | SolverConfig::Hals(c) | SolverConfig::Anls(c) => c.label.as_deref(),
        }
    }
}

fn default_solvers() -> Vec<SolverConfig> {
    vec![SolverConfig::And(AndSolverConfig::default())]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub init: InitConfig,
    #[serde(default = "default_solvers")]
    pub solvers: Vec<SolverConfig>,
    /// Threshold schedule for every AND solver that does not set its own.
    #[serde(default)]
    pub schedule: Option<ThresholdSchedule>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Record every k-th iteration; default 1 for `D <= 50`, else 10.
    #[serde(default)]
    pub eval_every: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

/// Outer iterations for baselines when the config leaves them out.
pub const DEFAULT_BASELINE_ITERS: usize = 200;

impl ExperimentConfig {
    pub fn from_preset(preset: Preset) -> Self {
        Self {
            dataset: DatasetConfig::preset(preset),
            init: InitConfig::default(),
            solvers: default_solvers(),
            schedule: None,
            output_dir: None,
            eval_every: None,
            seed: 0,
        }
    }

    /// Parses JSON; syntax and schema errors carry line and column.
    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| HarnessError::Config {
            path: origin.to_string(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_json(&text, &path.display().to_string())
    }

    /// Applies defaults and derives every seed.
    pub fn resolve(&self) -> Result<Experiment> {
        let ds = &self.dataset;
        let preset = ds.preset;
        let (dw, dd, dn) = preset.dims();
        let words = ds.words.unwrap_or(dw);
        let topics = ds.topics.unwrap_or(dd);
        let samples = ds.samples.unwrap_or(dn);
        let invalid = |m: String| Err(HarnessError::Validation(m));
        if topics == 0 || words == 0 || samples == 0 {
            return invalid(format!("dimensions must be positive, got W={words}, D={topics}, n={samples}"));
        }
        if topics > words {
            return invalid(format!("D={topics} exceeds W={words}; A* cannot have full column rank"));
        }
        if samples < topics {
            return invalid(format!("n={samples} is smaller than D={topics}"));
        }
        if self.solvers.is_empty() {
            return invalid("at least one solver is required".into());
        }
        if self.eval_every == Some(0) {
            return invalid("eval_every must be >= 1".into());
        }

        let knob = |set: bool, name: &str, allowed: bool, which: &str| {
            if set && !allowed {
                Err(HarnessError::Validation(format!("{name} applies only to {which} presets, not {preset}")))
            } else if set && ds.weights.is_some() {
                Err(HarnessError::Validation(format!("{name} conflicts with an explicit weights family")))
            } else {
                Ok(())
            }
        };
        knob(ds.alpha_total.is_some(), "alpha_total", preset.is_dirichlet(), "Dirichlet")?;
        knob(ds.rho.is_some(), "rho", preset.is_logistic(), "logistic-normal")?;
        knob(ds.support.is_some(), "support", preset == Preset::Binary, "BINARY")?;
        if let Some(t) = ds.alpha_total {
            if !(t > 0.0 && t.is_finite()) {
                return invalid(format!("alpha_total must be > 0, got {t}"));
            }
        }
        if let Some(r) = ds.rho {
            if !(r.abs() < 1.0) {
                return invalid(format!("rho must lie in (-1, 1), got {r}"));
            }
        }

        let family = match (&ds.weights, preset) {
            (Some(f), _) => f.clone(),
            (None, Preset::Dir | Preset::PaperScale) => {
                WeightFamily::dirichlet_total(topics, ds.alpha_total.unwrap_or(5.0))
            }
            (None, Preset::Ctm | Preset::Neg | Preset::Noise) => {
                WeightFamily::logistic_normal_toeplitz(topics, ds.rho.unwrap_or(0.5))
            }
            (None, Preset::Binary) => WeightFamily::SparseBinary { support: ds.support.unwrap_or(3) },
        };

        let seed = self.seed;
        let weights = WeightSpec::new(family, topics, ds.seeds.weights.unwrap_or(derive_seed(seed, "weights")));
        weights.validate()?;
        let noise = NoiseSpec { gamma: ds.gamma.unwrap_or(preset.default_gamma()) };
        noise.validate()?;
        let init = InitSpec {
            in_span: self.init.in_span,
            out_of_span: self.init.out_of_span,
            seed: self.init.seed.unwrap_or(derive_seed(seed, "init")),
            zero_diagonal: self.init.zero_diagonal,
        };
        init.validate()?;

        let mut solvers = Vec::with_capacity(self.solvers.len());
        for (idx, s) in self.solvers.iter().enumerate() {
            let label = s.label().map(str::to_string).unwrap_or_else(|| s.name().to_string());
            let stream = format!("solver-{idx}-{label}");
            let kind = match s {
                SolverConfig::And(c) => {
                    let cfg = AndConfig {
                        stages: c.stages.unwrap_or(30),
                        iters_per_stage: c.iters_per_stage.unwrap_or(preset.iters_per_stage()),
                        eta: c.eta,
                        schedule: c.schedule.or(self.schedule).unwrap_or(preset.schedule()),
                        batch: c.batch.unwrap_or_default(),
                        pinv_rel_tol: c.pinv_rel_tol.unwrap_or(DEFAULT_PINV_REL_TOL),
                        seed: c.seed.unwrap_or(derive_seed(seed, &stream)),
                    };
                    cfg.validate()?;
                    SolverKind::And(cfg)
                }
                SolverConfig::Mu(c) | SolverConfig::Hals(c) | SolverConfig::Anls(c) => {
                    let algorithm = match s {
                        SolverConfig::Mu(_) => BaselineAlgorithm::Mu,
                        SolverConfig::Hals(_) => BaselineAlgorithm::Hals,
                        _ => BaselineAlgorithm::Anls,
                    };
                    let cfg = BaselineConfig {
                        algorithm,
                        outer_iters: c.outer_iters.unwrap_or(DEFAULT_BASELINE_ITERS),
                        inner_iters: c.inner_iters.unwrap_or(20),
                        epsilon_floor: c.epsilon_floor.unwrap_or(DEFAULT_EPSILON),
                        seed: c.seed.unwrap_or(derive_seed(seed, &stream)),
                    };
                    cfg.validate()?;
                    SolverKind::Baseline(cfg)
                }
            };
            solvers.push(ResolvedSolver { label, kind });
        }
        let mut seen = std::collections::HashSet::new();
        for s in &solvers {
            if s.label.is_empty() || !s.label.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
                return invalid(format!("solver label {:?} must be non-empty [A-Za-z0-9_-]", s.label));
            }
            if !seen.insert(s.label.clone()) {
                return invalid(format!("duplicate solver label {:?}; set \"label\" to tell them apart", s.label));
            }
        }

        Ok(Experiment {
            preset,
            words,
            topics,
            samples,
            truth_kind: preset.truth_kind(),
            truth_seed: ds.seeds.truth.unwrap_or(derive_seed(seed, "truth")),
            weights,
            noise,
            noise_seed: ds.seeds.noise.unwrap_or(derive_seed(seed, "noise")),
            init,
            solvers,
            eval_every: self.eval_every.unwrap_or(RunOptions::for_topics(topics).eval_every),
            seed,
            output_dir: self.output_dir.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    And(AndConfig),
    Baseline(BaselineConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedSolver {
    pub label: String,
    pub kind: SolverKind,
}

impl ResolvedSolver {
    pub fn name(&self) -> &'static str {
        match &self.kind {
            SolverKind::And(_) => "and",
            SolverKind::Baseline(b) => b.algorithm.name(),
        }
    }
}

/// A fully specified experiment: every default applied, every seed fixed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Experiment {
    pub preset: Preset,
    #[serde(rename = "W")]
    pub words: usize,
    #[serde(rename = "D")]
    pub topics: usize,
    #[serde(rename = "n")]
    pub samples: usize,
    pub truth_kind: TruthKind,
    pub truth_seed: u64,
    pub weights: WeightSpec,
    pub noise: NoiseSpec,
    pub noise_seed: u64,
    pub init: InitSpec,
    pub solvers: Vec<ResolvedSolver>,
    pub eval_every: usize,
    pub seed: u64,
    /// Where files go; not part of the hash.
    #[serde(skip)]
    pub output_dir: Option<PathBuf>,
}

impl Experiment {
    /// SHA-256 of the canonical JSON of the resolved experiment.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("experiment serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Hash of the dataset part only; `run` checks it against the files.
    pub fn dataset_hash(&self) -> String {
        let json = serde_json::to_string(&(
            self.preset,
            self.words,
            self.topics,
            self.samples,
            self.truth_kind,
            self.truth_seed,
            &self.weights,
            self.noise,
            self.noise_seed,
            self.init,
        ))
        .expect("dataset serializes");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_preset_defaults() {
        let cfg = ExperimentConfig::from_json(r#"{"dataset": {"preset": "DIR"}}"#, "t").unwrap();
        let ex = cfg.resolve().unwrap();
        assert_eq!((ex.words, ex.topics, ex.samples), (200, 20, 2000));
        assert_eq!(ex.solvers.len(), 1);
        match &ex.solvers[0].kind {
            SolverKind::And(c) => {
                assert_eq!((c.stages, c.iters_per_stage), (30, 50));
                assert_eq!(c.schedule, ThresholdSchedule::Geometric { start: 0.1, ratio: 1.0 / 1.1 });
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(ex.eval_every, 1);
        assert_eq!(ex.weights.family, WeightFamily::dirichlet_total(20, 5.0));
    }

    #[test]
    fn unknown_keys_report_position() {
        let text = "{\n  \"dataset\": {\"preset\": \"DIR\"},\n  \"solvrs\": []\n}";
        match ExperimentConfig::from_json(text, "cfg.json") {
            Err(HarnessError::Config { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("solvrs"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        let nested = r#"{"dataset": {"preset": "DIR"}, "solvers": [{"name": "and", "stagez": 3}]}"#;
        assert!(ExperimentConfig::from_json(nested, "t").is_err());
        let bad_solver = r#"{"dataset": {"preset": "DIR"}, "solvers": [{"name": "lda"}]}"#;
        assert!(ExperimentConfig::from_json(bad_solver, "t").is_err());
    }

    #[test]
    fn semantic_validation() {
        let resolve = |s: &str| ExperimentConfig::from_json(s, "t").unwrap().resolve();
        assert!(resolve(r#"{"dataset": {"preset": "DIR", "W": 10, "D": 20}}"#).is_err());
        assert!(resolve(r#"{"dataset": {"preset": "DIR"}, "solvers": []}"#).is_err());
        assert!(resolve(r#"{"dataset": {"preset": "DIR", "rho": 0.3}}"#).is_err());
        assert!(resolve(r#"{"dataset": {"preset": "CTM", "rho": 1.5}}"#).is_err());
        assert!(resolve(r#"{"dataset": {"preset": "DIR"}, "solvers": [{"name": "and"}, {"name": "and"}]}"#).is_err());
        assert!(resolve(
            r#"{"dataset": {"preset": "DIR"}, "solvers": [{"name": "and"}, {"name": "and", "label": "and2"}]}"#
        )
        .is_ok());
        assert!(resolve(r#"{"dataset": {"preset": "DIR", "gamma": -1}}"#).is_err());
        assert!(resolve(r#"{"dataset": {"preset": "BINARY", "support": 30}}"#).is_err());
    }

    #[test]
    fn seeds_are_derived_and_overridable() {
        let a = ExperimentConfig::from_preset(Preset::Ctm).resolve().unwrap();
        let mut cfg = ExperimentConfig::from_preset(Preset::Ctm);
        cfg.seed = 7;
        let b = cfg.resolve().unwrap();
        assert_ne!(a.truth_seed, b.truth_seed);
        assert_ne!(a.hash(), b.hash());
        cfg.dataset.seeds.truth = Some(a.truth_seed);
        assert_eq!(cfg.resolve().unwrap().truth_seed, a.truth_seed);
        // output location does not change the hash
        let mut moved = ExperimentConfig::from_preset(Preset::Ctm);
        moved.output_dir = Some("elsewhere".into());
        assert_eq!(moved.resolve().unwrap().hash(), a.hash());
    }

    #[test]
    fn preset_specific_defaults() {
        let noise = ExperimentConfig::from_preset(Preset::Noise).resolve().unwrap();
        assert_eq!(noise.noise.gamma, 0.01);
        match &noise.solvers[0].kind {
            SolverKind::And(c) => assert_eq!(c.iters_per_stage, 100),
            _ => unreachable!(),
        }
        let big = ExperimentConfig::from_preset(Preset::PaperScale).resolve().unwrap();
        assert_eq!((big.words, big.topics, big.samples, big.eval_every), (1000, 100, 5000, 10));
        assert_eq!(ExperimentConfig::from_preset(Preset::Neg).resolve().unwrap().truth_kind, TruthKind::Signed);
        assert_eq!("dir".parse::<Preset>().unwrap(), Preset::Dir);
        assert!("LDA".parse::<Preset>().is_err());
    }

    #[test]
    fn config_serializes_back_to_an_equal_config() {
        let text = r#"{"dataset": {"preset": "CTM", "rho": 0.3, "n": 500},
                       "solvers": [{"name": "and", "schedule": {"kind": "constant", "value": 0.1}},
                                   {"name": "anls", "inner_iters": 5}],
                       "seed": 3}"#;
        let cfg = ExperimentConfig::from_json(text, "t").unwrap();
        let back = ExperimentConfig::from_json(&serde_json::to_string(&cfg).unwrap(), "t").unwrap();
        assert_eq!(cfg, back);
    }
}
