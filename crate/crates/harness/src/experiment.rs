//! The four commands as library functions: generate, run, eval, gcc.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use andnmf::baselines::run_baseline;
use andnmf::metrics::{noise_moments, total_correlation_error, ErrorReport};
use andnmf::solver::{run_observed, RunOptions};
use andnmf::synth::{generate_dataset, generate_ground_truth, generate_initialization};
use andnmf::weights::{decay_profile, gcc_closed_form, gcc_from_samples, DecayProfile, GccParams};
use andnmf::{DenseMatrix, NmfError, RunTrace, TraceRecord};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{Experiment, ResolvedSolver, SolverKind};
use crate::error::{HarnessError, Result};
use crate::matrix_io::{read_matrix, write_matrix};
use crate::trace_csv::TraceWriter;

pub const A_STAR_FILE: &str = "A_star.mat";
pub const X_FILE: &str = "X.mat";
pub const Y_FILE: &str = "Y.mat";
pub const ZETA_FILE: &str = "Zeta.mat";
pub const A0_FILE: &str = "A0.mat";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SUMMARY_FILE: &str = "summary.json";

pub fn trace_file_name(label: &str) -> String {
    format!("trace_{label}.csv")
}

pub fn final_matrix_name(label: &str) -> String {
    format!("A_final_{label}.mat")
}

/// Package, version, target and profile of this binary.
pub fn build_id() -> String {
    format!(
        "{} {} ({}-{}, {})",
        env!("CARGO_PKG_NAME"),
        env!("CARGO_PKG_VERSION"),
        std::env::consts::OS,
        std::env::consts::ARCH,
        if cfg!(debug_assertions) { "debug" } else { "release" }
    )
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentsJson {
    pub max_column_l1: f64,
    pub max_diagonal: f64,
    pub max_off_diagonal: f64,
    pub lambda_min: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct GccSection {
    /// `None` for families without a known closed form.
    pub closed_form: Option<GccParams>,
    pub closed_form_note: Option<String>,
    pub empirical: GccParams,
    pub moments: MomentsJson,
    /// Conditions the closed-form parameters fail on the sampled weights.
    pub closed_form_violations: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub build: String,
    pub config_hash: String,
    pub dataset_hash: String,
    pub experiment: Experiment,
    /// Seed that produced `A*` after any rank-deficiency redraws.
    pub truth_seed_used: Option<u64>,
    pub condition_number: f64,
    pub init_offdiag_norm: f64,
    pub init_out_of_span_norm: f64,
    /// Empirical `(|E[zeta zeta^T]|_2, max_j |zeta_j|_2)`; absent without noise.
    pub noise_moments: Option<(f64, f64)>,
    pub gcc: GccSection,
    pub files: Vec<FileEntry>,
}

pub fn gcc_section(ex: &Experiment, x: &DenseMatrix) -> Result<GccSection> {
    let report = gcc_from_samples(x)?;
    let (closed_form, closed_form_note) = match gcc_closed_form(&ex.weights) {
        Ok(p) => (Some(p), None),
        Err(NmfError::NoClosedForm(what)) => (None, Some(format!("no closed form for {what}"))),
        Err(e) => return Err(e.into()),
    };
    let closed_form_violations = match &closed_form {
        Some(p) => p.violations(&report.second_moment)?,
        None => Vec::new(),
    };
    Ok(GccSection {
        closed_form,
        closed_form_note,
        empirical: report.params,
        moments: MomentsJson {
            max_column_l1: report.max_column_l1,
            max_diagonal: report.max_diagonal,
            max_off_diagonal: report.max_off_diagonal,
            lambda_min: report.lambda_min,
            samples: report.samples,
        },
        closed_form_violations,
    })
}

/// Draws the dataset and warm start and writes them with a manifest.
pub fn generate(ex: &Experiment, out: &Path) -> Result<Manifest> {
    let gt = generate_ground_truth(ex.words, ex.topics, ex.truth_kind, ex.truth_seed)?;
    let data = generate_dataset(&gt, &ex.weights, ex.noise, ex.samples, ex.noise_seed)?;
    let init = generate_initialization(&gt, &ex.init)?;
    let gcc = gcc_section(ex, &data.x)?;
    let noise = if ex.noise.gamma > 0.0 { Some(noise_moments(&data.zeta)?) } else { None };

    create_dir(out)?;
    let mut files = Vec::new();
    for (name, m) in
        [(A_STAR_FILE, &gt.a_star), (X_FILE, &data.x), (Y_FILE, &data.y), (ZETA_FILE, &data.zeta), (A0_FILE, &init.a0)]
    {
        let path = out.join(name);
        write_matrix(&path, m)?;
        let bytes = fs::read(&path).map_err(|e| HarnessError::io(&path, e))?;
        files.push(FileEntry { name: name.into(), rows: m.rows(), cols: m.cols(), sha256: sha256_hex(&bytes) });
    }
    let manifest = Manifest {
        build: build_id(),
        config_hash: ex.hash(),
        dataset_hash: ex.dataset_hash(),
        experiment: ex.clone(),
        truth_seed_used: gt.seed,
        condition_number: gt.condition_number,
        init_offdiag_norm: init.ell,
        init_out_of_span_norm: init.rho,
        noise_moments: noise,
        gcc,
        files,
    };
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverStatus {
    Ok,
    /// Stopped on a blow-up; the trace file holds the rows up to that point.
    Diverged,
    /// Declined the input, e.g. multiplicative updates on negative data.
    Refused,
    Failed,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverSummary {
    pub label: String,
    pub name: String,
    pub status: SolverStatus,
    pub message: Option<String>,
    pub initial_error: Option<f64>,
    pub final_error: Option<f64>,
    pub final_log10_error: Option<f64>,
    pub records: usize,
    pub wall_clock_seconds: f64,
    pub pinv_count: Option<usize>,
    pub trace_file: String,
    pub final_matrix: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub build: String,
    pub config_hash: String,
    pub dataset_hash: String,
    pub experiment: Experiment,
    pub solvers: Vec<SolverSummary>,
}

impl RunSummary {
    /// 2 if any solver diverged or failed, 1 if any refused, else 0.
    pub fn exit_code(&self) -> i32 {
        let has = |s: SolverStatus| self.solvers.iter().any(|x| x.status == s);
        if has(SolverStatus::Diverged) || has(SolverStatus::Failed) {
            2
        } else if has(SolverStatus::Refused) {
            1
        } else {
            0
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolverOutcome {
    pub summary: SolverSummary,
    pub trace: RunTrace,
    pub a_final: Option<DenseMatrix>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: RunSummary,
    pub outcomes: Vec<SolverOutcome>,
}

pub struct Inputs {
    pub y: DenseMatrix,
    pub a0: DenseMatrix,
    pub a_star: DenseMatrix,
}

/// Reads the dataset written by [`generate`], refusing files produced
/// from a different dataset description.
pub fn load_inputs(ex: &Experiment, dir: &Path) -> Result<Inputs> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path).map_err(|e| HarnessError::io(&manifest_path, e))?;
    let manifest: serde_json::Value = serde_json::from_str(&text)?;
    let found = manifest.get("dataset_hash").and_then(|v| v.as_str()).unwrap_or("");
    if found != ex.dataset_hash() {
        return Err(HarnessError::Validation(format!(
            "{} was generated from a different dataset description; run generate again",
            dir.display()
        )));
    }
    let y = read_matrix(&dir.join(Y_FILE))?;
    let a0 = read_matrix(&dir.join(A0_FILE))?;
    let a_star = read_matrix(&dir.join(A_STAR_FILE))?;
    if y.rows() != a0.rows() || a0.shape() != a_star.shape() {
        return Err(HarnessError::Validation(format!(
            "inconsistent shapes: Y {}x{}, A0 {}x{}, A* {}x{}",
            y.rows(),
            y.cols(),
            a0.rows(),
            a0.cols(),
            a_star.rows(),
            a_star.cols()
        )));
    }
    Ok(Inputs { y, a0, a_star })
}

fn run_one(solver: &ResolvedSolver, inputs: &Inputs, eval_every: usize, out: &Path) -> Result<SolverOutcome> {
    let trace_name = trace_file_name(&solver.label);
    let trace_path = out.join(&trace_name);
    let file = File::create(&trace_path).map_err(|e| HarnessError::io(&trace_path, e))?;
    let mut writer = TraceWriter::new(BufWriter::new(file)).map_err(|e| HarnessError::io(&trace_path, e))?;
    let mut io_error: Option<std::io::Error> = None;
    let mut trace = RunTrace::default();
    let observer = |r: &TraceRecord| {
        trace.push(*r);
        if io_error.is_none() {
            if let Err(e) = writer.write(r) {
                io_error = Some(e);
            }
        }
    };
    let started = Instant::now();
    let truth = Some(&inputs.a_star);
    let result = match &solver.kind {
        SolverKind::And(cfg) => run_observed(&inputs.a0, &inputs.y, cfg, truth, RunOptions { eval_every }, observer)
            .map(|r| (r.a, Some(r.pinv_count))),
        SolverKind::Baseline(cfg) => {
            run_baseline(cfg, &inputs.y, &inputs.a0, truth, eval_every, observer).map(|r| (r.a, None))
        }
    };
    let wall_clock_seconds = started.elapsed().as_secs_f64();
    if let Some(e) = io_error {
        return Err(HarnessError::io(&trace_path, e));
    }
    writer.finish().map_err(|e| HarnessError::io(&trace_path, e))?;

    let (status, message, a_final, pinv_count) = match result {
        Ok((a, pinv)) => (SolverStatus::Ok, None, Some(a), pinv),
        Err(e @ NmfError::Diverged { .. }) => (SolverStatus::Diverged, Some(e.to_string()), None, None),
        Err(e @ NmfError::NegativeInput(_)) => (SolverStatus::Refused, Some(e.to_string()), None, None),
        Err(e) => (SolverStatus::Failed, Some(e.to_string()), None, None),
    };
    let final_matrix = match &a_final {
        Some(a) => {
            let name = final_matrix_name(&solver.label);
            write_matrix(&out.join(&name), a)?;
            Some(name)
        }
        None => None,
    };
    let summary = SolverSummary {
        label: solver.label.clone(),
        name: solver.name().into(),
        status,
        message,
        initial_error: trace.initial_error(),
        final_error: trace.final_error(),
        final_log10_error: trace.last().map(|r| r.log10_error),
        records: trace.records.len(),
        wall_clock_seconds,
        pinv_count,
        trace_file: trace_name,
        final_matrix,
    };
    Ok(SolverOutcome { summary, trace, a_final })
}

/// Runs every configured solver on the dataset in `dir`, writing one trace
/// and one final matrix per solver plus `summary.json`. With `jobs > 1`
/// solvers run on that many threads; outputs do not depend on `jobs`.
pub fn run(ex: &Experiment, dir: &Path, jobs: usize) -> Result<RunOutput> {
    let inputs = load_inputs(ex, dir)?;
    let n = ex.solvers.len();
    let jobs = jobs.clamp(1, n);
    let slots: Mutex<Vec<Option<Result<SolverOutcome>>>> = Mutex::new((0..n).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let work = || loop {
        let i = next.fetch_add(1, Ordering::SeqCst);
        if i >= n {
            break;
        }
        let outcome = run_one(&ex.solvers[i], &inputs, ex.eval_every, dir);
        slots.lock().expect("no panics while holding the lock")[i] = Some(outcome);
    };
    if jobs == 1 {
        work();
    } else {
        std::thread::scope(|s| {
            for _ in 0..jobs {
                s.spawn(work);
            }
        });
    }
    let outcomes = slots
        .into_inner()
        .expect("no panics while holding the lock")
        .into_iter()
        .map(|o| o.expect("every solver ran"))
        .collect::<Result<Vec<_>>>()?;
    let summary = RunSummary {
        build: build_id(),
        config_hash: ex.hash(),
        dataset_hash: ex.dataset_hash(),
        experiment: ex.clone(),
        solvers: outcomes.iter().map(|o| o.summary.clone()).collect(),
    };
    write_json(&dir.join(SUMMARY_FILE), &summary)?;
    Ok(RunOutput { summary, outcomes })
}

/// Correlation error of an estimate file against a ground-truth file.
pub fn eval(estimate: &Path, truth: &Path) -> Result<ErrorReport> {
    let a = read_matrix(estimate)?;
    let a_star = read_matrix(truth)?;
    if a.rows() != a_star.rows() {
        return Err(HarnessError::Validation(format!(
            "estimate has {} rows but the ground truth has {}",
            a.rows(),
            a_star.rows()
        )));
    }
    Ok(total_correlation_error(&a, &a_star)?)
}

pub const DEFAULT_DECAY_ALPHAS: [f64; 8] = [0.005, 0.01, 0.02, 0.05, 0.1, 0.15, 0.2, 0.25];

#[derive(Debug, Clone, Serialize)]
pub struct GccFileReport {
    pub params: GccParams,
    pub moments: MomentsJson,
    pub second_moment: Vec<Vec<f64>>,
    pub decay_profile: DecayProfile,
}

/// Empirical GCC report for a weights file (`D x n`, one sample per column).
pub fn gcc(weights: &Path, alphas: &[f64]) -> Result<GccFileReport> {
    let x = read_matrix(weights)?;
    let report = gcc_from_samples(&x)?;
    let profile = decay_profile(&x, alphas)?;
    Ok(GccFileReport {
        params: report.params,
        moments: MomentsJson {
            max_column_l1: report.max_column_l1,
            max_diagonal: report.max_diagonal,
            max_off_diagonal: report.max_off_diagonal,
            lambda_min: report.lambda_min,
            samples: report.samples,
        },
        second_moment: report.second_moment.to_rows(),
        decay_profile: profile,
    })
}

/// Output directory: explicit override, then the config, then `out`.
pub fn output_dir(ex: &Experiment, cli: Option<&Path>) -> PathBuf {
    cli.map(Path::to_path_buf).or_else(|| ex.output_dir.clone()).unwrap_or_else(|| PathBuf::from("out"))
}
