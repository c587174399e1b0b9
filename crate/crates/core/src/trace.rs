//! Convergence records shared by AND and the baselines.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRecord {
    pub stage: usize,
    /// Iteration within the stage; 0 is the state before any update.
    pub iter: usize,
    pub seconds: f64,
    /// Threshold in force, if the solver uses one.
    pub alpha: Option<f64>,
    /// Total correlation error, or `|Y - A Z|_F` when no ground truth is known.
    pub total_error: f64,
    pub log10_error: f64,
    pub e_norm: Option<f64>,
    pub n_norm: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct RunTrace {
    pub records: Vec<TraceRecord>,
}

impl RunTrace {
    pub fn push(&mut self, r: TraceRecord) {
        self.records.push(r);
    }

    pub fn first(&self) -> Option<&TraceRecord> {
        self.records.first()
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn initial_error(&self) -> Option<f64> {
        self.first().map(|r| r.total_error)
    }

    pub fn final_error(&self) -> Option<f64> {
        self.last().map(|r| r.total_error)
    }

    /// Last record of every stage, in stage order.
    pub fn stage_ends(&self) -> Vec<TraceRecord> {
        let mut out: Vec<TraceRecord> = Vec::new();
        for r in &self.records {
            match out.last_mut() {
                Some(last) if last.stage == r.stage => *last = *r,
                _ => out.push(*r),
            }
        }
        out
    }
}

/// `log10` that maps an exact zero to a finite floor instead of `-inf`.
pub fn log10_error(err: f64) -> f64 {
    err.max(f64::MIN_POSITIVE).log10()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(stage: usize, iter: usize, err: f64) -> TraceRecord {
        TraceRecord {
            stage,
            iter,
            seconds: 0.0,
            alpha: None,
            total_error: err,
            log10_error: log10_error(err),
            e_norm: None,
            n_norm: None,
        }
    }

    #[test]
    fn stage_ends_pick_last_of_each_stage() {
        let t = RunTrace { records: vec![rec(0, 0, 5.0), rec(0, 1, 4.0), rec(1, 1, 3.0), rec(1, 2, 2.0)] };
        let ends = t.stage_ends();
        assert_eq!(ends.len(), 2);
        assert_eq!((ends[0].total_error, ends[1].total_error), (4.0, 2.0));
        assert_eq!(t.initial_error(), Some(5.0));
        assert_eq!(t.final_error(), Some(2.0));
    }

    #[test]
    fn zero_error_has_finite_log() {
        assert!(log10_error(0.0).is_finite());
        assert_eq!(log10_error(100.0), 2.0);
    }
}
