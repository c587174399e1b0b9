//! Trace files: one CSV row per trace record.

use std::io::Write;
use std::path::Path;

use andnmf::TraceRecord;

use crate::error::{HarnessError, Result};

pub const HEADER: &str = "stage,iter,seconds,alpha,total_error,log10_error,E_norm,N_norm";

fn num(v: f64) -> String {
    // 17 significant digits round-trip every f64
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn format_row(r: &TraceRecord) -> String {
    format!(
        "{},{},{},{},{},{},{},{}",
        r.stage,
        r.iter,
        num(r.seconds),
        opt(r.alpha),
        num(r.total_error),
        num(r.log10_error),
        opt(r.e_norm),
        opt(r.n_norm)
    )
}

/// Streams rows to a writer as records arrive.
pub struct TraceWriter<W: Write> {
    out: W,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(mut out: W) -> std::io::Result<Self> {
        writeln!(out, "{HEADER}")?;
        Ok(Self { out })
    }

    pub fn write(&mut self, r: &TraceRecord) -> std::io::Result<()> {
        writeln!(self.out, "{}", format_row(r))
    }

    pub fn finish(mut self) -> std::io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

pub fn parse(text: &str, path: &Path) -> Result<Vec<TraceRecord>> {
    let bad = |line: usize, message: String| HarnessError::MalformedCsv { path: path.to_path_buf(), line, message };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == HEADER => {}
        _ => return Err(bad(1, format!("expected header {HEADER:?}"))),
    }
    let mut out = Vec::new();
    for (idx, line) in lines {
        let ln = idx + 1;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(bad(ln, format!("expected 8 fields, found {}", f.len())));
        }
        let int = |s: &str, name: &str| s.parse::<usize>().map_err(|_| bad(ln, format!("bad {name}: {s:?}")));
        let float = |s: &str, name: &str| s.parse::<f64>().map_err(|_| bad(ln, format!("bad {name}: {s:?}")));
        let optional = |s: &str, name: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                float(s, name).map(Some)
            }
        };
        out.push(TraceRecord {
            stage: int(f[0], "stage")?,
            iter: int(f[1], "iter")?,
            seconds: float(f[2], "seconds")?,
            alpha: optional(f[3], "alpha")?,
            total_error: float(f[4], "total_error")?,
            log10_error: float(f[5], "log10_error")?,
            e_norm: optional(f[6], "E_norm")?,
            n_norm: optional(f[7], "N_norm")?,
        });
    }
    Ok(out)
}

pub fn read(path: &Path) -> Result<Vec<TraceRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    parse(&text, path)
}
