//! Matrix files.
//!
//! Binary layout: the magic bytes `NMF1`, then `rows` and `cols` as
//! little-endian `u32`, then `rows * cols` little-endian IEEE-754 `f64`
//! values in column-major order. Nothing follows the data.
//!
//! CSV layout: one matrix row per line, comma separated, no header.

use std::fs;
use std::path::Path;

use andnmf::DenseMatrix;

use crate::error::{HarnessError, Result};

pub const MAGIC: &[u8; 4] = b"NMF1";
const HEADER_LEN: usize = 12;

pub fn encode(m: &DenseMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * m.as_slice().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
    for v in m.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Parses the binary format. Errors carry the byte offset of the problem.
pub fn decode(bytes: &[u8], path: &Path) -> Result<DenseMatrix> {
    let bad = |offset: usize, message: String| HarnessError::MalformedMatrix {
        path: path.to_path_buf(),
        offset: offset as u64,
        message,
    };
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(bad(0, "missing NMF1 magic".into()));
    }
    if bytes.len() < HEADER_LEN {
        return Err(bad(bytes.len(), format!("header truncated, need {HEADER_LEN} bytes")));
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let cols = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    if rows == 0 || cols == 0 {
        return Err(bad(4, format!("empty shape {rows}x{cols}")));
    }
    let expected = rows
        .checked_mul(cols)
        .and_then(|c| c.checked_mul(8))
        .ok_or_else(|| bad(4, format!("shape {rows}x{cols} overflows")))?;
    let data = &bytes[HEADER_LEN..];
    if data.len() < expected {
        return Err(bad(
            bytes.len(),
            format!("data truncated: {rows}x{cols} needs {expected} bytes after the header, found {}", data.len()),
        ));
    }
    if data.len() > expected {
        return Err(bad(HEADER_LEN + expected, format!("{} trailing bytes", data.len() - expected)));
    }
    let mut values = Vec::with_capacity(rows * cols);
    for (k, chunk) in data.chunks_exact(8).enumerate() {
        let v = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
        if !v.is_finite() {
            return Err(bad(HEADER_LEN + 8 * k, format!("non-finite value at row {}, column {}", k % rows, k / rows)));
        }
        values.push(v);
    }
    Ok(DenseMatrix::from_column_slice(rows, cols, &values)?)
}

pub fn to_csv(m: &DenseMatrix) -> String {
    let mut out = String::new();
    for i in 0..m.rows() {
        let row: Vec<String> = (0..m.cols()).map(|j| format!("{:e}", m.get(i, j))).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn from_csv(text: &str, path: &Path) -> Result<DenseMatrix> {
    let bad = |line: usize, message: String| HarnessError::MalformedCsv { path: path.to_path_buf(), line, message };
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .enumerate()
            .map(|(c, field)| {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| bad(line_no, format!("field {} is not a number: {field:?}", c + 1)))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(bad(line_no, format!("field {} is not finite", c + 1)))
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(bad(line_no, format!("expected {} fields, found {}", first.len(), row.len())));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(bad(0, "no rows".into()));
    }
    Ok(DenseMatrix::from_rows(&rows)?)
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Writes binary, or CSV when the path ends in `.csv`.
pub fn write_matrix(path: &Path, m: &DenseMatrix) -> Result<()> {
    let bytes = if is_csv(path) { to_csv(m).into_bytes() } else { encode(m) };
    fs::write(path, bytes).map_err(|e| HarnessError::io(path, e))
}

/// Reads binary, or CSV when the path ends in `.csv`.
pub fn read_matrix(path: &Path) -> Result<DenseMatrix> {
    let bytes = fs::read(path).map_err(|e| HarnessError::io(path, e))?;
    if is_csv(path) {
        let text = String::from_utf8(bytes).map_err(|e| HarnessError::MalformedCsv {
            path: path.to_path_buf(),
            line: 0,
            message: format!("not UTF-8 at byte {}", e.utf8_error().valid_up_to()),
        })?;
        from_csv(&text, path)
    } else {
        decode(&bytes, path)
    }
}
