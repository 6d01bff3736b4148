//! Plain-text channel traces for replaying externally generated channels.
//!
//! Each record is a header line `t K` followed by `N` lines of `K`
//! whitespace-separated reals, the rows of the `N x K` channel matrix.
//! Blank lines and lines starting with `#` are ignored.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub t: usize,
    pub k: usize,
    /// `N x K`
    pub h: Tensor,
}

/// Parses a trace for an `n`-antenna receiver supporting up to `k_max` users.
pub fn load_trace(path: &Path, n: usize, k_max: usize) -> Result<Vec<TraceRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_trace(&text, n, k_max).map_err(|(line, msg)| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    })
}

fn parse_trace(text: &str, n: usize, k_max: usize) -> Result<Vec<TraceRecord>, (usize, String)> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let mut records = Vec::new();
    while let Some((line_no, header)) = lines.next() {
        let fields: Vec<&str> = header.split_whitespace().collect();
        let [t, k] = fields[..] else {
            return Err((line_no, format!("expected header `t K`, got `{header}`")));
        };
        let t: usize = t
            .parse()
            .map_err(|_| (line_no, format!("bad block index `{t}`")))?;
        let k: usize = k
            .parse()
            .map_err(|_| (line_no, format!("bad user count `{k}`")))?;
        if k == 0 || k > n {
            return Err((
                line_no,
                format!("K = {k} violates N >= K >= 1 with N = {n}"),
            ));
        }
        if k > k_max {
            return Err((line_no, format!("K = {k} exceeds K_max = {k_max}")));
        }
        let mut data = Vec::with_capacity(n * k);
        for row in 0..n {
            let Some((row_line, text)) = lines.next() else {
                return Err((
                    line_no,
                    format!("record ends after {row} of {n} channel rows"),
                ));
            };
            let values: Vec<f64> = text
                .split_whitespace()
                .map(str::parse)
                .collect::<Result<_, _>>()
                .map_err(|e| (row_line, format!("bad number: {e}")))?;
            if values.len() != k {
                return Err((
                    row_line,
                    format!("expected {k} values, got {}", values.len()),
                ));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err((row_line, "non-finite channel entry".into()));
            }
            data.extend(values);
        }
        let h = Tensor::matrix(n, k, data).map_err(|e| (line_no, e.to_string()))?;
        records.push(TraceRecord { t, k, h });
    }
    Ok(records)
}

/// Serializes records in the format [`load_trace`] reads. Values are written
/// in shortest round-trip form so reloading is bit-exact.
pub fn format_trace(records: &[TraceRecord]) -> String {
    let mut out = String::new();
    for r in records {
        let _ = writeln!(out, "{} {}", r.t, r.k);
        for row in 0..r.h.rows() {
            let line: Vec<String> = r.h.row(row).iter().map(f64::to_string).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
    }
    out
}

pub fn write_trace(path: &Path, records: &[TraceRecord]) -> Result<()> {
    fs::write(path, format_trace(records)).map_err(|e| Error::io(path, e))
}
