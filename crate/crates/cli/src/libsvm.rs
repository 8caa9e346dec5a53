//! Reader and writer for the libsvm sparse text format
//! (`label idx:val idx:val ...`, 1-based indices).

use std::fmt::Write as _;
use std::path::Path;

use sobo::problems::SparseMatrix;

use crate::error::{CliError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct LibsvmData {
    pub features: SparseMatrix,
    /// Labels remapped to `0..classes` in ascending order of the raw values.
    pub labels: Vec<usize>,
    /// Raw label values, sorted; `raw_labels[k]` was mapped to `k`.
    pub raw_labels: Vec<f64>,
}

impl LibsvmData {
    pub fn classes(&self) -> usize {
        self.raw_labels.len()
    }
}

pub fn parse_libsvm(path: &Path) -> Result<LibsvmData> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_libsvm_str(&text).map_err(|e| match e {
        CliError::Data(m) => CliError::Data(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Blank lines and `#` comments are skipped. Indices out of order within a
/// line are re-sorted with a warning; duplicates are an error.
pub fn parse_libsvm_str(text: &str) -> Result<LibsvmData> {
    let mut rows = Vec::new();
    let mut raw = Vec::new();
    let mut ncols = 0;
    for (lineno, line) in text.lines().enumerate().map(|(i, l)| (i + 1, l)) {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = |msg: String| CliError::Data(format!("line {lineno}: {msg}"));
        let mut tokens = line.split_whitespace();
        let label_tok = tokens.next().expect("nonempty line has a token");
        let label: f64 = label_tok
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| bad(format!("nonnumeric label {label_tok:?}")))?;
        let mut row: Vec<(usize, f64)> = Vec::new();
        for tok in tokens {
            let (i, v) = tok.split_once(':').ok_or_else(|| bad(format!("expected idx:val, got {tok:?}")))?;
            let idx: usize = i.parse().map_err(|_| bad(format!("nonnumeric index {i:?}")))?;
            if idx == 0 {
                return Err(bad("indices are 1-based, got 0".into()));
            }
            let val: f64 = v
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| bad(format!("nonnumeric value {v:?}")))?;
            row.push((idx - 1, val));
        }
        if row.windows(2).any(|w| w[0].0 >= w[1].0) {
            log::warn!("line {lineno}: feature indices not increasing, re-sorted");
            row.sort_by_key(|&(c, _)| c);
            if row.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(bad("duplicate feature index".into()));
            }
        }
        ncols = ncols.max(row.last().map_or(0, |&(c, _)| c + 1));
        rows.push(row);
        raw.push(label);
    }
    if rows.is_empty() {
        return Err(CliError::Data("no samples".into()));
    }
    let mut distinct = raw.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let labels = raw
        .iter()
        .map(|v| distinct.binary_search_by(|d| d.total_cmp(v)).expect("label is present"))
        .collect();
    let features = SparseMatrix::from_rows(ncols, &rows).map_err(|e| CliError::Data(e.to_string()))?;
    Ok(LibsvmData {
        features,
        labels,
        raw_labels: distinct,
    })
}

/// Inverse of [`parse_libsvm_str`] up to label remapping; zeros are omitted.
pub fn to_libsvm_string(features: &SparseMatrix, labels: &[f64]) -> String {
    let mut out = String::new();
    for (i, label) in labels.iter().enumerate() {
        write!(out, "{label}").unwrap();
        for (j, v) in features.row(i) {
            if v != 0.0 {
                write!(out, " {}:{v}", j + 1).unwrap();
            }
        }
        out.push('\n');
    }
    out
}
