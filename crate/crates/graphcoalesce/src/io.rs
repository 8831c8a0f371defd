//! Text formats: edge lists, dense CSV matrices, label vectors and JSON.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use graphcoalesce_core::{Matrix, SimilarityKernel};
use serde::Serialize;

use crate::error::{CliError, Result};

/// Scientific notation with 17 significant digits, which round-trips every
/// `f64` exactly.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Reads `u<TAB>v<TAB>w` lines with 0-based node ids; `#` lines and blank
/// lines are skipped and a missing weight means 1. Any whitespace separates
/// fields. The node count is `nodes` or one past the largest id.
pub fn read_edge_list(path: &Path, nodes: Option<usize>) -> Result<SimilarityKernel> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut rows = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let parse_err = |message: String| CliError::Parse { path: path.to_path_buf(), line: idx + 1, message };
        let fields: Vec<&str> = text.split_whitespace().collect();
        if !(2..=3).contains(&fields.len()) {
            return Err(parse_err(format!("expected 2 or 3 fields, found {}", fields.len())));
        }
        let node = |s: &str| s.parse::<usize>().map_err(|_| parse_err(format!("bad node id {s:?}")));
        let (u, v) = (node(fields[0])?, node(fields[1])?);
        let w = match fields.get(2) {
            Some(s) => s.parse::<f64>().map_err(|_| parse_err(format!("bad weight {s:?}")))?,
            None => 1.0,
        };
        rows.push((u, v, w));
    }
    let inferred = rows.iter().map(|&(u, v, _)| u.max(v) + 1).max().unwrap_or(0);
    let n = match nodes {
        Some(n) if n < inferred => {
            return Err(CliError::Invalid(format!("{}: node id {} exceeds --nodes {n}", path.display(), inferred - 1)));
        }
        Some(n) => n,
        None => inferred,
    };
    Ok(SimilarityKernel::from_edge_list(n, &rows)?)
}

pub fn write_edge_list(path: &Path, kernel: &SimilarityKernel) -> Result<()> {
    let mut out = String::from("# u\tv\tw\n");
    for e in kernel.edges() {
        out.push_str(&format!("{}\t{}\t{}\n", e.i, e.j, format_float(e.weight)));
    }
    write_text(path, &out)
}

/// Header-less CSV of numbers; all rows must have the same length.
pub fn read_matrix_csv(path: &Path) -> Result<Matrix> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(false).comment(Some(b'#')).trim(csv::Trim::All).from_reader(file);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record?;
        let row = record
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| CliError::Parse { path: path.to_path_buf(), line: idx + 1, message: e.to_string() })?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::Invalid(format!("{}: empty matrix", path.display())));
    }
    Matrix::from_rows(&rows).map_err(|_| CliError::Invalid(format!("{}: ragged rows", path.display())))
}

pub fn write_matrix_csv(path: &Path, m: &Matrix) -> Result<()> {
    write_text(path, &matrix_csv(m))
}

pub fn matrix_csv(m: &Matrix) -> String {
    let mut out = String::with_capacity(m.rows() * m.cols() * 24);
    for i in 0..m.rows() {
        let line: Vec<String> = m.row(i).iter().map(|&v| format_float(v)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// Dense square kernel from CSV; symmetry and nonnegativity are validated.
pub fn read_kernel_csv(path: &Path) -> Result<SimilarityKernel> {
    let m = read_matrix_csv(path)?;
    if !m.is_square() {
        return Err(CliError::Invalid(format!("{}: kernel must be square, got {}×{}", path.display(), m.rows(), m.cols())));
    }
    Ok(SimilarityKernel::from_dense(&m)?)
}

/// One label per line (single-column CSV, optional `label` header).
pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut labels = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') || (idx == 0 && t == "label") {
            continue;
        }
        let v = t.parse::<usize>().map_err(|_| CliError::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message: format!("bad label {t:?}"),
        })?;
        labels.push(v);
    }
    Ok(labels)
}

pub fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut out = String::from("label\n");
    for l in labels {
        out.push_str(&format!("{l}\n"));
    }
    write_text(path, &out)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Writes pretty JSON to a temporary sibling, then renames it into place, so
/// readers never see a partial file.
pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    let tmp = path.with_extension("json.tmp");
    {
        let mut f = fs::File::create(&tmp).map_err(|e| CliError::io(&tmp, e))?;
        f.write_all(text.as_bytes()).map_err(|e| CliError::io(&tmp, e))?;
        f.sync_all().map_err(|e| CliError::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}
