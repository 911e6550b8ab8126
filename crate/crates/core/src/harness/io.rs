//! Dense MatrixMarket files.
//!
//! Writes the `array real general|symmetric` layout: column-major entries,
//! only the lower triangle for `symmetric`, each value printed in its
//! shortest form that parses back to the same binary64. Reads that layout
//! and the `coordinate real general|symmetric` layout.

use std::fmt::Write as _;
use std::path::Path;

use crate::matkit::{DenseMatrix, SymMatrix};

use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Layout {
    Array,
    Coordinate,
}

/// Serializes `m`; with `symmetric` only the lower triangle is written and
/// `m` is assumed symmetric.
pub fn to_matrix_market(m: &DenseMatrix, symmetric: bool) -> String {
    let (rows, cols) = m.shape();
    let mut out = String::new();
    let kind = if symmetric { "symmetric" } else { "general" };
    let _ = writeln!(out, "%%MatrixMarket matrix array real {kind}");
    let _ = writeln!(out, "{rows} {cols}");
    for j in 0..cols {
        let start = if symmetric { j } else { 0 };
        for i in start..rows {
            let _ = writeln!(out, "{:e}", m.get(i, j));
        }
    }
    out
}

pub fn write_matrix(path: &Path, m: &DenseMatrix) -> Result<(), HarnessError> {
    Ok(std::fs::write(path, to_matrix_market(m, false))?)
}

pub fn write_sym_matrix(path: &Path, m: &SymMatrix) -> Result<(), HarnessError> {
    Ok(std::fs::write(path, to_matrix_market(m.as_dense(), true))?)
}

pub fn read_matrix(path: &Path) -> Result<DenseMatrix, HarnessError> {
    let text = std::fs::read_to_string(path)?;
    parse_matrix_market(&text, &path.display().to_string())
}

/// Reads a matrix and checks that it is symmetric.
pub fn read_sym_matrix(path: &Path) -> Result<SymMatrix, HarnessError> {
    Ok(SymMatrix::from_dense(read_matrix(path)?)?)
}

fn err(source: &str, line: usize, msg: impl Into<String>) -> HarnessError {
    HarnessError::Parse {
        path: source.to_string(),
        line,
        msg: msg.into(),
    }
}

/// Parses MatrixMarket text; `source` names the input in error messages.
/// Symmetric files are expanded to the full matrix.
pub fn parse_matrix_market(text: &str, source: &str) -> Result<DenseMatrix, HarnessError> {
    let mut lines = text.lines().enumerate().map(|(k, l)| (k + 1, l));
    let (hline, header) = lines.next().ok_or_else(|| err(source, 1, "empty file"))?;
    let words: Vec<String> = header
        .split_whitespace()
        .map(str::to_ascii_lowercase)
        .collect();
    if words.len() != 5 || words[0] != "%%matrixmarket" || words[1] != "matrix" {
        return Err(err(source, hline, format!("malformed header `{header}`")));
    }
    let layout = match words[2].as_str() {
        "array" => Layout::Array,
        "coordinate" => Layout::Coordinate,
        other => return Err(err(source, hline, format!("unsupported format `{other}`"))),
    };
    if words[3] != "real" {
        return Err(err(
            source,
            hline,
            format!("unsupported field `{}`", words[3]),
        ));
    }
    let symmetric = match words[4].as_str() {
        "general" => false,
        "symmetric" => true,
        other => {
            return Err(err(
                source,
                hline,
                format!("unsupported symmetry `{other}`"),
            ))
        }
    };

    let mut body = lines.filter(|(_, l)| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('%')
    });
    let (dline, dims) = body
        .next()
        .ok_or_else(|| err(source, hline + 1, "missing size line"))?;
    let sizes: Vec<usize> = dims
        .split_whitespace()
        .map(|w| {
            w.parse()
                .map_err(|_| err(source, dline, format!("bad size `{w}`")))
        })
        .collect::<Result<_, _>>()?;
    let expected_sizes = if layout == Layout::Array { 2 } else { 3 };
    if sizes.len() != expected_sizes {
        return Err(err(
            source,
            dline,
            format!("expected {expected_sizes} numbers on the size line"),
        ));
    }
    let (rows, cols) = (sizes[0], sizes[1]);
    if symmetric && rows != cols {
        return Err(err(
            source,
            dline,
            format!("symmetric matrix must be square, got {rows}x{cols}"),
        ));
    }

    let parse_value = |line: usize, w: &str| -> Result<f64, HarnessError> {
        let v: f64 = w
            .parse()
            .map_err(|_| err(source, line, format!("bad number `{w}`")))?;
        if !v.is_finite() {
            return Err(err(source, line, format!("non-finite value `{w}`")));
        }
        Ok(v)
    };

    let mut m = DenseMatrix::zeros(rows, cols);
    let mut last_line = dline;
    match layout {
        Layout::Array => {
            let slots: Vec<(usize, usize)> = (0..cols)
                .flat_map(|j| ((if symmetric { j } else { 0 })..rows).map(move |i| (i, j)))
                .collect();
            let mut filled = 0;
            for (ln, l) in body {
                last_line = ln;
                for w in l.split_whitespace() {
                    let &(i, j) = slots.get(filled).ok_or_else(|| {
                        err(source, ln, format!("more than {} entries", slots.len()))
                    })?;
                    let v = parse_value(ln, w)?;
                    m.set(i, j, v);
                    if symmetric {
                        m.set(j, i, v);
                    }
                    filled += 1;
                }
            }
            if filled != slots.len() {
                return Err(err(
                    source,
                    last_line,
                    format!("expected {} entries, found {filled}", slots.len()),
                ));
            }
        }
        Layout::Coordinate => {
            let nnz = sizes[2];
            let mut count = 0;
            for (ln, l) in body {
                last_line = ln;
                let w: Vec<&str> = l.split_whitespace().collect();
                if w.len() != 3 {
                    return Err(err(source, ln, "expected `row col value`"));
                }
                let idx = |s: &str, lim: usize| -> Result<usize, HarnessError> {
                    match s.parse::<usize>() {
                        Ok(k) if (1..=lim).contains(&k) => Ok(k - 1),
                        _ => Err(err(
                            source,
                            ln,
                            format!("index `{s}` out of range 1..={lim}"),
                        )),
                    }
                };
                let (i, j) = (idx(w[0], rows)?, idx(w[1], cols)?);
                let v = parse_value(ln, w[2])?;
                m.set(i, j, v);
                if symmetric {
                    m.set(j, i, v);
                }
                count += 1;
            }
            if count != nnz {
                return Err(err(
                    source,
                    last_line,
                    format!("expected {nnz} entries, found {count}"),
                ));
            }
        }
    }
    Ok(m)
}
