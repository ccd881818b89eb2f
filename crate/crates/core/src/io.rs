//! Plain-text matrix files.
//!
//! ```text
//! # optional comments, anywhere after '#'
//! 3
//! 0.5 0.25 0.25
//! 0.25 0.5 0.25
//! 0.25 0.25 0.5
//! ```
//!
//! Values are written in shortest round-trip form, so reading a written file
//! reproduces every entry bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::stochastic::StochasticMatrix;

pub fn parse_matrix(text: &str) -> Result<DMatrix<f64>> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    let (first, header) = lines.next().ok_or(Error::Parse {
        line: 0,
        detail: "empty matrix file".into(),
    })?;
    let n: usize = header.parse().map_err(|_| Error::Parse {
        line: first,
        detail: format!("expected dimension, got '{header}'"),
    })?;
    if n == 0 {
        return Err(Error::Empty);
    }
    let mut values = Vec::with_capacity(n * n);
    for row in 0..n {
        let (line, text) = lines.next().ok_or(Error::Parse {
            line: 0,
            detail: format!("expected {n} rows, found {row}"),
        })?;
        let parsed: Vec<f64> = text
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    detail: format!("not a number: '{tok}'"),
                })
            })
            .collect::<Result<_>>()?;
        if parsed.len() != n {
            return Err(Error::Parse {
                line,
                detail: format!("expected {n} values, found {}", parsed.len()),
            });
        }
        values.extend(parsed);
    }
    if let Some((line, _)) = lines.next() {
        return Err(Error::Parse {
            line,
            detail: "trailing content after matrix".into(),
        });
    }
    Ok(DMatrix::from_row_slice(n, n, &values))
}

pub fn format_matrix(m: &DMatrix<f64>, comment: Option<&str>) -> String {
    let mut out = String::new();
    if let Some(c) = comment {
        for line in c.lines() {
            let _ = writeln!(out, "# {line}");
        }
    }
    let _ = writeln!(out, "{}", m.nrows());
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        let _ = writeln!(out, "{}", cells.join(" "));
    }
    out
}

pub fn read_matrix_file(path: &Path) -> Result<DMatrix<f64>> {
    parse_matrix(&std::fs::read_to_string(path)?)
}

/// Reads and validates a stochastic matrix.
pub fn read_stochastic(path: &Path) -> Result<StochasticMatrix> {
    StochasticMatrix::new(read_matrix_file(path)?)
}

pub fn write_matrix_file(path: &Path, m: &DMatrix<f64>, comment: Option<&str>) -> Result<()> {
    std::fs::write(path, format_matrix(m, comment))?;
    Ok(())
}
