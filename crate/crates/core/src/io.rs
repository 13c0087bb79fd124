//! Plain CSV matrices and vectors: one row per line, comma-separated
//! decimals, no header. A vector is a single-column file.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::simlab::fmt_f64;
use crate::vecspace::{DenseVector, SampleIndexSet, SamplingMode};

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `contents`, creating missing parent directories.
pub fn write(path: &Path, contents: &str) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err)?;
    }
    fs::write(path, contents).map_err(io_err)
}

fn parse_rows(text: &str, origin: &str) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .enumerate()
            .map(|(col, field)| {
                field.trim().parse::<f64>().map_err(|e| Error::Parse {
                    location: format!("{origin}:{}:{}", lineno + 1, col + 1),
                    message: format!("`{}`: {e}", field.trim()),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first().map(Vec::len) {
            if row.len() != first {
                return Err(Error::Parse {
                    location: format!("{origin}:{}", lineno + 1),
                    message: format!("expected {first} columns, found {}", row.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            location: origin.to_string(),
            message: "no data rows".into(),
        });
    }
    Ok(rows)
}

pub fn parse_matrix(text: &str, origin: &str) -> Result<DMatrix<f64>> {
    let rows = parse_rows(text, origin)?;
    let (n, r) = (rows.len(), rows[0].len());
    Ok(DMatrix::from_fn(n, r, |i, j| rows[i][j]))
}

pub fn parse_vector(text: &str, origin: &str) -> Result<DenseVector> {
    let rows = parse_rows(text, origin)?;
    if rows[0].len() != 1 {
        return Err(Error::Parse {
            location: origin.to_string(),
            message: format!("a vector file has one column, found {}", rows[0].len()),
        });
    }
    DenseVector::new(rows.into_iter().map(|r| r[0]).collect())
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    parse_matrix(&read(path)?, &path.display().to_string())
}

pub fn read_vector(path: &Path) -> Result<DenseVector> {
    parse_vector(&read(path)?, &path.display().to_string())
}

/// Reads 0-based indices, one per line (commas also accepted). Repeated
/// indices imply sampling with replacement.
pub fn read_indices(path: &Path, n: usize) -> Result<SampleIndexSet> {
    let text = read(path)?;
    let origin = path.display().to_string();
    let mut indices = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        for field in line.split(',').map(str::trim).filter(|f| !f.is_empty()) {
            indices.push(field.parse::<usize>().map_err(|e| Error::Parse {
                location: format!("{origin}:{}", lineno + 1),
                message: format!("`{field}`: {e}"),
            })?);
        }
    }
    let mut sorted = indices.clone();
    sorted.sort_unstable();
    let mode = if sorted.windows(2).any(|w| w[0] == w[1]) {
        SamplingMode::WithReplacement
    } else {
        SamplingMode::WithoutReplacement
    };
    SampleIndexSet::new(indices, mode, n)
}

pub fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for row in m.row_iter() {
        let fields: Vec<String> = row.iter().map(|&x| fmt_f64(x)).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn vector_to_csv(v: &DenseVector) -> String {
    v.as_slice().iter().map(|&x| fmt_f64(x) + "\n").collect()
}
