//! Matrix Market reader and writer (real field; general or symmetric).
//! Coordinate files load as CSR, array files as dense.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::sparse::SparseCsr;

use super::StoredMatrix;

pub fn load_matrix_market(path: impl AsRef<Path>) -> Result<StoredMatrix> {
    let path = path.as_ref();
    let file = fs::File::open(path)?;
    parse_matrix_market(BufReader::new(file), path)
}

#[derive(Clone, Copy, PartialEq)]
enum Format {
    Coordinate,
    Array,
}

pub fn parse_matrix_market<R: Read>(reader: R, path: impl AsRef<Path>) -> Result<StoredMatrix> {
    let path: PathBuf = path.as_ref().to_path_buf();
    let err = |line: usize, msg: String| Error::Parse {
        path: path.clone(),
        line,
        msg,
    };
    let mut lines = BufReader::new(reader).lines().enumerate().map(|(i, l)| (i + 1, l));

    let (_, header) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
    let header = header?;
    let tokens: Vec<String> = header.split_whitespace().map(str::to_ascii_lowercase).collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(err(1, format!("bad header {header:?}")));
    }
    let format = match tokens[2].as_str() {
        "coordinate" => Format::Coordinate,
        "array" => Format::Array,
        other => return Err(err(1, format!("unknown format {other:?}"))),
    };
    match tokens[3].as_str() {
        "real" | "double" | "integer" => {}
        other => return Err(Error::UnsupportedFormat(format!("field {other:?}"))),
    }
    let symmetric = match tokens[4].as_str() {
        "general" => false,
        "symmetric" => true,
        other => return Err(Error::UnsupportedFormat(format!("symmetry {other:?}"))),
    };

    let mut body = lines.filter_map(|(no, l)| match l {
        Ok(s) if s.trim().is_empty() || s.trim_start().starts_with('%') => None,
        other => Some((no, other)),
    });

    let (size_no, size_line) = body.next().ok_or_else(|| err(1, "missing size line".into()))?;
    let size_line = size_line?;
    let sizes: Vec<usize> = size_line
        .split_whitespace()
        .map(|t| t.parse::<usize>().map_err(|e| err(size_no, format!("bad size {t:?}: {e}"))))
        .collect::<Result<_>>()?;
    let want = if format == Format::Coordinate { 3 } else { 2 };
    if sizes.len() != want {
        return Err(err(size_no, format!("expected {want} integers on size line")));
    }
    let (rows, cols) = (sizes[0], sizes[1]);
    if symmetric && rows != cols {
        return Err(err(size_no, "symmetric matrix must be square".into()));
    }

    let parse_value = |no: usize, t: &str| -> Result<f64> {
        let v: f64 = t.parse().map_err(|e| err(no, format!("bad value {t:?}: {e}")))?;
        if !v.is_finite() {
            return Err(err(no, format!("non-finite value {t:?}")));
        }
        Ok(v)
    };

    match format {
        Format::Coordinate => {
            let nnz = sizes[2];
            let mut trip = Vec::with_capacity(if symmetric { 2 * nnz } else { nnz });
            let mut last_no = size_no;
            for _ in 0..nnz {
                let (no, line) = body
                    .next()
                    .ok_or_else(|| err(last_no + 1, format!("expected {nnz} entries")))?;
                last_no = no;
                let line = line?;
                let t: Vec<&str> = line.split_whitespace().collect();
                if t.len() != 3 {
                    return Err(err(no, format!("expected `row col value`, got {line:?}")));
                }
                let index = |s: &str, bound: usize| -> Result<usize> {
                    let v: usize = s.parse().map_err(|e| err(no, format!("bad index {s:?}: {e}")))?;
                    if v == 0 || v > bound {
                        return Err(err(no, format!("index {v} out of range 1..={bound}")));
                    }
                    Ok(v - 1)
                };
                let i = index(t[0], rows)?;
                let j = index(t[1], cols)?;
                let v = parse_value(no, t[2])?;
                if symmetric && j > i {
                    return Err(err(no, "symmetric file stores upper-triangle entry".into()));
                }
                trip.push((i, j, v));
                if symmetric && i != j {
                    trip.push((j, i, v));
                }
            }
            if let Some((no, _)) = body.next() {
                return Err(err(no, "trailing data after entries".into()));
            }
            Ok(StoredMatrix::Sparse(SparseCsr::from_triplets(rows, cols, &trip)?))
        }
        Format::Array => {
            let mut values = Vec::new();
            for (no, line) in body {
                for t in line?.split_whitespace() {
                    values.push((no, parse_value(no, t)?));
                }
            }
            let expected = if symmetric { rows * (rows + 1) / 2 } else { rows * cols };
            if values.len() != expected {
                let no = values.last().map_or(size_no, |v| v.0);
                return Err(err(no, format!("expected {expected} values, found {}", values.len())));
            }
            let mut m = DenseMatrix::zeros(rows, cols);
            let mut it = values.into_iter().map(|v| v.1);
            for j in 0..cols {
                let start = if symmetric { j } else { 0 };
                for i in start..rows {
                    let v = it.next().expect("count checked");
                    m[(i, j)] = v;
                    if symmetric {
                        m[(j, i)] = v;
                    }
                }
            }
            Ok(StoredMatrix::Dense(m))
        }
    }
}

/// Writes sparse matrices in coordinate format and dense ones in array
/// format, always `general`, with 17 significant digits.
pub fn write_matrix_market(path: impl AsRef<Path>, m: &StoredMatrix, comments: &[&str]) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    write_to(&mut out, m, comments)?;
    out.flush()?;
    Ok(())
}

fn write_to<W: Write>(out: &mut W, m: &StoredMatrix, comments: &[&str]) -> Result<()> {
    let kind = match m {
        StoredMatrix::Sparse(_) => "coordinate",
        StoredMatrix::Dense(_) => "array",
    };
    writeln!(out, "%%MatrixMarket matrix {kind} real general")?;
    for c in comments {
        for line in c.lines() {
            writeln!(out, "% {line}")?;
        }
    }
    match m {
        StoredMatrix::Sparse(s) => {
            writeln!(out, "{} {} {}", s.nrows(), s.ncols(), s.nnz())?;
            for (i, j, v) in s.triplets() {
                writeln!(out, "{} {} {:.16e}", i + 1, j + 1, v)?;
            }
        }
        StoredMatrix::Dense(d) => {
            writeln!(out, "{} {}", d.nrows(), d.ncols())?;
            for v in d.iter() {
                writeln!(out, "{v:.16e}")?;
            }
        }
    }
    Ok(())
}
