//! Plain-text matrix format.
//!
//! A matrix is a header line `rows cols` followed by `rows` lines of
//! whitespace-separated decimals. A file may hold several matrices back to
//! back. Blank lines and lines starting with `#` are ignored.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

fn parse_number(tok: &str, line: usize) -> Result<f64> {
    let x: f64 = tok.parse().map_err(|_| parse_err(line, format!("not a number: {tok:?}")))?;
    if !x.is_finite() {
        return Err(parse_err(line, format!("non-finite entry {tok:?}")));
    }
    Ok(x)
}

/// Parses every matrix in `text`, in order.
pub fn parse_matrices(text: &str) -> Result<Vec<DMatrix<f64>>> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let mut out = Vec::new();
    while let Some((ln, header)) = lines.next() {
        let dims: Vec<&str> = header.split_whitespace().collect();
        if dims.len() != 2 {
            return Err(parse_err(ln, "expected header `rows cols`"));
        }
        let rows: usize = dims[0].parse().map_err(|_| parse_err(ln, "bad row count"))?;
        let cols: usize = dims[1].parse().map_err(|_| parse_err(ln, "bad column count"))?;
        if rows == 0 || cols == 0 {
            return Err(parse_err(ln, "matrix dimensions must be positive"));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            let (rl, row) = lines
                .next()
                .ok_or_else(|| parse_err(ln, format!("expected {rows} rows, found {r}")))?;
            let before = data.len();
            for tok in row.split_whitespace() {
                data.push(parse_number(tok, rl)?);
            }
            if data.len() - before != cols {
                return Err(parse_err(rl, format!("expected {cols} entries, found {}", data.len() - before)));
            }
        }
        out.push(DMatrix::from_row_slice(rows, cols, &data));
    }
    if out.is_empty() {
        return Err(parse_err(1, "no matrix found"));
    }
    Ok(out)
}

/// Parses exactly one matrix.
pub fn parse_matrix(text: &str) -> Result<DMatrix<f64>> {
    let mut all = parse_matrices(text)?;
    if all.len() != 1 {
        return Err(parse_err(1, format!("expected one matrix, found {}", all.len())));
    }
    Ok(all.remove(0))
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_matrix(&text)
}

/// Reads a sequence of matrices from one file, or from every file of a
/// directory in lexicographic name order.
pub fn read_matrix_list(path: &Path) -> Result<Vec<DMatrix<f64>>> {
    let io = |e: std::io::Error| Error::Io(format!("{}: {e}", path.display()));
    if path.is_dir() {
        let mut entries: Vec<_> = std::fs::read_dir(path)
            .map_err(io)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        entries.sort();
        let mut out = Vec::new();
        for p in entries {
            let text = std::fs::read_to_string(&p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
            out.extend(parse_matrices(&text)?);
        }
        if out.is_empty() {
            return Err(Error::Io(format!("{}: directory holds no matrices", path.display())));
        }
        Ok(out)
    } else {
        let text = std::fs::read_to_string(path).map_err(io)?;
        parse_matrices(&text)
    }
}

/// Formats a matrix with enough digits to round-trip exactly.
pub fn format_matrix(m: &DMatrix<f64>) -> String {
    let mut s = format!("{} {}\n", m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:e}", m[(i, j)])).collect();
        let _ = writeln!(s, "{}", row.join(" "));
    }
    s
}
