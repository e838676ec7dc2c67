//! Matrix Market (.mtx) import and export.
//!
//! Matrices use the coordinate format (`general` by default, `symmetric` on
//! request, in which case only the lower triangle is stored and the reader
//! mirrors it back). Vectors are written in dense `array` format as an n x 1
//! matrix; the reader accepts both array and coordinate vectors. Values are
//! printed in scientific notation with Rust's shortest round-trip formatting,
//! so a write/read cycle reproduces every entry bit for bit.

use super::SparseMatrix;
use crate::error::{Result, SolverError};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

fn parse_err(path: &Path, line: usize, msg: impl std::fmt::Display) -> SolverError {
    SolverError::Parse(format!("{}:{line}: {msg}", path.display()))
}

/// Writes a sparse matrix in coordinate format.
pub fn write_matrix(path: impl AsRef<Path>, a: &SparseMatrix) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(w, "{} {} {}", a.nrows(), a.ncols(), a.nnz())?;
    for (r, c, v) in a.triplets() {
        writeln!(w, "{} {} {:e}", r + 1, c + 1, v)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a symmetric sparse matrix in coordinate/symmetric format (lower
/// triangle only). The caller asserts symmetry; entries above the diagonal
/// are dropped.
pub fn write_matrix_symmetric(path: impl AsRef<Path>, a: &SparseMatrix) -> Result<()> {
    let path = path.as_ref();
    let lower: Vec<_> = a.triplets().into_iter().filter(|&(r, c, _)| c <= r).collect();
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "%%MatrixMarket matrix coordinate real symmetric")?;
    writeln!(w, "{} {} {}", a.nrows(), a.ncols(), lower.len())?;
    for (r, c, v) in lower {
        writeln!(w, "{} {} {:e}", r + 1, c + 1, v)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a dense vector as an n x 1 array-format matrix.
pub fn write_vector(path: impl AsRef<Path>, v: &[f64]) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "%%MatrixMarket matrix array real general")?;
    writeln!(w, "{} 1", v.len())?;
    for x in v {
        writeln!(w, "{x:e}")?;
    }
    w.flush()?;
    Ok(())
}

#[derive(PartialEq)]
enum MtxFormat {
    Coordinate,
    Array,
}

#[derive(PartialEq)]
enum MtxSymmetry {
    General,
    Symmetric,
}

struct Header {
    format: MtxFormat,
    symmetry: MtxSymmetry,
}

fn read_header(path: &Path, first: &str) -> Result<Header> {
    let tokens: Vec<&str> = first.split_whitespace().collect();
    if tokens.len() < 4 || !tokens[0].eq_ignore_ascii_case("%%MatrixMarket") {
        return Err(parse_err(path, 1, "missing %%MatrixMarket header"));
    }
    if !tokens[1].eq_ignore_ascii_case("matrix") {
        return Err(parse_err(path, 1, "only `matrix` objects are supported"));
    }
    let format = match tokens[2].to_ascii_lowercase().as_str() {
        "coordinate" => MtxFormat::Coordinate,
        "array" => MtxFormat::Array,
        other => return Err(parse_err(path, 1, format!("unsupported format `{other}`"))),
    };
    if !tokens[3].eq_ignore_ascii_case("real") && !tokens[3].eq_ignore_ascii_case("integer") {
        return Err(parse_err(
            path,
            1,
            format!("unsupported field `{}` (expected real)", tokens[3]),
        ));
    }
    let symmetry = match tokens.get(4).map(|s| s.to_ascii_lowercase()) {
        None => MtxSymmetry::General,
        Some(s) if s == "general" => MtxSymmetry::General,
        Some(s) if s == "symmetric" => MtxSymmetry::Symmetric,
        Some(other) => {
            return Err(parse_err(path, 1, format!("unsupported symmetry `{other}`")))
        }
    };
    Ok(Header { format, symmetry })
}

/// Reads a matrix in coordinate or array format (general or symmetric).
pub fn read_matrix(path: impl AsRef<Path>) -> Result<SparseMatrix> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines().enumerate();

    let (_, first) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let header = read_header(path, &first?)?;

    // Size line: first non-comment, non-blank line.
    let mut size_line = None;
    for (idx, line) in &mut lines {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        size_line = Some((idx + 1, t.to_string()));
        break;
    }
    let (size_no, size_line) =
        size_line.ok_or_else(|| parse_err(path, 1, "missing size line"))?;
    let dims: Vec<usize> = size_line
        .split_whitespace()
        .map(|t| t.parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| parse_err(path, size_no, e))?;

    match header.format {
        MtxFormat::Coordinate => {
            if dims.len() != 3 {
                return Err(parse_err(path, size_no, "expected `rows cols nnz`"));
            }
            let (nrows, ncols, nnz) = (dims[0], dims[1], dims[2]);
            let mut triplets = Vec::with_capacity(nnz);
            for (idx, line) in &mut lines {
                let line = line?;
                let t = line.trim();
                if t.is_empty() || t.starts_with('%') {
                    continue;
                }
                let mut it = t.split_whitespace();
                let (r, c, v) = (it.next(), it.next(), it.next());
                let (r, c) = match (r, c) {
                    (Some(r), Some(c)) => (r, c),
                    _ => return Err(parse_err(path, idx + 1, "expected `row col value`")),
                };
                let r: usize = r.parse().map_err(|e| parse_err(path, idx + 1, e))?;
                let c: usize = c.parse().map_err(|e| parse_err(path, idx + 1, e))?;
                let v: f64 = match v {
                    Some(v) => v.parse().map_err(|e| parse_err(path, idx + 1, e))?,
                    None => return Err(parse_err(path, idx + 1, "missing value")),
                };
                if r == 0 || c == 0 {
                    return Err(parse_err(path, idx + 1, "indices are 1-based"));
                }
                triplets.push((r - 1, c - 1, v));
                if header.symmetry == MtxSymmetry::Symmetric && r != c {
                    triplets.push((c - 1, r - 1, v));
                }
            }
            SparseMatrix::from_triplets(nrows, ncols, triplets)
        }
        MtxFormat::Array => {
            if dims.len() != 2 {
                return Err(parse_err(path, size_no, "expected `rows cols`"));
            }
            let (nrows, ncols) = (dims[0], dims[1]);
            let mut vals = Vec::with_capacity(nrows * ncols);
            for (idx, line) in &mut lines {
                let line = line?;
                let t = line.trim();
                if t.is_empty() || t.starts_with('%') {
                    continue;
                }
                for tok in t.split_whitespace() {
                    vals.push(
                        tok.parse::<f64>()
                            .map_err(|e| parse_err(path, idx + 1, e))?,
                    );
                }
            }
            if vals.len() != nrows * ncols {
                return Err(parse_err(
                    path,
                    size_no,
                    format!("expected {} values, found {}", nrows * ncols, vals.len()),
                ));
            }
            // Array format is column-major.
            let mut triplets = Vec::with_capacity(vals.len());
            for c in 0..ncols {
                for r in 0..nrows {
                    let v = vals[c * nrows + r];
                    if v != 0.0 {
                        triplets.push((r, c, v));
                        if header.symmetry == MtxSymmetry::Symmetric && r != c {
                            triplets.push((c, r, v));
                        }
                    }
                }
            }
            SparseMatrix::from_triplets(nrows, ncols, triplets)
        }
    }
}

/// Reads a vector: any n x 1 (or 1 x n) matrix file.
pub fn read_vector(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let m = read_matrix(path)?;
    if m.ncols() == 1 {
        let mut v = vec![0.0; m.nrows()];
        for (r, _, x) in m.triplets() {
            v[r] = x;
        }
        Ok(v)
    } else if m.nrows() == 1 {
        let mut v = vec![0.0; m.ncols()];
        for (_, c, x) in m.triplets() {
            v[c] = x;
        }
        Ok(v)
    } else {
        Err(SolverError::Parse(format!(
            "{}: expected a vector, found a {}x{} matrix",
            path.display(),
            m.nrows(),
            m.ncols()
        )))
    }
}
