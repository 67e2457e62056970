//! Matrix Market exchange format: coordinate and array layouts, real or
//! integer fields, general / symmetric / skew-symmetric storage.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{OpinsError, Result};
use crate::matrix::SparseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Layout {
    Coordinate,
    Array,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Symmetry {
    General,
    Symmetric,
    Skew,
}

fn parse_err(line: usize, msg: impl Into<String>) -> OpinsError {
    OpinsError::Parse { line, msg: msg.into() }
}

fn parse_header(line: &str, lineno: usize) -> Result<(Layout, Symmetry)> {
    let words: Vec<String> = line.split_whitespace().map(str::to_ascii_lowercase).collect();
    if words.len() != 5 || words[0] != "%%matrixmarket" {
        return Err(parse_err(lineno, "expected '%%MatrixMarket matrix <format> <field> <symmetry>'"));
    }
    if words[1] != "matrix" {
        return Err(OpinsError::Unsupported(format!("object type '{}'", words[1])));
    }
    let layout = match words[2].as_str() {
        "coordinate" => Layout::Coordinate,
        "array" => Layout::Array,
        other => return Err(parse_err(lineno, format!("unknown format '{other}'"))),
    };
    match words[3].as_str() {
        "real" | "integer" | "double" => {}
        other => return Err(OpinsError::Unsupported(format!("field type '{other}'"))),
    }
    let symmetry = match words[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        "skew-symmetric" => Symmetry::Skew,
        other => return Err(OpinsError::Unsupported(format!("symmetry '{other}'"))),
    };
    Ok((layout, symmetry))
}

fn parse_usize(tok: Option<&str>, lineno: usize, what: &str) -> Result<usize> {
    tok.ok_or_else(|| parse_err(lineno, format!("missing {what}")))?
        .parse()
        .map_err(|_| parse_err(lineno, format!("invalid {what}")))
}

fn parse_f64(tok: Option<&str>, lineno: usize) -> Result<f64> {
    let v: f64 = tok
        .ok_or_else(|| parse_err(lineno, "missing value"))?
        .parse()
        .map_err(|_| parse_err(lineno, "invalid value"))?;
    if !v.is_finite() {
        return Err(parse_err(lineno, "non-finite value"));
    }
    Ok(v)
}

/// Parse a Matrix Market stream into a sparse matrix; symmetric storage is
/// expanded to both triangles.
pub fn parse_matrix_market(reader: impl BufRead) -> Result<SparseMatrix> {
    let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (lineno, header) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let (layout, symmetry) = parse_header(&header?, lineno)?;

    let mut body = lines.filter_map(|(i, l)| match l {
        Ok(s) if s.trim().is_empty() || s.trim_start().starts_with('%') => None,
        other => Some((i, other)),
    });
    let (lineno, size) = body.next().ok_or_else(|| parse_err(lineno + 1, "missing size line"))?;
    let size = size?;
    let mut toks = size.split_whitespace();
    let nrows = parse_usize(toks.next(), lineno, "row count")?;
    let ncols = parse_usize(toks.next(), lineno, "column count")?;
    if symmetry != Symmetry::General && nrows != ncols {
        return Err(parse_err(lineno, "symmetric storage needs a square matrix"));
    }

    let mut trip = Vec::new();
    let mut push = |i: usize, j: usize, v: f64| {
        trip.push((i, j, v));
        if i != j {
            match symmetry {
                Symmetry::General => {}
                Symmetry::Symmetric => trip.push((j, i, v)),
                Symmetry::Skew => trip.push((j, i, -v)),
            }
        }
    };

    match layout {
        Layout::Coordinate => {
            let nnz = parse_usize(toks.next(), lineno, "entry count")?;
            let mut seen = 0;
            for (ln, line) in body {
                let line = line?;
                let mut t = line.split_whitespace();
                let i = parse_usize(t.next(), ln, "row index")?;
                let j = parse_usize(t.next(), ln, "column index")?;
                let v = parse_f64(t.next(), ln)?;
                if i == 0 || j == 0 || i > nrows || j > ncols {
                    return Err(parse_err(ln, format!("index ({i}, {j}) out of range")));
                }
                if symmetry != Symmetry::General && j > i {
                    return Err(parse_err(ln, "entry above the diagonal in symmetric storage"));
                }
                seen += 1;
                if seen > nnz {
                    return Err(parse_err(ln, "more entries than declared"));
                }
                push(i - 1, j - 1, v);
            }
            if seen != nnz {
                return Err(parse_err(lineno, format!("declared {nnz} entries, found {seen}")));
            }
        }
        Layout::Array => {
            // column-major; symmetric storage lists the lower triangle only
            let mut slots = Vec::new();
            for j in 0..ncols {
                let start = match symmetry {
                    Symmetry::General => 0,
                    Symmetry::Symmetric => j,
                    Symmetry::Skew => j + 1,
                };
                slots.extend((start..nrows).map(|i| (i, j)));
            }
            let mut next = slots.iter();
            let mut last = lineno;
            for (ln, line) in body {
                last = ln;
                for tok in line?.split_whitespace() {
                    let &(i, j) = next.next().ok_or_else(|| parse_err(ln, "more values than the matrix holds"))?;
                    let v = parse_f64(Some(tok), ln)?;
                    if v != 0.0 {
                        push(i, j, v);
                    }
                }
            }
            if next.next().is_some() {
                return Err(parse_err(last, "fewer values than the matrix holds"));
            }
        }
    }
    SparseMatrix::from_triplets(nrows, ncols, &trip)
}

pub fn load_matrix_market(path: impl AsRef<Path>) -> Result<SparseMatrix> {
    parse_matrix_market(BufReader::new(File::open(path)?))
}

/// A vector stored as an `n × 1` matrix (either layout).
pub fn load_vector(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let m = load_matrix_market(path)?;
    if m.ncols() != 1 {
        return Err(OpinsError::dims(format!("expected a single column, found {}", m.ncols())));
    }
    let mut v = vec![0.0; m.nrows()];
    for (i, _, x) in m.triplets() {
        v[i] = x;
    }
    Ok(v)
}

/// Write in coordinate/general layout.
pub fn write_matrix_market(path: impl AsRef<Path>, m: &SparseMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(w, "{} {} {}", m.nrows(), m.ncols(), m.nnz())?;
    for (i, j, v) in m.triplets() {
        writeln!(w, "{} {} {:e}", i + 1, j + 1, v)?;
    }
    w.flush()?;
    Ok(())
}

/// Write a dense vector in array layout.
pub fn write_vector(path: impl AsRef<Path>, v: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "%%MatrixMarket matrix array real general")?;
    writeln!(w, "{} 1", v.len())?;
    for x in v {
        writeln!(w, "{x:e}")?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<SparseMatrix> {
        parse_matrix_market(s.as_bytes())
    }

    #[test]
    fn coordinate_identity() {
        let m = parse("%%MatrixMarket matrix coordinate real general\n% c\n3 3 3\n1 1 1\n2 2 1\n3 3 1.0\n").unwrap();
        assert_eq!((m.nrows(), m.nnz()), (3, 3));
        assert_eq!(m, SparseMatrix::identity(3));
    }

    #[test]
    fn symmetric_lower_triangle_expanded() {
        let m = parse("%%MatrixMarket matrix coordinate real symmetric\n3 3 4\n1 1 2\n2 1 -1\n3 1 5\n3 3 4\n").unwrap();
        // two off-diagonal entries stored once, two diagonal entries
        assert_eq!(m.nnz(), 2 * 2 + 2);
        assert_eq!(m.get(0, 1), -1.0);
        assert!(m.is_symmetric(0.0));
    }

    #[test]
    fn skew_symmetric_negates() {
        let m = parse("%%MatrixMarket matrix coordinate integer skew-symmetric\n2 2 1\n2 1 3\n").unwrap();
        assert_eq!((m.get(1, 0), m.get(0, 1)), (3.0, -3.0));
    }

    #[test]
    fn array_is_column_major() {
        let m = parse("%%MatrixMarket matrix array real general\n2 2\n1\n2\n3\n4\n").unwrap();
        assert_eq!(m.to_dense().values(), &[1.0, 3.0, 2.0, 4.0]);
        let s = parse("%%MatrixMarket matrix array real symmetric\n2 2\n1\n2\n3\n").unwrap();
        assert_eq!(s.to_dense().values(), &[1.0, 2.0, 2.0, 3.0]);
    }

    #[test]
    fn complex_unsupported() {
        let e = parse("%%MatrixMarket matrix coordinate complex general\n1 1 1\n1 1 1 0\n").unwrap_err();
        assert!(matches!(e, OpinsError::Unsupported(_)));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = parse("%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1\n1 x 2\n").unwrap_err();
        assert!(matches!(e, OpinsError::Parse { line: 4, .. }), "{e:?}");
        let e = parse("%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1\n").unwrap_err();
        assert!(matches!(e, OpinsError::Parse { line: 3, .. }));
        let e = parse("%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1\n").unwrap_err();
        assert!(matches!(e, OpinsError::Parse { .. }));
        let e = parse("not a header\n").unwrap_err();
        assert!(matches!(e, OpinsError::Parse { line: 1, .. }));
    }

    #[test]
    fn roundtrip_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let m = SparseMatrix::from_triplets(3, 2, &[(0, 1, 0.1), (2, 0, -7.25e-9)]).unwrap();
        let p = dir.path().join("m.mtx");
        write_matrix_market(&p, &m).unwrap();
        assert_eq!(load_matrix_market(&p).unwrap(), m);
        let v = vec![1.0, 0.0, -1.0 / 3.0];
        let pv = dir.path().join("v.mtx");
        write_vector(&pv, &v).unwrap();
        assert_eq!(load_vector(&pv).unwrap(), v);
    }
}
