//! MatrixMarket files: `coordinate` and `array` layouts, `real` field,
//! `general` or `symmetric` storage.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::multivec::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Layout {
    Coordinate,
    Array,
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

pub fn read_matrix_market(path: impl AsRef<Path>) -> Result<CsrMatrix> {
    read_matrix_market_from(BufReader::new(File::open(path)?))
}

/// Parses a MatrixMarket stream. Symmetric storage is expanded to both
/// triangles and duplicate coordinates are summed.
pub fn read_matrix_market_from(reader: impl BufRead) -> Result<CsrMatrix> {
    let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));

    let (lno, banner) = match lines.next() {
        Some((n, l)) => (n, l?),
        None => return Err(parse_err(1, "empty file")),
    };
    let tokens: Vec<String> = banner.split_whitespace().map(str::to_ascii_lowercase).collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(parse_err(lno, "expected `%%MatrixMarket matrix <layout> <field> <symmetry>`"));
    }
    let layout = match tokens[2].as_str() {
        "coordinate" => Layout::Coordinate,
        "array" => Layout::Array,
        other => return Err(parse_err(lno, format!("unknown layout `{other}`"))),
    };
    match tokens[3].as_str() {
        "real" => {}
        "integer" | "complex" | "pattern" => {
            return Err(Error::Unsupported(format!("MatrixMarket field `{}`", tokens[3])))
        }
        other => return Err(parse_err(lno, format!("unknown field `{other}`"))),
    }
    let symmetric = match tokens[4].as_str() {
        "general" => false,
        "symmetric" => true,
        "skew-symmetric" | "hermitian" => {
            return Err(Error::Unsupported(format!("MatrixMarket symmetry `{}`", tokens[4])))
        }
        other => return Err(parse_err(lno, format!("unknown symmetry `{other}`"))),
    };

    let mut data = lines.filter_map(|(n, l)| match l {
        Ok(s) => {
            let t = s.trim();
            (!t.is_empty() && !t.starts_with('%')).then(|| Ok((n, t.to_string())))
        }
        Err(e) => Some(Err(Error::from(e))),
    });

    let (lno, size) = data.next().ok_or_else(|| parse_err(lno + 1, "missing size line"))??;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|s| s.parse().map_err(|_| parse_err(lno, format!("bad size field `{s}`"))))
        .collect::<Result<_>>()?;
    let expected_fields = if layout == Layout::Coordinate { 3 } else { 2 };
    if dims.len() != expected_fields {
        return Err(parse_err(lno, format!("size line needs {expected_fields} integers")));
    }
    let (nrows, ncols) = (dims[0], dims[1]);
    if symmetric && nrows != ncols {
        return Err(parse_err(lno, "symmetric matrix must be square"));
    }

    let mut triplets = Vec::new();
    let mut push = |r: usize, c: usize, v: f64| {
        triplets.push((r, c, v));
        if symmetric && r != c {
            triplets.push((c, r, v));
        }
    };

    match layout {
        Layout::Coordinate => {
            let nnz = dims[2];
            for k in 0..nnz {
                let (lno, line) = data
                    .next()
                    .ok_or_else(|| parse_err(lno + k + 1, format!("expected {nnz} entries, found {k}")))??;
                let f: Vec<&str> = line.split_whitespace().collect();
                if f.len() != 3 {
                    return Err(parse_err(lno, "entry needs `row col value`"));
                }
                let idx = |s: &str, dim: usize| -> Result<usize> {
                    let i: usize = s.parse().map_err(|_| parse_err(lno, format!("bad index `{s}`")))?;
                    if i == 0 || i > dim {
                        return Err(parse_err(lno, format!("index {i} outside 1..={dim}")));
                    }
                    Ok(i - 1)
                };
                let (r, c) = (idx(f[0], nrows)?, idx(f[1], ncols)?);
                let v: f64 = f[2].parse().map_err(|_| parse_err(lno, format!("bad value `{}`", f[2])))?;
                if symmetric && c > r {
                    return Err(parse_err(lno, "symmetric storage lists the lower triangle only"));
                }
                push(r, c, v);
            }
        }
        Layout::Array => {
            for c in 0..ncols {
                let r0 = if symmetric { c } else { 0 };
                for r in r0..nrows {
                    let (lno, line) = data
                        .next()
                        .ok_or_else(|| parse_err(lno, "array data ends early"))??;
                    let v: f64 = line
                        .parse()
                        .map_err(|_| parse_err(lno, format!("bad value `{line}`")))?;
                    if v != 0.0 {
                        push(r, c, v);
                    }
                }
            }
        }
    }
    if let Some(extra) = data.next() {
        let (lno, _) = extra?;
        return Err(parse_err(lno, "trailing data after the last entry"));
    }
    CsrMatrix::from_triplets(nrows, ncols, triplets)
}

/// Writes `m` in coordinate layout. With `symmetric` only the lower triangle
/// is written; `m` must then actually be symmetric.
pub fn write_matrix_market(path: impl AsRef<Path>, m: &CsrMatrix, symmetric: bool) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_matrix_market_to(&mut w, m, symmetric)?;
    w.flush()?;
    Ok(())
}

pub fn write_matrix_market_to(w: &mut impl Write, m: &CsrMatrix, symmetric: bool) -> Result<()> {
    if symmetric && !m.is_symmetric(0.0) {
        return Err(Error::InvalidMatrix("matrix is not exactly symmetric".into()));
    }
    let entries: Vec<_> = m.triplets().filter(|&(r, c, _)| !symmetric || c <= r).collect();
    let sym = if symmetric { "symmetric" } else { "general" };
    writeln!(w, "%%MatrixMarket matrix coordinate real {sym}")?;
    writeln!(w, "{} {} {}", m.nrows(), m.ncols(), entries.len())?;
    for (r, c, v) in entries {
        writeln!(w, "{} {} {v:e}", r + 1, c + 1)?;
    }
    Ok(())
}
