//! Matrix Market coordinate format.
//!
//! Supported headers are `%%MatrixMarket matrix coordinate <field> <symmetry>`
//! with field `real`, `integer` or `pattern` and symmetry `general` or
//! `symmetric`. Symmetric files are expanded to full storage, pattern entries
//! get the value one and duplicate coordinates are summed.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::{Error, Result, Scalar, SparseMatrixCsr};

#[derive(Clone, Copy, PartialEq)]
enum Field {
    Real,
    Pattern,
}

pub fn load_matrix_market<T: Scalar>(path: impl AsRef<Path>) -> Result<SparseMatrixCsr<T>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_matrix_market(BufReader::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::Io {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })
}

pub fn read_matrix_market<T: Scalar, R: BufRead>(reader: R) -> Result<SparseMatrixCsr<T>> {
    let parse_err = |line: usize, msg: String| Error::Parse { line, msg };
    let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));

    let (lineno, header) = match lines.next() {
        Some((n, l)) => (n, l.map_err(io_err)?),
        None => return Err(parse_err(1, "empty file".into())),
    };
    let tokens: Vec<String> = header.split_whitespace().map(str::to_ascii_lowercase).collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(parse_err(lineno, format!("bad header `{header}`")));
    }
    if tokens[2] != "coordinate" {
        return Err(parse_err(lineno, format!("unsupported format `{}`", tokens[2])));
    }
    let field = match tokens[3].as_str() {
        "real" | "integer" | "double" => Field::Real,
        "pattern" => Field::Pattern,
        other => return Err(parse_err(lineno, format!("unsupported field `{other}`"))),
    };
    let symmetric = match tokens[4].as_str() {
        "general" => false,
        "symmetric" => true,
        other => return Err(parse_err(lineno, format!("unsupported symmetry `{other}`"))),
    };

    let mut size: Option<(usize, usize, usize)> = None;
    let mut triplets: Vec<(usize, usize, T)> = Vec::new();
    let mut seen = 0usize;
    for (lineno, line) in lines {
        let line = line.map_err(io_err)?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        let mut it = trimmed.split_whitespace();
        let Some((n_rows, n_cols, nnz)) = size else {
            let mut next = || -> Result<usize> {
                it.next()
                    .ok_or_else(|| parse_err(lineno, "size line needs rows cols nnz".into()))?
                    .parse::<usize>()
                    .map_err(|e| parse_err(lineno, format!("bad size entry: {e}")))
            };
            let dims = (next()?, next()?, next()?);
            if symmetric && dims.0 != dims.1 {
                return Err(parse_err(lineno, "symmetric matrix must be square".into()));
            }
            triplets.reserve(if symmetric { 2 * dims.2 } else { dims.2 });
            size = Some(dims);
            continue;
        };
        if seen == nnz {
            return Err(parse_err(lineno, format!("more than the declared {nnz} entries")));
        }
        let mut index = |what: &str, bound: usize| -> Result<usize> {
            let tok = it
                .next()
                .ok_or_else(|| parse_err(lineno, format!("missing {what} index")))?;
            let v: usize = tok
                .parse()
                .map_err(|e| parse_err(lineno, format!("bad {what} index `{tok}`: {e}")))?;
            if v == 0 || v > bound {
                return Err(parse_err(lineno, format!("{what} index {v} outside [1, {bound}]")));
            }
            Ok(v - 1)
        };
        let r = index("row", n_rows)?;
        let c = index("column", n_cols)?;
        let v = match field {
            Field::Pattern => T::ONE,
            Field::Real => {
                let tok = it
                    .next()
                    .ok_or_else(|| parse_err(lineno, "missing value".into()))?;
                tok.parse::<T>()
                    .map_err(|_| parse_err(lineno, format!("bad value `{tok}`")))?
            }
        };
        triplets.push((r, c, v));
        if symmetric && r != c {
            triplets.push((c, r, v));
        }
        seen += 1;
    }

    let Some((n_rows, n_cols, nnz)) = size else {
        return Err(parse_err(lineno, "missing size line".into()));
    };
    if seen != nnz {
        return Err(parse_err(lineno, format!("declared {nnz} entries, found {seen}")));
    }
    SparseMatrixCsr::from_triplets(n_rows, n_cols, triplets)
}

/// Writes `m` as a general real coordinate file. Values use the shortest
/// representation that parses back to the same scalar.
pub fn write_matrix_market<T: Scalar, W: Write>(m: &SparseMatrixCsr<T>, mut out: W) -> std::io::Result<()> {
    writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(out, "{} {} {}", m.n_rows(), m.n_cols(), m.nnz())?;
    for r in 0..m.n_rows() {
        let (cols, vals) = m.row(r);
        for (&c, v) in cols.iter().zip(vals) {
            writeln!(out, "{} {} {}", r + 1, c + 1, v)?;
        }
    }
    Ok(())
}

fn io_err(source: std::io::Error) -> Error {
    Error::Io {
        path: "<reader>".into(),
        source,
    }
}
