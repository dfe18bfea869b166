use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{DenseMatrix, SparseMatrix};
use crate::error::{Error, Result};

/// A matrix read from a Matrix Market file: coordinate files load sparse, array files dense.
#[derive(Clone, Debug, PartialEq)]
pub enum MmMatrix {
    Dense(DenseMatrix),
    Sparse(SparseMatrix),
}

impl MmMatrix {
    pub fn to_dense(&self) -> DenseMatrix {
        match self {
            MmMatrix::Dense(d) => d.clone(),
            MmMatrix::Sparse(s) => s.to_dense(),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        match self {
            MmMatrix::Dense(d) => d.shape(),
            MmMatrix::Sparse(s) => (s.rows(), s.cols()),
        }
    }
}

impl From<DenseMatrix> for MmMatrix {
    fn from(d: DenseMatrix) -> Self {
        MmMatrix::Dense(d)
    }
}

impl From<SparseMatrix> for MmMatrix {
    fn from(s: SparseMatrix) -> Self {
        MmMatrix::Sparse(s)
    }
}

pub fn mm_read(path: impl AsRef<Path>) -> Result<MmMatrix> {
    parse(&fs::read_to_string(path)?)
}

pub fn mm_write(m: &MmMatrix, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, format(m))?;
    Ok(())
}

fn perr(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

#[derive(PartialEq)]
enum Layout {
    Coordinate,
    Array,
}

pub fn parse(text: &str) -> Result<MmMatrix> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, banner) = lines.next().ok_or_else(|| perr(1, "empty file"))?;
    let tok: Vec<String> = banner.split_whitespace().map(|t| t.to_ascii_lowercase()).collect();
    if tok.len() != 5 || tok[0] != "%%matrixmarket" || tok[1] != "matrix" {
        return Err(perr(1, format!("bad banner `{banner}`")));
    }
    let layout = match tok[2].as_str() {
        "coordinate" => Layout::Coordinate,
        "array" => Layout::Array,
        f => return Err(perr(1, format!("unsupported format `{f}`"))),
    };
    if tok[3] != "real" && tok[3] != "integer" {
        return Err(perr(1, format!("unsupported field `{}`", tok[3])));
    }
    let symmetric = match tok[4].as_str() {
        "general" => false,
        "symmetric" => true,
        s => return Err(perr(1, format!("unsupported symmetry `{s}`"))),
    };

    let mut body = lines.filter(|(_, l)| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('%')
    });
    let (sline, size) = body.next().ok_or_else(|| perr(2, "missing size line"))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| perr(sline, format!("bad size token `{t}`"))))
        .collect::<Result<_>>()?;

    let num = |line: usize, t: &str| -> Result<f64> {
        let v: f64 = t.parse().map_err(|_| perr(line, format!("bad value `{t}`")))?;
        if !v.is_finite() {
            return Err(perr(line, "non-finite value"));
        }
        Ok(v)
    };

    match layout {
        Layout::Coordinate => {
            if dims.len() != 3 {
                return Err(perr(sline, "coordinate size line needs rows cols nnz"));
            }
            let (r, c, nnz) = (dims[0], dims[1], dims[2]);
            let mut trip = Vec::with_capacity(nnz);
            let mut seen = 0;
            for (ln, l) in body {
                let t: Vec<&str> = l.split_whitespace().collect();
                if t.len() != 3 {
                    return Err(perr(ln, "expected `row col value`"));
                }
                let i: usize = t[0].parse().map_err(|_| perr(ln, format!("bad row `{}`", t[0])))?;
                let j: usize = t[1].parse().map_err(|_| perr(ln, format!("bad col `{}`", t[1])))?;
                if i == 0 || j == 0 || i > r || j > c {
                    return Err(perr(ln, format!("index ({i}, {j}) out of bounds for {r}x{c}")));
                }
                let v = num(ln, t[2])?;
                trip.push((i - 1, j - 1, v));
                if symmetric && i != j {
                    trip.push((j - 1, i - 1, v));
                }
                seen += 1;
            }
            if seen != nnz {
                return Err(perr(sline, format!("size line declares {nnz} entries, found {seen}")));
            }
            Ok(MmMatrix::Sparse(SparseMatrix::from_triplets(r, c, trip)?))
        }
        Layout::Array => {
            if dims.len() != 2 {
                return Err(perr(sline, "array size line needs rows cols"));
            }
            let (r, c) = (dims[0], dims[1]);
            let mut vals = Vec::new();
            let mut last = sline;
            for (ln, l) in body {
                for t in l.split_whitespace() {
                    vals.push(num(ln, t)?);
                }
                last = ln;
            }
            let mut m = DenseMatrix::zeros(r, c);
            // Column-major; symmetric stores the lower triangle only.
            let mut it = vals.into_iter();
            for j in 0..c {
                let start = if symmetric { j } else { 0 };
                for i in start..r {
                    let v = it.next().ok_or_else(|| perr(last, "too few array entries"))?;
                    m[(i, j)] = v;
                    if symmetric {
                        m[(j, i)] = v;
                    }
                }
            }
            if it.next().is_some() {
                return Err(perr(last, "too many array entries"));
            }
            Ok(MmMatrix::Dense(m))
        }
    }
}

fn fmt_f64(v: f64) -> String {
    // `{:e}` is the shortest round-trip representation.
    format!("{v:e}")
}

pub fn format(m: &MmMatrix) -> String {
    let mut s = String::new();
    match m {
        MmMatrix::Sparse(a) => {
            s.push_str("%%MatrixMarket matrix coordinate real general\n");
            let _ = writeln!(s, "{} {} {}", a.rows(), a.cols(), a.nnz());
            for (i, j, v) in a.triplets() {
                let _ = writeln!(s, "{} {} {}", i + 1, j + 1, fmt_f64(v));
            }
        }
        MmMatrix::Dense(a) => {
            s.push_str("%%MatrixMarket matrix array real general\n");
            let _ = writeln!(s, "{} {}", a.rows(), a.cols());
            for j in 0..a.cols() {
                for i in 0..a.rows() {
                    let _ = writeln!(s, "{}", fmt_f64(a[(i, j)]));
                }
            }
        }
    }
    s
}
