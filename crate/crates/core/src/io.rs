//! Plain-text formats for matrices, vectors and flat `key=value` files.
//!
//! Matrix: a header line `n d`, then `n` lines of `d` whitespace-separated
//! decimals. Vector: a header line `n`, then `n` lines of one value each.
//! Blank lines are ignored everywhere. Numbers are written with Rust's
//! shortest round-trip formatting, so write/parse is lossless.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

// Upper bound on speculative allocation from an untrusted header.
const MAX_PREALLOC: usize = 1 << 16;

/// Non-blank lines paired with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn parse_count(tok: Option<&str>, line: usize, what: &str) -> Result<usize> {
    let tok = tok.ok_or_else(|| Error::parse(line, format!("missing {what}")))?;
    tok.parse::<usize>()
        .map_err(|_| Error::parse(line, format!("invalid {what} {tok:?}")))
}

fn parse_value(tok: &str, line: usize) -> Result<f64> {
    let v: f64 = tok
        .parse()
        .map_err(|_| Error::parse(line, format!("invalid number {tok:?}")))?;
    if !v.is_finite() {
        return Err(Error::parse(line, format!("non-finite number {tok:?}")));
    }
    Ok(v)
}

pub fn parse_matrix(text: &str) -> Result<DMatrix<f64>> {
    let mut lines = content_lines(text);
    let (hl, header) = lines.next().ok_or_else(|| Error::parse(1, "empty matrix file"))?;
    let mut toks = header.split_whitespace();
    let n = parse_count(toks.next(), hl, "row count")?;
    let d = parse_count(toks.next(), hl, "column count")?;
    if toks.next().is_some() {
        return Err(Error::parse(hl, "matrix header must be \"n d\""));
    }
    let total = n
        .checked_mul(d)
        .ok_or_else(|| Error::parse(hl, "matrix size overflows"))?;
    let mut values = Vec::with_capacity(total.min(MAX_PREALLOC));
    let mut rows = 0usize;
    for (ln, line) in lines {
        if rows == n {
            return Err(Error::parse(ln, format!("more than {n} rows")));
        }
        let before = values.len();
        for tok in line.split_whitespace() {
            values.push(parse_value(tok, ln)?);
        }
        if values.len() - before != d {
            return Err(Error::parse(
                ln,
                format!("expected {d} values, found {}", values.len() - before),
            ));
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::parse(0, format!("expected {n} rows, found {rows}")));
    }
    Ok(DMatrix::from_row_slice(n, d, &values))
}

pub fn write_matrix(m: &DMatrix<f64>) -> String {
    let mut out = format!("{} {}\n", m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                out.push(' ');
            }
            write!(out, "{}", m[(i, j)]).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn parse_vector(text: &str) -> Result<DVector<f64>> {
    let mut lines = content_lines(text);
    let (hl, header) = lines.next().ok_or_else(|| Error::parse(1, "empty vector file"))?;
    let mut toks = header.split_whitespace();
    let n = parse_count(toks.next(), hl, "length")?;
    if toks.next().is_some() {
        return Err(Error::parse(hl, "vector header must be \"n\""));
    }
    let mut values = Vec::with_capacity(n.min(MAX_PREALLOC));
    for (ln, line) in lines {
        if values.len() == n {
            return Err(Error::parse(ln, format!("more than {n} entries")));
        }
        let mut toks = line.split_whitespace();
        let v = parse_value(toks.next().unwrap_or_default(), ln)?;
        if toks.next().is_some() {
            return Err(Error::parse(ln, "expected one value per line"));
        }
        values.push(v);
    }
    if values.len() != n {
        return Err(Error::parse(
            0,
            format!("expected {n} entries, found {}", values.len()),
        ));
    }
    Ok(DVector::from_vec(values))
}

pub fn write_vector(v: &DVector<f64>) -> String {
    let mut out = format!("{}\n", v.len());
    for x in v.iter() {
        writeln!(out, "{x}").unwrap();
    }
    out
}

/// Parses flat `key=value` lines. `#` starts a comment line. Keys must be
/// unique; order is preserved.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (ln, line) in content_lines(text) {
        if line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(ln, "expected key=value"))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(Error::parse(ln, "empty key"));
        }
        if out.iter().any(|(existing, _)| existing == k) {
            return Err(Error::parse(ln, format!("duplicate key {k:?}")));
        }
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}

pub fn write_key_values<K: AsRef<str>, V: AsRef<str>>(pairs: &[(K, V)]) -> String {
    let mut out = String::new();
    for (k, v) in pairs {
        writeln!(out, "{}={}", k.as_ref(), v.as_ref()).unwrap();
    }
    out
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    parse_matrix(&read_text(path)?).map_err(|e| e.in_file(path))
}

pub fn read_vector(path: &Path) -> Result<DVector<f64>> {
    parse_vector(&read_text(path)?).map_err(|e| e.in_file(path))
}
