//! PIKT, the plain-text interchange format for tabulated kernels.
//!
//! Layout, one whitespace-separated record per line:
//!
//! ```text
//! PIKT 1 M P
//! ω_1 … ω_M            (parameter points)
//! u_1 … u_M            (parameter weights)
//! t_1 … t_P            (quadrature nodes)
//! w_1 … w_P            (quadrature weights)
//! K(ω_1, t_1, t_1) … K(ω_1, t_1, t_P)
//! …                    (M blocks of P lines; row i of block j is t_i)
//! ```
//!
//! Every real is written with 17 significant digits, which round-trips `f64`
//! losslessly: parsing a written file and re-writing it reproduces the bytes,
//! and the reloaded values are bitwise identical to the originals.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::{ParameterGrid, QuadratureRule};
use crate::kernel::DiscreteKernel;

/// Formats a real with 17 significant digits (lossless for `f64`).
pub fn format_real(x: f64) -> String {
    format!("{x:.16e}")
}

fn push_row(out: &mut String, values: &[f64]) {
    for (idx, &v) in values.iter().enumerate() {
        if idx > 0 {
            out.push(' ');
        }
        out.push_str(&format_real(v));
    }
    out.push('\n');
}

/// Serializes a kernel to PIKT text.
pub fn pikt_string(dk: &DiscreteKernel) -> String {
    let m = dk.fiber_count();
    let p = dk.node_count();
    let mut out = String::new();
    writeln!(out, "PIKT 1 {m} {p}").expect("writing to a String cannot fail");
    push_row(&mut out, dk.pgrid().points());
    push_row(&mut out, dk.pgrid().weights());
    push_row(&mut out, dk.quad().nodes());
    push_row(&mut out, dk.quad().weights());
    let mut row = Vec::with_capacity(p);
    for j in 0..m {
        let fiber = dk.fiber(j);
        for i in 0..p {
            row.clear();
            row.extend((0..p).map(|k| fiber[(i, k)]));
            push_row(&mut out, &row);
        }
    }
    out
}

/// Writes a kernel to `path` in PIKT format.
///
/// # Errors
///
/// Returns [`Error::Io`] if the file cannot be written.
pub fn write_tabulated(dk: &DiscreteKernel, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, pikt_string(dk))?;
    Ok(())
}

/// Reads a kernel from a PIKT file.
///
/// # Errors
///
/// Returns [`Error::Io`] if the file cannot be read, otherwise any error of
/// [`parse_pikt`].
pub fn load_tabulated(path: impl AsRef<Path>) -> Result<DiscreteKernel> {
    let text = std::fs::read_to_string(path)?;
    parse_pikt(&text)
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line: line.into(), message: message.into() }
}

fn get_line<'a>(lines: &[&'a str], idx0: usize, what: &str) -> Result<&'a str> {
    lines
        .get(idx0)
        .copied()
        .ok_or_else(|| parse_err(idx0 + 1, format!("unexpected end of file while reading {what}")))
}

/// Parses exactly `count` whitespace-separated finite reals from one line
/// of PIKT-style text; `line_no` is 1-based and `what` labels the record in
/// error messages.
///
/// # Errors
///
/// Returns [`Error::Parse`] naming the line on a count mismatch, an
/// unparsable token, or a non-finite value.
pub fn parse_reals(line: &str, line_no: usize, count: usize, what: &str) -> Result<Vec<f64>> {
    let tokens: Vec<&str> = line.split_whitespace().collect();
    if tokens.len() != count {
        return Err(parse_err(
            line_no,
            format!("{what}: expected {count} values, found {}", tokens.len()),
        ));
    }
    tokens
        .iter()
        .map(|tok| {
            let v: f64 = tok
                .parse()
                .map_err(|_| parse_err(line_no, format!("{what}: invalid real '{tok}'")))?;
            if !v.is_finite() {
                return Err(parse_err(line_no, format!("{what}: non-finite value '{tok}'")));
            }
            Ok(v)
        })
        .collect()
}

fn check_increasing(values: &[f64], line_no: usize, what: &str) -> Result<()> {
    for pair in values.windows(2) {
        if pair[0] >= pair[1] {
            return Err(parse_err(
                line_no,
                format!("{what} must be strictly increasing, got {} before {}", pair[0], pair[1]),
            ));
        }
    }
    Ok(())
}

fn check_positive(values: &[f64], line_no: usize, what: &str) -> Result<()> {
    for &v in values {
        if v <= 0.0 {
            return Err(parse_err(line_no, format!("{what} must be positive, got {v}")));
        }
    }
    Ok(())
}

/// Parses PIKT text.
///
/// # Errors
///
/// Returns [`Error::Parse`] naming the offending 1-based line for any
/// deviation from the documented layout: bad header, wrong record counts,
/// unparsable or non-finite reals, unsorted points or nodes, nonpositive
/// weights, missing data lines, or trailing non-blank lines.
pub fn parse_pikt(text: &str) -> Result<DiscreteKernel> {
    let lines: Vec<&str> = text.lines().collect();

    let header = get_line(&lines, 0, "header")?;
    let tokens: Vec<&str> = header.split_whitespace().collect();
    if tokens.len() != 4 {
        return Err(parse_err(1, format!("header: expected 'PIKT 1 M P', got '{header}'")));
    }
    if tokens[0] != "PIKT" {
        return Err(parse_err(1, format!("header: expected magic 'PIKT', got '{}'", tokens[0])));
    }
    if tokens[1] != "1" {
        return Err(parse_err(1, format!("header: unsupported version '{}'", tokens[1])));
    }
    let m: usize = tokens[2]
        .parse()
        .ok()
        .filter(|&m| m > 0)
        .ok_or_else(|| parse_err(1, format!("header: invalid fiber count '{}'", tokens[2])))?;
    let p: usize = tokens[3]
        .parse()
        .ok()
        .filter(|&p| p > 0)
        .ok_or_else(|| parse_err(1, format!("header: invalid node count '{}'", tokens[3])))?;

    let points = parse_reals(get_line(&lines, 1, "parameter points")?, 2, m, "parameter points")?;
    check_increasing(&points, 2, "parameter points")?;
    let pweights =
        parse_reals(get_line(&lines, 2, "parameter weights")?, 3, m, "parameter weights")?;
    check_positive(&pweights, 3, "parameter weights")?;
    let nodes = parse_reals(get_line(&lines, 3, "quadrature nodes")?, 4, p, "quadrature nodes")?;
    check_increasing(&nodes, 4, "quadrature nodes")?;
    let qweights =
        parse_reals(get_line(&lines, 4, "quadrature weights")?, 5, p, "quadrature weights")?;
    check_positive(&qweights, 5, "quadrature weights")?;

    let pgrid = ParameterGrid::from_samples(points, pweights)?;
    let quad = QuadratureRule::from_samples(nodes, qweights)?;

    let mut values = Vec::with_capacity(m);
    for j in 0..m {
        let mut fiber = DMatrix::zeros(p, p);
        for i in 0..p {
            let idx0 = 5 + j * p + i;
            let what = format!("fiber {j} row {i}");
            let row = parse_reals(get_line(&lines, idx0, &what)?, idx0 + 1, p, &what)?;
            for (k, &v) in row.iter().enumerate() {
                fiber[(i, k)] = v;
            }
        }
        values.push(fiber);
    }

    for (idx0, line) in lines.iter().enumerate().skip(5 + m * p) {
        if !line.trim().is_empty() {
            return Err(parse_err(idx0 + 1, "unexpected trailing data"));
        }
    }

    DiscreteKernel::from_values(pgrid, quad, values)
}
