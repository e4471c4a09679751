//! Spectral-field files: eigenvalue curves as CSV, eigenfunctions in PIKF,
//! a sibling of the PIKT layout.
//!
//! ```text
//! PIKF 1 M N P
//! ω_1 … ω_M            (parameter points)
//! u_1 … u_M            (parameter weights)
//! t_1 … t_P            (quadrature nodes)
//! w_1 … w_P            (quadrature weights)
//! x_1(ω_1, t_1) … x_1(ω_1, t_P)
//! …                    (M blocks of N lines; line n of block j is curve n)
//! ```
//!
//! Zero-padded rows of absent curves are stored literally, so a written
//! field reads back bitwise identical: eigenvalues from the CSV, function
//! rows from the PIKF blocks.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use mercer_field::alignment::SpectralField;
use mercer_field::grid::{ParameterGrid, QuadratureRule};
use mercer_field::pikt::{format_real, parse_reals};

use crate::error::CliError;
use crate::report::{csv_header, csv_row};

pub const EIGENVALUES_FILE: &str = "eigenvalues.csv";
pub const EIGENFUNCTIONS_FILE: &str = "eigenfunctions.pikf";

/// Renders the curve matrix as CSV: `omega,lambda_1,…,lambda_N`, one row
/// per fiber.
pub fn eigenvalues_csv(field: &SpectralField) -> String {
    let mut out = String::new();
    csv_header(&mut out, "omega", "lambda", field.rank());
    for (j, &omega) in field.pgrid().points().iter().enumerate() {
        csv_row(&mut out, omega, (0..field.rank()).map(|n| field.lambda(j, n)));
    }
    out
}

/// Renders the grids and aligned eigenfunctions as PIKF text.
pub fn pikf_string(field: &SpectralField) -> String {
    let m = field.fiber_count();
    let n = field.rank();
    let p = field.node_count();
    let mut out = format!("PIKF 1 {m} {n} {p}\n");
    for row in [
        field.pgrid().points(),
        field.pgrid().weights(),
        field.quad().nodes(),
        field.quad().weights(),
    ] {
        push_row(&mut out, row.iter().copied());
    }
    for j in 0..m {
        let funcs = field.fiber_functions(j);
        for curve in 0..n {
            push_row(&mut out, funcs.row(curve).iter().copied());
        }
    }
    out
}

fn push_row(out: &mut String, values: impl IntoIterator<Item = f64>) {
    for (idx, v) in values.into_iter().enumerate() {
        if idx > 0 {
            out.push(' ');
        }
        out.push_str(&format_real(v));
    }
    out.push('\n');
}

/// Whether `dir` holds both field files written by `decompose`.
pub fn field_files_present(dir: &Path) -> bool {
    dir.join(EIGENVALUES_FILE).is_file() && dir.join(EIGENFUNCTIONS_FILE).is_file()
}

/// Reads a field back from `decompose` output in `dir`.
///
/// # Errors
///
/// * exit status 3 for missing files, layout violations, or disagreement
///   between the two files, naming the file and line;
/// * exit status 2 if the data do not form a valid field (negative
///   eigenvalues, non-orthonormal rows, nonzero padding).
pub fn read_field(dir: &Path) -> Result<SpectralField, CliError> {
    let csv_path = dir.join(EIGENVALUES_FILE);
    let pikf_path = dir.join(EIGENFUNCTIONS_FILE);

    let csv_text = fs::read_to_string(&csv_path)
        .map_err(|e| CliError::config(format!("{}: {e}", csv_path.display())))?;
    let (omegas, lambda_rows) = parse_eigenvalues_csv(&csv_text)
        .map_err(|e| prefix(&csv_path, e))?;
    let m = omegas.len();
    let n = lambda_rows.first().map_or(0, Vec::len);

    let pikf_text = fs::read_to_string(&pikf_path)
        .map_err(|e| CliError::config(format!("{}: {e}", pikf_path.display())))?;
    let (pgrid, quad, funcs) = parse_pikf(&pikf_text).map_err(|e| prefix(&pikf_path, e))?;

    let pikf_curves = funcs.first().map_or(0, |block| block.nrows());
    if pgrid.len() != m || pikf_curves != n {
        return Err(CliError::config(format!(
            "{} stores {} fibers × {pikf_curves} curves but {} stores {m} × {n}",
            pikf_path.display(),
            pgrid.len(),
            csv_path.display(),
        )));
    }
    for (j, (&a, &b)) in omegas.iter().zip(pgrid.points()).enumerate() {
        if a.to_bits() != b.to_bits() {
            return Err(CliError::config(format!(
                "fiber {j}: ω = {} in {} but {} in {}; the files come from \
                 different runs",
                format_real(a),
                csv_path.display(),
                format_real(b),
                pikf_path.display(),
            )));
        }
    }

    let lambdas = DMatrix::from_fn(m, n, |j, c| lambda_rows[j][c]);
    Ok(SpectralField::from_parts(pgrid, quad, lambdas, funcs)?)
}

fn prefix(path: &Path, mut e: CliError) -> CliError {
    e.message = format!("{}: {}", path.display(), e.message);
    e
}

type CsvCurves = (Vec<f64>, Vec<Vec<f64>>);

fn parse_eigenvalues_csv(text: &str) -> Result<CsvCurves, CliError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| CliError::config("line 1: missing header"))?;
    let columns: Vec<&str> = header.split(',').collect();
    if columns[0] != "omega"
        || columns[1..]
            .iter()
            .enumerate()
            .any(|(idx, col)| *col != format!("lambda_{}", idx + 1))
    {
        return Err(CliError::config(format!(
            "line 1: expected header omega,lambda_1,…; got '{header}'"
        )));
    }
    let n = columns.len() - 1;

    let mut omegas = Vec::new();
    let mut rows = Vec::new();
    for (idx0, line) in lines {
        if line.is_empty() {
            continue;
        }
        let row = parse_reals(&line.replace(',', " "), idx0 + 1, n + 1, "eigenvalue row")?;
        omegas.push(row[0]);
        rows.push(row[1..].to_vec());
    }
    if omegas.is_empty() {
        return Err(CliError::config("no eigenvalue rows after the header"));
    }
    Ok((omegas, rows))
}

type PikfParts = (ParameterGrid, QuadratureRule, Vec<DMatrix<f64>>);

fn parse_pikf(text: &str) -> Result<PikfParts, CliError> {
    let lines: Vec<&str> = text.lines().collect();
    let header = lines
        .first()
        .ok_or_else(|| CliError::config("line 1: missing header"))?;
    let tokens: Vec<&str> = header.split_whitespace().collect();
    let sizes: Vec<usize> = tokens
        .iter()
        .skip(1)
        .map(|tok| tok.parse())
        .collect::<Result<_, _>>()
        .unwrap_or_default();
    if tokens.first() != Some(&"PIKF") || sizes.len() != 4 || sizes[0] != 1 {
        return Err(CliError::config(format!(
            "line 1: expected header 'PIKF 1 M N P', got '{header}'"
        )));
    }
    let (m, n, p) = (sizes[1], sizes[2], sizes[3]);
    if m == 0 || p == 0 {
        return Err(CliError::config(format!(
            "line 1: M and P must be positive, got M = {m}, P = {p}"
        )));
    }

    let expected = 5 + m * n;
    if lines.len() < expected {
        return Err(CliError::config(format!(
            "line {}: unexpected end of file; expected {expected} lines",
            lines.len() + 1
        )));
    }
    if lines[expected..].iter().any(|line| !line.trim().is_empty()) {
        return Err(CliError::config(format!(
            "line {}: trailing content after the last eigenfunction row",
            expected + 1
        )));
    }

    let points = parse_reals(lines[1], 2, m, "parameter points")?;
    let pweights = parse_reals(lines[2], 3, m, "parameter weights")?;
    let nodes = parse_reals(lines[3], 4, p, "quadrature nodes")?;
    let qweights = parse_reals(lines[4], 5, p, "quadrature weights")?;
    let pgrid = ParameterGrid::from_samples(points, pweights)?;
    let quad = QuadratureRule::from_samples(nodes, qweights)?;

    let mut funcs = Vec::with_capacity(m);
    for j in 0..m {
        let mut block = DMatrix::zeros(n, p);
        for curve in 0..n {
            let line_no = 5 + j * n + curve;
            let row = parse_reals(lines[line_no], line_no + 1, p, "eigenfunction row")?;
            for (k, v) in row.into_iter().enumerate() {
                block[(curve, k)] = v;
            }
        }
        funcs.push(block);
    }
    Ok((pgrid, quad, funcs))
}
