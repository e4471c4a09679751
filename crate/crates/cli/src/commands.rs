//! The five batch commands. Each builds the discretized kernel from the
//! config, runs its pipeline stage, and writes reports into the output
//! directory; verdicts that are the *subject* of a command are data in its
//! report, not process failures.

use std::path::Path;

use serde::Serialize;

use mercer_field::alignment::{align_spectra, continuity_report, SpectralField};
use mercer_field::fiberspec::{decompose_fibers, fiber_diagnostics};
use mercer_field::kernel::{validate_kernel, DiscreteKernel, ValidationReport};
use mercer_field::mercer::{
    reconstruct, reconstruction_error, trace_identity_defect, truncation_rank_for_energy,
};
use mercer_field::operators::{apply_T, equivalence_report, l2inf_norm, ModuleElement};
use mercer_field::pikt::pikt_string;

use crate::config::{Run, Truncation};
use crate::error::CliError;
use crate::fieldio::{
    eigenvalues_csv, field_files_present, pikf_string, read_field, EIGENFUNCTIONS_FILE,
    EIGENVALUES_FILE,
};
use crate::report::{csv_header, csv_row, write_atomic, write_json};

pub const VALIDATION_FILE: &str = "validation.json";
pub const DECOMPOSE_FILE: &str = "decompose.json";
pub const RECONSTRUCTION_FILE: &str = "reconstruction.pikt";
pub const RECONSTRUCTION_ERROR_FILE: &str = "reconstruction_error.json";
pub const EQUIVALENCE_FILE: &str = "equivalence.json";
pub const APPLY_OUTPUT_FILE: &str = "apply_output.csv";
pub const APPLY_FILE: &str = "apply.json";

/// Checks the kernel and writes `validation.json`; a failing kernel is this
/// command's finding, reported *and* reflected in the exit status.
pub fn validate(run: &Run, out: &Path) -> Result<(), CliError> {
    let dk = run.discretized_kernel()?;
    let report = validate_kernel(&dk, run.config.tol_sym, run.config.tol_psd)?;
    write_json(&out.join(VALIDATION_FILE), &report)?;
    if !report.pass {
        return Err(CliError::validation(describe_failure(&report)));
    }
    Ok(())
}

fn describe_failure(report: &ValidationReport) -> String {
    if !report.symmetry_pass {
        let (j, defect) = worst(&report.symmetry_defect);
        return format!(
            "kernel validation failed: fiber {j} has symmetry defect {defect:e} \
             above tol_sym {:e}",
            report.tol_sym
        );
    }
    if !report.psd_pass {
        let (j, min) = report
            .psd_min_eigenvalue
            .iter()
            .copied()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("validated kernels have at least one fiber");
        return format!(
            "kernel validation failed: fiber {j} has eigenvalue {min:e} below the \
             PSD floor for tol_psd {:e}",
            report.tol_psd
        );
    }
    let (j, c) = worst(&report.hs_constant);
    format!("kernel validation failed: fiber {j} has non-finite Hilbert–Schmidt constant {c}")
}

fn worst(values: &[f64]) -> (usize, f64) {
    values
        .iter()
        .copied()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("validated kernels have at least one fiber")
}

/// Validation gate shared by the pipeline commands: they refuse to work on
/// a kernel that fails validation.
fn checked_kernel(run: &Run) -> Result<DiscreteKernel, CliError> {
    let dk = run.discretized_kernel()?;
    let report = validate_kernel(&dk, run.config.tol_sym, run.config.tol_psd)?;
    if !report.pass {
        return Err(CliError::validation(format!(
            "{}; run the validate command for the full report",
            describe_failure(&report)
        )));
    }
    Ok(dk)
}

fn decomposed(run: &Run, dk: &DiscreteKernel) -> Result<SpectralField, CliError> {
    let spectra = decompose_fibers(dk, run.config.eps_rel)?;
    Ok(align_spectra(&spectra, dk.pgrid())?)
}

#[derive(Serialize)]
struct DecomposeSummary {
    fiber_count: usize,
    node_count: usize,
    rank: usize,
    eps_rel: f64,
    per_fiber_rank: Vec<usize>,
    per_fiber_discarded_mass: Vec<f64>,
    max_eigen_residual: f64,
    max_orthonormality_defect: f64,
    trace_defect: Vec<f64>,
    flips_per_curve: Vec<usize>,
    max_lambda_jump: Vec<f64>,
    min_matched_overlap: Option<f64>,
    degenerate_fibers: Vec<usize>,
}

/// Decomposes every fiber, aligns the curves, and writes the field files
/// plus `decompose.json`.
pub fn decompose(run: &Run, out: &Path) -> Result<(), CliError> {
    let dk = checked_kernel(run)?;
    let spectra = decompose_fibers(&dk, run.config.eps_rel)?;
    let field = align_spectra(&spectra, dk.pgrid())?;

    let mut max_eigen_residual = 0.0f64;
    let mut max_orthonormality_defect = 0.0f64;
    for spectrum in &spectra {
        let diag = fiber_diagnostics(spectrum, &dk)?;
        max_eigen_residual = max_eigen_residual.max(diag.eigen_residual);
        max_orthonormality_defect = max_orthonormality_defect.max(diag.orthonormality_defect);
    }

    let mut flips_per_curve = vec![0usize; field.rank()];
    for fiber in field.provenance() {
        for (n, prov) in fiber.iter().enumerate() {
            if prov.is_some_and(|p| p.flipped) {
                flips_per_curve[n] += 1;
            }
        }
    }
    let continuity = continuity_report(&field);
    let summary = DecomposeSummary {
        fiber_count: field.fiber_count(),
        node_count: field.node_count(),
        rank: field.rank(),
        eps_rel: run.config.eps_rel,
        per_fiber_rank: spectra.iter().map(|s| s.rank()).collect(),
        per_fiber_discarded_mass: spectra.iter().map(|s| s.discarded_mass()).collect(),
        max_eigen_residual,
        max_orthonormality_defect,
        trace_defect: trace_identity_defect(&field, &dk)?,
        flips_per_curve,
        max_lambda_jump: continuity.max_lambda_jump,
        min_matched_overlap: continuity.min_matched_overlap,
        degenerate_fibers: continuity.degenerate_fibers,
    };

    write_atomic(&out.join(EIGENVALUES_FILE), eigenvalues_csv(&field).as_bytes())?;
    write_atomic(&out.join(EIGENFUNCTIONS_FILE), pikf_string(&field).as_bytes())?;
    write_json(&out.join(DECOMPOSE_FILE), &summary)
}

/// Truncates the decomposition and writes the rebuilt kernel plus its error
/// report. Field files already in the output directory (from a previous
/// `decompose`) are used as the source; otherwise the field is computed in
/// process.
pub fn reconstruct_cmd(run: &Run, out: &Path) -> Result<(), CliError> {
    let dk = checked_kernel(run)?;
    let field = if field_files_present(out) {
        let field = read_field(out)?;
        if !field.pgrid().same_sampling(dk.pgrid())
            || !field.quad().same_discretization(dk.quad())
        {
            return Err(CliError::config(format!(
                "{} / {} in {} were produced on different grids than this config; \
                 delete them or decompose again",
                EIGENVALUES_FILE,
                EIGENFUNCTIONS_FILE,
                out.display()
            )));
        }
        field
    } else {
        decomposed(run, &dk)?
    };

    let n = match run.config.truncation {
        Truncation::Rank(n) => {
            if n > field.rank() {
                return Err(CliError::config(format!(
                    "truncation rank {n} exceeds the decomposition rank {}",
                    field.rank()
                )));
            }
            n
        }
        Truncation::Energy(eta) => truncation_rank_for_energy(&field, eta)?,
    };
    let rebuilt = reconstruct(&field, n)?;
    let report = reconstruction_error(&dk, &rebuilt, n)?;
    write_atomic(&out.join(RECONSTRUCTION_FILE), pikt_string(&rebuilt).as_bytes())?;
    write_json(&out.join(RECONSTRUCTION_ERROR_FILE), &report)
}

/// Evaluates the three spectral-completeness conditions and writes
/// `equivalence.json`; the verdicts are data, so a failing kernel still
/// exits 0.
pub fn verify(run: &Run, out: &Path) -> Result<(), CliError> {
    let dk = checked_kernel(run)?;
    let field = decomposed(run, &dk)?;
    let report = equivalence_report(&field, &dk, run.config.tau, run.config.equiv_tol)?;
    write_json(&out.join(EQUIVALENCE_FILE), &report)
}

#[derive(Serialize)]
struct ApplySummary {
    fiber_count: usize,
    node_count: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    per_fiber_norm: Vec<f64>,
    ess_sup_norm: f64,
}

/// Applies the fiberwise integral operator to the constant unit element and
/// writes the resulting module element as CSV plus `apply.json`.
pub fn apply(run: &Run, out: &Path) -> Result<(), CliError> {
    let dk = checked_kernel(run)?;
    let ones = ModuleElement::constant(dk.pgrid().clone(), dk.quad().clone(), 1.0)?;
    let image = apply_T(&dk, &ones)?;

    let p = image.node_count();
    let mut csv = String::new();
    csv_header(&mut csv, "omega", "f", p);
    for (j, &omega) in image.pgrid().points().iter().enumerate() {
        csv_row(&mut csv, omega, (0..p).map(|i| image.value(j, i)));
    }
    let norm = l2inf_norm(&image);
    let summary = ApplySummary {
        fiber_count: image.fiber_count(),
        node_count: p,
        nodes: image.quad().nodes().to_vec(),
        weights: image.quad().weights().to_vec(),
        per_fiber_norm: norm.per_fiber,
        ess_sup_norm: norm.ess_sup,
    };
    write_atomic(&out.join(APPLY_OUTPUT_FILE), csv.as_bytes())?;
    write_json(&out.join(APPLY_FILE), &summary)
}
