//! Truncated Mercer reconstruction and quantities of the fiberwise
//! reproducing-kernel spaces.
//!
//! A decomposed kernel satisfies `K(ω_j, t_i, t_k) = Σ_n λ_n(ω_j)
//! x_n(ω_j, t_i) x_n(ω_j, t_k)` on the grid; truncating the sum after `N`
//! curves gives the best rank-`N` approximation fiber by fiber. The
//! RKHS-side quantities expand elements in the orthonormal basis
//! `{√λ_n x_n}`: the inner product `⟨f, g⟩_R(ω) = Σ_n λ_n(ω)⁻¹
//! ⟨f, x_n⟩_ν ⟨x_n, g⟩_ν`, the reproducing identity
//! `f(ω, t) = ⟨f, K(ω, ·, t)⟩_R`, and Parseval's identity against the
//! expansion coefficients `c_n = λ_n^{-1/2} ⟨f, x_n⟩_ν`.
//!
//! Coefficients are only ever formed against retained (positive)
//! eigenvalues; mass outside the retained span is never divided by a
//! near-zero `λ` — it surfaces in [`reproducing_defect`] instead.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::alignment::SpectralField;
use crate::error::{Error, Result};
use crate::kernel::DiscreteKernel;
use crate::operators::ModuleElement;

/// Deviation metrics between a kernel and its truncated reconstruction.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorReport {
    /// Per fiber: `√(Σ_i Σ_k w_i w_k ΔK²)`, the ν×ν-weighted Frobenius
    /// norm of the deviation.
    pub per_fiber_l2: Vec<f64>,
    /// Largest absolute entry deviation over all fibers.
    pub grid_sup: f64,
    /// `max_j per_fiber_l2[j]`.
    pub ess_sup_l2: f64,
    /// Number of curves the reconstruction used.
    pub n_used: usize,
}

/// Sums the first `n` curves of the field into a kernel:
/// `values[j][i][k] = Σ_{c<n} λ_c(ω_j) x_c(ω_j, t_i) x_c(ω_j, t_k)`.
/// Curves padded with zero eigenvalues contribute nothing. The output is
/// exactly symmetric per fiber.
///
/// # Errors
///
/// Returns [`Error::InvalidArgument`] if `n` exceeds the field's rank.
pub fn reconstruct(field: &SpectralField, n: usize) -> Result<DiscreteKernel> {
    if n > field.rank() {
        return Err(Error::InvalidArgument(format!(
            "cannot reconstruct with {n} curves from a field of rank {}",
            field.rank()
        )));
    }
    let p = field.node_count();
    let values: Vec<DMatrix<f64>> = (0..field.fiber_count())
        .into_par_iter()
        .map(|j| {
            let funcs = field.fiber_functions(j);
            let mut kmat = DMatrix::zeros(p, p);
            for i in 0..p {
                for k in i..p {
                    let mut acc = 0.0;
                    for c in 0..n {
                        let lam = field.lambda(j, c);
                        if lam > 0.0 {
                            acc += lam * funcs[(c, i)] * funcs[(c, k)];
                        }
                    }
                    kmat[(i, k)] = acc;
                    kmat[(k, i)] = acc;
                }
            }
            kmat
        })
        .collect();
    DiscreteKernel::from_values(field.pgrid().clone(), field.quad().clone(), values)
}

/// Measures the deviation of `dk_n` from `dk`; `n_used` labels the report.
///
/// # Errors
///
/// Returns [`Error::GridMismatch`] unless both kernels share the same grid
/// samples.
pub fn reconstruction_error(
    dk: &DiscreteKernel,
    dk_n: &DiscreteKernel,
    n_used: usize,
) -> Result<ErrorReport> {
    if !dk.same_grids(dk_n) {
        return Err(Error::GridMismatch(
            "reconstruction error requires both kernels on the same grids".into(),
        ));
    }
    let weights = dk.quad().weights();
    let p = dk.node_count();
    let mut grid_sup = 0.0f64;
    let mut per_fiber_l2 = Vec::with_capacity(dk.fiber_count());
    for j in 0..dk.fiber_count() {
        let a = dk.fiber(j);
        let b = dk_n.fiber(j);
        let mut sum = 0.0;
        for i in 0..p {
            for k in 0..p {
                let delta = a[(i, k)] - b[(i, k)];
                grid_sup = grid_sup.max(delta.abs());
                sum += weights[i] * weights[k] * delta * delta;
            }
        }
        per_fiber_l2.push(sum.sqrt());
    }
    let ess_sup_l2 = per_fiber_l2.iter().fold(0.0f64, |acc, &v| acc.max(v));
    Ok(ErrorReport { per_fiber_l2, grid_sup, ess_sup_l2, n_used })
}

/// Per fiber: `|Σ_n λ_n(ω_j) − Σ_i w_i K[j][i][i]|`, the deviation from
/// the discrete trace identity. With no retention threshold this is zero
/// up to rounding; with a threshold it is bounded by the fiber's discarded
/// mass.
///
/// # Errors
///
/// Returns [`Error::GridMismatch`] unless `field` and `dk` share grids.
pub fn trace_identity_defect(field: &SpectralField, dk: &DiscreteKernel) -> Result<Vec<f64>> {
    if !field.pgrid().same_sampling(dk.pgrid())
        || !field.quad().same_discretization(dk.quad())
    {
        return Err(Error::GridMismatch(
            "field and kernel are not sampled on the same grids".into(),
        ));
    }
    let weights = dk.quad().weights();
    Ok((0..field.fiber_count())
        .map(|j| {
            let spectral: f64 = (0..field.rank()).map(|n| field.lambda(j, n)).sum();
            let kmat = dk.fiber(j);
            let trace: f64 =
                weights.iter().enumerate().map(|(i, &w)| w * kmat[(i, i)]).sum();
            (spectral - trace).abs()
        })
        .collect())
}

/// Smallest `N` such that the first `N` curves capture at least the
/// fraction `η` of `Σ_n λ_n(ω_j)` at every fiber; fibers with zero total
/// are skipped.
///
/// # Errors
///
/// Returns [`Error::InvalidArgument`] unless `0 < η ≤ 1`.
pub fn truncation_rank_for_energy(field: &SpectralField, eta: f64) -> Result<usize> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "energy fraction must lie in (0, 1], got {eta}"
        )));
    }
    let mut needed = 0usize;
    for j in 0..field.fiber_count() {
        let total: f64 = (0..field.rank()).map(|n| field.lambda(j, n)).sum();
        if total <= 0.0 {
            continue;
        }
        let mut prefix = 0.0;
        for n in 0..field.rank() {
            prefix += field.lambda(j, n);
            if prefix / total >= eta {
                needed = needed.max(n + 1);
                break;
            }
        }
    }
    Ok(needed)
}

fn check_element_field_grids(f: &ModuleElement, field: &SpectralField) -> Result<()> {
    if !f.matches(field.pgrid(), field.quad()) {
        return Err(Error::GridMismatch(
            "module element is not sampled on the field's grids".into(),
        ));
    }
    Ok(())
}

/// ν-coefficients of `f` against the retained eigenfunctions of fiber `j`:
/// entry `n` is `⟨f(ω_j, ·), x_n(ω_j, ·)⟩_ν`, zero where the curve is
/// absent.
fn fiber_coefficients(f: &ModuleElement, field: &SpectralField, j: usize) -> Vec<f64> {
    let weights = field.quad().weights();
    let funcs = field.fiber_functions(j);
    (0..field.rank())
        .map(|n| {
            weights
                .iter()
                .enumerate()
                .map(|(i, &w)| w * f.value(j, i) * funcs[(n, i)])
                .sum()
        })
        .collect()
}

/// The fiberwise RKHS inner product
/// `⟨f, g⟩_R(ω_j) = Σ_n λ_n(ω_j)⁻¹ ⟨f, x_n⟩_ν ⟨x_n, g⟩_ν`, summed over the
/// retained curves. Components outside the retained span carry no
/// coefficient; [`reproducing_defect`] reports them.
///
/// # Errors
///
/// Returns [`Error::GridMismatch`] unless `f`, `g`, and `field` share
/// grids.
pub fn rkhs_inner_product(
    f: &ModuleElement,
    g: &ModuleElement,
    field: &SpectralField,
) -> Result<Vec<f64>> {
    if !f.same_grids(g) {
        return Err(Error::GridMismatch(
            "inner product requires both elements on the same grids".into(),
        ));
    }
    check_element_field_grids(f, field)?;
    Ok((0..field.fiber_count())
        .map(|j| {
            let cf = fiber_coefficients(f, field, j);
            let cg = fiber_coefficients(g, field, j);
            let mut acc = 0.0;
            for n in 0..field.rank() {
                let lam = field.lambda(j, n);
                if lam > 0.0 {
                    acc += cf[n] * cg[n] / lam;
                }
            }
            acc
        })
        .collect())
}

/// `max_{j,i} |f(ω_j, t_i) − ⟨f(ω_j, ·), K(ω_j, ·, t_i)⟩_R|`: how far the
/// reproducing identity is from holding. For `f` in the retained span this
/// is rounding noise; a component orthogonal to every retained
/// eigenfunction appears here at full size.
///
/// # Errors
///
/// Returns [`Error::GridMismatch`] unless `f`, `field`, and `dk` share
/// grids.
pub fn reproducing_defect(
    f: &ModuleElement,
    field: &SpectralField,
    dk: &DiscreteKernel,
) -> Result<f64> {
    check_element_field_grids(f, field)?;
    if !field.pgrid().same_sampling(dk.pgrid())
        || !field.quad().same_discretization(dk.quad())
    {
        return Err(Error::GridMismatch(
            "field and kernel are not sampled on the same grids".into(),
        ));
    }
    let weights = field.quad().weights();
    let p = field.node_count();
    let mut defect = 0.0f64;
    for j in 0..field.fiber_count() {
        let funcs = field.fiber_functions(j);
        let kmat = dk.fiber(j);
        let coeffs = fiber_coefficients(f, field, j);
        // y_n(t_i) = ⟨x_n, K(ω_j, ·, t_i)⟩_ν
        for i in 0..p {
            let mut reproduced = 0.0;
            for n in 0..field.rank() {
                let lam = field.lambda(j, n);
                if lam <= 0.0 {
                    continue;
                }
                let section_coef: f64 = weights
                    .iter()
                    .enumerate()
                    .map(|(k, &w)| w * funcs[(n, k)] * kmat[(k, i)])
                    .sum();
                reproduced += coeffs[n] / lam * section_coef;
            }
            defect = defect.max((f.value(j, i) - reproduced).abs());
        }
    }
    Ok(defect)
}

/// Per fiber: `|⟨f, f⟩_R − Σ_n c_n²|` with `c_n = λ_n^{-1/2} ⟨f, x_n⟩_ν` —
/// Parseval's identity for the coefficients against the orthonormal basis
/// `{√λ_n x_n}`, evaluated through two floating-point routes.
///
/// # Errors
///
/// Returns [`Error::GridMismatch`] unless `f` and `field` share grids.
pub fn parseval_defect(f: &ModuleElement, field: &SpectralField) -> Result<Vec<f64>> {
    check_element_field_grids(f, field)?;
    let norms = rkhs_inner_product(f, f, field)?;
    Ok(norms
        .into_iter()
        .enumerate()
        .map(|(j, rkhs_norm_sq)| {
            let coeffs = fiber_coefficients(f, field, j);
            let mut coef_sum = 0.0;
            for n in 0..field.rank() {
                let lam = field.lambda(j, n);
                if lam > 0.0 {
                    let c = coeffs[n] / lam.sqrt();
                    coef_sum += c * c;
                }
            }
            (rkhs_norm_sq - coef_sum).abs()
        })
        .collect())
}
