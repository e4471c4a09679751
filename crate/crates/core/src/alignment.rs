//! Tracking eigenvalue curves across the parameter grid.
//!
//! Per-fiber spectra order eigenpairs by magnitude, so curves that cross as
//! `ω` varies swap positions fiber to fiber, and eigensolvers return an
//! arbitrary basis inside degenerate eigenspaces. Alignment produces a
//! [`SpectralField`] whose global curve indices follow each eigenvalue
//! branch continuously: fiber 0 keeps its input order; each subsequent fiber
//! is matched to the previous one greedily by largest `|⟨x_prev, x_next⟩_ν|`
//! with every row and column used at most once, signs flipped so matched
//! overlaps are nonnegative, and unmatched new eigenpairs opening fresh
//! global indices. Inside a degenerate cluster the returned basis is first
//! rotated so that it aligns with the previous fiber's curves before any
//! matching happens.
//!
//! Curves absent at a fiber are zero-padded: `λ_n(ω_j) = 0` with a zero
//! eigenfunction row and no provenance entry.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fiberspec::{FiberSpectrum, DEGENERACY_REL_TOL};
use crate::grid::{ParameterGrid, QuadratureRule};

/// Overlap magnitude treated as a perfect match when deciding whether a
/// degenerate cluster already aligns with the previous fiber.
const ALIGNED_OVERLAP_TOL: f64 = 1e-6;

/// Gap between the two best overlaps for one eigenfunction below which the
/// match is flagged as ambiguous.
const AMBIGUOUS_OVERLAP_TOL: f64 = 1e-6;

/// Minimum squared projection norm a previous curve needs inside a
/// degenerate cluster's span to steer the cluster rotation.
const CLUSTER_PROJECTION_MIN: f64 = 0.5;

/// Largest eigenvalue spread, relative to the fiber's leading eigenvalue,
/// a degenerate cluster may carry and still have its basis rotated.
/// Rotating a cluster basis leaves the spectral sum unchanged only when the
/// cluster's eigenvalues agree, so rotation is restricted to clusters that
/// are degenerate at rounding precision; wider clusters — typically chains
/// of near-zero eigenvalues whose consecutive gaps all sit below the
/// degeneracy window — keep the eigensolver's basis and are matched curve
/// by curve like everything else.
const ROTATION_SPREAD_TOL: f64 = 1e-12;

/// Where an aligned eigenfunction came from within its fiber's retained
/// list, and whether its sign was flipped for continuity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Provenance {
    /// Position in the fiber's retained eigenpair list. For fibers whose
    /// degenerate clusters were rotated, this is the position after
    /// rotation; such fibers are listed in
    /// [`SpectralField::degenerate_fibers`].
    pub source_index: usize,
    /// Whether the eigenfunction was negated.
    pub flipped: bool,
}

/// Eigenvalue curves and eigenfunctions aligned across the parameter grid.
#[derive(Debug, Clone)]
pub struct SpectralField {
    pgrid: ParameterGrid,
    quad: QuadratureRule,
    rank: usize,
    lambdas: DMatrix<f64>,
    eigenfunctions: Vec<DMatrix<f64>>,
    provenance: Vec<Vec<Option<Provenance>>>,
    degenerate_fibers: Vec<usize>,
}

impl SpectralField {
    /// Builds a field from explicit curve data: `lambdas` is `M × N` with
    /// zeros marking fibers where a curve is absent, and `eigenfunctions[j]`
    /// is `N × P` with matching zero rows. Provenance is recorded as the
    /// identity (row `n` sourced from index `n`, unflipped) for active rows.
    ///
    /// # Errors
    ///
    /// Returns [`Error::InvalidArgument`] if shapes disagree with the grids,
    /// an eigenvalue is negative or non-finite, a zero eigenvalue has a
    /// nonzero eigenfunction row, or the active rows of some fiber are not
    /// ν-orthonormal within [`crate::fiberspec::ORTHONORMALITY_TOL`].
    pub fn from_parts(
        pgrid: ParameterGrid,
        quad: QuadratureRule,
        lambdas: DMatrix<f64>,
        eigenfunctions: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        let m = pgrid.len();
        let p = quad.len();
        let n = lambdas.ncols();
        if lambdas.nrows() != m {
            return Err(Error::InvalidArgument(format!(
                "eigenvalue matrix has {} rows, expected one per fiber ({m})",
                lambdas.nrows()
            )));
        }
        if eigenfunctions.len() != m {
            return Err(Error::InvalidArgument(format!(
                "{} eigenfunction matrices, expected one per fiber ({m})",
                eigenfunctions.len()
            )));
        }
        let mut provenance = Vec::with_capacity(m);
        for (j, funcs) in eigenfunctions.iter().enumerate() {
            if funcs.nrows() != n || funcs.ncols() != p {
                return Err(Error::InvalidArgument(format!(
                    "fiber {j} eigenfunction matrix is {}×{}, expected {n}×{p}",
                    funcs.nrows(),
                    funcs.ncols()
                )));
            }
            let mut active = Vec::new();
            let mut prov = vec![None; n];
            for curve in 0..n {
                let lam = lambdas[(j, curve)];
                if !lam.is_finite() || lam < 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "λ must be finite and nonnegative, got {lam} for curve {curve} at fiber {j}"
                    )));
                }
                let row = funcs.row(curve);
                if lam == 0.0 {
                    if row.iter().any(|&v| v != 0.0) {
                        return Err(Error::InvalidArgument(format!(
                            "curve {curve} has λ = 0 at fiber {j} but a nonzero eigenfunction row"
                        )));
                    }
                } else {
                    if row.iter().any(|v| !v.is_finite()) {
                        return Err(Error::InvalidArgument(format!(
                            "curve {curve} at fiber {j} contains a non-finite value"
                        )));
                    }
                    active.push(row.transpose());
                    prov[curve] = Some(Provenance { source_index: curve, flipped: false });
                }
            }
            let defect = max_orthonormality_defect(&active, quad.weights());
            if defect > crate::fiberspec::ORTHONORMALITY_TOL {
                return Err(Error::InvalidArgument(format!(
                    "fiber {j} active rows are not ν-orthonormal: defect {defect:.3e}"
                )));
            }
            provenance.push(prov);
        }
        let degenerate_fibers = (0..m)
            .filter(|&j| {
                let mut active: Vec<f64> =
                    (0..n).map(|c| lambdas[(j, c)]).filter(|&l| l > 0.0).collect();
                active.sort_by(|a, b| b.total_cmp(a));
                active
                    .windows(2)
                    .any(|pair| pair[0] - pair[1] <= DEGENERACY_REL_TOL * active[0])
            })
            .collect();
        Ok(Self { pgrid, quad, rank: n, lambdas, eigenfunctions, provenance, degenerate_fibers })
    }

    /// Parameter grid the field is aligned over.
    pub fn pgrid(&self) -> &ParameterGrid {
        &self.pgrid
    }

    /// Quadrature rule the eigenfunctions are sampled on.
    pub fn quad(&self) -> &QuadratureRule {
        &self.quad
    }

    /// Number of global eigenvalue curves `N`.
    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Number of fibers `M`.
    pub fn fiber_count(&self) -> usize {
        self.lambdas.nrows()
    }

    /// Number of quadrature nodes `P`.
    pub fn node_count(&self) -> usize {
        self.quad.len()
    }

    /// The `M × N` eigenvalue curve matrix, zero-padded where a curve is
    /// absent.
    pub fn lambdas(&self) -> &DMatrix<f64> {
        &self.lambdas
    }

    /// Eigenvalue of curve `n` at fiber `j` (zero when absent).
    pub fn lambda(&self, j: usize, n: usize) -> f64 {
        self.lambdas[(j, n)]
    }

    /// The `N × P` aligned eigenfunction matrix of fiber `j`.
    pub fn fiber_functions(&self, j: usize) -> &DMatrix<f64> {
        &self.eigenfunctions[j]
    }

    /// Per fiber, per curve: source position and flip, `None` where the
    /// curve is absent.
    pub fn provenance(&self) -> &[Vec<Option<Provenance>>] {
        &self.provenance
    }

    /// Whether curve `n` is present at fiber `j`.
    pub fn active(&self, j: usize, n: usize) -> bool {
        self.provenance[j][n].is_some()
    }

    /// Fibers containing a degenerate retained cluster or an ambiguous
    /// overlap competition, in increasing order.
    pub fn degenerate_fibers(&self) -> &[usize] {
        &self.degenerate_fibers
    }

    /// Reassembles per-fiber spectra from the aligned curves, eigenvalues
    /// re-sorted into non-increasing order (ties keep global curve order).
    /// Thresholding history is not part of a field, so the spectra carry
    /// none.
    ///
    /// # Errors
    ///
    /// Returns [`Error::InvalidArgument`] if the stored rows fail
    /// [`FiberSpectrum::from_parts`] validation.
    pub fn to_fiber_spectra(&self) -> Result<Vec<FiberSpectrum>> {
        (0..self.fiber_count())
            .map(|j| {
                let mut order: Vec<usize> =
                    (0..self.rank).filter(|&n| self.active(j, n)).collect();
                order.sort_by(|&a, &b| {
                    self.lambdas[(j, b)].total_cmp(&self.lambdas[(j, a)]).then(a.cmp(&b))
                });
                let eigenvalues = order.iter().map(|&n| self.lambdas[(j, n)]).collect();
                let eigenfunctions = order
                    .iter()
                    .map(|&n| self.eigenfunctions[j].row(n).transpose())
                    .collect();
                FiberSpectrum::from_parts(
                    j,
                    self.pgrid.points()[j],
                    self.quad.clone(),
                    eigenvalues,
                    eigenfunctions,
                )
            })
            .collect()
    }
}

fn nu_inner(weights: &[f64], a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    weights.iter().enumerate().map(|(i, &w)| w * a[i] * b[i]).sum()
}

fn max_orthonormality_defect(funcs: &[DVector<f64>], weights: &[f64]) -> f64 {
    let mut defect = 0.0f64;
    for (n, a) in funcs.iter().enumerate() {
        for (m, b) in funcs.iter().enumerate().skip(n) {
            let target = if n == m { 1.0 } else { 0.0 };
            defect = defect.max((nu_inner(weights, a, b) - target).abs());
        }
    }
    defect
}

/// ν-overlap matrix `O[(n, m)] = ⟨x_n^a, x_m^b⟩_ν` between the retained
/// eigenfunctions of two spectra.
///
/// # Errors
///
/// Returns [`Error::GridMismatch`] unless both spectra share the same
/// quadrature samples bitwise.
pub fn overlap_matrix(a: &FiberSpectrum, b: &FiberSpectrum) -> Result<DMatrix<f64>> {
    if !a.quad().same_discretization(b.quad()) {
        return Err(Error::GridMismatch(
            "overlaps require both spectra on the same quadrature rule".into(),
        ));
    }
    let weights = a.quad().weights();
    Ok(DMatrix::from_fn(a.rank(), b.rank(), |n, m| {
        nu_inner(weights, &a.eigenfunctions()[n], &b.eigenfunctions()[m])
    }))
}

/// Maximal runs of length ≥ 2 in a non-increasing eigenvalue list whose
/// consecutive gaps stay below the degeneracy tolerance.
fn clusters_of(eigenvalues: &[f64]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let Some(&lambda_max) = eigenvalues.first() else {
        return out;
    };
    let mut start = 0;
    for q in 1..=eigenvalues.len() {
        let connected = q < eigenvalues.len()
            && eigenvalues[q - 1] - eigenvalues[q] <= DEGENERACY_REL_TOL * lambda_max;
        if !connected {
            if q - start >= 2 {
                out.push((start, q));
            }
            start = q;
        }
    }
    out
}

fn already_aligned(block: &[Vec<f64>]) -> bool {
    let c = block.first().map_or(0, |row| row.len());
    let mut used = vec![false; block.len()];
    for q in 0..c {
        let mut best_row = 0;
        let mut best = -1.0;
        for (r, row) in block.iter().enumerate() {
            if row[q].abs() > best {
                best = row[q].abs();
                best_row = r;
            }
        }
        if best < 1.0 - ALIGNED_OVERLAP_TOL || used[best_row] {
            return false;
        }
        used[best_row] = true;
    }
    true
}

fn orthonormalize_into(basis: &mut Vec<DVector<f64>>, mut v: DVector<f64>, weights: &[f64]) {
    for b in basis.iter() {
        let coef = nu_inner(weights, b, &v);
        v.axpy(-coef, b, 1.0);
    }
    let norm_sq = nu_inner(weights, &v, &v);
    if norm_sq > 1e-12 {
        v /= norm_sq.sqrt();
        basis.push(v);
    }
}

/// Replaces the basis of a degenerate cluster by one aligned with the
/// previous fiber's curves: normalized ν-projections of the previous curves
/// onto the cluster span (Gram–Schmidt in decreasing projection energy),
/// completed from the original cluster vectors. Clusters already aligned,
/// or not overlapped by any previous curve, are left untouched.
fn rotate_cluster(
    funcs: &mut [DVector<f64>],
    range: (usize, usize),
    prev_active: &[(usize, &DVector<f64>)],
    weights: &[f64],
) {
    let (start, end) = range;
    let c = end - start;
    let block: Vec<Vec<f64>> = prev_active
        .iter()
        .map(|(_, prev)| (start..end).map(|q| nu_inner(weights, prev, &funcs[q])).collect())
        .collect();
    if already_aligned(&block) {
        return;
    }
    let mut candidates: Vec<(f64, usize)> = block
        .iter()
        .enumerate()
        .map(|(r, row)| (row.iter().map(|o| o * o).sum::<f64>(), r))
        .filter(|&(energy, _)| energy >= CLUSTER_PROJECTION_MIN)
        .collect();
    if candidates.is_empty() {
        return;
    }
    candidates.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
    candidates.truncate(c);
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(c);
    for &(_, r) in &candidates {
        let mut v = DVector::zeros(funcs[start].len());
        for (q, &coef) in block[r].iter().enumerate() {
            v.axpy(coef, &funcs[start + q], 1.0);
        }
        orthonormalize_into(&mut basis, v, weights);
    }
    for q in start..end {
        if basis.len() == c {
            break;
        }
        orthonormalize_into(&mut basis, funcs[q].clone(), weights);
    }
    for (q, v) in basis.into_iter().enumerate() {
        funcs[start + q] = v;
    }
}

/// Aligns per-fiber spectra into a [`SpectralField`] over `pgrid`.
///
/// # Errors
///
/// * [`Error::InvalidArgument`] if the number of spectra differs from the
///   grid size or a spectrum's fiber index disagrees with its position;
/// * [`Error::GridMismatch`] if the spectra are not all sampled on the same
///   quadrature rule.
pub fn align_spectra(spectra: &[FiberSpectrum], pgrid: &ParameterGrid) -> Result<SpectralField> {
    if spectra.len() != pgrid.len() {
        return Err(Error::InvalidArgument(format!(
            "{} spectra for a parameter grid of {} points",
            spectra.len(),
            pgrid.len()
        )));
    }
    let quad = spectra[0].quad().clone();
    for (j, spectrum) in spectra.iter().enumerate() {
        if !spectrum.quad().same_discretization(&quad) {
            return Err(Error::GridMismatch(format!(
                "spectrum of fiber {j} uses a different quadrature rule"
            )));
        }
        if spectrum.fiber_index() != j {
            return Err(Error::InvalidArgument(format!(
                "spectrum at position {j} reports fiber index {}",
                spectrum.fiber_index()
            )));
        }
    }
    let weights = quad.weights();
    let p = quad.len();
    let m = spectra.len();

    let mut ncurves = 0usize;
    let mut per_fiber_rows: Vec<Vec<(usize, usize, bool, DVector<f64>)>> = Vec::with_capacity(m);
    let mut prev_active: Vec<Option<DVector<f64>>> = Vec::new();
    let mut degenerate_fibers: Vec<usize> = Vec::new();

    for (j, spectrum) in spectra.iter().enumerate() {
        let mut funcs: Vec<DVector<f64>> = spectrum.eigenfunctions().to_vec();
        let r_j = funcs.len();
        let clusters = clusters_of(spectrum.eigenvalues());
        let mut flag_fiber = !clusters.is_empty();

        let mut rows: Vec<(usize, usize, bool, DVector<f64>)> = Vec::with_capacity(r_j);
        if j == 0 {
            ncurves = r_j;
            for (n, func) in funcs.into_iter().enumerate() {
                rows.push((n, n, false, func));
            }
        } else {
            let actives: Vec<(usize, &DVector<f64>)> = prev_active
                .iter()
                .enumerate()
                .filter_map(|(n, f)| f.as_ref().map(|f| (n, f)))
                .collect();
            if !actives.is_empty() {
                let lambdas = spectrum.eigenvalues();
                for &range in &clusters {
                    let spread = lambdas[range.0] - lambdas[range.1 - 1];
                    if spread <= ROTATION_SPREAD_TOL * lambdas[0] {
                        rotate_cluster(&mut funcs, range, &actives, weights);
                    }
                }
            }

            let mut entries: Vec<(f64, usize, usize)> = Vec::with_capacity(actives.len() * r_j);
            for &(n, prev) in &actives {
                for (col, func) in funcs.iter().enumerate() {
                    entries.push((nu_inner(weights, prev, func), n, col));
                }
            }
            for col in 0..r_j {
                let mut tops: Vec<f64> =
                    entries.iter().filter(|e| e.2 == col).map(|e| e.0.abs()).collect();
                tops.sort_by(|a, b| b.total_cmp(a));
                if tops.len() >= 2 && tops[0] - tops[1] < AMBIGUOUS_OVERLAP_TOL {
                    flag_fiber = true;
                }
            }
            entries.sort_by(|x, y| {
                y.0.abs().total_cmp(&x.0.abs()).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2))
            });
            let mut row_taken = vec![false; ncurves];
            let mut col_assignment: Vec<Option<(usize, bool)>> = vec![None; r_j];
            for (overlap, n, col) in entries {
                if row_taken[n] || col_assignment[col].is_some() {
                    continue;
                }
                row_taken[n] = true;
                col_assignment[col] = Some((n, overlap < 0.0));
            }
            for (col, func) in funcs.into_iter().enumerate() {
                let (global, flip) = match col_assignment[col] {
                    Some(assigned) => assigned,
                    None => {
                        let fresh = ncurves;
                        ncurves += 1;
                        (fresh, false)
                    }
                };
                rows.push((global, col, flip, if flip { -func } else { func }));
            }
        }

        if flag_fiber {
            degenerate_fibers.push(j);
        }
        let mut next: Vec<Option<DVector<f64>>> = vec![None; ncurves];
        for (global, _, _, func) in &rows {
            next[*global] = Some(func.clone());
        }
        prev_active = next;
        per_fiber_rows.push(rows);
    }

    let mut lambdas = DMatrix::zeros(m, ncurves);
    let mut eigenfunctions = Vec::with_capacity(m);
    let mut provenance = Vec::with_capacity(m);
    for (j, rows) in per_fiber_rows.into_iter().enumerate() {
        let mut funcs = DMatrix::zeros(ncurves, p);
        let mut prov: Vec<Option<Provenance>> = vec![None; ncurves];
        for (global, source_index, flipped, func) in rows {
            lambdas[(j, global)] = spectra[j].eigenvalues()[source_index];
            for i in 0..p {
                funcs[(global, i)] = func[i];
            }
            prov[global] = Some(Provenance { source_index, flipped });
        }
        eigenfunctions.push(funcs);
        provenance.push(prov);
    }
    Ok(SpectralField {
        pgrid: pgrid.clone(),
        quad,
        rank: ncurves,
        lambdas,
        eigenfunctions,
        provenance,
        degenerate_fibers,
    })
}

/// Continuity measures of an aligned field.
#[derive(Debug, Clone, Serialize)]
pub struct ContinuityReport {
    /// Per curve: `max_j |λ_n(ω_{j+1}) - λ_n(ω_j)|`, zero-padded entries
    /// included. Empty for single-fiber fields.
    pub max_lambda_jump: Vec<f64>,
    /// Smallest matched overlap across all consecutive-fiber steps, `None`
    /// when no curve is present at two consecutive fibers.
    pub min_matched_overlap: Option<f64>,
    /// Copy of [`SpectralField::degenerate_fibers`].
    pub degenerate_fibers: Vec<usize>,
}

/// Summarizes eigenvalue jumps and matched overlaps of consecutive fibers.
pub fn continuity_report(field: &SpectralField) -> ContinuityReport {
    let m = field.fiber_count();
    let degenerate_fibers = field.degenerate_fibers().to_vec();
    if m == 1 {
        return ContinuityReport {
            max_lambda_jump: Vec::new(),
            min_matched_overlap: None,
            degenerate_fibers,
        };
    }
    let weights = field.quad().weights();
    let mut max_lambda_jump = vec![0.0f64; field.rank()];
    let mut min_matched_overlap: Option<f64> = None;
    for j in 0..m - 1 {
        for (n, jump) in max_lambda_jump.iter_mut().enumerate() {
            *jump = jump.max((field.lambda(j + 1, n) - field.lambda(j, n)).abs());
            if field.active(j, n) && field.active(j + 1, n) {
                let a = field.fiber_functions(j).row(n);
                let b = field.fiber_functions(j + 1).row(n);
                let overlap: f64 =
                    weights.iter().enumerate().map(|(i, &w)| w * a[i] * b[i]).sum();
                min_matched_overlap =
                    Some(min_matched_overlap.map_or(overlap, |cur| cur.min(overlap)));
            }
        }
    }
    ContinuityReport { max_lambda_jump, min_matched_overlap, degenerate_fibers }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fiberspec::{decompose_fibers, fiber_eigendecomposition};
    use crate::grid::{gauss_legendre, parameter_grid, Interval};
    use crate::kernel::{discretize, Factor, KernelSpec};

    fn unit() -> Interval {
        Interval::new(0.0, 1.0).unwrap()
    }

    fn crossing_field(m: usize, p: usize) -> (SpectralField, crate::kernel::DiscreteKernel) {
        let spec = KernelSpec::low_rank_synthetic(
            vec![vec![1.0, -1.0], vec![0.0, 1.0]],
            unit(),
        )
        .unwrap();
        let pgrid = parameter_grid(m, unit()).unwrap();
        let quad = gauss_legendre(p, unit()).unwrap();
        let dk = discretize(&spec, &pgrid, &quad).unwrap();
        let spectra = decompose_fibers(&dk, 1e-10).unwrap();
        (align_spectra(&spectra, &pgrid).unwrap(), dk)
    }

    #[test]
    fn constant_kernel_aligns_to_the_identity() {
        let spec = KernelSpec::brownian_scaled(1.0, 0.0, unit(), unit()).unwrap();
        let pgrid = parameter_grid(4, unit()).unwrap();
        let quad = gauss_legendre(12, unit()).unwrap();
        let dk = discretize(&spec, &pgrid, &quad).unwrap();
        let spectra = decompose_fibers(&dk, 1e-10).unwrap();
        let field = align_spectra(&spectra, &pgrid).unwrap();
        assert_eq!(field.rank(), spectra[0].rank());
        for j in 0..4 {
            for n in 0..field.rank() {
                let prov = field.provenance()[j][n].unwrap();
                assert_eq!(prov.source_index, n);
                assert!(!prov.flipped);
            }
        }
        let report = continuity_report(&field);
        assert!(report.min_matched_overlap.unwrap() >= 1.0 - 1e-12);
        assert!(report.max_lambda_jump.iter().all(|&d| d <= 1e-12));
        assert!(report.degenerate_fibers.is_empty());
    }

    #[test]
    fn single_fiber_field_passes_through() {
        let spec = KernelSpec::brownian_scaled(1.0, 0.0, unit(), unit()).unwrap();
        let pgrid = parameter_grid(1, unit()).unwrap();
        let quad = gauss_legendre(8, unit()).unwrap();
        let dk = discretize(&spec, &pgrid, &quad).unwrap();
        let spectra = decompose_fibers(&dk, 1e-10).unwrap();
        let field = align_spectra(&spectra, &pgrid).unwrap();
        assert_eq!(field.rank(), spectra[0].rank());
        let report = continuity_report(&field);
        assert!(report.max_lambda_jump.is_empty());
        assert!(report.min_matched_overlap.is_none());
    }

    #[test]
    fn crossing_curves_follow_their_profiles() {
        let (field, _) = crossing_field(9, 32);
        assert_eq!(field.rank(), 2);
        let omegas = field.pgrid().points().to_vec();
        for (j, &omega) in omegas.iter().enumerate() {
            assert!((field.lambda(j, 0) - (1.0 - omega)).abs() <= 1e-8, "fiber {j}");
            assert!((field.lambda(j, 1) - omega).abs() <= 1e-8, "fiber {j}");
        }
        let report = continuity_report(&field);
        assert!(report.min_matched_overlap.unwrap() >= 0.99);
        // ω = 0.5 sits exactly on the crossing: fiber 4 is degenerate
        assert_eq!(report.degenerate_fibers, vec![4]);
        for n in 0..2 {
            let flips = (0..9)
                .filter(|&j| field.provenance()[j][n].is_some_and(|p| p.flipped))
                .count();
            assert!(flips <= 1, "curve {n} flipped {flips} times");
        }
    }

    #[test]
    fn near_zero_clusters_keep_the_eigensolver_basis() {
        // A smooth kernel kept at eps_rel = 0 retains a tail of eigenvalues
        // near the noise floor whose consecutive gaps all fall inside the
        // degeneracy window. Rotating those chains would mix eigenfunctions
        // across unequal eigenvalues, so alignment must leave them alone and
        // the aligned field has to reconstruct as sharply as the raw fibers.
        let spec = KernelSpec::gaussian_bandwidth(0.5, 0.3, unit(), unit()).unwrap();
        let pgrid = parameter_grid(5, unit()).unwrap();
        let quad = gauss_legendre(32, unit()).unwrap();
        let dk = discretize(&spec, &pgrid, &quad).unwrap();
        let spectra = decompose_fibers(&dk, 0.0).unwrap();
        let field = align_spectra(&spectra, &pgrid).unwrap();
        assert!(!field.degenerate_fibers().is_empty());
        let rebuilt = crate::mercer::reconstruct(&field, field.rank()).unwrap();
        let report = crate::mercer::reconstruction_error(&dk, &rebuilt, field.rank()).unwrap();
        assert!(
            report.grid_sup <= 1e-12 * dk.max_abs(),
            "grid_sup {} after alignment",
            report.grid_sup
        );
    }

    #[test]
    fn overlap_matrix_of_a_spectrum_with_itself_is_identity() {
        let spec = KernelSpec::brownian_scaled(1.0, 0.0, unit(), unit()).unwrap();
        let pgrid = parameter_grid(1, unit()).unwrap();
        let quad = gauss_legendre(10, unit()).unwrap();
        let dk = discretize(&spec, &pgrid, &quad).unwrap();
        let spectrum = fiber_eigendecomposition(&dk, 0, 1e-10).unwrap();
        let overlaps = overlap_matrix(&spectrum, &spectrum).unwrap();
        for n in 0..overlaps.nrows() {
            for m in 0..overlaps.ncols() {
                let target = if n == m { 1.0 } else { 0.0 };
                assert!((overlaps[(n, m)] - target).abs() <= 1e-10);
            }
        }
        let negated = FiberSpectrum::from_parts(
            0,
            spectrum.omega(),
            quad.clone(),
            spectrum.eigenvalues().to_vec(),
            spectrum.eigenfunctions().iter().map(|x| -x).collect(),
        )
        .unwrap();
        let overlaps = overlap_matrix(&spectrum, &negated).unwrap();
        for n in 0..overlaps.nrows() {
            let target = if n == 0 { -1.0 } else { 0.0 };
            assert!((overlaps[(n, 0)] - target).abs() <= 1e-10);
        }
    }

    #[test]
    fn sign_flips_in_the_input_do_not_change_the_curves() {
        let spec = KernelSpec::low_rank_synthetic(
            vec![vec![1.0, -1.0], vec![0.0, 1.0]],
            unit(),
        )
        .unwrap();
        let pgrid = parameter_grid(9, unit()).unwrap();
        let quad = gauss_legendre(16, unit()).unwrap();
        let dk = discretize(&spec, &pgrid, &quad).unwrap();
        let spectra = decompose_fibers(&dk, 1e-10).unwrap();
        let field = align_spectra(&spectra, &pgrid).unwrap();

        let perturbed: Vec<FiberSpectrum> = spectra
            .iter()
            .enumerate()
            .map(|(j, s)| {
                let funcs = s
                    .eigenfunctions()
                    .iter()
                    .enumerate()
                    .map(|(n, x)| if (j + n) % 2 == 0 { -x } else { x.clone() })
                    .collect();
                FiberSpectrum::from_parts(
                    j,
                    s.omega(),
                    s.quad().clone(),
                    s.eigenvalues().to_vec(),
                    funcs,
                )
                .unwrap()
            })
            .collect();
        let refield = align_spectra(&perturbed, &pgrid).unwrap();
        assert_eq!(refield.rank(), field.rank());
        for (a, b) in field.lambdas().iter().zip(refield.lambdas().iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        let before = continuity_report(&field);
        let after = continuity_report(&refield);
        assert!(
            (before.min_matched_overlap.unwrap() - after.min_matched_overlap.unwrap()).abs()
                <= 1e-12
        );
    }

    #[test]
    fn realigning_an_aligned_field_is_the_identity() {
        let (field, _) = crossing_field(9, 16);
        let spectra = field.to_fiber_spectra().unwrap();
        let refield = align_spectra(&spectra, field.pgrid()).unwrap();
        assert_eq!(refield.rank(), field.rank());
        for (a, b) in field.lambdas().iter().zip(refield.lambdas().iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        for j in 0..field.fiber_count() {
            for (a, b) in field
                .fiber_functions(j)
                .iter()
                .zip(refield.fiber_functions(j).iter())
            {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn curves_that_vanish_are_zero_padded_and_reopened_curves_get_new_indices() {
        // amplitude (2ω - 1)² vanishes exactly at the middle fiber of M = 3
        let spec = KernelSpec::separable(
            vec![1.0, -4.0, 4.0],
            Factor::Sine(1),
            unit(),
            unit(),
        )
        .unwrap();
        let pgrid = parameter_grid(3, unit()).unwrap();
        let quad = gauss_legendre(12, unit()).unwrap();
        let dk = discretize(&spec, &pgrid, &quad).unwrap();
        let spectra = decompose_fibers(&dk, 1e-10).unwrap();
        assert_eq!(spectra[1].rank(), 0);
        let field = align_spectra(&spectra, &pgrid).unwrap();
        assert_eq!(field.rank(), 2);
        assert!(field.lambda(0, 0) > 0.0);
        assert_eq!(field.lambda(1, 0), 0.0);
        assert_eq!(field.lambda(2, 0), 0.0);
        assert_eq!(field.lambda(0, 1), 0.0);
        assert!(field.lambda(2, 1) > 0.0);
        assert!(field.provenance()[1].iter().all(Option::is_none));
        assert!(field.fiber_functions(1).iter().all(|&v| v == 0.0));
        let report = continuity_report(&field);
        assert!(report.min_matched_overlap.is_none());
        assert!((report.max_lambda_jump[0] - field.lambda(0, 0)).abs() <= 1e-15);
    }

    #[test]
    fn align_validates_inputs() {
        let spec = KernelSpec::brownian_scaled(1.0, 0.0, unit(), unit()).unwrap();
        let pgrid = parameter_grid(2, unit()).unwrap();
        let quad = gauss_legendre(6, unit()).unwrap();
        let dk = discretize(&spec, &pgrid, &quad).unwrap();
        let spectra = decompose_fibers(&dk, 1e-10).unwrap();

        let short = &spectra[..1];
        assert!(matches!(align_spectra(short, &pgrid), Err(Error::InvalidArgument(_))));

        let mut swapped = spectra.clone();
        swapped.swap(0, 1);
        assert!(matches!(align_spectra(&swapped, &pgrid), Err(Error::InvalidArgument(_))));

        let other_quad = gauss_legendre(7, unit()).unwrap();
        let other_dk = discretize(&spec, &pgrid, &other_quad).unwrap();
        let mut mixed = spectra.clone();
        mixed[1] = fiber_eigendecomposition(&other_dk, 1, 1e-10).unwrap();
        assert!(matches!(align_spectra(&mixed, &pgrid), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn from_parts_validates_shapes_and_padding() {
        let pgrid = parameter_grid(2, unit()).unwrap();
        let quad = gauss_legendre(3, unit()).unwrap();
        let lambdas = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        let ortho = DVector::from_vec(vec![1.0, 1.0, 1.0]);
        let norm = nu_inner(quad.weights(), &ortho, &ortho).sqrt();
        let row: Vec<f64> = ortho.iter().map(|v| v / norm).collect();
        let active = DMatrix::from_row_slice(1, 3, &row);
        let padded = DMatrix::zeros(1, 3);
        let field = SpectralField::from_parts(
            pgrid.clone(),
            quad.clone(),
            lambdas.clone(),
            vec![active.clone(), padded.clone()],
        )
        .unwrap();
        assert_eq!(field.rank(), 1);
        assert!(field.active(0, 0));
        assert!(!field.active(1, 0));

        // nonzero row under λ = 0
        assert!(SpectralField::from_parts(
            pgrid.clone(),
            quad.clone(),
            lambdas.clone(),
            vec![active.clone(), active.clone()],
        )
        .is_err());
        // negative eigenvalue
        assert!(SpectralField::from_parts(
            pgrid.clone(),
            quad.clone(),
            DMatrix::from_row_slice(2, 1, &[-1.0, 0.0]),
            vec![active.clone(), padded.clone()],
        )
        .is_err());
        // shape mismatch
        assert!(SpectralField::from_parts(pgrid, quad, lambdas, vec![active]).is_err());
    }
}
