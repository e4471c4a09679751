//! Shared symmetric-eigendecomposition driver.

use nalgebra::{DMatrix, DVector};

/// Eigendecomposition of a symmetric matrix with eigenvalues sorted in
/// descending order and unit-norm eigenvectors in matching order. Exact ties
/// keep the solver's relative ordering. Returns `None` when the iteration
/// does not converge.
pub(crate) fn sym_eigen_desc(a: DMatrix<f64>) -> Option<(Vec<f64>, Vec<DVector<f64>>)> {
    let dim = a.nrows();
    let decomp = a.try_symmetric_eigen(f64::EPSILON, 100_000)?;
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&i, &j| decomp.eigenvalues[j].total_cmp(&decomp.eigenvalues[i]));
    let values = order.iter().map(|&i| decomp.eigenvalues[i]).collect();
    let vectors = order
        .iter()
        .map(|&i| decomp.eigenvectors.column(i).clone_owned())
        .collect();
    Some((values, vectors))
}

/// `D^{1/2} (K + Kᵀ)/2 D^{1/2}` with `D = diag(weights)`: the symmetric
/// matrix whose eigenpairs carry the Nyström discretization of the fiber
/// operator. The result is bitwise symmetric by construction.
pub(crate) fn weighted_symmetrized(kmat: &DMatrix<f64>, weights: &[f64]) -> DMatrix<f64> {
    let sqrt_w: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
    DMatrix::from_fn(kmat.nrows(), kmat.ncols(), |i, k| {
        0.5 * (kmat[(i, k)] + kmat[(k, i)]) * (sqrt_w[i] * sqrt_w[k])
    })
}
