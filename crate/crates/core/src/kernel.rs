//! Kernel specifications, pointwise evaluation, discretization, and
//! validation.
//!
//! A [`KernelSpec`] describes `K(ω, t, s)` either analytically (four built-in
//! families) or as a tabulated [`DiscreteKernel`]. Discretization samples the
//! kernel on a [`ParameterGrid`] × [`QuadratureRule`] pair; validation checks
//! the structural properties every downstream stage relies on: fiberwise
//! symmetry, positive semidefiniteness of the weighted fiber matrices, and a
//! finite Hilbert–Schmidt bound.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::eigen;
use crate::error::{Error, Result};
use crate::grid::{Interval, ParameterGrid, QuadratureRule};

/// Horner evaluation of `Σ_d coeffs[d] x^d`.
pub(crate) fn poly_eval(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// `φ_n(t) = √2 sin(nπt)`, the orthonormal sine basis of `L₂(0, 1)`.
pub(crate) fn sine_basis(n: usize, t: f64) -> f64 {
    SQRT_2 * (n as f64 * PI * t).sin()
}

fn check_finite_coeffs(what: &str, coeffs: &[f64]) -> Result<()> {
    if coeffs.is_empty() {
        return Err(Error::InvalidArgument(format!("{what} must have at least one coefficient")));
    }
    if coeffs.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidArgument(format!("{what} contains a non-finite coefficient")));
    }
    Ok(())
}

/// Scalar factor `φ(t)` of a separable kernel `a(ω) φ(t) φ(s)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Factor {
    /// `φ(t) = c`.
    Constant(f64),
    /// `φ(t) = sin(kπt)`.
    Sine(u32),
    /// `φ(t) = Σ_d coeffs[d] t^d`.
    Polynomial(Vec<f64>),
}

impl Factor {
    fn validate(&self) -> Result<()> {
        match self {
            Factor::Constant(c) if !c.is_finite() => {
                Err(Error::InvalidArgument("constant factor must be finite".into()))
            }
            Factor::Polynomial(coeffs) => check_finite_coeffs("polynomial factor", coeffs),
            _ => Ok(()),
        }
    }

    fn eval(&self, t: f64) -> f64 {
        match self {
            Factor::Constant(c) => *c,
            Factor::Sine(k) => (f64::from(*k) * PI * t).sin(),
            Factor::Polynomial(coeffs) => poly_eval(coeffs, t),
        }
    }
}

#[derive(Debug, Clone)]
enum Variant {
    Separable { amplitude: Vec<f64>, factor: Factor },
    GaussianBandwidth { sigma0: f64, sigma1: f64 },
    BrownianScaled { a0: f64, a1: f64 },
    LowRankSynthetic { profiles: Vec<Vec<f64>> },
    Tabulated(DiscreteKernel),
}

/// A parameterized kernel `K(ω, t, s)` on `Ω × S × S`.
///
/// Built-in analytic families:
///
/// * separable — `a(ω) φ(t) φ(s)` with polynomial amplitude `a` and a
///   [`Factor`] from the catalogue;
/// * gaussian bandwidth — `exp(-(t-s)² / (2σ(ω)²))` with affine `σ(ω) > 0`;
/// * scaled Brownian — `a(ω) · min(t, s)` with affine `a(ω) ≥ 0`;
/// * low-rank synthetic — `Σ_n λ_n(ω) φ_n(t) φ_n(s)` on `S = [0, 1]` with
///   polynomial profiles `λ_n(ω) ≥ 0` and `φ_n(t) = √2 sin(nπt)`;
///
/// plus tabulated kernels wrapping a stored [`DiscreteKernel`].
#[derive(Debug, Clone)]
pub struct KernelSpec {
    variant: Variant,
    omega_interval: Interval,
    s_interval: Interval,
}

impl KernelSpec {
    /// Separable kernel `a(ω) φ(t) φ(s)`; `amplitude` holds the polynomial
    /// coefficients of `a` in increasing degree.
    ///
    /// # Errors
    ///
    /// Returns [`Error::InvalidArgument`] for empty or non-finite
    /// coefficient lists.
    pub fn separable(
        amplitude: Vec<f64>,
        factor: Factor,
        omega_interval: Interval,
        s_interval: Interval,
    ) -> Result<Self> {
        check_finite_coeffs("amplitude polynomial", &amplitude)?;
        factor.validate()?;
        Ok(Self { variant: Variant::Separable { amplitude, factor }, omega_interval, s_interval })
    }

    /// Gaussian kernel `exp(-(t-s)² / (2σ(ω)²))` with `σ(ω) = σ₀ + σ₁ ω`.
    /// Positivity of `σ` is enforced at evaluation points.
    ///
    /// # Errors
    ///
    /// Returns [`Error::InvalidArgument`] for non-finite coefficients.
    pub fn gaussian_bandwidth(
        sigma0: f64,
        sigma1: f64,
        omega_interval: Interval,
        s_interval: Interval,
    ) -> Result<Self> {
        check_finite_coeffs("bandwidth", &[sigma0, sigma1])?;
        Ok(Self { variant: Variant::GaussianBandwidth { sigma0, sigma1 }, omega_interval, s_interval })
    }

    /// Scaled Brownian kernel `a(ω) min(t, s)` with `a(ω) = a₀ + a₁ ω`.
    /// Nonnegativity of `a` is enforced at evaluation points.
    ///
    /// # Errors
    ///
    /// Returns [`Error::InvalidArgument`] for non-finite coefficients.
    pub fn brownian_scaled(
        a0: f64,
        a1: f64,
        omega_interval: Interval,
        s_interval: Interval,
    ) -> Result<Self> {
        check_finite_coeffs("amplitude", &[a0, a1])?;
        Ok(Self { variant: Variant::BrownianScaled { a0, a1 }, omega_interval, s_interval })
    }

    /// Low-rank synthetic kernel `Σ_n λ_n(ω) φ_n(t) φ_n(s)` on `S = [0, 1]`,
    /// one polynomial coefficient list per profile `λ_n`; the rank is
    /// `profiles.len()`. Nonnegativity of each profile is enforced at
    /// evaluation points.
    ///
    /// # Errors
    ///
    /// Returns [`Error::InvalidArgument`] for an empty profile list or empty
    /// or non-finite coefficient lists.
    pub fn low_rank_synthetic(profiles: Vec<Vec<f64>>, omega_interval: Interval) -> Result<Self> {
        if profiles.is_empty() {
            return Err(Error::InvalidArgument("low-rank kernel requires at least one profile".into()));
        }
        for (n, profile) in profiles.iter().enumerate() {
            check_finite_coeffs(&format!("profile {}", n + 1), profile)?;
        }
        let s_interval = Interval::new(0.0, 1.0).expect("unit interval");
        Ok(Self { variant: Variant::LowRankSynthetic { profiles }, omega_interval, s_interval })
    }

    /// Tabulated kernel wrapping stored values; the intervals are taken from
    /// the stored grids.
    pub fn tabulated(dk: DiscreteKernel) -> Self {
        let omega_interval = dk.pgrid().interval();
        let s_interval = dk.quad().interval();
        Self { variant: Variant::Tabulated(dk), omega_interval, s_interval }
    }

    /// Parameter-space interval `Ω`.
    pub fn omega_interval(&self) -> Interval {
        self.omega_interval
    }

    /// Index-space interval `S`.
    pub fn s_interval(&self) -> Interval {
        self.s_interval
    }

    /// Whether this spec wraps stored values instead of a formula.
    pub fn is_tabulated(&self) -> bool {
        matches!(self.variant, Variant::Tabulated(_))
    }

    /// Construction rank of a low-rank synthetic kernel, `None` otherwise.
    pub fn synthetic_rank(&self) -> Option<usize> {
        match &self.variant {
            Variant::LowRankSynthetic { profiles } => Some(profiles.len()),
            _ => None,
        }
    }
}

/// Evaluates `K(ω, t, s)` for an analytic kernel.
///
/// # Errors
///
/// * [`Error::Unsupported`] for tabulated kernels, which carry no formula;
/// * [`Error::InvalidArgument`] when `ω`, `t`, or `s` lies outside its
///   interval, or when a positivity constraint (`σ(ω) > 0`, `a(ω) ≥ 0`,
///   `λ_n(ω) ≥ 0`) fails at `ω`.
pub fn eval_kernel(spec: &KernelSpec, omega: f64, t: f64, s: f64) -> Result<f64> {
    if let Variant::Tabulated(_) = spec.variant {
        return Err(Error::Unsupported(
            "tabulated kernels cannot be evaluated pointwise; use the stored values".into(),
        ));
    }
    if !spec.omega_interval.contains(omega) {
        return Err(Error::InvalidArgument(format!(
            "ω = {omega} lies outside [{}, {}]",
            spec.omega_interval.lo(),
            spec.omega_interval.hi()
        )));
    }
    for (name, x) in [("t", t), ("s", s)] {
        if !spec.s_interval.contains(x) {
            return Err(Error::InvalidArgument(format!(
                "{name} = {x} lies outside [{}, {}]",
                spec.s_interval.lo(),
                spec.s_interval.hi()
            )));
        }
    }
    match &spec.variant {
        Variant::Separable { amplitude, factor } => {
            Ok(poly_eval(amplitude, omega) * factor.eval(t) * factor.eval(s))
        }
        Variant::GaussianBandwidth { sigma0, sigma1 } => {
            let sigma = sigma0 + sigma1 * omega;
            if sigma <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "bandwidth σ(ω) = {sigma} must be positive at ω = {omega}"
                )));
            }
            let d = t - s;
            Ok((-d * d / (2.0 * sigma * sigma)).exp())
        }
        Variant::BrownianScaled { a0, a1 } => {
            let a = a0 + a1 * omega;
            if a < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "amplitude a(ω) = {a} must be nonnegative at ω = {omega}"
                )));
            }
            Ok(a * t.min(s))
        }
        Variant::LowRankSynthetic { profiles } => {
            let mut sum = 0.0;
            for (n, profile) in profiles.iter().enumerate() {
                let lambda = poly_eval(profile, omega);
                if lambda < 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "profile {} = {lambda} must be nonnegative at ω = {omega}",
                        n + 1
                    )));
                }
                sum += lambda * sine_basis(n + 1, t) * sine_basis(n + 1, s);
            }
            Ok(sum)
        }
        Variant::Tabulated(_) => unreachable!("handled above"),
    }
}

/// A kernel sampled on `{ω_j} × {t_i} × {t_k}`:
/// `values[j][(i, k)] = K(ω_j, t_i, t_k)`.
#[derive(Debug, Clone)]
pub struct DiscreteKernel {
    pgrid: ParameterGrid,
    quad: QuadratureRule,
    values: Vec<DMatrix<f64>>,
}

impl DiscreteKernel {
    /// Wraps explicit fiber matrices.
    ///
    /// # Errors
    ///
    /// Returns [`Error::InvalidArgument`] if the number of matrices differs
    /// from the parameter-grid size, a matrix is not `P × P`, or an entry is
    /// not finite.
    pub fn from_values(
        pgrid: ParameterGrid,
        quad: QuadratureRule,
        values: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        if values.len() != pgrid.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} fiber matrices, got {}",
                pgrid.len(),
                values.len()
            )));
        }
        let p = quad.len();
        for (j, fiber) in values.iter().enumerate() {
            if fiber.nrows() != p || fiber.ncols() != p {
                return Err(Error::InvalidArgument(format!(
                    "fiber {j} is {}×{}, expected {p}×{p}",
                    fiber.nrows(),
                    fiber.ncols()
                )));
            }
            if fiber.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!("fiber {j} contains a non-finite value")));
            }
        }
        Ok(Self { pgrid, quad, values })
    }

    /// Samples `f(ω_j, t_i, t_k)` on the full grid.
    ///
    /// # Errors
    ///
    /// Returns [`Error::InvalidArgument`] if `f` produces a non-finite value.
    pub fn from_fn(
        pgrid: ParameterGrid,
        quad: QuadratureRule,
        f: impl Fn(f64, f64, f64) -> f64,
    ) -> Result<Self> {
        let p = quad.len();
        let values = pgrid
            .points()
            .iter()
            .map(|&omega| DMatrix::from_fn(p, p, |i, k| f(omega, quad.nodes()[i], quad.nodes()[k])))
            .collect();
        Self::from_values(pgrid, quad, values)
    }

    /// Parameter grid `{ω_j}`.
    pub fn pgrid(&self) -> &ParameterGrid {
        &self.pgrid
    }

    /// Quadrature rule `{(t_i, w_i)}`.
    pub fn quad(&self) -> &QuadratureRule {
        &self.quad
    }

    /// Number of fibers `M`.
    pub fn fiber_count(&self) -> usize {
        self.values.len()
    }

    /// Number of quadrature nodes `P`.
    pub fn node_count(&self) -> usize {
        self.quad.len()
    }

    /// Fiber matrix `K_j`. Panics if `j` is out of range.
    pub fn fiber(&self, j: usize) -> &DMatrix<f64> {
        &self.values[j]
    }

    /// All fiber matrices in parameter order.
    pub fn values(&self) -> &[DMatrix<f64>] {
        &self.values
    }

    /// `max_{j,i,k} |K(ω_j, t_i, t_k)|`.
    pub fn max_abs(&self) -> f64 {
        self.values
            .iter()
            .flat_map(|fiber| fiber.iter())
            .fold(0.0, |acc: f64, &v| acc.max(v.abs()))
    }

    /// Whether this kernel shares both grids with `other`, bitwise.
    pub fn same_grids(&self, other: &Self) -> bool {
        self.pgrid.same_sampling(other.pgrid()) && self.quad.same_discretization(other.quad())
    }
}

/// Samples `spec` on the given grids.
///
/// Analytic kernels are evaluated on the upper triangle of each fiber and
/// mirrored, so every discretized built-in is bitwise symmetric. Tabulated
/// kernels are returned as stored.
///
/// # Errors
///
/// * [`Error::GridMismatch`] if a tabulated kernel's stored grids differ
///   from the requested grids;
/// * any error of [`eval_kernel`] at a grid point.
pub fn discretize(
    spec: &KernelSpec,
    pgrid: &ParameterGrid,
    quad: &QuadratureRule,
) -> Result<DiscreteKernel> {
    if let Variant::Tabulated(dk) = &spec.variant {
        if !dk.pgrid().same_sampling(pgrid) || !dk.quad().same_discretization(quad) {
            return Err(Error::GridMismatch(
                "tabulated kernel is stored on different grids than requested".into(),
            ));
        }
        return Ok(dk.clone());
    }
    let p = quad.len();
    let nodes = quad.nodes();
    let values = pgrid
        .points()
        .par_iter()
        .map(|&omega| {
            let mut fiber = DMatrix::zeros(p, p);
            for i in 0..p {
                for k in i..p {
                    let v = eval_kernel(spec, omega, nodes[i], nodes[k])?;
                    fiber[(i, k)] = v;
                    fiber[(k, i)] = v;
                }
            }
            Ok(fiber)
        })
        .collect::<Result<Vec<_>>>()?;
    DiscreteKernel::from_values(pgrid.clone(), quad.clone(), values)
}

/// Validation results for a [`DiscreteKernel`]; all per-fiber vectors follow
/// parameter order.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    /// Symmetry tolerance the verdict used.
    pub tol_sym: f64,
    /// PSD tolerance the verdict used.
    pub tol_psd: f64,
    /// `max_{i,k} |K_j - K_jᵀ|` per fiber.
    pub symmetry_defect: Vec<f64>,
    /// Smallest eigenvalue of the weighted symmetrized fiber matrix.
    pub psd_min_eigenvalue: Vec<f64>,
    /// Squared Hilbert–Schmidt norm `C(ω_j) = Σ_{i,k} w_i w_k K²`.
    pub hs_constant: Vec<f64>,
    /// `max_j C(ω_j)`.
    pub hs_ess_sup: f64,
    /// Every fiber's symmetry defect is within `tol_sym`.
    pub symmetry_pass: bool,
    /// Every fiber's smallest eigenvalue is above
    /// `-tol_psd · max(1, largest eigenvalue)`.
    pub psd_pass: bool,
    /// Every Hilbert–Schmidt constant is finite.
    pub hs_finite: bool,
    /// Conjunction of the three verdicts.
    pub pass: bool,
}

/// Checks symmetry, positive semidefiniteness, and the Hilbert–Schmidt bound
/// of every fiber.
///
/// # Errors
///
/// * [`Error::InvalidArgument`] for negative or non-finite tolerances;
/// * [`Error::NumericalFailure`] if an eigensolve does not converge.
pub fn validate_kernel(dk: &DiscreteKernel, tol_sym: f64, tol_psd: f64) -> Result<ValidationReport> {
    for (name, tol) in [("tol_sym", tol_sym), ("tol_psd", tol_psd)] {
        if !tol.is_finite() || tol < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "{name} must be nonnegative and finite, got {tol}"
            )));
        }
    }
    let weights = dk.quad().weights();
    let per_fiber = dk
        .values()
        .par_iter()
        .enumerate()
        .map(|(j, fiber)| {
            let p = fiber.nrows();
            let mut sym = 0.0f64;
            let mut hs = 0.0;
            for i in 0..p {
                for k in 0..p {
                    sym = sym.max((fiber[(i, k)] - fiber[(k, i)]).abs());
                    let v = fiber[(i, k)];
                    hs += weights[i] * weights[k] * v * v;
                }
            }
            let a = eigen::weighted_symmetrized(fiber, weights);
            let (eigs, _) = eigen::sym_eigen_desc(a).ok_or(Error::NumericalFailure {
                fiber: j,
                message: "eigensolver did not converge during validation".into(),
            })?;
            let largest = eigs[0];
            let smallest = eigs[eigs.len() - 1];
            let psd_ok = smallest >= -tol_psd * largest.max(1.0);
            Ok((sym, smallest, hs, psd_ok))
        })
        .collect::<Result<Vec<_>>>()?;

    let symmetry_defect: Vec<f64> = per_fiber.iter().map(|r| r.0).collect();
    let psd_min_eigenvalue: Vec<f64> = per_fiber.iter().map(|r| r.1).collect();
    let hs_constant: Vec<f64> = per_fiber.iter().map(|r| r.2).collect();
    let hs_ess_sup = hs_constant.iter().fold(0.0f64, |acc, &c| acc.max(c));
    let symmetry_pass = symmetry_defect.iter().all(|&d| d <= tol_sym);
    let psd_pass = per_fiber.iter().all(|r| r.3);
    let hs_finite = hs_constant.iter().all(|c| c.is_finite());
    let pass = symmetry_pass && psd_pass && hs_finite;
    Ok(ValidationReport {
        tol_sym,
        tol_psd,
        symmetry_defect,
        psd_min_eigenvalue,
        hs_constant,
        hs_ess_sup,
        symmetry_pass,
        psd_pass,
        hs_finite,
        pass,
    })
}
