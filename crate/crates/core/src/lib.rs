//! Fiberwise Mercer spectral decomposition of parameterized positive-definite
//! kernels, and a partial-integral-operator calculus on the discretized module
//! `L_{2,∞}(Ω × S)`.
//!
//! A kernel `K(ω, t, s)` is sampled on a parameter grid `{ω_j}` over `Ω` and a
//! quadrature rule `{(t_i, w_i)}` over `S`. Each fiber `ω_j` carries the
//! integral operator `(T_ω g)(t) = ∫ K(ω, t, s) g(s) dν(s)`, discretized via
//! the Nyström method as the symmetric eigenproblem of
//! `A_j = D^{1/2} K_j D^{1/2}` with `D = diag(w)`. The crate is organized as
//!
//! * [`grid`] — intervals, Gauss–Legendre and trapezoid rules, parameter grids;
//! * [`kernel`] — kernel specifications, discretization, and validation
//!   (symmetry, positive semidefiniteness, Hilbert–Schmidt bounds);
//! * [`pikt`] — the PIKT text format for tabulated kernels;
//! * [`fiberspec`] — per-fiber eigendecomposition, Nyström extension, and
//!   residual diagnostics;
//! * [`alignment`] — overlap-tracked eigenvalue curves across the parameter
//!   grid, producing a [`alignment::SpectralField`];
//! * [`mercer`] — truncated reconstruction, trace and energy metrics, and
//!   RKHS inner products;
//! * [`operators`] — the fiberwise operator `T`, general partial integral
//!   operators, module norms, and spectral-completeness diagnostics.

pub mod alignment;
mod eigen;
pub mod error;
pub mod fiberspec;
pub mod grid;
pub mod kernel;
pub mod mercer;
pub mod operators;
pub mod pikt;

pub use error::{Error, Result};
