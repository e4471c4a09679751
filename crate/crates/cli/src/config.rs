//! Run configuration: a flat JSON object, unknown keys rejected.
//!
//! ```json
//! {
//!   "kernel": { "brownian_scaled": { "amplitude": [1.0, 1.0] } },
//!   "fiber_nodes": 64,
//!   "fiber_rule": "gauss_legendre",
//!   "omega_samples": 8,
//!   "s_interval": [0.0, 1.0],
//!   "omega_interval": [0.0, 1.0],
//!   "eps_rel": 1e-10,
//!   "tol_sym": 1e-12,
//!   "tol_psd": 1e-10,
//!   "tau": 1e-12,
//!   "equiv_tol": 1e-8,
//!   "truncation": { "rank": 5 },
//!   "output_dir": "out"
//! }
//! ```
//!
//! Paths inside the config (`output_dir`, a tabulated kernel's `path`) are
//! resolved against the directory containing the config file. Tabulated
//! kernels carry their own grids, so `fiber_rule`, `s_interval`, and
//! `omega_interval` must be omitted for them, and `fiber_nodes` /
//! `omega_samples` must match the stored sizes.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use mercer_field::grid::{
    gauss_legendre, parameter_grid, trapezoid_rule, Interval, ParameterGrid, QuadratureRule,
};
use mercer_field::kernel::{discretize, DiscreteKernel, Factor, KernelSpec};
use mercer_field::pikt::load_tabulated;

use crate::error::CliError;

/// Kernel family selector, externally tagged.
#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelConfig {
    /// `a(ω) min(t, s)` with `a(ω) = amplitude[0] + amplitude[1] ω`.
    BrownianScaled { amplitude: [f64; 2] },
    /// `exp(-(t-s)² / (2σ(ω)²))` with `σ(ω) = bandwidth[0] + bandwidth[1] ω`.
    GaussianBandwidth { bandwidth: [f64; 2] },
    /// `a(ω) φ(t) φ(s)`; `amplitude` holds polynomial coefficients of `a`
    /// in increasing degree.
    Separable { amplitude: Vec<f64>, factor: FactorConfig },
    /// `Σ_n λ_n(ω) φ_n(t) φ_n(s)` with sine eigenfunctions on `[0, 1]`;
    /// one polynomial coefficient list per profile `λ_n`.
    LowRankSynthetic { profiles: Vec<Vec<f64>> },
    /// Stored values read from a PIKT file.
    Tabulated { path: PathBuf },
}

/// Scalar factor of a separable kernel.
#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorConfig {
    /// `φ(t) = c`.
    Constant(f64),
    /// `φ(t) = sin(kπt)`.
    Sine(u32),
    /// `φ(t) = Σ_d coeffs[d] t^d`.
    Polynomial(Vec<f64>),
}

impl FactorConfig {
    fn to_factor(&self) -> Factor {
        match self {
            FactorConfig::Constant(c) => Factor::Constant(*c),
            FactorConfig::Sine(k) => Factor::Sine(*k),
            FactorConfig::Polynomial(coeffs) => Factor::Polynomial(coeffs.clone()),
        }
    }
}

/// Quadrature rule selector for the fiber space `S`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FiberRule {
    GaussLegendre,
    Trapezoid,
}

/// How `reconstruct` picks its number of curves.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Truncation {
    /// Keep exactly this many leading curves.
    Rank(usize),
    /// Keep the fewest curves capturing this trace fraction per fiber.
    Energy(f64),
}

/// One run's complete parameterization.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub kernel: KernelConfig,
    pub fiber_nodes: usize,
    pub fiber_rule: Option<FiberRule>,
    pub omega_samples: usize,
    pub s_interval: Option<[f64; 2]>,
    pub omega_interval: Option<[f64; 2]>,
    pub eps_rel: f64,
    pub tol_sym: f64,
    pub tol_psd: f64,
    pub tau: f64,
    pub equiv_tol: f64,
    pub truncation: Truncation,
    pub output_dir: PathBuf,
}

/// A parsed config together with the directory its internal paths are
/// resolved against.
#[derive(Debug, Clone)]
pub struct Run {
    pub config: RunConfig,
    base_dir: PathBuf,
}

impl Run {
    /// Reads, parses, and semantically checks a config file.
    ///
    /// # Errors
    ///
    /// Returns a [`CliError`] with exit status 3 for an unreadable file,
    /// malformed JSON (including unknown keys), or a field outside its
    /// domain; every message names the config file.
    pub fn load(config_path: &Path) -> Result<Self, CliError> {
        let at = |message: String| {
            CliError::config(format!("{}: {message}", config_path.display()))
        };
        let text = fs::read_to_string(config_path)
            .map_err(|e| at(e.to_string()))?;
        let config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| at(e.to_string()))?;
        config.check_domains().map_err(at)?;
        let base_dir = config_path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Ok(Self { config, base_dir })
    }

    /// The output directory, resolved against the config file's directory.
    pub fn output_dir(&self) -> PathBuf {
        self.base_dir.join(&self.config.output_dir)
    }

    /// Samples the configured kernel on the configured grids; tabulated
    /// kernels are loaded from their file instead.
    ///
    /// # Errors
    ///
    /// * exit status 3 for an unreadable or malformed kernel file, or one
    ///   whose sizes disagree with `fiber_nodes` / `omega_samples`;
    /// * exit status 2 if an analytic kernel violates a positivity
    ///   constraint somewhere on the grid.
    pub fn discretized_kernel(&self) -> Result<DiscreteKernel, CliError> {
        let cfg = &self.config;
        if let KernelConfig::Tabulated { path } = &cfg.kernel {
            let resolved = self.base_dir.join(path);
            let dk = load_tabulated(&resolved).map_err(|e| {
                let mut err = CliError::from(e);
                err.message = format!("{}: {}", resolved.display(), err.message);
                err
            })?;
            if dk.node_count() != cfg.fiber_nodes || dk.fiber_count() != cfg.omega_samples {
                return Err(CliError::config(format!(
                    "{}: stores {} fibers × {} nodes, but the config says \
                     omega_samples = {} and fiber_nodes = {}",
                    resolved.display(),
                    dk.fiber_count(),
                    dk.node_count(),
                    cfg.omega_samples,
                    cfg.fiber_nodes
                )));
            }
            return Ok(dk);
        }

        let (pgrid, quad) = self.analytic_grids()?;
        let spec = match &cfg.kernel {
            KernelConfig::BrownianScaled { amplitude } => KernelSpec::brownian_scaled(
                amplitude[0],
                amplitude[1],
                pgrid.interval(),
                quad.interval(),
            )?,
            KernelConfig::GaussianBandwidth { bandwidth } => KernelSpec::gaussian_bandwidth(
                bandwidth[0],
                bandwidth[1],
                pgrid.interval(),
                quad.interval(),
            )?,
            KernelConfig::Separable { amplitude, factor } => KernelSpec::separable(
                amplitude.clone(),
                factor.to_factor(),
                pgrid.interval(),
                quad.interval(),
            )?,
            KernelConfig::LowRankSynthetic { profiles } => {
                KernelSpec::low_rank_synthetic(profiles.clone(), pgrid.interval())?
            }
            KernelConfig::Tabulated { .. } => unreachable!("handled above"),
        };
        Ok(discretize(&spec, &pgrid, &quad)?)
    }

    fn analytic_grids(&self) -> Result<(ParameterGrid, QuadratureRule), CliError> {
        let cfg = &self.config;
        let [slo, shi] = cfg.s_interval.expect("checked by check_domains");
        let [olo, ohi] = cfg.omega_interval.expect("checked by check_domains");
        let s = Interval::new(slo, shi)?;
        let omega = Interval::new(olo, ohi)?;
        let quad = match cfg.fiber_rule.expect("checked by check_domains") {
            FiberRule::GaussLegendre => gauss_legendre(cfg.fiber_nodes, s)?,
            FiberRule::Trapezoid => trapezoid_rule(cfg.fiber_nodes, s)?,
        };
        Ok((parameter_grid(cfg.omega_samples, omega)?, quad))
    }
}

impl RunConfig {
    fn check_domains(&self) -> Result<(), String> {
        if self.fiber_nodes == 0 {
            return Err("fiber_nodes must be at least 1".into());
        }
        if self.omega_samples == 0 {
            return Err("omega_samples must be at least 1".into());
        }
        if !(self.eps_rel.is_finite() && self.eps_rel >= 0.0) {
            return Err(format!("eps_rel must be nonnegative and finite, got {}", self.eps_rel));
        }
        for (name, tol) in [
            ("tol_sym", self.tol_sym),
            ("tol_psd", self.tol_psd),
            ("tau", self.tau),
            ("equiv_tol", self.equiv_tol),
        ] {
            if !(tol.is_finite() && tol > 0.0) {
                return Err(format!("{name} must be positive and finite, got {tol}"));
            }
        }
        match self.truncation {
            Truncation::Rank(0) => return Err("truncation rank must be at least 1".into()),
            Truncation::Energy(eta) if !(eta > 0.0 && eta <= 1.0) => {
                return Err(format!("truncation energy must lie in (0, 1], got {eta}"));
            }
            _ => {}
        }
        for (name, interval) in
            [("s_interval", self.s_interval), ("omega_interval", self.omega_interval)]
        {
            if let Some([lo, hi]) = interval {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(format!("{name} must satisfy lo < hi, got [{lo}, {hi}]"));
                }
            }
        }

        if matches!(self.kernel, KernelConfig::Tabulated { .. }) {
            for (name, present) in [
                ("fiber_rule", self.fiber_rule.is_some()),
                ("s_interval", self.s_interval.is_some()),
                ("omega_interval", self.omega_interval.is_some()),
            ] {
                if present {
                    return Err(format!(
                        "tabulated kernels take {name} from the kernel file; remove it"
                    ));
                }
            }
        } else {
            for (name, present) in [
                ("fiber_rule", self.fiber_rule.is_some()),
                ("s_interval", self.s_interval.is_some()),
                ("omega_interval", self.omega_interval.is_some()),
            ] {
                if !present {
                    return Err(format!("{name} is required for analytic kernels"));
                }
            }
        }

        match &self.kernel {
            KernelConfig::Separable { amplitude, .. } if amplitude.is_empty() => {
                Err("separable amplitude polynomial must have at least one coefficient".into())
            }
            KernelConfig::Separable {
                factor: FactorConfig::Polynomial(coeffs), ..
            } if coeffs.is_empty() => {
                Err("polynomial factor must have at least one coefficient".into())
            }
            KernelConfig::LowRankSynthetic { profiles }
                if profiles.is_empty() || profiles.iter().any(Vec::is_empty) =>
            {
                Err("low_rank_synthetic needs at least one profile, each with at least \
                     one coefficient"
                    .into())
            }
            KernelConfig::LowRankSynthetic { .. }
                if self.s_interval != Some([0.0, 1.0]) =>
            {
                Err("low_rank_synthetic kernels are defined on s_interval [0.0, 1.0]".into())
            }
            _ => Ok(()),
        }
    }
}
