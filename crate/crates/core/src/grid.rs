//! Discretization primitives for the index space `S` and the parameter
//! space `Ω`.
//!
//! `S` is discretized by a [`QuadratureRule`] (nodes and positive weights
//! approximating integration against ν), `Ω` by a [`ParameterGrid`] (sample
//! points and positive cell weights approximating integration against μ).
//! Both are immutable after construction and validate their invariants
//! eagerly, so downstream code can rely on sorted nodes and positive weights
//! without re-checking.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// A finite, nondegenerate closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    /// Creates `[lo, hi]`.
    ///
    /// # Errors
    ///
    /// Returns [`Error::InvalidArgument`] unless both endpoints are finite
    /// and `lo < hi`.
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "interval endpoints must be finite, got [{lo}, {hi}]"
            )));
        }
        if lo >= hi {
            return Err(Error::InvalidArgument(format!(
                "interval requires lo < hi, got [{lo}, {hi}]"
            )));
        }
        Ok(Self { lo, hi })
    }

    /// Lower endpoint.
    pub fn lo(&self) -> f64 {
        self.lo
    }

    /// Upper endpoint.
    pub fn hi(&self) -> f64 {
        self.hi
    }

    /// Length `hi - lo`.
    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    /// Whether `x` lies in `[lo, hi]` (endpoints included).
    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }
}

fn check_samples(kind: &str, points: &[f64], weights: &[f64], interval: Interval) -> Result<()> {
    if points.is_empty() {
        return Err(Error::InvalidArgument(format!("{kind} must have at least one point")));
    }
    if points.len() != weights.len() {
        return Err(Error::InvalidArgument(format!(
            "{kind} has {} points but {} weights",
            points.len(),
            weights.len()
        )));
    }
    for (idx, &p) in points.iter().enumerate() {
        if !p.is_finite() {
            return Err(Error::InvalidArgument(format!("{kind} point {idx} is not finite")));
        }
        if !interval.contains(p) {
            return Err(Error::InvalidArgument(format!(
                "{kind} point {idx} = {p} lies outside [{}, {}]",
                interval.lo, interval.hi
            )));
        }
    }
    for pair in points.windows(2) {
        if pair[0] >= pair[1] {
            return Err(Error::InvalidArgument(format!(
                "{kind} points must be strictly increasing, got {} before {}",
                pair[0], pair[1]
            )));
        }
    }
    for (idx, &w) in weights.iter().enumerate() {
        if !w.is_finite() || w <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "{kind} weight {idx} must be positive and finite, got {w}"
            )));
        }
    }
    Ok(())
}

fn bitwise_equal(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

/// A quadrature rule on `S`: strictly increasing nodes `t_i` inside the
/// carrier interval together with positive weights `w_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    interval: Interval,
}

impl QuadratureRule {
    /// Builds a rule from explicit nodes and weights.
    ///
    /// # Errors
    ///
    /// Returns [`Error::InvalidArgument`] if the slices differ in length,
    /// are empty, contain non-finite values, the nodes are not strictly
    /// increasing inside `interval`, or any weight is nonpositive.
    pub fn from_parts(nodes: Vec<f64>, weights: Vec<f64>, interval: Interval) -> Result<Self> {
        check_samples("quadrature rule", &nodes, &weights, interval)?;
        Ok(Self { nodes, weights, interval })
    }

    /// Rebuilds a rule from stored samples, inferring the carrier interval
    /// via [`infer_interval`].
    ///
    /// # Errors
    ///
    /// As [`QuadratureRule::from_parts`].
    pub fn from_samples(nodes: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let interval = infer_interval(&nodes, &weights)?;
        Self::from_parts(nodes, weights, interval)
    }

    /// Number of nodes.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    /// Always false; rules carry at least one node.
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Nodes `t_1 < t_2 < … < t_P`.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Weights `w_i > 0`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Carrier interval.
    pub fn interval(&self) -> Interval {
        self.interval
    }

    /// Whether both rules carry bitwise-identical nodes and weights.
    ///
    /// The carrier intervals are deliberately not compared: two rules with
    /// identical samples induce the same discrete measure.
    pub fn same_discretization(&self, other: &Self) -> bool {
        bitwise_equal(&self.nodes, &other.nodes) && bitwise_equal(&self.weights, &other.weights)
    }
}

/// A sampling of the parameter space `Ω`: strictly increasing points `ω_j`
/// with positive cell weights `u_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterGrid {
    points: Vec<f64>,
    weights: Vec<f64>,
    interval: Interval,
}

impl ParameterGrid {
    /// Builds a grid from explicit points and weights.
    ///
    /// # Errors
    ///
    /// Returns [`Error::InvalidArgument`] under the same conditions as
    /// [`QuadratureRule::from_parts`].
    pub fn from_parts(points: Vec<f64>, weights: Vec<f64>, interval: Interval) -> Result<Self> {
        check_samples("parameter grid", &points, &weights, interval)?;
        Ok(Self { points, weights, interval })
    }

    /// Rebuilds a grid from stored samples, inferring the carrier interval
    /// via [`infer_interval`].
    ///
    /// # Errors
    ///
    /// As [`ParameterGrid::from_parts`].
    pub fn from_samples(points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let interval = infer_interval(&points, &weights)?;
        Self::from_parts(points, weights, interval)
    }

    /// Number of parameter points.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Always false; grids carry at least one point.
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Points `ω_1 < ω_2 < … < ω_M`.
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Cell weights `u_j > 0`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Carrier interval.
    pub fn interval(&self) -> Interval {
        self.interval
    }

    /// Whether both grids carry bitwise-identical points and weights.
    pub fn same_sampling(&self, other: &Self) -> bool {
        bitwise_equal(&self.points, &other.points) && bitwise_equal(&self.weights, &other.weights)
    }
}

/// Carrier interval recovered from samples: the point span, padded on both
/// sides by half the excess of the total weight over the span. For the
/// built-in rules (Gauss–Legendre, trapezoid, midpoint grids) this recovers
/// the original interval up to roundoff in the weight total; in general it
/// is a valid superset of the samples.
///
/// # Errors
///
/// Returns [`Error::InvalidArgument`] if the samples cannot carry an
/// interval (empty, non-finite, or a single point with nonpositive total
/// weight).
pub fn infer_interval(points: &[f64], weights: &[f64]) -> Result<Interval> {
    let (Some(&first), Some(&last)) = (points.first(), points.last()) else {
        return Err(Error::InvalidArgument(
            "cannot infer an interval from empty samples".into(),
        ));
    };
    let total: f64 = weights.iter().sum();
    let pad = (0.5 * (total - (last - first))).max(0.0);
    Interval::new(first - pad, last + pad)
}

/// Legendre polynomial `P_n` and its derivative at `x`, via the three-term
/// recurrence. Valid for `x` strictly inside `(-1, 1)`.
fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p = 1.0;
    let mut p_prev = 0.0;
    for j in 1..=n {
        let p_prev2 = p_prev;
        p_prev = p;
        p = ((2 * j - 1) as f64 * x * p_prev - (j - 1) as f64 * p_prev2) / j as f64;
    }
    let dp = n as f64 * (x * p - p_prev) / (x * x - 1.0);
    (p, dp)
}

/// Gauss–Legendre rule with `n` nodes mapped onto `interval`.
///
/// The rule integrates polynomials up to degree `2n - 1` exactly (up to
/// roundoff). Roots of `P_n` are located by Newton iteration on the
/// three-term recurrence and filled in symmetrically, so the reference rule
/// is exactly symmetric about the interval midpoint.
///
/// # Errors
///
/// Returns [`Error::InvalidArgument`] if `n == 0`.
pub fn gauss_legendre(n: usize, interval: Interval) -> Result<QuadratureRule> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "Gauss–Legendre rule requires at least one node".into(),
        ));
    }
    let mut ref_nodes = vec![0.0; n];
    let mut ref_weights = vec![0.0; n];
    let pairs = n.div_ceil(2);
    for i in 1..=pairs {
        let mut z = (PI * (i as f64 - 0.25) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_and_derivative(n, z);
            let dz = p / dp;
            z -= dz;
            if dz.abs() <= 1e-15 {
                break;
            }
        }
        if 2 * i - 1 == n {
            // The middle root of an odd-degree Legendre polynomial is zero.
            z = 0.0;
        }
        let (_, dp) = legendre_and_derivative(n, z);
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        ref_nodes[i - 1] = -z;
        ref_nodes[n - i] = z;
        ref_weights[i - 1] = w;
        ref_weights[n - i] = w;
    }
    let half = 0.5 * interval.length();
    let mid = 0.5 * (interval.lo + interval.hi);
    let nodes = ref_nodes.iter().map(|&x| mid + half * x).collect();
    let weights = ref_weights.iter().map(|&w| half * w).collect();
    QuadratureRule::from_parts(nodes, weights, interval)
}

/// Composite trapezoid rule with `n` equally spaced nodes on `interval`,
/// endpoints included. Endpoint weights are `h/2`, interior weights `h`.
///
/// # Errors
///
/// Returns [`Error::InvalidArgument`] if `n < 2`.
pub fn trapezoid_rule(n: usize, interval: Interval) -> Result<QuadratureRule> {
    if n < 2 {
        return Err(Error::InvalidArgument(
            "trapezoid rule requires at least two nodes".into(),
        ));
    }
    let h = interval.length() / (n - 1) as f64;
    let mut nodes: Vec<f64> = (0..n).map(|i| interval.lo + i as f64 * h).collect();
    nodes[n - 1] = interval.hi;
    let mut weights = vec![h; n];
    weights[0] = 0.5 * h;
    weights[n - 1] = 0.5 * h;
    QuadratureRule::from_parts(nodes, weights, interval)
}

/// Midpoint sampling of `Ω` with `m` cells of equal measure: points at cell
/// midpoints, every weight equal to `length / m`.
///
/// # Errors
///
/// Returns [`Error::InvalidArgument`] if `m == 0`.
pub fn parameter_grid(m: usize, interval: Interval) -> Result<ParameterGrid> {
    if m == 0 {
        return Err(Error::InvalidArgument(
            "parameter grid requires at least one point".into(),
        ));
    }
    let step = interval.length() / m as f64;
    let points = (0..m).map(|j| interval.lo + (j as f64 + 0.5) * step).collect();
    let weights = vec![step; m];
    ParameterGrid::from_parts(points, weights, interval)
}
