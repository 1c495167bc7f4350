//! Deterministic expectations under a one-dimensional uniform mixture.
//!
//! An expectation `E f(X)` with `X ~ GMM(μ*)` splits into one Gaussian
//! integral per true component. Each integral is evaluated around its own
//! component mean (`x = μ*_j + z`), so nodes stay within a few dozen
//! standard deviations of a mean no matter how far apart the components are.
//!
//! Integrands built from candidate centers `μ` switch between quadratic
//! branches at the midpoints of neighbouring candidates, over a width of
//! `1/|μ_b - μ_a|`. Gauss–Hermite resolves that only when the switch is
//! gentle, so [`component_rule`] falls back to Gauss–Legendre panels graded
//! toward every sharp midpoint inside the component's mass.

use std::borrow::Cow;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::MixtureModel;

/// Node weights below this are dropped from Gauss–Hermite rules.
const NEGLIGIBLE_WEIGHT: f64 = 1e-40;

/// Midpoint switches steeper than this are integrated piecewise.
const SHARP_SLOPE: f64 = 1.5;
/// Midpoints farther than this many standard deviations are ignored.
const SWITCH_REACH: f64 = 12.0;
/// Half-width of the piecewise domain, in standard deviations.
const PANEL_REACH: f64 = 14.0;
/// Longest panel away from a switch.
const PANEL_MAX: f64 = 0.5;
const LEGENDRE_ORDER: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Gauss–Hermite with `order` nodes per component.
    Hermite,
    /// Trapezoid rule on `[-r, r]` standard deviations with `order` points.
    /// Only used to cross-check the Hermite rule.
    TrapezoidValidation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureSpec {
    pub order: usize,
    pub scheme: Scheme,
    pub truncation_radius: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            order: 200,
            scheme: Scheme::Hermite,
            truncation_radius: 12.0,
        }
    }
}

impl QuadratureSpec {
    pub fn hermite(order: usize) -> Self {
        Self {
            order,
            ..Self::default()
        }
    }

    /// The cross-check scheme: 4000 trapezoid points over ±12 standard deviations.
    pub fn validation() -> Self {
        Self::trapezoid(4000, 12.0)
    }

    pub fn trapezoid(points: usize, radius: f64) -> Self {
        Self {
            order: points,
            scheme: Scheme::TrapezoidValidation,
            truncation_radius: radius,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.order < 16 {
            return Err(Error::invalid("order", format!("{} < 16", self.order)));
        }
        if !(self.truncation_radius >= 8.0) {
            return Err(Error::invalid(
                "truncation_radius",
                format!("{} < 8", self.truncation_radius),
            ));
        }
        Ok(())
    }
}

/// Nodes and weights for `E g(Z)`, `Z ~ N(0, 1)`.
#[derive(Debug, Clone)]
pub struct NodeRule {
    pub offsets: Vec<f64>,
    pub weights: Vec<f64>,
}

impl NodeRule {
    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.offsets
            .iter()
            .zip(&self.weights)
            .map(|(&z, &w)| w * f(z))
            .sum()
    }
}

/// Physicists' Gauss–Hermite nodes and weights (weight function `e^{-u²}`),
/// ascending. Nodes start from the Golub–Welsch eigenvalues and are polished
/// by Newton steps on the orthonormal recurrence, which also yields weights
/// with full relative accuracy in the tails.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    const PI_M4: f64 = 0.751_125_544_464_942_5;
    let jacobi = DMatrix::<f64>::from_fn(n, n, |i, j| {
        if i.abs_diff(j) == 1 {
            (i.max(j) as f64 / 2.0).sqrt()
        } else {
            0.0
        }
    });
    let mut guesses: Vec<f64> = jacobi.symmetric_eigenvalues().iter().copied().collect();
    guesses.sort_by(f64::total_cmp);
    let sqrt_2n = (2.0 * n as f64).sqrt();
    let mut x = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    for mut z in guesses {
        for _ in 0..8 {
            let (p1, p2) = orthonormal_hermite(n, z, PI_M4);
            let step = p1 / (sqrt_2n * p2);
            z -= step;
            if step.abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        let (_, p2) = orthonormal_hermite(n, z, PI_M4);
        let pp = sqrt_2n * p2;
        x.push(z);
        w.push(2.0 / (pp * pp));
    }
    // exact symmetry
    for i in 0..n / 2 {
        let (a, b) = (x[n - 1 - i], -x[i]);
        let m = 0.5 * (a + b);
        x[n - 1 - i] = m;
        x[i] = -m;
        let wm = 0.5 * (w[i] + w[n - 1 - i]);
        w[i] = wm;
        w[n - 1 - i] = wm;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

/// Values `(p_n(z), p_{n-1}(z))` of the orthonormal Hermite polynomials.
fn orthonormal_hermite(n: usize, z: f64, p0: f64) -> (f64, f64) {
    let mut p1 = p0;
    let mut p2 = 0.0;
    for j in 0..n {
        let p3 = p2;
        p2 = p1;
        let jf = j as f64;
        p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
    }
    (p1, p2)
}

fn build_rule(spec: &QuadratureSpec) -> NodeRule {
    match spec.scheme {
        Scheme::Hermite => {
            let (u, w) = gauss_hermite(spec.order);
            let norm = PI.sqrt();
            let (offsets, weights) = u
                .iter()
                .zip(&w)
                .map(|(u, w)| (std::f64::consts::SQRT_2 * u, w / norm))
                .filter(|&(_, w)| w >= NEGLIGIBLE_WEIGHT)
                .unzip();
            NodeRule { offsets, weights }
        }
        Scheme::TrapezoidValidation => {
            let r = spec.truncation_radius;
            let n = spec.order;
            let h = 2.0 * r / (n - 1) as f64;
            let density = |z: f64| (-0.5 * z * z).exp() / (2.0 * PI).sqrt();
            let (offsets, weights) = (0..n)
                .map(|k| {
                    let z = -r + h * k as f64;
                    let end = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
                    (z, end * h * density(z))
                })
                .unzip();
            NodeRule { offsets, weights }
        }
    }
}

type RuleKey = (Scheme, usize, u64);

/// Cached node rule for `spec`.
pub fn node_rule(spec: &QuadratureSpec) -> Result<Arc<NodeRule>> {
    spec.validate()?;
    static CACHE: OnceLock<Mutex<HashMap<RuleKey, Arc<NodeRule>>>> = OnceLock::new();
    let key = (spec.scheme, spec.order, spec.truncation_radius.to_bits());
    let cache = CACHE.get_or_init(Default::default);
    if let Some(rule) = cache.lock().expect("rule cache poisoned").get(&key) {
        return Ok(Arc::clone(rule));
    }
    let rule = Arc::new(build_rule(spec));
    cache
        .lock()
        .expect("rule cache poisoned")
        .insert(key, Arc::clone(&rule));
    Ok(rule)
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for k in 0..n {
        let mut z = -(PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for j in 2..=n {
                let jf = j as f64;
                (p0, p1) = (p1, ((2.0 * jf - 1.0) * z * p1 - (jf - 1.0) * p0) / jf);
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let step = p1 / dp;
            z -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        x[k] = z;
        w[k] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

fn legendre16() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(LEGENDRE_ORDER))
}

/// Offsets `(z, slope)` of the sharp candidate midpoints near `center`.
fn sharp_switches(center: f64, mu: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted = mu.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted
        .windows(2)
        .filter_map(|p| {
            let slope = p[1] - p[0];
            let z = 0.5 * (p[0] + p[1]) - center;
            (slope > SHARP_SLOPE && z.abs() < SWITCH_REACH).then_some((z, slope))
        })
        .collect()
}

/// Panel edges on `[-PANEL_REACH, PANEL_REACH]`, geometrically graded toward each switch.
fn panel_edges(switches: &[(f64, f64)]) -> Vec<f64> {
    let steps = (2.0 * PANEL_REACH / PANEL_MAX).round() as usize;
    let mut edges: Vec<f64> = (0..=steps)
        .map(|k| -PANEL_REACH + PANEL_MAX * k as f64)
        .collect();
    for &(z, slope) in switches {
        edges.push(z);
        let mut h = 1.0 / slope;
        while h < PANEL_MAX {
            edges.push(z - h);
            edges.push(z + h);
            h *= 2.0;
        }
    }
    edges.retain(|e| e.abs() <= PANEL_REACH);
    edges.sort_by(f64::total_cmp);
    edges.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
    edges
}

fn piecewise_rule(switches: &[(f64, f64)]) -> NodeRule {
    let (gx, gw) = legendre16();
    let norm = (2.0 * PI).sqrt();
    let edges = panel_edges(switches);
    let mut offsets = Vec::with_capacity(edges.len() * LEGENDRE_ORDER);
    let mut weights = Vec::with_capacity(edges.len() * LEGENDRE_ORDER);
    for pair in edges.windows(2) {
        let (mid, half) = (0.5 * (pair[0] + pair[1]), 0.5 * (pair[1] - pair[0]));
        for (x, w) in gx.iter().zip(gw) {
            let z = mid + half * x;
            offsets.push(z);
            weights.push(half * w * (-0.5 * z * z).exp() / norm);
        }
    }
    NodeRule { offsets, weights }
}

/// Rule for the integral around `center` of an integrand built from the
/// candidates `mu`: the shared rule unless a sharp switch lies in the way.
/// The validation scheme is always returned unchanged.
pub fn component_rule<'a>(
    base: &'a NodeRule,
    scheme: Scheme,
    center: f64,
    mu: &[f64],
) -> Cow<'a, NodeRule> {
    if scheme != Scheme::Hermite {
        return Cow::Borrowed(base);
    }
    let switches = sharp_switches(center, mu);
    if switches.is_empty() {
        Cow::Borrowed(base)
    } else {
        Cow::Owned(piecewise_rule(&switches))
    }
}

/// Scalar centers of a one-dimensional truth model.
pub(crate) fn truth_centers(truth: &MixtureModel) -> Result<Vec<f64>> {
    truth.centers_1d()
}

/// `E f(X)` for `X ~ GMM(truth)`, one-dimensional truth only.
pub fn expect_under_mixture(
    f: impl Fn(f64) -> f64,
    truth: &MixtureModel,
    quad: &QuadratureSpec,
) -> Result<f64> {
    let centers = truth_centers(truth)?;
    let rule = node_rule(quad)?;
    let total: f64 = centers.iter().map(|&c| rule.expect(|z| f(c + z))).sum();
    Ok(total / centers.len() as f64)
}
