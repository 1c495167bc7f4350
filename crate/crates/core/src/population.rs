//! Population likelihood of a one-dimensional uniform mixture and its
//! derivatives.
//!
//! For candidate centers `μ` and truth `GMM(μ*)`:
//!
//! * `L(μ) = E log((1/M) Σ_i φ(X - μ_i))`
//! * `∂L/∂μ_i = E[w_i(X) (X - μ_i)]`
//! * `∂²L/∂μ_i² = -E[w_i] + E[(w_i - w_i²)(X - μ_i)²]`
//! * `∂²L/∂μ_i∂μ_j = -E[w_i w_j (X - μ_i)(X - μ_j)]`
//!
//! The second-order part without the `-E[w_i]` diagonal is the Q-matrix,
//! which is positive semidefinite. All expectations come from
//! [`crate::quadrature`]. Displacements `X - μ_i` are formed as
//! `(μ*_j - μ_i) + z` so nothing cancels at large center magnitudes.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::gmm::{MixtureModel, HALF_LN_2PI};
use crate::quadrature::{
    component_rule, node_rule, truth_centers, NodeRule, QuadratureSpec, Scheme,
};

/// Per-candidate weight mass and first moment.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMoments {
    /// `E[w_i(X)]`.
    pub ew: Vec<f64>,
    /// `E[w_i(X) X]`.
    pub ewx: Vec<f64>,
    /// `E[w_i(X) X] / E[w_i(X)]`, evaluated in the log domain when the mass
    /// underflows.
    pub centroid: Vec<f64>,
}

/// Likelihood, weight mass and gradient from a single quadrature pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub log_likelihood: f64,
    pub ew: Vec<f64>,
    pub gradient: Vec<f64>,
    pub centroid: Vec<f64>,
}

impl Evaluation {
    pub fn grad_norm(&self) -> f64 {
        self.gradient.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

struct Node<'a> {
    mass: f64,
    disp: &'a [f64],
    weights: &'a [f64],
    log_density: f64,
}

fn check_candidates(mu: &[f64]) -> Result<()> {
    if mu.is_empty() {
        return Err(Error::Empty("candidate centers"));
    }
    if mu.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("mu", "candidate centers must be finite"));
    }
    Ok(())
}

/// Visits every quadrature node of every truth component with the
/// displacements and membership weights of all candidates there.
fn sweep(
    mu: &[f64],
    truth: &[f64],
    rule: &NodeRule,
    scheme: Scheme,
    mut visit: impl FnMut(&Node<'_>),
) {
    let k = mu.len();
    let log_k = (k as f64).ln();
    let share = 1.0 / truth.len() as f64;
    let mut disp = vec![0.0; k];
    let mut weights = vec![0.0; k];
    for &center in truth {
        let local = component_rule(rule, scheme, center, mu);
        for (&z, &nu) in local.offsets.iter().zip(&local.weights) {
            let mut max = f64::NEG_INFINITY;
            for (d, &m) in disp.iter_mut().zip(mu) {
                *d = (center - m) + z;
                max = max.max(-0.5 * *d * *d);
            }
            let mut total = 0.0;
            for (w, d) in weights.iter_mut().zip(&disp) {
                *w = (-0.5 * d * d - max).exp();
                total += *w;
            }
            for w in weights.iter_mut() {
                *w = (*w / total).min(1.0);
            }
            visit(&Node {
                mass: share * nu,
                disp: &disp,
                weights: &weights,
                log_density: max + total.ln() - log_k - HALF_LN_2PI,
            });
        }
    }
}

/// `E[w_i (X - μ_i)] / E[w_i]` accumulated with a running log-sum-exp, for
/// candidates whose mass underflows in the direct sum.
fn log_domain_shift(i: usize, mu: &[f64], truth: &[f64], rule: &NodeRule, scheme: Scheme) -> f64 {
    let mut max = f64::NEG_INFINITY;
    let mut sum = 0.0;
    let mut sum_d = 0.0;
    let mut logits = vec![0.0; mu.len()];
    for &center in truth {
        let local = component_rule(rule, scheme, center, mu);
        for (&z, &nu) in local.offsets.iter().zip(&local.weights) {
            if nu <= 0.0 {
                continue;
            }
            let mut top = f64::NEG_INFINITY;
            for (l, &m) in logits.iter_mut().zip(mu) {
                let d = (center - m) + z;
                *l = -0.5 * d * d;
                top = top.max(*l);
            }
            let lse = top + logits.iter().map(|l| (l - top).exp()).sum::<f64>().ln();
            let lw = nu.ln() + logits[i] - lse;
            let d = (center - mu[i]) + z;
            if lw > max {
                let scale = (max - lw).exp();
                sum *= scale;
                sum_d *= scale;
                max = lw;
            }
            let e = (lw - max).exp();
            sum += e;
            sum_d += e * d;
        }
    }
    if sum > 0.0 {
        sum_d / sum
    } else {
        0.0
    }
}

fn centroid_from(
    mu: &[f64],
    ew: &[f64],
    ewd: &[f64],
    truth: &[f64],
    rule: &NodeRule,
    scheme: Scheme,
) -> Vec<f64> {
    (0..mu.len())
        .map(|i| {
            if ew[i] > 1e-280 {
                mu[i] + ewd[i] / ew[i]
            } else {
                mu[i] + log_domain_shift(i, mu, truth, rule, scheme)
            }
        })
        .collect()
}

/// Log likelihood, weight masses, gradient and M-step centroids in one pass.
pub fn evaluate(mu: &[f64], truth: &MixtureModel, quad: &QuadratureSpec) -> Result<Evaluation> {
    check_candidates(mu)?;
    let tc = truth_centers(truth)?;
    let rule = node_rule(quad)?;
    let k = mu.len();
    let mut ll = 0.0;
    let mut ew = vec![0.0; k];
    let mut grad = vec![0.0; k];
    sweep(mu, &tc, &rule, quad.scheme, |n| {
        ll += n.mass * n.log_density;
        for i in 0..k {
            let mw = n.mass * n.weights[i];
            ew[i] += mw;
            grad[i] += mw * n.disp[i];
        }
    });
    let centroid = centroid_from(mu, &ew, &grad, &tc, &rule, quad.scheme);
    Ok(Evaluation {
        log_likelihood: ll,
        ew,
        gradient: grad,
        centroid,
    })
}

pub fn population_log_likelihood(
    mu: &[f64],
    truth: &MixtureModel,
    quad: &QuadratureSpec,
) -> Result<f64> {
    check_candidates(mu)?;
    let tc = truth_centers(truth)?;
    let rule = node_rule(quad)?;
    let mut ll = 0.0;
    sweep(mu, &tc, &rule, quad.scheme, |n| {
        ll += n.mass * n.log_density
    });
    Ok(ll)
}

pub fn weight_moments(
    mu: &[f64],
    truth: &MixtureModel,
    quad: &QuadratureSpec,
) -> Result<WeightMoments> {
    check_candidates(mu)?;
    let tc = truth_centers(truth)?;
    let rule = node_rule(quad)?;
    let k = mu.len();
    let mut ew = vec![0.0; k];
    let mut ewd = vec![0.0; k];
    let mut ewx = vec![0.0; k];
    sweep(mu, &tc, &rule, quad.scheme, |n| {
        for i in 0..k {
            let mw = n.mass * n.weights[i];
            ew[i] += mw;
            ewd[i] += mw * n.disp[i];
        }
    });
    for i in 0..k {
        ewx[i] = ewd[i] + mu[i] * ew[i];
    }
    let centroid = centroid_from(mu, &ew, &ewd, &tc, &rule, quad.scheme);
    Ok(WeightMoments { ew, ewx, centroid })
}

/// `∇L(μ)`, component `i` equal to `E[w_i(X)(X - μ_i)]`.
pub fn population_gradient(
    mu: &[f64],
    truth: &MixtureModel,
    quad: &QuadratureSpec,
) -> Result<Vec<f64>> {
    Ok(evaluate(mu, truth, quad)?.gradient)
}

/// Q-matrix and weight masses.
fn second_order(
    mu: &[f64],
    truth: &MixtureModel,
    quad: &QuadratureSpec,
) -> Result<(DMatrix<f64>, Vec<f64>)> {
    check_candidates(mu)?;
    let tc = truth_centers(truth)?;
    let rule = node_rule(quad)?;
    let k = mu.len();
    let mut q = DMatrix::<f64>::zeros(k, k);
    let mut ew = vec![0.0; k];
    sweep(mu, &tc, &rule, quad.scheme, |n| {
        for i in 0..k {
            let wi = n.weights[i];
            let di = n.disp[i];
            ew[i] += n.mass * wi;
            q[(i, i)] += n.mass * (wi - wi * wi) * di * di;
            for j in 0..i {
                q[(i, j)] -= n.mass * wi * n.weights[j] * di * n.disp[j];
            }
        }
    });
    for i in 0..k {
        for j in 0..i {
            q[(j, i)] = q[(i, j)];
        }
    }
    if k == 1 {
        // w ≡ 1: unit mass and no second-order term.
        ew[0] = 1.0;
        q[(0, 0)] = 0.0;
    }
    Ok((q, ew))
}

/// `Q_ii = E[(w_i - w_i²)(X - μ_i)²]`, `Q_ij = -E[w_i w_j (X - μ_i)(X - μ_j)]`.
pub fn q_matrix(mu: &[f64], truth: &MixtureModel, quad: &QuadratureSpec) -> Result<DMatrix<f64>> {
    Ok(second_order(mu, truth, quad)?.0)
}

/// `∇²L(μ) = Q - diag(E[w_i])`.
pub fn population_hessian(
    mu: &[f64],
    truth: &MixtureModel,
    quad: &QuadratureSpec,
) -> Result<DMatrix<f64>> {
    let (mut h, ew) = second_order(mu, truth, quad)?;
    for (i, e) in ew.iter().enumerate() {
        h[(i, i)] -= e;
    }
    Ok(h)
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = m
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(f64::total_cmp);
    ev
}
