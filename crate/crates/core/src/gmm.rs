//! Uniform-weight, identity-covariance Gaussian mixtures.
//!
//! Densities are always evaluated in the log domain with a max shift, so
//! centers at magnitudes around 1e9 never produce overflowing or
//! underflowing exponentials.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `0.5 * ln(2π)`.
pub const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// Mixture of `M` unit-variance Gaussians in `R^d` with weights `1/M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModel", into = "RawModel")]
pub struct MixtureModel {
    dim: usize,
    centers: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct RawModel {
    dim: usize,
    centers: Vec<Vec<f64>>,
}

impl TryFrom<RawModel> for MixtureModel {
    type Error = Error;

    fn try_from(raw: RawModel) -> Result<Self> {
        MixtureModel::new(raw.dim, raw.centers)
    }
}

impl From<MixtureModel> for RawModel {
    fn from(m: MixtureModel) -> Self {
        RawModel {
            dim: m.dim,
            centers: m.centers,
        }
    }
}

impl MixtureModel {
    pub fn new(dim: usize, centers: Vec<Vec<f64>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dim", "must be positive"));
        }
        if centers.is_empty() {
            return Err(Error::Empty("mixture needs at least one center"));
        }
        for c in &centers {
            if c.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: c.len(),
                });
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("centers", "coordinates must be finite"));
            }
        }
        Ok(Self { dim, centers })
    }

    /// One-dimensional model from scalar centers.
    pub fn from_1d(centers: &[f64]) -> Result<Self> {
        Self::new(1, centers.iter().map(|&c| vec![c]).collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.centers.len()
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    /// Scalar centers of a one-dimensional model.
    pub fn centers_1d(&self) -> Result<Vec<f64>> {
        if self.dim != 1 {
            return Err(Error::UnsupportedDimension(self.dim));
        }
        Ok(self.centers.iter().map(|c| c[0]).collect())
    }

    /// Mean of the mixture, i.e. the average of its centers.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for c in &self.centers {
            for (acc, v) in m.iter_mut().zip(c) {
                *acc += v;
            }
        }
        let k = self.count() as f64;
        m.iter_mut().for_each(|v| *v /= k);
        m
    }
}

/// Posterior membership probabilities of one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    pub weights: Vec<f64>,
}

/// A draw together with the index of the component that generated it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub point: Vec<f64>,
    pub component: usize,
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

fn sq_dist(x: &[f64], mu: &[f64]) -> f64 {
    x.iter().zip(mu).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `log Σ exp(v_i)`, shifted by the maximum. Terms are summed in ascending
/// order so the result does not depend on the order of `values`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let mut scaled: Vec<f64> = values.iter().map(|v| (v - max).exp()).collect();
    scaled.sort_by(f64::total_cmp);
    max + scaled.iter().sum::<f64>().ln()
}

pub fn log_gaussian_pdf(x: &[f64], mu: &[f64]) -> Result<f64> {
    check_dim(x.len(), mu.len())?;
    Ok(-(x.len() as f64) * HALF_LN_2PI - 0.5 * sq_dist(x, mu))
}

fn log_mixture_at(x: &[f64], centers: &[Vec<f64>]) -> Result<f64> {
    let mut terms = Vec::with_capacity(centers.len());
    for c in centers {
        terms.push(log_gaussian_pdf(x, c)?);
    }
    Ok(log_sum_exp(&terms) - (centers.len() as f64).ln())
}

/// Log density of the uniform mixture at `x`.
pub fn log_mixture_density(x: &[f64], model: &MixtureModel) -> Result<f64> {
    check_dim(model.dim(), x.len())?;
    log_mixture_at(x, model.centers())
}

/// Membership weights `w_i(x) ∝ exp(-|x - μ_i|² / 2)`.
pub fn responsibilities(x: &[f64], centers: &[Vec<f64>]) -> Result<Responsibilities> {
    if centers.is_empty() {
        return Err(Error::Empty("responsibilities need at least one center"));
    }
    let mut logits = Vec::with_capacity(centers.len());
    for c in centers {
        check_dim(x.len(), c.len())?;
        logits.push(-0.5 * sq_dist(x, c));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scaled: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = scaled.iter().sum();
    let weights = scaled.iter().map(|e| (e / total).clamp(0.0, 1.0)).collect();
    Ok(Responsibilities { weights })
}

/// Draws `n` labeled points: a uniform component index, then a standard
/// normal offset from that component's center.
pub fn sample<R: Rng + ?Sized>(model: &MixtureModel, n: usize, rng: &mut R) -> Vec<LabeledSample> {
    (0..n)
        .map(|_| {
            let component = rng.random_range(0..model.count());
            let point = model.centers()[component]
                .iter()
                .map(|c| c + rng.sample::<f64, _>(StandardNormal))
                .collect();
            LabeledSample { point, component }
        })
        .collect()
}

/// Smallest Euclidean distance between two distinct centers.
pub fn min_separation(model: &MixtureModel) -> Result<f64> {
    if model.count() < 2 {
        return Err(Error::invalid(
            "model",
            "separation is undefined for a single component",
        ));
    }
    let cs = model.centers();
    let mut best = f64::INFINITY;
    for i in 0..cs.len() {
        for j in i + 1..cs.len() {
            best = best.min(sq_dist(&cs[i], &cs[j]).sqrt());
        }
    }
    Ok(best)
}

/// Average log mixture density of `data` under candidate centers `mu`.
pub fn sample_log_likelihood(data: &[Vec<f64>], mu: &[Vec<f64>]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Empty("sample likelihood needs data"));
    }
    if mu.is_empty() {
        return Err(Error::Empty("sample likelihood needs centers"));
    }
    let mut total = 0.0;
    for x in data {
        total += log_mixture_at(x, mu)?;
    }
    Ok(total / data.len() as f64)
}
