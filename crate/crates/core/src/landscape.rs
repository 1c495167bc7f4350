//! Population likelihood over a square grid of two-center configurations,
//! with critical points located from the grid and refined by Newton steps.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::em::{
    classify_critical_point, fmt_f64, ClassifyTolerances, CriticalKind, CriticalPointReport,
};
use crate::error::{Error, Result};
use crate::gmm::MixtureModel;
use crate::population::{evaluate, population_hessian};
use crate::quadrature::QuadratureSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceGrid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Default for SurfaceGrid {
    fn default() -> Self {
        Self {
            lo: -10.0,
            hi: 10.0,
            step: 0.1,
        }
    }
}

impl SurfaceGrid {
    pub fn validate(&self) -> Result<()> {
        if !(self.hi > self.lo && self.step > 0.0 && self.lo.is_finite() && self.hi.is_finite()) {
            return Err(Error::invalid("grid", "need lo < hi and step > 0"));
        }
        if self.points_per_axis() > 20_001 {
            return Err(Error::invalid("grid", "more than 20001 points per axis"));
        }
        Ok(())
    }

    pub fn points_per_axis(&self) -> usize {
        ((self.hi - self.lo) / self.step).round() as usize + 1
    }

    pub fn coordinate(&self, k: usize) -> f64 {
        self.lo + self.step * k as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfacePoint {
    pub mu1: f64,
    pub mu2: f64,
    pub loglik: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Surface {
    pub grid: SurfaceGrid,
    /// Row-major: `mu1` is the slow index.
    pub rows: Vec<SurfacePoint>,
    /// Distinct refined critical points, sorted by `(μ1, μ2)`.
    pub critical_points: Vec<CriticalPointReport>,
}

impl Surface {
    pub fn local_maxima(&self) -> impl Iterator<Item = &CriticalPointReport> {
        self.critical_points
            .iter()
            .filter(|c| c.kind == CriticalKind::LocalMaximum)
    }

    pub fn strict_saddles(&self) -> impl Iterator<Item = &CriticalPointReport> {
        self.critical_points
            .iter()
            .filter(|c| c.kind == CriticalKind::StrictSaddle)
    }

    /// Grid rows, then one row per refined critical point with its kind.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "mu_1,mu_2,loglik,grad_norm,flag")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},grid",
                fmt_f64(r.mu1),
                fmt_f64(r.mu2),
                fmt_f64(r.loglik),
                fmt_f64(r.grad_norm)
            )?;
        }
        for c in &self.critical_points {
            let kind = match c.kind {
                CriticalKind::LocalMaximum => "local-maximum",
                CriticalKind::StrictSaddle => "strict-saddle",
                CriticalKind::Indeterminate => "indeterminate",
            };
            writeln!(
                out,
                "{},{},{},{},{kind}",
                fmt_f64(c.point[0]),
                fmt_f64(c.point[1]),
                fmt_f64(c.log_likelihood),
                fmt_f64(c.grad_norm)
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineSettings {
    pub max_newton_steps: usize,
    /// Refined points closer than this are merged.
    pub merge_radius: f64,
    pub tolerances: ClassifyTolerances,
}

impl Default for RefineSettings {
    fn default() -> Self {
        Self {
            max_newton_steps: 60,
            merge_radius: 1e-6,
            tolerances: ClassifyTolerances::default(),
        }
    }
}

/// Newton iteration on `∇L = 0`. Returns `None` if the Hessian is singular
/// or the iterate never reaches a gradient norm of `grad_tol / 10`.
pub fn newton_refine(
    start: &[f64],
    truth: &MixtureModel,
    quad: &QuadratureSpec,
    max_steps: usize,
    grad_tol: f64,
) -> Result<Option<Vec<f64>>> {
    let mut mu = start.to_vec();
    for _ in 0..=max_steps {
        let e = evaluate(&mu, truth, quad)?;
        if e.grad_norm() <= grad_tol / 10.0 {
            return Ok(Some(mu));
        }
        let h: DMatrix<f64> = population_hessian(&mu, truth, quad)?;
        let g = DVector::from_vec(e.gradient.clone());
        let Some(delta) = h.lu().solve(&g) else {
            return Ok(None);
        };
        if !delta.iter().all(|v| v.is_finite()) {
            return Ok(None);
        }
        for (m, d) in mu.iter_mut().zip(delta.iter()) {
            *m -= d;
        }
    }
    Ok(None)
}

/// Seeds for refinement: grid local maxima of `L` and grid local minima of
/// `‖∇L‖` over the 8-neighborhood (interior points only).
fn grid_seeds(rows: &[SurfacePoint], n: usize) -> Vec<[f64; 2]> {
    let at = |i: usize, j: usize| &rows[i * n + j];
    let mut seeds = Vec::new();
    for i in 1..n.saturating_sub(1) {
        for j in 1..n - 1 {
            let c = at(i, j);
            let mut is_max = true;
            let mut is_min_grad = true;
            for di in [-1i64, 0, 1] {
                for dj in [-1i64, 0, 1] {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    let o = at((i as i64 + di) as usize, (j as i64 + dj) as usize);
                    is_max &= c.loglik >= o.loglik;
                    is_min_grad &= c.grad_norm <= o.grad_norm;
                }
            }
            if is_max || is_min_grad {
                seeds.push([c.mu1, c.mu2]);
            }
        }
    }
    seeds
}

/// Evaluates `L` and `‖∇L‖` on the grid, then refines grid seeds to critical
/// points inside the grid box and classifies them.
pub fn likelihood_surface(
    truth: &MixtureModel,
    grid: &SurfaceGrid,
    quad: &QuadratureSpec,
    refine: &RefineSettings,
) -> Result<Surface> {
    grid.validate()?;
    truth.centers_1d()?;
    let n = grid.points_per_axis();
    let rows = (0..n * n)
        .into_par_iter()
        .map(|k| {
            let (mu1, mu2) = (grid.coordinate(k / n), grid.coordinate(k % n));
            let e = evaluate(&[mu1, mu2], truth, quad)?;
            Ok(SurfacePoint {
                mu1,
                mu2,
                loglik: e.log_likelihood,
                grad_norm: e.grad_norm(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let refined = grid_seeds(&rows, n)
        .par_iter()
        .map(|s| {
            newton_refine(
                s,
                truth,
                quad,
                refine.max_newton_steps,
                refine.tolerances.grad_tol,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let inside = |p: &[f64]| {
        p.iter()
            .all(|&v| v >= grid.lo - 1e-9 && v <= grid.hi + 1e-9)
    };
    let mut points: Vec<Vec<f64>> = Vec::new();
    for p in refined.into_iter().flatten().filter(|p| inside(p)) {
        let dup = points.iter().any(|q| {
            q.iter()
                .zip(&p)
                .all(|(a, b)| (a - b).abs() <= refine.merge_radius)
        });
        if !dup {
            points.push(p);
        }
    }
    points.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    let critical_points = points
        .iter()
        .map(|p| classify_critical_point(p, truth, quad, &refine.tolerances))
        .collect::<Result<Vec<_>>>()?;
    Ok(Surface {
        grid: *grid,
        rows,
        critical_points,
    })
}
