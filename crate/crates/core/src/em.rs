//! EM and first-order EM, on the sample objective and on the population
//! objective, with trajectory recording and critical-point classification.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::constructions::Interval;
use crate::error::{Error, Result};
use crate::gmm::{responsibilities, sample_log_likelihood, MixtureModel};
use crate::population::{
    evaluate, population_gradient, population_hessian, population_log_likelihood,
    symmetric_eigenvalues,
};
use crate::quadrature::QuadratureSpec;

/// Iterations recorded in full before thinning to every tenth.
pub const FULL_HISTORY_CAP: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StoppingRule {
    pub max_iters: usize,
    /// Threshold on `‖μ^(t+1) - μ^(t)‖_∞`. It is raised to a few ulps of the
    /// largest center magnitude when that is coarser.
    pub step_tol: f64,
    /// Optional early exit once the gradient norm drops below this value.
    pub grad_tol: Option<f64>,
}

impl Default for StoppingRule {
    fn default() -> Self {
        Self {
            max_iters: 10_000,
            step_tol: 1e-10,
            grad_tol: None,
        }
    }
}

impl StoppingRule {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters", "must be at least 1"));
        }
        if !(self.step_tol > 0.0) {
            return Err(Error::invalid("step_tol", "must be positive"));
        }
        Ok(())
    }

    fn effective_step_tol(&self, mu: &[f64]) -> f64 {
        let scale = mu.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        self.step_tol.max(64.0 * f64::EPSILON * scale)
    }
}

/// Update rule together with the objective it acts on.
#[derive(Debug, Clone, Copy)]
pub enum Stepper<'a> {
    SampleEm {
        data: &'a [Vec<f64>],
    },
    PopulationEm {
        truth: &'a MixtureModel,
        quad: QuadratureSpec,
    },
    FirstOrderEm {
        truth: &'a MixtureModel,
        quad: QuadratureSpec,
        step: f64,
    },
}

impl Stepper<'_> {
    fn dim(&self) -> Result<usize> {
        match self {
            Stepper::SampleEm { data } => data
                .first()
                .map(Vec::len)
                .ok_or(Error::Empty("sample EM needs data")),
            _ => Ok(1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    StepTolerance,
    GradTolerance,
    MaxIters,
}

/// Region counts tracked along a one-dimensional run: centers inside
/// `left`, inside `right`, and outside `outer`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackedRegions {
    pub left: Interval,
    pub right: Interval,
    pub outer: Option<Interval>,
}

impl TrackedRegions {
    pub fn count(&self, centers: &[f64]) -> [usize; 3] {
        let n1 = centers.iter().filter(|&&c| self.left.contains(c)).count();
        let n2 = centers.iter().filter(|&&c| self.right.contains(c)).count();
        let n3 = match &self.outer {
            Some(o) => centers.iter().filter(|&&c| !o.contains(c)).count(),
            None => 0,
        };
        [n1, n2, n3]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmTrajectory {
    pub dim: usize,
    /// Iteration index of each record.
    pub t: Vec<usize>,
    /// Flattened centers, `M * dim` values per record.
    pub iterates: Vec<Vec<f64>>,
    pub likelihoods: Vec<f64>,
    pub grad_norms: Vec<f64>,
    pub urn_counts: Option<Vec<[usize; 3]>>,
    pub stop: StopReason,
}

impl EmTrajectory {
    pub fn iterations(&self) -> usize {
        *self.t.last().expect("trajectory has at least one record")
    }

    pub fn final_point(&self) -> &[f64] {
        self.iterates
            .last()
            .expect("trajectory has at least one record")
    }

    pub fn final_likelihood(&self) -> f64 {
        *self
            .likelihoods
            .last()
            .expect("trajectory has at least one record")
    }

    pub fn final_grad_norm(&self) -> f64 {
        *self
            .grad_norms
            .last()
            .expect("trajectory has at least one record")
    }

    pub fn converged(&self) -> bool {
        self.stop != StopReason::MaxIters
    }

    /// CSV with columns `t, mu_1..mu_M, loglik, grad_norm, n1, n2, n3`.
    /// Multi-dimensional centers expand to `mu_i_k`. Floats carry 17
    /// significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let width = self.iterates.first().map_or(0, Vec::len);
        let mut header = vec!["t".to_string()];
        for c in 0..width / self.dim.max(1) {
            if self.dim == 1 {
                header.push(format!("mu_{}", c + 1));
            } else {
                header.extend((0..self.dim).map(|k| format!("mu_{}_{}", c + 1, k + 1)));
            }
        }
        header.extend(["loglik", "grad_norm", "n1", "n2", "n3"].map(String::from));
        writeln!(out, "{}", header.join(","))?;
        for r in 0..self.t.len() {
            let mut row = vec![self.t[r].to_string()];
            row.extend(self.iterates[r].iter().map(|v| fmt_f64(*v)));
            row.push(fmt_f64(self.likelihoods[r]));
            row.push(fmt_f64(self.grad_norms[r]));
            match &self.urn_counts {
                Some(c) => row.extend(c[r].iter().map(usize::to_string)),
                None => row.extend(["", "", ""].map(String::from)),
            }
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Float formatting shared by every CSV artifact.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn to_rows(flat: &[f64], dim: usize) -> Vec<Vec<f64>> {
    flat.chunks(dim).map(<[f64]>::to_vec).collect()
}

fn check_step(s: f64) -> Result<()> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::invalid("step", format!("{s} is outside (0, 1)")));
    }
    Ok(())
}

struct SampleStats {
    log_likelihood: f64,
    gradient: Vec<Vec<f64>>,
    next: Vec<Vec<f64>>,
}

fn sample_stats(data: &[Vec<f64>], mu: &[Vec<f64>]) -> Result<SampleStats> {
    if data.is_empty() {
        return Err(Error::Empty("sample EM needs data"));
    }
    let d = mu.first().map(Vec::len).ok_or(Error::Empty("centers"))?;
    let k = mu.len();
    let n = data.len() as f64;
    let mut mass = vec![0.0; k];
    let mut first = vec![vec![0.0; d]; k];
    let mut gradient = vec![vec![0.0; d]; k];
    for x in data {
        let w = responsibilities(x, mu)?.weights;
        for i in 0..k {
            mass[i] += w[i];
            for c in 0..d {
                first[i][c] += w[i] * x[c];
                gradient[i][c] += w[i] * (x[c] - mu[i][c]) / n;
            }
        }
    }
    let next = (0..k)
        .map(|i| {
            if mass[i] > 0.0 {
                first[i].iter().map(|v| v / mass[i]).collect()
            } else {
                mu[i].clone()
            }
        })
        .collect();
    Ok(SampleStats {
        log_likelihood: sample_log_likelihood(data, mu)?,
        gradient,
        next,
    })
}

/// One EM step on the sample likelihood. A component with zero total
/// weight keeps its center.
pub fn em_step_sample(data: &[Vec<f64>], mu: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    Ok(sample_stats(data, mu)?.next)
}

/// Population M-step `μ_i ← E[w_i X] / E[w_i]`.
pub fn em_step_population(
    mu: &[f64],
    truth: &MixtureModel,
    quad: &QuadratureSpec,
) -> Result<Vec<f64>> {
    Ok(evaluate(mu, truth, quad)?.centroid)
}

/// `μ ← μ + s ∇L(μ)` with `s ∈ (0, 1)`.
pub fn first_order_em_step(
    mu: &[f64],
    truth: &MixtureModel,
    s: f64,
    quad: &QuadratureSpec,
) -> Result<Vec<f64>> {
    check_step(s)?;
    let g = population_gradient(mu, truth, quad)?;
    Ok(mu.iter().zip(&g).map(|(m, g)| m + s * g).collect())
}

struct StepOutcome {
    log_likelihood: f64,
    grad_norm: f64,
    next: Vec<f64>,
}

fn advance(stepper: &Stepper<'_>, mu: &[f64], dim: usize) -> Result<StepOutcome> {
    match stepper {
        Stepper::SampleEm { data } => {
            let stats = sample_stats(data, &to_rows(mu, dim))?;
            let grad_norm = stats
                .gradient
                .iter()
                .flatten()
                .map(|g| g * g)
                .sum::<f64>()
                .sqrt();
            Ok(StepOutcome {
                log_likelihood: stats.log_likelihood,
                grad_norm,
                next: stats.next.concat(),
            })
        }
        Stepper::PopulationEm { truth, quad } => {
            let e = evaluate(mu, truth, quad)?;
            Ok(StepOutcome {
                log_likelihood: e.log_likelihood,
                grad_norm: e.grad_norm(),
                next: e.centroid,
            })
        }
        Stepper::FirstOrderEm { truth, quad, step } => {
            let e = evaluate(mu, truth, quad)?;
            let next = mu
                .iter()
                .zip(&e.gradient)
                .map(|(m, g)| m + step * g)
                .collect();
            Ok(StepOutcome {
                log_likelihood: e.log_likelihood,
                grad_norm: e.grad_norm(),
                next,
            })
        }
    }
}

struct Recorder {
    traj: EmTrajectory,
    provisional: bool,
}

impl Recorder {
    fn push(&mut self, t: usize, mu: &[f64], ll: f64, gn: f64, counts: Option<[usize; 3]>) {
        if self.provisional {
            self.traj.t.pop();
            self.traj.iterates.pop();
            self.traj.likelihoods.pop();
            self.traj.grad_norms.pop();
            if let Some(c) = self.traj.urn_counts.as_mut() {
                c.pop();
            }
        }
        self.traj.t.push(t);
        self.traj.iterates.push(mu.to_vec());
        self.traj.likelihoods.push(ll);
        self.traj.grad_norms.push(gn);
        if let (Some(c), Some(n)) = (self.traj.urn_counts.as_mut(), counts) {
            c.push(n);
        }
        self.provisional = t >= FULL_HISTORY_CAP && !t.is_multiple_of(10);
    }
}

/// Iterates `stepper` from `mu0` (flattened, `M * dim` values) until the
/// iterate stops moving, the optional gradient threshold is met, or
/// `max_iters` steps have been taken.
pub fn run(
    mu0: &[f64],
    stepper: &Stepper<'_>,
    stop: &StoppingRule,
    regions: Option<&TrackedRegions>,
) -> Result<EmTrajectory> {
    stop.validate()?;
    let dim = stepper.dim()?;
    if mu0.is_empty() || !mu0.len().is_multiple_of(dim) {
        return Err(Error::invalid(
            "mu0",
            format!(
                "{} values do not form centers of dimension {dim}",
                mu0.len()
            ),
        ));
    }
    if let Stepper::FirstOrderEm { step, .. } = stepper {
        check_step(*step)?;
    }
    if regions.is_some() && dim != 1 {
        return Err(Error::UnsupportedDimension(dim));
    }
    let mut rec = Recorder {
        traj: EmTrajectory {
            dim,
            t: Vec::new(),
            iterates: Vec::new(),
            likelihoods: Vec::new(),
            grad_norms: Vec::new(),
            urn_counts: regions.map(|_| Vec::new()),
            stop: StopReason::MaxIters,
        },
        provisional: false,
    };
    let mut mu = mu0.to_vec();
    let mut last_move: Option<(f64, f64)> = None;
    let mut t = 0;
    loop {
        let out = advance(stepper, &mu, dim)?;
        rec.push(
            t,
            &mu,
            out.log_likelihood,
            out.grad_norm,
            regions.map(|r| r.count(&mu)),
        );
        if let Some((moved, tol)) = last_move {
            if moved <= tol {
                rec.traj.stop = StopReason::StepTolerance;
                break;
            }
        }
        if stop.grad_tol.is_some_and(|g| out.grad_norm <= g) {
            rec.traj.stop = StopReason::GradTolerance;
            break;
        }
        if t >= stop.max_iters {
            rec.traj.stop = StopReason::MaxIters;
            break;
        }
        let moved = out
            .next
            .iter()
            .zip(&mu)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        last_move = Some((moved, stop.effective_step_tol(&out.next)));
        mu = out.next;
        t += 1;
    }
    Ok(rec.traj)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CriticalKind {
    LocalMaximum,
    StrictSaddle,
    Indeterminate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifyTolerances {
    pub grad_tol: f64,
    pub eig_tol: f64,
    /// Step length of the probes along near-null Hessian directions.
    pub probe_step: f64,
}

impl Default for ClassifyTolerances {
    fn default() -> Self {
        Self {
            grad_tol: 1e-7,
            eig_tol: 1e-5,
            probe_step: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalPointReport {
    pub point: Vec<f64>,
    pub log_likelihood: f64,
    pub grad_norm: f64,
    /// Hessian eigenvalues, ascending.
    pub hessian_eigenvalues: Vec<f64>,
    pub kind: CriticalKind,
    /// Eigenvalues inside `[-eig_tol, eig_tol]`, each settled by probing the
    /// likelihood on both sides along its eigenvector.
    pub degenerate_directions: usize,
}

/// Classifies `mu` as a critical point of the population likelihood.
///
/// A positive eigenvalue above `eig_tol` makes a strict saddle. When every
/// eigenvalue is below `-eig_tol` the point is a local maximum. Eigenvalues
/// in the dead zone are resolved by stepping `±probe_step` along the
/// corresponding eigenvector: the point is a (degenerate) local maximum only
/// if the likelihood drops on both sides in every such direction, and
/// indeterminate otherwise.
pub fn classify_critical_point(
    mu: &[f64],
    truth: &MixtureModel,
    quad: &QuadratureSpec,
    tol: &ClassifyTolerances,
) -> Result<CriticalPointReport> {
    let e = evaluate(mu, truth, quad)?;
    let h = population_hessian(mu, truth, quad)?;
    let eig = h.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..mu.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let grad_norm = e.grad_norm();
    let max_eig = *values.last().expect("nonempty");

    let dead: Vec<usize> = order
        .iter()
        .copied()
        .filter(|&i| eig.eigenvalues[i].abs() <= tol.eig_tol)
        .collect();
    let kind = if grad_norm > tol.grad_tol {
        CriticalKind::Indeterminate
    } else if max_eig > tol.eig_tol {
        CriticalKind::StrictSaddle
    } else if dead.is_empty() {
        CriticalKind::LocalMaximum
    } else {
        let base = e.log_likelihood;
        let mut all_drop = true;
        for &i in &dead {
            let v = eig.eigenvectors.column(i);
            for sign in [-1.0, 1.0] {
                let probe: Vec<f64> = mu
                    .iter()
                    .zip(v.iter())
                    .map(|(m, d)| m + sign * tol.probe_step * d)
                    .collect();
                if population_log_likelihood(&probe, truth, quad)? >= base {
                    all_drop = false;
                }
            }
        }
        if all_drop {
            CriticalKind::LocalMaximum
        } else {
            CriticalKind::Indeterminate
        }
    };
    Ok(CriticalPointReport {
        point: mu.to_vec(),
        log_likelihood: e.log_likelihood,
        grad_norm,
        hessian_eigenvalues: values,
        kind,
        degenerate_directions: dead.len(),
    })
}

/// `I + s ∇²L(μ)`, the Jacobian of the first-order EM map.
pub fn first_order_jacobian(
    mu: &[f64],
    truth: &MixtureModel,
    s: f64,
    quad: &QuadratureSpec,
) -> Result<DMatrix<f64>> {
    check_step(s)?;
    let h = population_hessian(mu, truth, quad)?;
    Ok(DMatrix::identity(mu.len(), mu.len()) + h * s)
}

pub fn jacobian_min_eigenvalue(
    mu: &[f64],
    truth: &MixtureModel,
    s: f64,
    quad: &QuadratureSpec,
) -> Result<f64> {
    let j = first_order_jacobian(mu, truth, s, quad)?;
    Ok(symmetric_eigenvalues(&j)[0])
}
