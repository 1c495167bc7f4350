use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::init::{
    classify_init, event_e_holds, init_points, random_init, InitClassification, InitRule,
};
use crate::constructions::{top_level_regions, TreeConstructionSpec};
use crate::em::{
    classify_critical_point, fmt_f64, jacobian_min_eigenvalue, run, ClassifyTolerances,
    CriticalKind, CriticalPointReport, EmTrajectory, Stepper, StopReason, StoppingRule,
    TrackedRegions,
};
use crate::error::{Error, Result};
use crate::gmm::{LabeledSample, MixtureModel};
use crate::parallel::install;
use crate::population::population_log_likelihood;
use crate::quadrature::QuadratureSpec;
use crate::rng::{trial_rng, trial_seed};

/// Normal quantile for a two-sided 95% interval.
pub const Z_95: f64 = 1.959964;

/// Wilson score interval for `successes` out of `trials` at 95%.
pub fn wilson_interval(successes: usize, trials: usize) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z_95 * Z_95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z_95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Population update used by a harness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StepperKind {
    Em,
    FirstOrderEm { step: f64 },
}

impl StepperKind {
    pub fn stepper<'a>(&self, truth: &'a MixtureModel, quad: QuadratureSpec) -> Stepper<'a> {
        match *self {
            StepperKind::Em => Stepper::PopulationEm { truth, quad },
            StepperKind::FirstOrderEm { step } => Stepper::FirstOrderEm { truth, quad, step },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrappingVerdict {
    /// Counts in both inner regions never changed.
    Trapped,
    Escaped,
    /// Some inner region started empty.
    PreconditionUnmet,
    /// The trajectory carries no region counts.
    NotTracked,
}

impl TrappingVerdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            TrappingVerdict::Trapped => "trapped",
            TrappingVerdict::Escaped => "escaped",
            TrappingVerdict::PreconditionUnmet => "precondition-unmet",
            TrappingVerdict::NotTracked => "not-tracked",
        }
    }
}

/// Whether the counts `n1`, `n2` stay at their initial values along the
/// whole trajectory, given both start positive.
pub fn trapping_check(trajectory: &EmTrajectory) -> TrappingVerdict {
    let Some(counts) = trajectory.urn_counts.as_ref() else {
        return TrappingVerdict::NotTracked;
    };
    let Some(first) = counts.first() else {
        return TrappingVerdict::NotTracked;
    };
    if first[0] == 0 || first[1] == 0 {
        return TrappingVerdict::PreconditionUnmet;
    }
    if counts.iter().all(|c| c[0] == first[0] && c[1] == first[1]) {
        TrappingVerdict::Trapped
    } else {
        TrappingVerdict::Escaped
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McConfig {
    pub trials: usize,
    pub success_margin: f64,
    pub stepper: StepperKind,
    pub stop: StoppingRule,
    pub quad: QuadratureSpec,
    pub master_seed: u64,
    pub threads: Option<usize>,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            trials: 500,
            success_margin: 0.1,
            stepper: StepperKind::Em,
            stop: StoppingRule {
                max_iters: 2000,
                ..StoppingRule::default()
            },
            quad: QuadratureSpec::default(),
            master_seed: 0,
            threads: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub index: usize,
    pub seed: u64,
    pub init: Vec<LabeledSample>,
    pub event_e: bool,
    pub classification: Option<InitClassification>,
    pub final_likelihood: f64,
    pub success: bool,
    pub trapped: TrappingVerdict,
    pub iterations: usize,
    pub stop: StopReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
    pub good_inits: Option<usize>,
    pub good_init_rate: Option<f64>,
    pub good_init_wilson_low: Option<f64>,
    pub good_init_wilson_high: Option<f64>,
    /// Good initializations settled by the all-one-side rule at the root,
    /// and how many of them succeeded.
    pub all_one_side_goods: Option<usize>,
    pub all_one_side_successes: Option<usize>,
    pub event_e_count: usize,
    pub event_e_rate: f64,
    /// Trials with event E that succeeded from a bad initialization.
    pub necessity_violations: usize,
    pub global_likelihood: f64,
    /// Smallest `L(μ*) - L(final)` over failed trials.
    pub c_gap: Option<f64>,
    pub max_iters_hit: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub summary: McSummary,
    pub records: Vec<TrialRecord>,
}

fn one_trial(
    truth: &MixtureModel,
    cfg: &McConfig,
    tree: Option<&TreeConstructionSpec>,
    regions: Option<&TrackedRegions>,
    l_star: f64,
    index: usize,
) -> Result<TrialRecord> {
    let seed = trial_seed(cfg.master_seed, index as u64);
    let mut rng = trial_rng(cfg.master_seed, index as u64);
    let init = random_init(truth, &mut rng);
    let points = init_points(&init);
    let classification = tree.map(|t| classify_init(&points, t)).transpose()?;
    let stepper = cfg.stepper.stepper(truth, cfg.quad);
    let traj = run(&points, &stepper, &cfg.stop, regions)?;
    let final_likelihood = traj.final_likelihood();
    Ok(TrialRecord {
        index,
        seed,
        event_e: event_e_holds(&init, truth),
        classification,
        final_likelihood,
        success: final_likelihood > l_star - cfg.success_margin,
        trapped: trapping_check(&traj),
        iterations: traj.iterations(),
        stop: traj.stop,
        init,
    })
}

/// Runs `cfg.trials` independent population-EM trials from random
/// initializations. Trial `k` draws from a generator seeded by hashing
/// `(master_seed, k)`, so the report does not depend on scheduling. When
/// `tree` is given, each initialization is classified against its urns and
/// the level-1 urn counts are tracked.
pub fn mc_failure_rate(
    truth: &MixtureModel,
    tree: Option<&TreeConstructionSpec>,
    cfg: &McConfig,
) -> Result<McReport> {
    if cfg.trials == 0 {
        return Err(Error::invalid("trials", "must be at least 1"));
    }
    cfg.stop.validate()?;
    let l_star = population_log_likelihood(&truth.centers_1d()?, truth, &cfg.quad)?;
    let regions = tree.map(top_level_regions).transpose()?;
    let records = install(cfg.threads, || {
        (0..cfg.trials)
            .into_par_iter()
            .map(|k| one_trial(truth, cfg, tree, regions.as_ref(), l_star, k))
            .collect::<Result<Vec<_>>>()
    })??;
    Ok(McReport {
        summary: summarize(&records, l_star),
        records,
    })
}

fn summarize(records: &[TrialRecord], l_star: f64) -> McSummary {
    let n = records.len();
    let successes = records.iter().filter(|r| r.success).count();
    let (wilson_low, wilson_high) = wilson_interval(successes, n);
    let classified = records.iter().all(|r| r.classification.is_some());
    let good = |r: &TrialRecord| r.classification.as_ref().is_some_and(|c| c.good);
    let one_side = |r: &TrialRecord| {
        r.classification
            .as_ref()
            .is_some_and(|c| c.good && c.reason == InitRule::AllOneSide)
    };
    let good_inits = classified.then(|| records.iter().filter(|r| good(r)).count());
    let good_wilson = good_inits.map(|g| wilson_interval(g, n));
    let event_e_count = records.iter().filter(|r| r.event_e).count();
    let c_gap = records
        .iter()
        .filter(|r| !r.success)
        .map(|r| l_star - r.final_likelihood)
        .min_by(f64::total_cmp);
    McSummary {
        trials: n,
        successes,
        success_rate: successes as f64 / n as f64,
        wilson_low,
        wilson_high,
        good_inits,
        good_init_rate: good_inits.map(|g| g as f64 / n as f64),
        good_init_wilson_low: good_wilson.map(|w| w.0),
        good_init_wilson_high: good_wilson.map(|w| w.1),
        all_one_side_goods: classified.then(|| records.iter().filter(|r| one_side(r)).count()),
        all_one_side_successes: classified
            .then(|| records.iter().filter(|r| one_side(r) && r.success).count()),
        event_e_count,
        event_e_rate: event_e_count as f64 / n as f64,
        necessity_violations: if classified {
            records
                .iter()
                .filter(|r| r.event_e && r.success && !good(r))
                .count()
        } else {
            0
        },
        global_likelihood: l_star,
        c_gap,
        max_iters_hit: records
            .iter()
            .filter(|r| r.stop == StopReason::MaxIters)
            .count(),
    }
}

fn stop_str(s: StopReason) -> &'static str {
    match s {
        StopReason::StepTolerance => "step-tolerance",
        StopReason::GradTolerance => "grad-tolerance",
        StopReason::MaxIters => "max-iters",
    }
}

fn reason_str(r: InitRule) -> &'static str {
    match r {
        InitRule::Singleton => "singleton",
        InitRule::AllOneSide => "all-one-side",
        InitRule::BalancedRecurse => "balanced-recurse",
        InitRule::BadSplit => "bad-split",
    }
}

/// One row per trial. Initial centers are written as `x@label` joined by `;`.
pub fn write_trials_csv<W: Write>(records: &[TrialRecord], mut out: W) -> Result<()> {
    writeln!(
        out,
        "index,seed,event_e,good_init,init_rule,final_loglik,success,trapped,iterations,stop,init"
    )?;
    for r in records {
        let (good, rule) = match &r.classification {
            Some(c) => (c.good.to_string(), reason_str(c.reason).to_string()),
            None => (String::new(), String::new()),
        };
        let init: Vec<String> = r
            .init
            .iter()
            .map(|s| format!("{}@{}", fmt_f64(s.point[0]), s.component))
            .collect();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.index,
            r.seed,
            r.event_e,
            good,
            rule,
            fmt_f64(r.final_likelihood),
            r.success,
            r.trapped.as_str(),
            r.iterations,
            stop_str(r.stop),
            init.join(";")
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Saddle avoidance
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SaddleConfig {
    pub trials: usize,
    pub step: f64,
    pub stop: StoppingRule,
    pub quad: QuadratureSpec,
    pub tolerances: ClassifyTolerances,
    pub master_seed: u64,
    pub threads: Option<usize>,
    /// Evaluate the Jacobian `I + s∇²L` at every recorded iterate.
    pub check_jacobian: bool,
}

impl Default for SaddleConfig {
    fn default() -> Self {
        Self {
            trials: 200,
            step: 0.5,
            stop: StoppingRule {
                max_iters: 2_000_000,
                step_tol: 1e-12,
                grad_tol: Some(1e-7),
            },
            quad: QuadratureSpec::default(),
            tolerances: ClassifyTolerances::default(),
            master_seed: 0,
            threads: None,
            check_jacobian: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaddleTrial {
    pub index: usize,
    pub seed: u64,
    pub init: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub report: CriticalPointReport,
    /// Smallest eigenvalue of `I + s∇²L` over the recorded iterates.
    pub min_jacobian_eigenvalue: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaddleSummary {
    pub trials: usize,
    pub converged: usize,
    pub strict_saddles: usize,
    pub local_maxima: usize,
    pub indeterminate: usize,
    pub min_jacobian_eigenvalue: Option<f64>,
    pub records: Vec<SaddleTrial>,
}

fn saddle_trial(truth: &MixtureModel, cfg: &SaddleConfig, index: usize) -> Result<SaddleTrial> {
    let mut rng = trial_rng(cfg.master_seed, index as u64);
    let init = init_points(&random_init(truth, &mut rng));
    let stepper = Stepper::FirstOrderEm {
        truth,
        quad: cfg.quad,
        step: cfg.step,
    };
    let traj = run(&init, &stepper, &cfg.stop, None)?;
    let min_jac = if cfg.check_jacobian {
        let mut m = f64::INFINITY;
        for mu in &traj.iterates {
            m = m.min(jacobian_min_eigenvalue(mu, truth, cfg.step, &cfg.quad)?);
        }
        Some(m)
    } else {
        None
    };
    let report = classify_critical_point(traj.final_point(), truth, &cfg.quad, &cfg.tolerances)?;
    Ok(SaddleTrial {
        index,
        seed: trial_seed(cfg.master_seed, index as u64),
        init,
        iterations: traj.iterations(),
        converged: traj.final_grad_norm() <= cfg.tolerances.grad_tol,
        report,
        min_jacobian_eigenvalue: min_jac,
    })
}

/// First-order EM from `cfg.trials` random initializations; each limit point
/// is classified and strict-saddle limits are counted.
pub fn saddle_avoidance_trial(truth: &MixtureModel, cfg: &SaddleConfig) -> Result<SaddleSummary> {
    if cfg.trials == 0 {
        return Err(Error::invalid("trials", "must be at least 1"));
    }
    if !(cfg.step > 0.0 && cfg.step < 1.0) {
        return Err(Error::invalid("step", "must lie in (0, 1)"));
    }
    let records = install(cfg.threads, || {
        (0..cfg.trials)
            .into_par_iter()
            .map(|k| saddle_trial(truth, cfg, k))
            .collect::<Result<Vec<_>>>()
    })??;
    let count = |k: CriticalKind| records.iter().filter(|r| r.report.kind == k).count();
    Ok(SaddleSummary {
        trials: records.len(),
        converged: records.iter().filter(|r| r.converged).count(),
        strict_saddles: count(CriticalKind::StrictSaddle),
        local_maxima: count(CriticalKind::LocalMaximum),
        indeterminate: count(CriticalKind::Indeterminate),
        min_jacobian_eigenvalue: records
            .iter()
            .filter_map(|r| r.min_jacobian_eigenvalue)
            .min_by(f64::total_cmp),
        records,
    })
}
