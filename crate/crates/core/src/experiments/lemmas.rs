use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::em::fmt_f64;
use crate::error::{Error, Result};
use crate::gmm::{log_sum_exp, MixtureModel};
use crate::parallel::install;
use crate::quadrature::{expect_under_mixture, QuadratureSpec};
use crate::rng::{trial_rng, GmmRng};

/// A check passes when its margin is at least `-LEMMA_TOLERANCE`.
pub const LEMMA_TOLERANCE: f64 = 1e-9;

const WDIFF_INNER_POINTS: usize = 10_000;
const WDIFF_OUTER_POINTS: usize = 50_001;
const WDIFF_WINDOW: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LemmaId {
    GeneralCalc,
    /// `E w_i X ≥ 0` for a single Gaussian with mean at least `a`.
    CenterPositive,
    /// The quantitative lower bound when `μ* ≤ 3a` and `μ_i ≤ 4a`.
    CenterPositiveStrong,
    CenterNegative,
    Wdifference,
}

impl LemmaId {
    pub fn as_str(&self) -> &'static str {
        match self {
            LemmaId::GeneralCalc => "general_calc",
            LemmaId::CenterPositive => "center_positive",
            LemmaId::CenterPositiveStrong => "center_positive_strong",
            LemmaId::CenterNegative => "center_negative",
            LemmaId::Wdifference => "wdifference",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaCheckReport {
    pub lemma: LemmaId,
    /// The checked configuration as compact JSON.
    pub configuration: String,
    pub computed: f64,
    pub bound: f64,
    /// `computed - bound`.
    pub margin: f64,
    pub pass: bool,
}

impl LemmaCheckReport {
    fn new<C: Serialize>(lemma: LemmaId, config: &C, computed: f64, bound: f64) -> Result<Self> {
        let margin = computed - bound;
        Ok(Self {
            lemma,
            configuration: serde_json::to_string(config)?,
            computed,
            bound,
            margin,
            pass: margin >= -LEMMA_TOLERANCE,
        })
    }
}

/// Default integrator for the lemma checks: the relevant mass can sit well
/// beyond the Gauss–Hermite node range, so a wide trapezoid rule is used.
pub fn lemma_quadrature() -> QuadratureSpec {
    QuadratureSpec::trapezoid(8001, 40.0)
}

/// `w_i(x)` for scalar centers.
pub fn weight_1d(x: f64, centers: &[f64], i: usize) -> f64 {
    log_weight_1d(x, centers, i).exp()
}

fn log_weight_1d(x: f64, centers: &[f64], i: usize) -> f64 {
    let logs: Vec<f64> = centers.iter().map(|c| -0.5 * (x - c) * (x - c)).collect();
    logs[i] - log_sum_exp(&logs)
}

fn expect_wx(truth: &[f64], candidates: &[f64], i: usize, quad: &QuadratureSpec) -> Result<f64> {
    let model = MixtureModel::from_1d(truth)?;
    expect_under_mixture(|x| weight_1d(x, candidates, i) * x, &model, quad)
}

fn hypothesis(ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Hypothesis(msg()))
    }
}

fn check_index(candidates: &[f64], index: usize) -> Result<()> {
    if candidates.is_empty() {
        return Err(Error::Empty("no candidate centers"));
    }
    if index >= candidates.len() {
        return Err(Error::invalid(
            "index",
            format!("{index} ≥ {}", candidates.len()),
        ));
    }
    Ok(())
}

/// Mixture truth split between `(-∞, -10a)` and `(a, ∞)`; the tested
/// candidate (0-based `index`) lies in `[0, 4a]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralCalcConfig {
    pub a: f64,
    pub truth: Vec<f64>,
    pub candidates: Vec<f64>,
    pub index: usize,
    /// Far negative true centers need a candidate within `|μ*|/match_divisor`.
    pub match_divisor: f64,
}

pub fn check_lemma_general_calc(
    cfg: &GeneralCalcConfig,
    quad: &QuadratureSpec,
) -> Result<LemmaCheckReport> {
    check_index(&cfg.candidates, cfg.index)?;
    let m = cfg.truth.len();
    let a = cfg.a;
    hypothesis(cfg.candidates.len() == m, || {
        format!("{} candidates for {m} true centers", cfg.candidates.len())
    })?;
    hypothesis(a > (m as f64).ln() + 3.0, || format!("a = {a} ≤ log M + 3"))?;
    hypothesis(cfg.truth.iter().all(|&t| t < -10.0 * a || t > a), || {
        "a true center lies in [-10a, a]".into()
    })?;
    hypothesis(cfg.truth.iter().any(|&t| t > a && t < 3.0 * a), || {
        "no true center in (a, 3a)".into()
    })?;
    hypothesis(cfg.match_divisor > 0.0, || {
        "match divisor must be positive".into()
    })?;
    for &t in cfg.truth.iter().filter(|&&t| t < -10.0 * a) {
        hypothesis(
            cfg.candidates
                .iter()
                .any(|&c| (c - t).abs() <= t.abs() / cfg.match_divisor),
            || format!("no candidate within |μ*|/{} of {t}", cfg.match_divisor),
        )?;
    }
    let mu_i = cfg.candidates[cfg.index];
    hypothesis((0.0..=4.0 * a).contains(&mu_i), || {
        format!("μ_i = {mu_i} outside [0, 4a]")
    })?;
    let computed = expect_wx(&cfg.truth, &cfg.candidates, cfg.index, quad)?;
    LemmaCheckReport::new(LemmaId::GeneralCalc, cfg, computed, 0.0)
}

/// Single Gaussian truth `N(μ*, 1)` with `μ* ≥ a`; the tested candidate is
/// nonnegative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenterPositiveConfig {
    pub a: f64,
    pub mu_star: f64,
    pub candidates: Vec<f64>,
    pub index: usize,
}

/// The sign check, followed by the quantitative bound
/// `a/(5M)·e^(-9a²/2)` when `μ* ≤ 3a` and `μ_i ≤ 4a`.
pub fn check_lemma_center_positive(
    cfg: &CenterPositiveConfig,
    quad: &QuadratureSpec,
) -> Result<Vec<LemmaCheckReport>> {
    check_index(&cfg.candidates, cfg.index)?;
    let m = cfg.candidates.len() as f64;
    let a = cfg.a;
    hypothesis(a > m.ln() + 3.0, || format!("a = {a} ≤ log M + 3"))?;
    hypothesis(cfg.mu_star >= a, || format!("μ* = {} < a", cfg.mu_star))?;
    let mu_i = cfg.candidates[cfg.index];
    hypothesis(mu_i >= 0.0, || format!("μ_i = {mu_i} < 0"))?;
    let computed = expect_wx(&[cfg.mu_star], &cfg.candidates, cfg.index, quad)?;
    let mut out = vec![LemmaCheckReport::new(
        LemmaId::CenterPositive,
        cfg,
        computed,
        0.0,
    )?];
    if cfg.mu_star <= 3.0 * a && mu_i <= 4.0 * a {
        let bound = a / (5.0 * m) * (-4.5 * a * a).exp();
        out.push(LemmaCheckReport::new(
            LemmaId::CenterPositiveStrong,
            cfg,
            computed,
            bound,
        )?);
    }
    Ok(out)
}

/// Single Gaussian truth `N(-r, 1)`; the tested candidate is nonnegative and
/// another candidate lies within `r/6` of `-r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenterNegativeConfig {
    pub r: f64,
    pub candidates: Vec<f64>,
    pub index: usize,
}

pub fn check_lemma_center_negative(
    cfg: &CenterNegativeConfig,
    quad: &QuadratureSpec,
) -> Result<LemmaCheckReport> {
    check_index(&cfg.candidates, cfg.index)?;
    let r = cfg.r;
    hypothesis(r > 0.0, || format!("r = {r} must be positive"))?;
    let mu_i = cfg.candidates[cfg.index];
    hypothesis(mu_i >= 0.0, || format!("μ_i = {mu_i} < 0"))?;
    hypothesis(
        cfg.candidates.iter().any(|&c| (c + r).abs() <= r / 6.0),
        || "no candidate within r/6 of -r".into(),
    )?;
    let computed = expect_wx(&[-r], &cfg.candidates, cfg.index, quad)?;
    let bound = -3.0 * r * (-r * r / 18.0).exp();
    LemmaCheckReport::new(LemmaId::CenterNegative, cfg, computed, bound)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WdifferenceConfig {
    pub candidates: Vec<f64>,
    pub index: usize,
}

#[derive(Serialize)]
struct WdifferenceRecord<'a> {
    #[serde(flatten)]
    config: &'a WdifferenceConfig,
    sup_argmax: f64,
    argmax_at_edge: bool,
}

/// `min_{[1,2]} w_i ≥ sup_{(-∞,0]} w_i / (M e²)`, with both extremes taken
/// on dense grids and the supremum window truncated to `[-50, 0]`.
pub fn check_lemma_wdifference(cfg: &WdifferenceConfig) -> Result<LemmaCheckReport> {
    check_index(&cfg.candidates, cfg.index)?;
    let mu_i = cfg.candidates[cfg.index];
    hypothesis(mu_i >= 0.0, || format!("μ_i = {mu_i} < 0"))?;
    let lw = |x: f64| log_weight_1d(x, &cfg.candidates, cfg.index);
    let inner_min = (0..WDIFF_INNER_POINTS)
        .map(|k| lw(1.0 + k as f64 / (WDIFF_INNER_POINTS - 1) as f64))
        .fold(f64::INFINITY, f64::min);
    let (mut sup, mut argmax) = (f64::NEG_INFINITY, 0.0);
    for k in 0..WDIFF_OUTER_POINTS {
        let x = -WDIFF_WINDOW * k as f64 / (WDIFF_OUTER_POINTS - 1) as f64;
        let v = lw(x);
        if v > sup {
            sup = v;
            argmax = x;
        }
    }
    let m = cfg.candidates.len() as f64;
    let bound = (sup - m.ln() - 2.0).exp();
    let record = WdifferenceRecord {
        config: cfg,
        sup_argmax: argmax,
        argmax_at_edge: argmax <= -WDIFF_WINDOW,
    };
    LemmaCheckReport::new(LemmaId::Wdifference, &record, inner_min.exp(), bound)
}

// ---------------------------------------------------------------------------
// Randomized hypothesis-satisfying configurations
// ---------------------------------------------------------------------------

fn slack_a<R: Rng + ?Sized>(m: usize, rng: &mut R) -> f64 {
    (m as f64).ln() + 3.0 + rng.random_range(0.01..2.0)
}

pub fn random_general_calc<R: Rng + ?Sized>(rng: &mut R) -> GeneralCalcConfig {
    let m = rng.random_range(1..=6usize);
    let a = slack_a(m, rng);
    let negatives = rng.random_range(0..m);
    let mut truth = vec![rng.random_range(a * 1.0001..3.0 * a)];
    let mut candidates = Vec::with_capacity(m);
    for _ in 0..negatives {
        let t = -rng.random_range(10.0001 * a..40.0 * a);
        truth.push(t);
        candidates.push(t + rng.random_range(-1.0..=1.0) * t.abs() / 6.0);
    }
    for _ in negatives + 1..m {
        truth.push(rng.random_range(a * 1.0001..10.0 * a));
    }
    let target = rng.random_range(0.0..=4.0 * a);
    while candidates.len() + 1 < m {
        candidates.push(rng.random_range(-20.0 * a..20.0 * a));
    }
    candidates.push(target);
    candidates.shuffle(rng);
    truth.shuffle(rng);
    let index = candidates
        .iter()
        .position(|&c| c == target)
        .expect("target present");
    GeneralCalcConfig {
        a,
        truth,
        candidates,
        index,
        match_divisor: 6.0,
    }
}

fn with_target<R: Rng + ?Sized>(
    m: usize,
    target: f64,
    spread: f64,
    rng: &mut R,
) -> (Vec<f64>, usize) {
    let mut c: Vec<f64> = (1..m).map(|_| rng.random_range(-spread..spread)).collect();
    let index = rng.random_range(0..m);
    c.insert(index, target);
    (c, index)
}

pub fn random_center_positive<R: Rng + ?Sized>(rng: &mut R) -> CenterPositiveConfig {
    let m = rng.random_range(1..=6usize);
    let a = slack_a(m, rng);
    let (mu_star, target) = if rng.random_bool(0.5) {
        (
            rng.random_range(a..=3.0 * a),
            rng.random_range(0.0..=4.0 * a),
        )
    } else {
        (
            rng.random_range(a..10.0 * a),
            rng.random_range(0.0..12.0 * a),
        )
    };
    let (candidates, index) = with_target(m, target, 20.0 * a, rng);
    CenterPositiveConfig {
        a,
        mu_star,
        candidates,
        index,
    }
}

pub fn random_center_negative<R: Rng + ?Sized>(rng: &mut R) -> CenterNegativeConfig {
    let m = rng.random_range(2..=6usize);
    let r = rng.random_range(3.0..40.0);
    let target = rng.random_range(0.0..3.0 * r);
    let near = -r + rng.random_range(-1.0..=1.0) * r / 6.0;
    let mut candidates: Vec<f64> = (2..m)
        .map(|_| rng.random_range(-3.0 * r..3.0 * r))
        .collect();
    candidates.push(near);
    let index = rng.random_range(0..m);
    candidates.insert(index, target);
    CenterNegativeConfig {
        r,
        candidates,
        index,
    }
}

pub fn random_wdifference<R: Rng + ?Sized>(rng: &mut R) -> WdifferenceConfig {
    let m = rng.random_range(1..=8usize);
    let target = rng.random_range(0.0..20.0);
    let (candidates, index) = with_target(m, target, 20.0, rng);
    WdifferenceConfig { candidates, index }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LemmaSuiteConfig {
    /// Random configurations per lemma.
    pub per_lemma: usize,
    pub master_seed: u64,
    pub quad: QuadratureSpec,
    pub threads: Option<usize>,
}

impl Default for LemmaSuiteConfig {
    fn default() -> Self {
        Self {
            per_lemma: 200,
            master_seed: 0,
            quad: lemma_quadrature(),
            threads: None,
        }
    }
}

fn stream(cfg: &LemmaSuiteConfig, lemma: u64, k: usize) -> GmmRng {
    trial_rng(
        cfg.master_seed ^ lemma.wrapping_mul(0x9E37_79B9_7F4A_7C15),
        k as u64,
    )
}

/// Runs `per_lemma` random configurations through each check. The returned
/// reports are ordered by lemma, then by configuration index.
pub fn lemma_suite(cfg: &LemmaSuiteConfig) -> Result<Vec<LemmaCheckReport>> {
    if cfg.per_lemma == 0 {
        return Err(Error::invalid("per_lemma", "must be at least 1"));
    }
    let n = cfg.per_lemma;
    let quad = cfg.quad;
    install(cfg.threads, || -> Result<Vec<LemmaCheckReport>> {
        let mut out = Vec::with_capacity(5 * n);
        let general: Vec<_> = (0..n)
            .into_par_iter()
            .map(|k| check_lemma_general_calc(&random_general_calc(&mut stream(cfg, 1, k)), &quad))
            .collect::<Result<_>>()?;
        out.extend(general);
        let positive: Vec<Vec<_>> = (0..n)
            .into_par_iter()
            .map(|k| {
                let mut rng = stream(cfg, 2, k);
                // Alternate families so both parts get at least n/2 draws.
                let mut c = random_center_positive(&mut rng);
                if k % 2 == 0 {
                    c.mu_star = c.mu_star.min(3.0 * c.a);
                    c.candidates[c.index] = c.candidates[c.index].min(4.0 * c.a);
                }
                check_lemma_center_positive(&c, &quad)
            })
            .collect::<Result<_>>()?;
        out.extend(positive.into_iter().flatten());
        let negative: Vec<_> = (0..n)
            .into_par_iter()
            .map(|k| {
                check_lemma_center_negative(&random_center_negative(&mut stream(cfg, 3, k)), &quad)
            })
            .collect::<Result<_>>()?;
        out.extend(negative);
        let wdiff: Vec<_> = (0..n)
            .into_par_iter()
            .map(|k| check_lemma_wdifference(&random_wdifference(&mut stream(cfg, 4, k))))
            .collect::<Result<_>>()?;
        out.extend(wdiff);
        Ok(out)
    })?
}

pub fn write_lemma_csv<W: Write>(reports: &[LemmaCheckReport], mut out: W) -> Result<()> {
    writeln!(out, "lemma,computed,bound,margin,pass,configuration")?;
    for r in reports {
        writeln!(
            out,
            "{},{},{},{},{},\"{}\"",
            r.lemma.as_str(),
            fmt_f64(r.computed),
            fmt_f64(r.bound),
            fmt_f64(r.margin),
            r.pass,
            r.configuration.replace('"', "\"\"")
        )?;
    }
    Ok(())
}
