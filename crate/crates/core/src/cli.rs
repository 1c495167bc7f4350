//! Command-line front end for the `gmml` binary.
//!
//! Every subcommand reads its section of an [`ExperimentConfig`] (from
//! `--config` or defaults), applies command-line overrides, echoes the
//! resolved config into the output directory and writes its artifacts there.
//! Without `--out`, the primary artifact goes to stdout.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::constructions::{
    boundary_values, extended_m_construction, make_diffuse, pruned_tree, three_component,
    tree_construction, tree_levels, BoundarySearch, DiffuseSpec, ThreeComponentSpec,
    TreeConstructionSpec, TREE_RATIO,
};
use crate::em::{classify_critical_point, run, ClassifyTolerances, StopReason, StoppingRule};
use crate::error::{Error, Result};
use crate::experiments::{
    check_lemma_center_negative, check_lemma_center_positive, check_lemma_general_calc,
    check_lemma_wdifference, classify_init, init_points, lemma_quadrature, lemma_suite,
    mc_failure_rate, random_init, saddle_avoidance_trial, write_lemma_csv, write_trials_csv,
    CenterNegativeConfig, CenterPositiveConfig, GeneralCalcConfig, LemmaCheckReport,
    LemmaSuiteConfig, McConfig, SaddleConfig, StepperKind, WdifferenceConfig,
};
use crate::gmm::MixtureModel;
use crate::landscape::{likelihood_surface, RefineSettings, SurfaceGrid};
use crate::parallel::install;
use crate::quadrature::QuadratureSpec;
use crate::rng::seeded;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NON_CONVERGENCE: i32 = 2;
pub const EXIT_HYPOTHESIS: i32 = 3;
/// A lemma check produced a negative margin.
pub const EXIT_CHECK_FAILED: i32 = 4;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum TruthKind {
    Centers,
    Three,
    Extended,
    Tree,
    Pruned,
    Diffuse,
}

/// Truth model description shared by the subcommands. Fields irrelevant to
/// `kind` are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TruthSpec {
    pub kind: TruthKind,
    pub centers: Vec<f64>,
    /// `R`; each kind has its own default when absent.
    pub scale: Option<f64>,
    pub gamma: f64,
    pub count: usize,
    pub ratio: f64,
    pub faithful: bool,
    pub c: f64,
    /// Defaults to `log M + 4`.
    pub delta: Option<f64>,
    pub inner_left: Vec<f64>,
    pub inner_right: Vec<f64>,
    pub outer: Vec<f64>,
}

impl Default for TruthSpec {
    fn default() -> Self {
        Self {
            kind: TruthKind::Centers,
            centers: vec![-4.0, 4.0],
            scale: None,
            gamma: 20.0,
            count: 8,
            ratio: TREE_RATIO,
            faithful: true,
            c: 25.0,
            delta: None,
            inner_left: Vec::new(),
            inner_right: Vec::new(),
            outer: Vec::new(),
        }
    }
}

impl TruthSpec {
    pub fn three() -> Self {
        Self {
            kind: TruthKind::Three,
            ..Self::default()
        }
    }

    pub fn tree(count: usize) -> Self {
        Self {
            kind: TruthKind::Tree,
            count,
            ..Self::default()
        }
    }

    pub fn three_spec(&self) -> Result<ThreeComponentSpec> {
        ThreeComponentSpec::new(self.scale.unwrap_or(5.0), self.gamma)
    }

    pub fn tree_spec(&self) -> Result<TreeConstructionSpec> {
        if self.faithful {
            let spec = TreeConstructionSpec::faithful(self.count)?;
            match self.scale {
                Some(r) => spec.with_scale(r),
                None => Ok(spec),
            }
        } else {
            TreeConstructionSpec::relaxed(
                tree_levels(self.count),
                self.scale.unwrap_or(1.0),
                self.ratio,
                self.count,
            )
        }
    }

    pub fn diffuse_spec(&self) -> DiffuseSpec {
        let (mut left, mut right) = (self.inner_left.clone(), self.inner_right.clone());
        let inner = (left.len() + right.len()).max(2);
        let delta = self.delta.unwrap_or((inner as f64).ln() + 4.0);
        if left.is_empty() && right.is_empty() {
            left.push(-self.c * delta);
            right.push(self.c * delta);
        }
        DiffuseSpec {
            c: self.c,
            delta,
            inner_left: left,
            inner_right: right,
            outer: self.outer.clone(),
        }
    }

    /// The model and, for tree kinds, the construction it came from.
    pub fn build(&self) -> Result<(MixtureModel, Option<TreeConstructionSpec>)> {
        Ok(match self.kind {
            TruthKind::Centers => (MixtureModel::from_1d(&self.centers)?, None),
            TruthKind::Three => (three_component(&self.three_spec()?)?, None),
            TruthKind::Extended => (
                extended_m_construction(self.count, self.scale.unwrap_or(5.0), self.gamma)?,
                None,
            ),
            TruthKind::Tree => {
                let spec = self.tree_spec()?;
                (tree_construction(&spec)?, Some(spec))
            }
            TruthKind::Pruned => {
                let spec = self.tree_spec()?;
                (pruned_tree(&spec)?, Some(spec))
            }
            TruthKind::Diffuse => (make_diffuse(&self.diffuse_spec())?, None),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SurfaceSection {
    pub truth: TruthSpec,
    pub grid: SurfaceGrid,
    pub refine: RefineSettings,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ConstructSection {
    pub truth: TruthSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoundarySection {
    pub spec: ThreeComponentSpec,
    pub search: BoundarySearch,
}

impl Default for BoundarySection {
    fn default() -> Self {
        Self {
            spec: ThreeComponentSpec::desk_scale(),
            search: BoundarySearch::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunSection {
    pub truth: TruthSpec,
    /// Defaults to `(0, γR, γR)` for the three-component kind.
    pub init: Option<Vec<f64>>,
    pub stepper: StepperKind,
    pub stop: StoppingRule,
    pub tolerances: ClassifyTolerances,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            truth: TruthSpec::three(),
            init: None,
            stepper: StepperKind::FirstOrderEm { step: 0.5 },
            stop: StoppingRule {
                max_iters: 2_000_000,
                step_tol: 1e-12,
                grad_tol: Some(1e-7),
            },
            tolerances: ClassifyTolerances::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McSection {
    pub truth: TruthSpec,
    pub trials: usize,
    pub success_margin: f64,
    pub stepper: StepperKind,
    pub stop: StoppingRule,
}

impl Default for McSection {
    fn default() -> Self {
        let base = McConfig::default();
        Self {
            truth: TruthSpec::tree(8),
            trials: base.trials,
            success_margin: base.success_margin,
            stepper: base.stepper,
            stop: base.stop,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifySection {
    pub truth: TruthSpec,
    /// Initial centers; drawn at random from the truth when empty.
    pub points: Vec<f64>,
}

impl Default for ClassifySection {
    fn default() -> Self {
        Self {
            truth: TruthSpec::tree(8),
            points: Vec::new(),
        }
    }
}

/// A single lemma check with an explicit configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "lemma", rename_all = "kebab-case")]
pub enum ExplicitCheck {
    GeneralCalc(GeneralCalcConfig),
    CenterPositive(CenterPositiveConfig),
    CenterNegative(CenterNegativeConfig),
    Wdifference(WdifferenceConfig),
}

impl ExplicitCheck {
    pub fn evaluate(&self, quad: &QuadratureSpec) -> Result<Vec<LemmaCheckReport>> {
        match self {
            ExplicitCheck::GeneralCalc(c) => Ok(vec![check_lemma_general_calc(c, quad)?]),
            ExplicitCheck::CenterPositive(c) => check_lemma_center_positive(c, quad),
            ExplicitCheck::CenterNegative(c) => Ok(vec![check_lemma_center_negative(c, quad)?]),
            ExplicitCheck::Wdifference(c) => Ok(vec![check_lemma_wdifference(c)?]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LemmaSection {
    pub per_lemma: usize,
    /// Integrator for the checks; the global quadrature settings do not apply.
    pub quad: QuadratureSpec,
    pub explicit: Vec<ExplicitCheck>,
}

impl Default for LemmaSection {
    fn default() -> Self {
        Self {
            per_lemma: 200,
            quad: lemma_quadrature(),
            explicit: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SaddleSection {
    pub truth: TruthSpec,
    pub trials: usize,
    pub step: f64,
    pub stop: StoppingRule,
    pub tolerances: ClassifyTolerances,
    pub check_jacobian: bool,
}

impl Default for SaddleSection {
    fn default() -> Self {
        let base = SaddleConfig::default();
        Self {
            truth: TruthSpec::default(),
            trials: base.trials,
            step: base.step,
            stop: base.stop,
            tolerances: base.tolerances,
            check_jacobian: base.check_jacobian,
        }
    }
}

/// Every parameter of every subcommand, with global settings on top.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub quad: QuadratureSpec,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub surface: SurfaceSection,
    pub construct: ConstructSection,
    pub boundary_values: BoundarySection,
    pub run: RunSection,
    pub mc_failure: McSection,
    pub classify_init: ClassifySection,
    pub lemma_suite: LemmaSection,
    pub saddle_trials: SaddleSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            master_seed: 20_160_901,
            quad: QuadratureSpec::default(),
            threads: None,
            out: None,
            surface: SurfaceSection::default(),
            construct: ConstructSection::default(),
            boundary_values: BoundarySection::default(),
            run: RunSection::default(),
            mc_failure: McSection::default(),
            classify_init: ClassifySection::default(),
            lemma_suite: LemmaSection::default(),
            saddle_trials: SaddleSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

// ---------------------------------------------------------------------------
// Command line
// ---------------------------------------------------------------------------

#[derive(Debug, Parser)]
#[command(
    name = "gmml",
    version,
    about = "Likelihood landscapes of Gaussian mixtures: constructions, EM runs and Monte Carlo harnesses"
)]
pub struct Cli {
    /// JSON experiment config; command-line flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed for every random draw.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Gauss–Hermite nodes per true component.
    #[arg(long, global = true)]
    pub quad_order: Option<usize>,
    /// Use the dense trapezoid cross-check rule instead of Gauss–Hermite.
    #[arg(long, global = true)]
    pub quad_validate: bool,
    /// Worker threads (further capped by GMML_THREADS).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory; artifacts and the resolved config are written here.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Likelihood and gradient norm over a grid of two-center configurations.
    Surface(SurfaceArgs),
    /// Emit a truth model as JSON.
    Construct(TruthArgs),
    /// Interior value and face suprema of region D.
    BoundaryValues(BoundaryArgs),
    /// Run EM or first-order EM and classify the limit point.
    Run(RunArgs),
    /// Monte Carlo failure rate from random initialization.
    McFailure(McArgs),
    /// Classify an initialization against the tree's urns.
    ClassifyInit(ClassifyArgs),
    /// Randomized sweep of the supporting inequalities.
    LemmaSuite(LemmaArgs),
    /// First-order EM from random starts; counts strict-saddle limits.
    SaddleTrials(SaddleArgs),
}

#[derive(Debug, Default, Args)]
pub struct TruthArgs {
    #[arg(long, value_enum)]
    pub kind: Option<TruthKind>,
    /// Comma-separated centers for `--kind centers`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub centers: Option<Vec<f64>>,
    #[arg(long)]
    pub scale: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub ratio: Option<f64>,
    /// Allow tree scales and ratios outside the faithful regime.
    #[arg(long)]
    pub relaxed: bool,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub inner_left: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub inner_right: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub outer: Option<Vec<f64>>,
}

impl TruthArgs {
    fn apply(&self, t: &mut TruthSpec) {
        if let Some(k) = self.kind {
            t.kind = k;
        }
        if let Some(c) = &self.centers {
            t.centers = c.clone();
        }
        if self.scale.is_some() {
            t.scale = self.scale;
        }
        set(&mut t.gamma, self.gamma);
        set(&mut t.count, self.count);
        set(&mut t.ratio, self.ratio);
        if self.relaxed {
            t.faithful = false;
        }
        set(&mut t.c, self.c);
        if self.delta.is_some() {
            t.delta = self.delta;
        }
        if let Some(v) = &self.inner_left {
            t.inner_left = v.clone();
        }
        if let Some(v) = &self.inner_right {
            t.inner_right = v.clone();
        }
        if let Some(v) = &self.outer {
            t.outer = v.clone();
        }
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

#[derive(Debug, Args)]
pub struct SurfaceArgs {
    #[command(flatten)]
    pub truth: TruthArgs,
    #[arg(long, allow_hyphen_values = true)]
    pub lo: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub hi: Option<f64>,
    #[arg(long)]
    pub step: Option<f64>,
}

#[derive(Debug, Args)]
pub struct BoundaryArgs {
    #[arg(long)]
    pub scale: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub box_factor: Option<f64>,
    #[arg(long)]
    pub starts: Option<usize>,
    #[arg(long)]
    pub max_refine_iters: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StepperArg {
    Em,
    FirstOrder,
}

#[derive(Debug, Default, Args)]
pub struct StepArgs {
    #[arg(long, value_enum)]
    pub stepper: Option<StepperArg>,
    /// Step size of first-order EM.
    #[arg(long = "step-size")]
    pub step_size: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub step_tol: Option<f64>,
    #[arg(long)]
    pub grad_tol: Option<f64>,
}

impl StepArgs {
    fn apply(&self, stepper: &mut StepperKind, stop: &mut StoppingRule) {
        let current = match *stepper {
            StepperKind::FirstOrderEm { step } => step,
            StepperKind::Em => 0.5,
        };
        let step = self.step_size.unwrap_or(current);
        match self.stepper {
            Some(StepperArg::Em) => *stepper = StepperKind::Em,
            Some(StepperArg::FirstOrder) => *stepper = StepperKind::FirstOrderEm { step },
            None => {
                if let StepperKind::FirstOrderEm { .. } = stepper {
                    *stepper = StepperKind::FirstOrderEm { step };
                }
            }
        }
        set(&mut stop.max_iters, self.max_iters);
        set(&mut stop.step_tol, self.step_tol);
        if self.grad_tol.is_some() {
            stop.grad_tol = self.grad_tol;
        }
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub truth: TruthArgs,
    #[command(flatten)]
    pub step: StepArgs,
    /// Comma-separated initial centers.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub init: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct McArgs {
    #[command(flatten)]
    pub truth: TruthArgs,
    #[command(flatten)]
    pub step: StepArgs,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub success_margin: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub truth: TruthArgs,
    /// Comma-separated initial centers; drawn at random when omitted.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub points: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct LemmaArgs {
    #[arg(long)]
    pub per_lemma: Option<usize>,
    /// Extra check as JSON, e.g. `{"lemma":"wdifference","candidates":[0,2],"index":0}`.
    #[arg(long = "check")]
    pub checks: Vec<String>,
}

#[derive(Debug, Args)]
pub struct SaddleArgs {
    #[command(flatten)]
    pub truth: TruthArgs,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long = "step-size")]
    pub step_size: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub grad_tol: Option<f64>,
    /// Skip the Jacobian check at every iterate.
    #[arg(long)]
    pub no_jacobian: bool,
}

/// Resolves the config: file (or defaults), then global and command flags.
pub fn resolve_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    set(&mut cfg.master_seed, cli.seed);
    if cli.quad_validate {
        cfg.quad = QuadratureSpec::validation();
    }
    if let Some(order) = cli.quad_order {
        cfg.quad.order = order;
    }
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    if cli.out.is_some() {
        cfg.out = cli.out.clone();
    }
    match &cli.command {
        Command::Surface(a) => {
            let s = &mut cfg.surface;
            a.truth.apply(&mut s.truth);
            set(&mut s.grid.lo, a.lo);
            set(&mut s.grid.hi, a.hi);
            set(&mut s.grid.step, a.step);
        }
        Command::Construct(a) => a.apply(&mut cfg.construct.truth),
        Command::BoundaryValues(a) => {
            let b = &mut cfg.boundary_values;
            set(&mut b.spec.scale, a.scale);
            set(&mut b.spec.gamma, a.gamma);
            set(&mut b.search.grid, a.grid);
            set(&mut b.search.box_factor, a.box_factor);
            set(&mut b.search.starts, a.starts);
            set(&mut b.search.max_refine_iters, a.max_refine_iters);
        }
        Command::Run(a) => {
            let r = &mut cfg.run;
            a.truth.apply(&mut r.truth);
            a.step.apply(&mut r.stepper, &mut r.stop);
            if a.init.is_some() {
                r.init = a.init.clone();
            }
        }
        Command::McFailure(a) => {
            let m = &mut cfg.mc_failure;
            a.truth.apply(&mut m.truth);
            a.step.apply(&mut m.stepper, &mut m.stop);
            set(&mut m.trials, a.trials);
            set(&mut m.success_margin, a.success_margin);
        }
        Command::ClassifyInit(a) => {
            a.truth.apply(&mut cfg.classify_init.truth);
            if let Some(p) = &a.points {
                cfg.classify_init.points = p.clone();
            }
        }
        Command::LemmaSuite(a) => {
            set(&mut cfg.lemma_suite.per_lemma, a.per_lemma);
            for c in &a.checks {
                cfg.lemma_suite.explicit.push(serde_json::from_str(c)?);
            }
        }
        Command::SaddleTrials(a) => {
            let s = &mut cfg.saddle_trials;
            a.truth.apply(&mut s.truth);
            set(&mut s.trials, a.trials);
            set(&mut s.step, a.step_size);
            set(&mut s.stop.max_iters, a.max_iters);
            if a.grad_tol.is_some() {
                s.stop.grad_tol = a.grad_tol;
                s.tolerances.grad_tol = a.grad_tol.unwrap_or(s.tolerances.grad_tol);
            }
            if a.no_jacobian {
                s.check_jacobian = false;
            }
        }
    }
    Ok(cfg)
}

// ---------------------------------------------------------------------------
// Execution
// ---------------------------------------------------------------------------

struct Sink {
    dir: Option<PathBuf>,
}

impl Sink {
    fn new(cfg: &ExperimentConfig) -> Result<Self> {
        if let Some(dir) = &cfg.out {
            fs::create_dir_all(dir)?;
            fs::write(dir.join("config.json"), cfg.to_json()?)?;
        }
        Ok(Self {
            dir: cfg.out.clone(),
        })
    }

    /// Writes `bytes` to `name` in the output directory, or to stdout when
    /// `primary` and no directory was given.
    fn emit(&self, name: &str, bytes: &[u8], primary: bool) -> Result<()> {
        match &self.dir {
            Some(dir) => fs::write(dir.join(name), bytes)?,
            None if primary => {
                let mut out = std::io::stdout().lock();
                out.write_all(bytes)?;
                out.flush()?;
            }
            None => {}
        }
        Ok(())
    }

    fn emit_json<T: Serialize>(&self, name: &str, value: &T, primary: bool) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.emit(name, text.as_bytes(), primary)
    }
}

/// Executes the parsed command and returns its exit code.
pub fn execute(cli: &Cli) -> Result<i32> {
    let cfg = resolve_config(cli)?;
    cfg.quad.validate()?;
    let sink = Sink::new(&cfg)?;
    install(cfg.threads, || dispatch(&cli.command, &cfg, &sink))?
}

fn dispatch(command: &Command, cfg: &ExperimentConfig, sink: &Sink) -> Result<i32> {
    match command {
        Command::Surface(_) => cmd_surface(cfg, sink),
        Command::Construct(_) => {
            let (model, _) = cfg.construct.truth.build()?;
            sink.emit_json("model.json", &model, true)?;
            Ok(EXIT_OK)
        }
        Command::BoundaryValues(_) => {
            let b = &cfg.boundary_values;
            let values = boundary_values(&b.spec, &cfg.quad, &b.search)?;
            sink.emit_json("boundary_values.json", &values, true)?;
            Ok(EXIT_OK)
        }
        Command::Run(_) => cmd_run(cfg, sink),
        Command::McFailure(_) => cmd_mc(cfg, sink),
        Command::ClassifyInit(_) => cmd_classify(cfg, sink),
        Command::LemmaSuite(_) => cmd_lemmas(cfg, sink),
        Command::SaddleTrials(_) => cmd_saddle(cfg, sink),
    }
}

fn cmd_surface(cfg: &ExperimentConfig, sink: &Sink) -> Result<i32> {
    let s = &cfg.surface;
    let (truth, _) = s.truth.build()?;
    if truth.count() != 2 {
        return Err(Error::invalid(
            "truth",
            "the surface needs exactly two true centers",
        ));
    }
    let surface = likelihood_surface(&truth, &s.grid, &cfg.quad, &s.refine)?;
    let mut csv = Vec::new();
    surface.write_csv(&mut csv)?;
    sink.emit("surface.csv", &csv, true)?;
    sink.emit_json("critical_points.json", &surface.critical_points, false)?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct RunSummary<'a> {
    iterations: usize,
    stop: StopReason,
    final_likelihood: f64,
    report: &'a crate::em::CriticalPointReport,
}

fn cmd_run(cfg: &ExperimentConfig, sink: &Sink) -> Result<i32> {
    let r = &cfg.run;
    let (truth, _) = r.truth.build()?;
    let init = match (&r.init, r.truth.kind) {
        (Some(init), _) => init.clone(),
        (None, TruthKind::Three) => r.truth.three_spec()?.interior_point().to_vec(),
        (None, _) => {
            return Err(Error::invalid(
                "init",
                "required unless the truth kind is three",
            ))
        }
    };
    if init.len() != truth.count() {
        return Err(Error::DimensionMismatch {
            expected: truth.count(),
            found: init.len(),
        });
    }
    let stepper = r.stepper.stepper(&truth, cfg.quad);
    let traj = run(&init, &stepper, &r.stop, None)?;
    let mut csv = Vec::new();
    traj.write_csv(&mut csv)?;
    sink.emit("trajectory.csv", &csv, true)?;
    let report = classify_critical_point(traj.final_point(), &truth, &cfg.quad, &r.tolerances)?;
    let summary = RunSummary {
        iterations: traj.iterations(),
        stop: traj.stop,
        final_likelihood: traj.final_likelihood(),
        report: &report,
    };
    sink.emit_json("report.json", &summary, false)?;
    Ok(if traj.stop == StopReason::MaxIters {
        EXIT_NON_CONVERGENCE
    } else {
        EXIT_OK
    })
}

fn cmd_mc(cfg: &ExperimentConfig, sink: &Sink) -> Result<i32> {
    let m = &cfg.mc_failure;
    let (truth, tree) = m.truth.build()?;
    let mc = McConfig {
        trials: m.trials,
        success_margin: m.success_margin,
        stepper: m.stepper,
        stop: m.stop,
        quad: cfg.quad,
        master_seed: cfg.master_seed,
        threads: cfg.threads,
    };
    let report = mc_failure_rate(&truth, tree.as_ref(), &mc)?;
    let mut csv = Vec::new();
    write_trials_csv(&report.records, &mut csv)?;
    sink.emit("trials.csv", &csv, false)?;
    sink.emit_json("summary.json", &report.summary, true)?;
    Ok(EXIT_OK)
}

fn cmd_classify(cfg: &ExperimentConfig, sink: &Sink) -> Result<i32> {
    let c = &cfg.classify_init;
    let (truth, tree) = c.truth.build()?;
    let tree =
        tree.ok_or_else(|| Error::invalid("truth", "classification needs a tree or pruned kind"))?;
    let points = if c.points.is_empty() {
        init_points(&random_init(&truth, &mut seeded(cfg.master_seed)))
    } else {
        c.points.clone()
    };
    let classification = classify_init(&points, &tree)?;
    #[derive(Serialize)]
    struct Out<'a> {
        points: &'a [f64],
        classification: crate::experiments::InitClassification,
    }
    sink.emit_json(
        "classification.json",
        &Out {
            points: &points,
            classification,
        },
        true,
    )?;
    Ok(EXIT_OK)
}

fn cmd_lemmas(cfg: &ExperimentConfig, sink: &Sink) -> Result<i32> {
    let l = &cfg.lemma_suite;
    let mut reports = Vec::new();
    for check in &l.explicit {
        reports.extend(check.evaluate(&l.quad)?);
    }
    reports.extend(lemma_suite(&LemmaSuiteConfig {
        per_lemma: l.per_lemma,
        master_seed: cfg.master_seed,
        quad: l.quad,
        threads: cfg.threads,
    })?);
    let mut csv = Vec::new();
    write_lemma_csv(&reports, &mut csv)?;
    sink.emit("lemmas.csv", &csv, true)?;
    let failed = reports.iter().filter(|r| !r.pass).count();
    if failed > 0 {
        eprintln!("{failed} of {} checks failed", reports.len());
        return Ok(EXIT_CHECK_FAILED);
    }
    Ok(EXIT_OK)
}

fn cmd_saddle(cfg: &ExperimentConfig, sink: &Sink) -> Result<i32> {
    let s = &cfg.saddle_trials;
    let (truth, _) = s.truth.build()?;
    let summary = saddle_avoidance_trial(
        &truth,
        &SaddleConfig {
            trials: s.trials,
            step: s.step,
            stop: s.stop,
            quad: cfg.quad,
            tolerances: s.tolerances,
            master_seed: cfg.master_seed,
            threads: cfg.threads,
            check_jacobian: s.check_jacobian,
        },
    )?;
    let mut csv = Vec::new();
    writeln!(
        csv,
        "index,seed,iterations,converged,kind,grad_norm,max_eigenvalue,min_jacobian_eigenvalue"
    )?;
    for r in &summary.records {
        let kind = serde_json::to_value(r.report.kind)?;
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            r.index,
            r.seed,
            r.iterations,
            r.converged,
            kind.as_str().unwrap_or_default(),
            crate::em::fmt_f64(r.report.grad_norm),
            crate::em::fmt_f64(*r.report.hessian_eigenvalues.last().unwrap_or(&f64::NAN)),
            r.min_jacobian_eigenvalue
                .map(crate::em::fmt_f64)
                .unwrap_or_default()
        )?;
    }
    sink.emit("trials.csv", &csv, false)?;
    #[derive(Serialize)]
    struct Out {
        trials: usize,
        converged: usize,
        strict_saddles: usize,
        local_maxima: usize,
        indeterminate: usize,
        min_jacobian_eigenvalue: Option<f64>,
    }
    sink.emit_json(
        "summary.json",
        &Out {
            trials: summary.trials,
            converged: summary.converged,
            strict_saddles: summary.strict_saddles,
            local_maxima: summary.local_maxima,
            indeterminate: summary.indeterminate,
            min_jacobian_eigenvalue: summary.min_jacobian_eigenvalue,
        },
        true,
    )?;
    Ok(if summary.converged < summary.trials {
        EXIT_NON_CONVERGENCE
    } else {
        EXIT_OK
    })
}

pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Hypothesis(_) => EXIT_HYPOTHESIS,
        _ => EXIT_USAGE,
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}
