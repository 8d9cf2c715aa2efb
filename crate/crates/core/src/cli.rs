//! Command-line front end.
//!
//! Exit codes: 0 success, 1 configuration or parse error, 2 search budget
//! exhausted, 3 verification failure, 4 selftest failure.
//!
//! Every option can also come from a TOML file given by `--config`, using the
//! flag name with `-` replaced by `_` (`beta_mode = "gaussian"`, `D = 20`).
//! Flags win over the file, the file wins over built-in defaults.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::designer::{
    design_curve_with, verify_plan, ArrowSequence, BetaMode, CurvePlan, DesignError, DesignOptions, SearchBudget,
    Verdict, VerifyOptions, BASE_OFFSET,
};
use crate::distributions::{FeatureLaw, ProductLaw};
use crate::montecarlo::derive_seed;
use crate::plan::{read_plan, write_plan, PlanError};
use crate::risk::{estimate_curve, write_estimates_csv, BetaSpec, RiskError, RiskEstimate};
use crate::selftest::run_selftest;

/// Seed used when none is given.
pub const DEFAULT_SEED: u64 = 20_240_417;
/// Environment variable with the default worker count.
pub const THREADS_ENV: &str = "MULTIDESCENT_THREADS";
pub const DEFAULT_OUT: &str = "out";
pub const DEFAULT_TRIALS: usize = 20_000;
pub const DEFAULT_BUDGET: usize = 1_280_000;
/// Label of the seed stream used for the design-time curve.
const CURVE_LABEL: u64 = 0xC07E;

#[derive(Debug, Parser)]
#[command(name = "multidescent", version, about = "Design and check risk curves of minimum-norm regression")]
pub struct Cli {
    /// TOML file supplying defaults for any option.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads. Never changes results.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Search feature laws realizing an up/down pattern; writes plan and curve.
    Design(DesignArgs),
    /// Re-certify every step of a plan on fresh draws.
    Verify(VerifyArgs),
    /// Estimate the risk curve of a plan or of an inline law.
    Estimate(EstimateArgs),
    /// Run the built-in diagnostics.
    Selftest(SelftestArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaModeArg {
    Zero,
    Gaussian,
}

impl From<BetaModeArg> for BetaMode {
    fn from(b: BetaModeArg) -> Self {
        match b {
            BetaModeArg::Zero => BetaMode::Zero,
            BetaModeArg::Gaussian => BetaMode::GaussianBeta,
        }
    }
}

#[derive(Debug, Args)]
pub struct DesignArgs {
    /// Number of training samples.
    #[arg(long)]
    pub n: Option<usize>,
    /// Ambient dimension; defaults to n + 8 + number of arrows.
    #[arg(long = "D")]
    pub dim: Option<usize>,
    /// One `u` or `d` per designed step.
    #[arg(long)]
    pub arrows: Option<String>,
    /// Noise standard deviation.
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long, value_enum)]
    pub beta_mode: Option<BetaModeArg>,
    /// Fixes rho in gaussian mode instead of choosing it.
    #[arg(long)]
    pub rho: Option<f64>,
    /// Initial trials per certification, also used for the curve.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Maximum trials per certification.
    #[arg(long)]
    pub budget: Option<usize>,
    /// Master seed, below 2^63.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Experimental: length of the standard Gaussian block (default n + 8).
    /// Shorter blocks are outside the finite-moment guarantees.
    #[arg(long)]
    pub base_len: Option<usize>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub plan: Option<PathBuf>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also check the steps below n, which must all ascend.
    #[arg(long)]
    pub underparam: bool,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Plan file supplying the law, n, eta and beta.
    #[arg(long, conflicts_with = "law")]
    pub plan: Option<PathBuf>,
    /// Inline law, e.g. `std*14,gauss:0.5,mix:0.25:16`.
    #[arg(long)]
    pub law: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub d_min: Option<usize>,
    #[arg(long)]
    pub d_max: Option<usize>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long, value_enum)]
    pub beta_mode: Option<BetaModeArg>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SelftestArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    /// Add a check that always fails, to exercise the failure path.
    #[arg(long)]
    pub force_fail: bool,
}

/// Keys accepted in a `--config` file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub n: Option<usize>,
    #[serde(rename = "D")]
    pub dim: Option<usize>,
    pub arrows: Option<String>,
    pub eta: Option<f64>,
    pub beta_mode: Option<BetaModeArg>,
    pub rho: Option<f64>,
    pub trials: Option<usize>,
    pub budget: Option<usize>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub plan: Option<PathBuf>,
    pub law: Option<String>,
    pub d_min: Option<usize>,
    pub d_max: Option<usize>,
    pub base_len: Option<usize>,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Budget(String),
    Verification(String),
    Selftest(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Budget(_) => 2,
            CliError::Verification(_) => 3,
            CliError::Selftest(_) => 4,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Budget(m) | CliError::Verification(m) | CliError::Selftest(m) => m,
        }
    }
}

impl From<DesignError> for CliError {
    fn from(e: DesignError) -> Self {
        match e {
            DesignError::BudgetExhausted { .. } => CliError::Budget(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<RiskError> for CliError {
    fn from(e: RiskError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<PlanError> for CliError {
    fn from(e: PlanError) -> Self {
        CliError::Config(e.to_string())
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Config(format!("{}: {e}", path.display()))
}

fn load_config(path: Option<&Path>) -> Result<FileConfig, CliError> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    toml::from_str(&text).map_err(|e| {
        let line = e.span().map(|s| text[..s.start].matches('\n').count() + 1).unwrap_or(1);
        CliError::Config(format!("{} line {line}: {}", path.display(), e.message()))
    })
}

fn required<T>(name: &str, v: Option<T>) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::Config(format!("missing required option --{name}")))
}

fn check_seed(seed: u64) -> Result<u64, CliError> {
    if seed > i64::MAX as u64 {
        return Err(CliError::Config(format!("seed must be below 2^63, got {seed}")));
    }
    Ok(seed)
}

fn resolve_threads(flag: Option<usize>, file: Option<usize>) -> Result<Option<usize>, CliError> {
    let env = match std::env::var(THREADS_ENV) {
        Ok(v) => Some(
            v.trim()
                .parse::<usize>()
                .map_err(|_| CliError::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?,
        ),
        Err(_) => None,
    };
    let t = flag.or(file).or(env);
    if t == Some(0) {
        return Err(CliError::Config("thread count must be positive".into()));
    }
    Ok(t)
}

/// Parses an inline law: comma-separated `std`, `gauss:SIGMA` or
/// `mix:SIGMA:MU`, each optionally repeated with `*COUNT`.
pub fn parse_law_spec(spec: &str) -> Result<ProductLaw, CliError> {
    let bad = |item: &str, why: String| CliError::Config(format!("law item {item:?}: {why}"));
    let mut laws = Vec::new();
    for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (body, count) = match item.split_once('*') {
            Some((b, c)) => (b, c.parse::<usize>().map_err(|e| bad(item, e.to_string()))?),
            None => (item, 1),
        };
        let parts: Vec<&str> = body.split(':').collect();
        let num = |s: &str| s.parse::<f64>().map_err(|e| bad(item, e.to_string()));
        let law = match parts.as_slice() {
            ["std"] => FeatureLaw::StdGaussian,
            ["gauss", s] => FeatureLaw::gaussian(num(s)?).map_err(|e| bad(item, e.to_string()))?,
            ["mix", s, m] => FeatureLaw::trimodal(num(s)?, num(m)?).map_err(|e| bad(item, e.to_string()))?,
            _ => return Err(bad(item, "expected std, gauss:SIGMA or mix:SIGMA:MU".into())),
        };
        laws.extend(std::iter::repeat_n(law, count));
    }
    ProductLaw::new(laws).map_err(|e| CliError::Config(e.to_string()))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        }
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn csv_text(estimates: &[RiskEstimate], comments: &[String]) -> String {
    let mut buf = Vec::new();
    write_estimates_csv(estimates, comments, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("ascii output")
}

/// Whitespace-separated companion file for plotting tools.
fn dat_text(estimates: &[RiskEstimate], comments: &[String]) -> String {
    let mut s = String::new();
    for c in comments {
        let _ = writeln!(s, "# {c}");
    }
    let _ = writeln!(s, "# d mean stderr");
    for e in estimates {
        let _ = writeln!(s, "{} {:.16e} {:.16e}", e.d, e.mean, e.stderr);
    }
    s
}

/// Design configuration after merging flags, file and defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignConfig {
    pub n: usize,
    pub dim: usize,
    pub arrows: ArrowSequence,
    pub eta: f64,
    pub beta_mode: BetaMode,
    pub rho: Option<f64>,
    pub trials: usize,
    pub budget: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub base_len: Option<usize>,
}

impl DesignConfig {
    pub fn resolve(args: &DesignArgs, file: &FileConfig) -> Result<Self, CliError> {
        let n = required("n", args.n.or(file.n))?;
        let arrows_text = required("arrows", args.arrows.clone().or(file.arrows.clone()))?;
        let arrows = ArrowSequence::parse(&arrows_text).map_err(|e| CliError::Config(e.to_string()))?;
        let base_len = args.base_len.or(file.base_len);
        let base = base_len.unwrap_or(n + BASE_OFFSET);
        let dim = args.dim.or(file.dim).unwrap_or(base + arrows.len());
        if arrows.is_empty() || dim != base + arrows.len() {
            return Err(CliError::Config(format!(
                "arrows must have length D - {} = {}, got {:?} (length {})",
                if base_len.is_some() { "base_len".to_string() } else { "(n + 8)".to_string() },
                dim as i64 - base as i64,
                arrows_text,
                arrows.len()
            )));
        }
        Ok(DesignConfig {
            n,
            dim,
            arrows,
            eta: args.eta.or(file.eta).unwrap_or(1.0),
            beta_mode: args.beta_mode.or(file.beta_mode).unwrap_or(BetaModeArg::Zero).into(),
            rho: args.rho.or(file.rho),
            trials: args.trials.or(file.trials).unwrap_or(DEFAULT_TRIALS),
            budget: args.budget.or(file.budget).unwrap_or(DEFAULT_BUDGET),
            seed: check_seed(args.seed.or(file.seed).unwrap_or(DEFAULT_SEED))?,
            out: args.out.clone().or(file.out.clone()).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)),
            base_len,
        })
    }

    /// Provenance lines; the thread count and output path are left out
    /// because they do not affect any result.
    pub fn comments(&self) -> Vec<String> {
        let mut c = vec![
            format!("multidescent {} design", env!("CARGO_PKG_VERSION")),
            format!("n = {}", self.n),
            format!("D = {}", self.dim),
            format!("arrows = {}", self.arrows),
            format!("eta = {:?}", self.eta),
            format!("beta_mode = {}", self.beta_mode.name()),
        ];
        if let Some(r) = self.rho {
            c.push(format!("rho = {r:?}"));
        }
        if let Some(b) = self.base_len {
            c.push(format!("base_len = {b} (experimental)"));
        }
        c.push(format!("trials = {}", self.trials));
        c.push(format!("budget = {}", self.budget));
        c.push(format!("seed = {}", self.seed));
        c.push("verdicts are Monte Carlo certificates at 3 standard errors, not proofs".into());
        c
    }
}

/// Runs a design and writes `plan.toml`, `curve.csv` and `curve.dat`.
pub fn cmd_design(cfg: &DesignConfig) -> Result<CurvePlan, CliError> {
    let budget = SearchBudget {
        initial_trials: cfg.trials,
        max_trials: cfg.budget.max(cfg.trials),
        threshold: 3.0,
    };
    if cfg.rho.is_some() && cfg.beta_mode == BetaMode::Zero {
        return Err(CliError::Config("--rho needs --beta-mode gaussian".into()));
    }
    let options = DesignOptions {
        base_len: cfg.base_len,
        fixed_rho: cfg.rho,
    };
    let plan = design_curve_with(cfg.n, &cfg.arrows, cfg.eta, cfg.beta_mode, &budget, cfg.seed, options)?;
    let mut comments = cfg.comments();
    if let Some(r) = plan.rho {
        comments.push(format!("chosen rho = {r:?}"));
    }
    let curve = estimate_curve(
        &plan.laws,
        cfg.n,
        plan.base_len(),
        plan.dim(),
        plan.eta,
        &plan.beta_spec(),
        cfg.trials.max(2),
        derive_seed(cfg.seed, &[CURVE_LABEL]),
    )?;
    write_file(&cfg.out.join("plan.toml"), &write_plan(&plan, &comments)?)?;
    write_file(&cfg.out.join("curve.csv"), &csv_text(&curve, &comments))?;
    write_file(&cfg.out.join("curve.dat"), &dat_text(&curve, &comments))?;
    println!("{}", plan_table(&plan));
    if !plan.all_certified() {
        let bad: Vec<String> = plan
            .certification
            .iter()
            .filter(|c| c.verdict != Verdict::Certified)
            .map(|c| format!("d = {} {}", c.d, c.verdict.name()))
            .collect();
        return Err(CliError::Budget(format!("budget exhausted, uncertified steps: {}", bad.join(", "))));
    }
    Ok(plan)
}

fn plan_table(plan: &CurvePlan) -> String {
    let mut s = String::from("  d  arrow  law                                  delta_mean        delta_stderr   trials  verdict\n");
    let arrows = plan.arrows();
    for (k, c) in plan.certification.iter().enumerate() {
        let law = plan.laws.law(c.d + 1).map(|l| format!("{l:?}")).unwrap_or_default();
        let _ = writeln!(
            s,
            "{:>3}  {:<5}  {:<36} {:>+.6e}  {:>.6e}  {:>7}  {}",
            c.d,
            arrows.0.get(k).map(|a| a.as_char()).unwrap_or('?'),
            law,
            c.delta_mean,
            c.delta_stderr,
            c.trials,
            c.verdict.name()
        );
    }
    if let Some(r) = plan.rho {
        let _ = writeln!(s, "rho = {r:.6e}");
    }
    s
}

fn load_plan(path: &Path) -> Result<CurvePlan, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    read_plan(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn cmd_verify(args: &VerifyArgs, file: &FileConfig) -> Result<(), CliError> {
    let path = required("plan", args.plan.clone().or(file.plan.clone()))?;
    let plan = load_plan(&path)?;
    let trials = args.trials.or(file.trials).unwrap_or(DEFAULT_TRIALS);
    let budget = args.budget.or(file.budget).unwrap_or(DEFAULT_BUDGET);
    let seed = check_seed(args.seed.or(file.seed).unwrap_or(DEFAULT_SEED))?;
    let out = args.out.clone().or(file.out.clone()).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let options = VerifyOptions {
        budget: SearchBudget {
            initial_trials: trials,
            max_trials: budget.max(trials),
            threshold: 3.0,
        },
        seed,
        include_underparam: args.underparam,
    };
    let report = verify_plan(&plan, &options)?;
    let mut text = String::new();
    let _ = writeln!(text, "# multidescent {} verify", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(text, "# trials = {trials}, budget = {budget}, seed = {seed}");
    let _ = writeln!(text, "  d  arrow  delta_mean       delta_stderr    trials  verdict       suggested_trials");
    for s in &report.steps {
        let _ = writeln!(
            text,
            "{:>3}  {:<5}  {:>+.6e}  {:>.6e}  {:>8}  {:<12}  {}",
            s.d,
            s.arrow.as_char(),
            s.delta.delta_mean,
            s.delta.delta_stderr,
            s.delta.trials,
            s.verdict.name(),
            s.suggested_trials.map(|t| t.to_string()).unwrap_or_else(|| "-".into())
        );
    }
    let _ = writeln!(text, "overall: {}", if report.passed() { "pass" } else { "fail" });
    write_file(&out.join("verify.txt"), &text)?;
    print!("{text}");
    if !report.passed() {
        let bad: Vec<String> = report
            .steps
            .iter()
            .filter(|s| s.verdict != Verdict::Certified)
            .map(|s| format!("d = {} {}", s.d, s.verdict.name()))
            .collect();
        return Err(CliError::Verification(format!("verification failed: {}", bad.join(", "))));
    }
    Ok(())
}

pub fn cmd_estimate(args: &EstimateArgs, file: &FileConfig) -> Result<Vec<RiskEstimate>, CliError> {
    let plan_path = args.plan.clone().or(file.plan.clone());
    let law_text = args.law.clone().or(file.law.clone());
    let (law, plan) = match (plan_path, law_text) {
        (Some(p), None) => {
            let plan = load_plan(&p)?;
            (plan.laws.clone(), Some(plan))
        }
        (None, Some(l)) => (parse_law_spec(&l)?, None),
        (Some(_), Some(_)) => return Err(CliError::Config("give either --plan or --law, not both".into())),
        (None, None) => return Err(CliError::Config("missing --plan or --law".into())),
    };
    let n = match (args.n.or(file.n), &plan) {
        (Some(n), Some(p)) if n != p.n => {
            return Err(CliError::Config(format!("--n {n} contradicts the plan's n = {}", p.n)))
        }
        (Some(n), _) => n,
        (None, Some(p)) => p.n,
        (None, None) => return Err(CliError::Config("missing required option --n".into())),
    };
    let d_min = args.d_min.or(file.d_min).unwrap_or(1);
    let d_max = args.d_max.or(file.d_max).unwrap_or(law.dim());
    if d_min == 0 || d_min > d_max || d_max > law.dim() {
        return Err(CliError::Config(format!(
            "empty or invalid dimension range {d_min}..={d_max} for a law of dimension {}",
            law.dim()
        )));
    }
    if d_min == d_max && d_min == n {
        return Err(CliError::Config("dimension range contains only d = n".into()));
    }
    let eta = args.eta.or(file.eta).or(plan.as_ref().map(|p| p.eta)).unwrap_or(1.0);
    let beta_mode: BetaMode = match args.beta_mode.or(file.beta_mode) {
        Some(b) => b.into(),
        None => plan.as_ref().map(|p| p.beta_mode).unwrap_or(BetaMode::Zero),
    };
    let beta = match beta_mode {
        BetaMode::Zero => BetaSpec::Zero,
        BetaMode::GaussianBeta => {
            let rho = args
                .rho
                .or(file.rho)
                .or(plan.as_ref().and_then(|p| p.rho))
                .ok_or_else(|| CliError::Config("gaussian beta mode needs --rho".into()))?;
            BetaSpec::GaussianBeta { rho }
        }
    };
    let trials = args.trials.or(file.trials).unwrap_or(DEFAULT_TRIALS);
    let seed = check_seed(args.seed.or(file.seed).unwrap_or(DEFAULT_SEED))?;
    let out = args.out.clone().or(file.out.clone()).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let mut comments = vec![
        format!("multidescent {} estimate", env!("CARGO_PKG_VERSION")),
        format!("n = {n}"),
        format!("D = {}", law.dim()),
        format!("d_range = {d_min}..={d_max}"),
        format!("eta = {eta:?}"),
        format!("beta = {beta:?}"),
        format!("trials = {trials}"),
        format!("seed = {seed}"),
    ];
    if (d_min..=d_max).contains(&n) {
        eprintln!("note: skipping d = n = {n}, where the risk is not finite");
        comments.push(format!("skipped d = n = {n}"));
    }
    let curve = estimate_curve(&law, n, d_min, d_max, eta, &beta, trials, seed)?;
    write_file(&out.join("estimate.csv"), &csv_text(&curve, &comments))?;
    write_file(&out.join("estimate.dat"), &dat_text(&curve, &comments))?;
    print!("{}", csv_text(&curve, &[]));
    Ok(curve)
}

pub fn cmd_selftest(args: &SelftestArgs, file: &FileConfig) -> Result<(), CliError> {
    let seed = check_seed(args.seed.or(file.seed).unwrap_or(DEFAULT_SEED))?;
    let checks = run_selftest(seed, args.force_fail)?;
    for c in &checks {
        println!("{}", c.line());
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
    if failed.is_empty() {
        println!("selftest: all {} checks passed", checks.len());
        Ok(())
    } else {
        Err(CliError::Selftest(format!("selftest failed: {}", failed.join(", "))))
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let file = load_config(cli.config.as_deref())?;
    let threads = resolve_threads(cli.threads, file.threads)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| CliError::Config(e.to_string()))?;
    pool.install(|| match &cli.command {
        Command::Design(a) => cmd_design(&DesignConfig::resolve(a, &file)?).map(|_| ()),
        Command::Verify(a) => cmd_verify(a, &file),
        Command::Estimate(a) => cmd_estimate(a, &file).map(|_| ()),
        Command::Selftest(a) => cmd_selftest(a, &file),
    })
}

/// Parses `args` and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inline_law_spec() {
        let law = parse_law_spec("std*3, gauss:0.5,mix:0.25:16").unwrap();
        assert_eq!(law.dim(), 5);
        assert_eq!(law.law(4), Some(&FeatureLaw::Gaussian { sigma: 0.5 }));
        assert_eq!(law.law(5), Some(&FeatureLaw::TrimodalMix { sigma: 0.25, mu: 16.0 }));
        assert!(parse_law_spec("std*x").is_err());
        assert!(parse_law_spec("gauss:-1").is_err());
        assert!(parse_law_spec("").is_err());
    }

    fn design_args(arrows: &str) -> DesignArgs {
        DesignArgs {
            n: Some(4),
            dim: None,
            arrows: Some(arrows.into()),
            eta: None,
            beta_mode: None,
            rho: None,
            trials: None,
            budget: None,
            seed: None,
            out: None,
            base_len: None,
        }
    }

    #[test]
    fn design_config_precedence_and_arrow_length() {
        let file: FileConfig = toml::from_str("eta = 2.0\nseed = 5\narrows = \"uu\"\nD = 14").unwrap();
        let cfg = DesignConfig::resolve(&design_args("du"), &file).unwrap();
        assert_eq!(cfg.dim, 14);
        assert_eq!(cfg.eta, 2.0);
        assert_eq!(cfg.seed, 5);
        assert_eq!(cfg.arrows.to_string(), "du");
        assert_eq!(cfg.trials, DEFAULT_TRIALS);
        let bad = DesignConfig::resolve(&design_args("d"), &file).unwrap_err();
        assert_eq!(bad.exit_code(), 1);
        let defaults = DesignConfig::resolve(&design_args("ddd"), &FileConfig::default()).unwrap();
        assert_eq!(defaults.dim, 15);
        assert_eq!(defaults.seed, DEFAULT_SEED);
    }

    #[test]
    fn unknown_config_keys_rejected() {
        assert!(toml::from_str::<FileConfig>("colour = 1").is_err());
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(main_with_args(["multidescent", "design", "--n", "abc"]), 1);
        assert_eq!(main_with_args(["multidescent", "frobnicate"]), 1);
        assert_eq!(main_with_args(["multidescent", "--help"]), 0);
    }
}
