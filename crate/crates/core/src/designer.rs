//! Searching per-dimension feature laws that make the risk curve follow a
//! prescribed pattern of ascents and descents.
//!
//! The first `n + 8` coordinates are standard Gaussian. Every later
//! coordinate gets a Gaussian law when the curve should descend there and a
//! trimodal mixture when it should ascend. Scales are found by walking the
//! grid `σ = 1, 1/2, 1/4, …, 2⁻²⁰` until a paired Monte Carlo estimate of
//! `L_{d+1} - L_d` has the requested sign with a 3-standard-error margin.
//!
//! These are statistical certificates. They say the sign is very likely
//! right; they are not proofs of the exact inequalities.

use std::fmt;

use thiserror::Error;

use crate::distributions::{FeatureLaw, LawError, ProductLaw};
use crate::montecarlo::derive_seed;
use crate::risk::{
    estimate_gram_moments, paired_samples, summarize_paired, BetaSpec, PairedDelta, PairedSample, RiskError,
    StepSpec,
};

/// Number of standard Gaussian coordinates before the designed ones, beyond `n`.
pub const BASE_OFFSET: usize = 8;
/// Coarsest grid exponent tried is 0 (σ = 1); finest is this one.
pub const SIGMA_FLOOR_EXP: u32 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Arrow {
    Up,
    Down,
}

impl Arrow {
    pub fn sign(self) -> f64 {
        match self {
            Arrow::Up => 1.0,
            Arrow::Down => -1.0,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Arrow::Up => 'u',
            Arrow::Down => 'd',
        }
    }

    /// Arrow implied by the law of the coordinate being added.
    pub fn for_law(law: &FeatureLaw) -> Arrow {
        match law {
            FeatureLaw::TrimodalMix { .. } => Arrow::Up,
            _ => Arrow::Down,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ArrowSequence(pub Vec<Arrow>);

impl ArrowSequence {
    /// Parses a string of `u`/`d` characters (case-insensitive).
    pub fn parse(s: &str) -> Result<Self, DesignError> {
        s.chars()
            .map(|c| match c.to_ascii_lowercase() {
                'u' => Ok(Arrow::Up),
                'd' => Ok(Arrow::Down),
                other => Err(DesignError::InvalidArrows(format!("unexpected character {other:?}"))),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(ArrowSequence)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for ArrowSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for a in &self.0 {
            write!(f, "{}", a.as_char())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BetaMode {
    Zero,
    GaussianBeta,
}

impl BetaMode {
    pub fn name(self) -> &'static str {
        match self {
            BetaMode::Zero => "zero",
            BetaMode::GaussianBeta => "gaussian",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "zero" => Some(BetaMode::Zero),
            "gaussian" => Some(BetaMode::GaussianBeta),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    /// Sign matches the arrow with the required margin.
    Certified,
    /// Neither sign is established.
    Inconclusive,
    /// The opposite sign is established.
    Flipped,
}

impl Verdict {
    pub fn name(self) -> &'static str {
        match self {
            Verdict::Certified => "certified",
            Verdict::Inconclusive => "inconclusive",
            Verdict::Flipped => "flipped",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "certified" => Some(Verdict::Certified),
            "inconclusive" => Some(Verdict::Inconclusive),
            "flipped" => Some(Verdict::Flipped),
            _ => None,
        }
    }

    /// Re-evaluates a stored estimate: `s·mean - margin` against `threshold·stderr`.
    pub fn evaluate(arrow: Arrow, delta_mean: f64, delta_stderr: f64, margin: f64, threshold: f64) -> Verdict {
        let stat = arrow.sign() * delta_mean - margin;
        if stat > threshold * delta_stderr {
            Verdict::Certified
        } else if stat < -threshold * delta_stderr {
            Verdict::Flipped
        } else {
            Verdict::Inconclusive
        }
    }
}

/// The recorded evidence for one step `d → d + 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepCertificate {
    pub d: usize,
    pub delta_mean: f64,
    pub delta_stderr: f64,
    pub trials: usize,
    pub seed: u64,
    pub verdict: Verdict,
}

impl StepCertificate {
    fn from_delta(delta: &PairedDelta, verdict: Verdict) -> Self {
        StepCertificate {
            d: delta.d_from,
            delta_mean: delta.delta_mean,
            delta_stderr: delta.delta_stderr,
            trials: delta.trials,
            seed: delta.seed,
            verdict,
        }
    }
}

/// A designed product law together with its certificates.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePlan {
    pub n: usize,
    /// All `D` coordinate laws; the first `n + 8` are standard Gaussian.
    pub laws: ProductLaw,
    pub eta: f64,
    pub beta_mode: BetaMode,
    /// Scale of the Gaussian `β`; present in Gaussian-β mode.
    pub rho: Option<f64>,
    /// One entry per designed step, in increasing `d`.
    pub certification: Vec<StepCertificate>,
}

impl CurvePlan {
    pub fn dim(&self) -> usize {
        self.laws.dim()
    }

    /// Length of the leading run of standard Gaussian coordinates. Designed
    /// laws are never `StdGaussian`, so this is where the design starts.
    pub fn base_len(&self) -> usize {
        self.laws
            .laws()
            .iter()
            .take_while(|l| matches!(l, FeatureLaw::StdGaussian))
            .count()
    }

    /// Arrow of each designed step, read off the laws.
    pub fn arrows(&self) -> ArrowSequence {
        ArrowSequence(
            self.laws.laws()[self.base_len()..]
                .iter()
                .map(Arrow::for_law)
                .collect(),
        )
    }

    pub fn beta_spec(&self) -> BetaSpec {
        match (self.beta_mode, self.rho) {
            (BetaMode::GaussianBeta, Some(rho)) => BetaSpec::GaussianBeta { rho },
            _ => BetaSpec::Zero,
        }
    }

    /// Structural checks: a base block past `n`, at least one designed
    /// step, a certificate per step when certificates are present, positive
    /// `η` and a `ρ` exactly in Gaussian-β mode.
    pub fn validate(&self) -> Result<(), DesignError> {
        let base = self.base_len();
        if base <= self.n {
            return Err(DesignError::InvalidConfig(format!(
                "plan needs more than n = {} leading std_gaussian laws, found {base}",
                self.n
            )));
        }
        if base == self.dim() {
            return Err(DesignError::InvalidArrows("plan has no designed coordinates".into()));
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(DesignError::InvalidConfig(format!("eta must be positive, got {}", self.eta)));
        }
        match (self.beta_mode, self.rho) {
            (BetaMode::GaussianBeta, None) => {
                return Err(DesignError::InvalidConfig("gaussian beta mode needs rho".into()))
            }
            (BetaMode::GaussianBeta, Some(r)) if !(r.is_finite() && r > 0.0) => {
                return Err(DesignError::InvalidConfig(format!("rho must be positive, got {r}")))
            }
            (BetaMode::Zero, Some(_)) => {
                return Err(DesignError::InvalidConfig("rho given in zero beta mode".into()))
            }
            _ => {}
        }
        if !self.certification.is_empty() {
            let expected: Vec<usize> = (base..self.dim()).collect();
            let got: Vec<usize> = self.certification.iter().map(|c| c.d).collect();
            if expected != got {
                return Err(DesignError::InvalidConfig(format!(
                    "certification dimensions {got:?} do not match designed steps {expected:?}"
                )));
            }
        }
        Ok(())
    }

    pub fn all_certified(&self) -> bool {
        self.certification.iter().all(|c| c.verdict == Verdict::Certified)
    }
}

/// Trial schedule of a single certification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchBudget {
    pub initial_trials: usize,
    /// Cap on trials per certification; trials quadruple up to it.
    pub max_trials: usize,
    pub threshold: f64,
}

impl Default for SearchBudget {
    fn default() -> Self {
        SearchBudget {
            initial_trials: 20_000,
            max_trials: 1_280_000,
            threshold: 3.0,
        }
    }
}

impl SearchBudget {
    pub fn validate(&self) -> Result<(), DesignError> {
        if self.initial_trials < 2 || self.max_trials < self.initial_trials {
            return Err(DesignError::InvalidConfig(format!(
                "need 2 <= initial trials ({}) <= max trials ({})",
                self.initial_trials, self.max_trials
            )));
        }
        if !(self.threshold.is_finite() && self.threshold > 0.0) {
            return Err(DesignError::InvalidConfig(format!("threshold must be positive, got {}", self.threshold)));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum DesignError {
    #[error("budget exhausted at d = {d}: no grid value down to 2^-{SIGMA_FLOOR_EXP} certified {arrow:?}")]
    BudgetExhausted { d: usize, arrow: Arrow },
    #[error("invalid arrows: {0}")]
    InvalidArrows(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Risk(#[from] RiskError),
    #[error(transparent)]
    Law(#[from] LawError),
}

/// Experimental escape hatch: designs may start before `n + 8`. Outside the
/// finite-moment guarantees, so certification may well fail.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DesignOptions {
    pub base_len: Option<usize>,
    /// Gaussian-β mode only: use this `ρ` instead of choosing one.
    pub fixed_rho: Option<f64>,
}

/// The outcome of one adaptive certification run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Certified {
    pub delta: PairedDelta,
    pub verdict: Verdict,
}

/// Adaptive paired estimate: starts at `initial_trials` and quadruples while
/// inconclusive. Extending reuses all earlier trials of the same seed.
pub fn certify_step(
    spec: &StepSpec,
    arrow: Arrow,
    margin: f64,
    budget: &SearchBudget,
    seed: u64,
) -> Result<Certified, DesignError> {
    budget.validate()?;
    let mut samples: Vec<PairedSample> = Vec::new();
    let mut redraws = 0;
    let mut target = budget.initial_trials;
    loop {
        let more = paired_samples(spec, samples.len() as u64..target as u64, seed)?;
        samples.extend(more.values);
        redraws += more.redraws;
        let delta = summarize_paired(spec.d, &samples, redraws, seed)?;
        let verdict = Verdict::evaluate(arrow, delta.delta_mean, delta.delta_stderr, margin, budget.threshold);
        if verdict != Verdict::Inconclusive || target >= budget.max_trials {
            return Ok(Certified { delta, verdict });
        }
        target = (target * 4).min(budget.max_trials);
    }
}

/// `2^-k` for `k = 0..=SIGMA_FLOOR_EXP`.
pub fn sigma_grid() -> impl Iterator<Item = f64> {
    (0..=SIGMA_FLOOR_EXP).map(|k| 0.5f64.powi(k as i32))
}

/// Seed shared by every grid value tried at step `d`, so that the grid is
/// compared on common draws.
pub fn step_seed(seed: u64, d: usize) -> u64 {
    derive_seed(seed, &[d as u64])
}

fn prefix_spec(prefix: &ProductLaw, n: usize, eta: f64, new_law: FeatureLaw) -> StepSpec {
    StepSpec {
        law: prefix.clone(),
        d: prefix.dim(),
        n,
        new_law,
        eta,
        beta: BetaSpec::Zero,
    }
}

/// A grid value whose draws are too often degenerate is skipped like an
/// uncertified one rather than ending the search.
fn grid_candidate(r: Result<Certified, DesignError>) -> Result<Option<Certified>, DesignError> {
    match r {
        Ok(c) => Ok(Some(c)),
        Err(DesignError::Risk(RiskError::ExcessiveResampling { .. } | RiskError::MonteCarlo(_))) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Largest grid `σ` for which adding a `N(0, σ²)` coordinate after `prefix`
/// certifiably lowers the risk.
pub fn choose_descent_sigma(
    prefix: &ProductLaw,
    n: usize,
    eta: f64,
    budget: &SearchBudget,
    seed: u64,
) -> Result<(f64, Certified), DesignError> {
    let d = prefix.dim();
    if d <= n {
        return Err(DesignError::InvalidConfig(format!("descent search needs d > n, got d = {d}, n = {n}")));
    }
    for sigma in sigma_grid() {
        let spec = prefix_spec(prefix, n, eta, FeatureLaw::gaussian(sigma)?);
        let Some(c) = grid_candidate(certify_step(&spec, Arrow::Down, 0.0, budget, seed))? else {
            continue;
        };
        if c.verdict == Verdict::Certified {
            return Ok((sigma, c));
        }
    }
    Err(DesignError::BudgetExhausted { d, arrow: Arrow::Down })
}

/// Offset paired with `σ`: `1/σ²` past the threshold, 1 below it.
pub fn ascent_mu(n: usize, d: usize, sigma: f64) -> f64 {
    if d >= n {
        1.0 / (sigma * sigma)
    } else {
        1.0
    }
}

/// Largest grid `σ` for which adding a trimodal coordinate raises the risk
/// by more than `margin`, certified.
pub fn choose_ascent_params(
    prefix: &ProductLaw,
    n: usize,
    eta: f64,
    margin: f64,
    budget: &SearchBudget,
    seed: u64,
) -> Result<(f64, f64, Certified), DesignError> {
    let d = prefix.dim();
    if d < n && d + 1 >= n {
        return Err(DesignError::InvalidConfig(format!(
            "ascent search needs d + 1 < n or d >= n, got d = {d}, n = {n}"
        )));
    }
    for sigma in sigma_grid() {
        let mu = ascent_mu(n, d, sigma);
        let spec = prefix_spec(prefix, n, eta, FeatureLaw::trimodal(sigma, mu)?);
        let Some(c) = grid_candidate(certify_step(&spec, Arrow::Up, margin, budget, seed))? else {
            continue;
        };
        if c.verdict == Verdict::Certified {
            return Ok((sigma, mu, c));
        }
    }
    Err(DesignError::BudgetExhausted { d, arrow: Arrow::Up })
}

/// `ρ_d` and the confidence bounds that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhoBound {
    pub d: usize,
    pub gram_lcb: f64,
    pub norm_ucb: f64,
    pub rho_d: f64,
}

/// Safety factor applied to the smallest `ρ_d`.
pub const RHO_SAFETY: f64 = 0.5;

/// Scale of the Gaussian `β` that keeps every descent a descent:
/// `½·min_d η·√(lcb E‖(AᵀA)⁺x‖² / (ucb E‖(Aᵀ)⁺x‖² + 1))` over the Down steps,
/// each expectation taken at that step's prefix. 1 if there are none.
pub fn choose_rho(
    plan: &CurvePlan,
    trials: usize,
    threshold: f64,
    seed: u64,
) -> Result<(f64, Vec<RhoBound>), DesignError> {
    if !(plan.eta.is_finite() && plan.eta > 0.0) {
        return Err(DesignError::InvalidConfig(format!("eta must be positive, got {}", plan.eta)));
    }
    let mut bounds = Vec::new();
    for (k, arrow) in plan.arrows().0.iter().enumerate() {
        if *arrow != Arrow::Down {
            continue;
        }
        let d = plan.base_len() + k;
        let m = estimate_gram_moments(&plan.laws, d, plan.n, trials, derive_seed(seed, &[d as u64, 1]))?;
        let gram_lcb = m.gram.mean - threshold * m.gram.stderr;
        let norm_ucb = m.norm.mean + threshold * m.norm.stderr;
        if !(gram_lcb > 0.0) {
            return Err(DesignError::InvalidConfig(format!(
                "cannot bound E‖(AᵀA)⁺x‖² away from 0 at d = {d} with {trials} trials"
            )));
        }
        let rho_d = plan.eta * (gram_lcb / (norm_ucb + 1.0)).sqrt();
        bounds.push(RhoBound {
            d,
            gram_lcb,
            norm_ucb,
            rho_d,
        });
    }
    if bounds.is_empty() {
        return Ok((1.0, bounds));
    }
    let min = bounds.iter().map(|b| b.rho_d).fold(f64::INFINITY, f64::min);
    let rho = RHO_SAFETY * min;
    debug_assert!(bounds.iter().all(|b| rho <= b.rho_d));
    Ok((rho, bounds))
}

/// How many times `design_curve` halves `ρ` when a descent fails under it.
pub const RHO_RETRIES: usize = 10;

/// Builds a plan for `arrows` on `D = n + 8 + arrows.len()` coordinates.
pub fn design_curve(
    n: usize,
    arrows: &ArrowSequence,
    eta: f64,
    beta_mode: BetaMode,
    budget: &SearchBudget,
    seed: u64,
) -> Result<CurvePlan, DesignError> {
    design_curve_with(n, arrows, eta, beta_mode, budget, seed, DesignOptions::default())
}

pub fn design_curve_with(
    n: usize,
    arrows: &ArrowSequence,
    eta: f64,
    beta_mode: BetaMode,
    budget: &SearchBudget,
    seed: u64,
    options: DesignOptions,
) -> Result<CurvePlan, DesignError> {
    budget.validate()?;
    if n == 0 {
        return Err(DesignError::InvalidConfig("n must be positive".into()));
    }
    if arrows.is_empty() {
        return Err(DesignError::InvalidArrows("nothing to design: need D >= n + 9".into()));
    }
    if !(eta.is_finite() && eta > 0.0) {
        return Err(DesignError::InvalidConfig(format!("eta must be positive, got {eta}")));
    }
    let base = options.base_len.unwrap_or(n + BASE_OFFSET);
    if base <= n {
        return Err(DesignError::InvalidConfig(format!("base block must exceed n, got {base}")));
    }
    let mut laws = ProductLaw::uniform(FeatureLaw::StdGaussian, base)?;
    let mut certification = Vec::with_capacity(arrows.len());
    for (k, &arrow) in arrows.0.iter().enumerate() {
        let d = base + k;
        let s = step_seed(seed, d);
        let (law, cert) = match arrow {
            Arrow::Down => {
                let (sigma, c) = choose_descent_sigma(&laws, n, eta, budget, s)?;
                (FeatureLaw::gaussian(sigma)?, c)
            }
            Arrow::Up => {
                let (sigma, mu, c) = choose_ascent_params(&laws, n, eta, 0.0, budget, s)?;
                (FeatureLaw::trimodal(sigma, mu)?, c)
            }
        };
        certification.push(StepCertificate::from_delta(&cert.delta, cert.verdict));
        laws = laws.extended(law)?;
    }
    let mut plan = CurvePlan {
        n,
        laws,
        eta,
        beta_mode,
        rho: None,
        certification,
    };
    if beta_mode == BetaMode::GaussianBeta {
        match options.fixed_rho {
            Some(rho) => {
                if !(rho.is_finite() && rho > 0.0) {
                    return Err(DesignError::InvalidConfig(format!("rho must be positive, got {rho}")));
                }
                plan.rho = Some(rho);
                plan.certification = certify_plan_steps(&plan, budget, |d| derive_seed(seed, &[d as u64, 2]))?;
                if let Some(c) = plan.certification.iter().find(|c| c.verdict != Verdict::Certified) {
                    let arrow = plan.arrows().0[c.d - plan.base_len()];
                    return Err(DesignError::BudgetExhausted { d: c.d, arrow });
                }
            }
            None => assign_rho(&mut plan, budget, seed)?,
        }
    }
    Ok(plan)
}

/// Picks `ρ` for a finished plan and re-certifies every step under the
/// `β`-averaged risk, halving `ρ` while a descent fails.
fn assign_rho(plan: &mut CurvePlan, budget: &SearchBudget, seed: u64) -> Result<(), DesignError> {
    let (mut rho, _) = choose_rho(plan, budget.initial_trials, budget.threshold, derive_seed(seed, &[u64::MAX]))?;
    for _ in 0..=RHO_RETRIES {
        plan.rho = Some(rho);
        let certs = certify_plan_steps(plan, budget, |d| derive_seed(seed, &[d as u64, 2]))?;
        let failed_down = certs
            .iter()
            .zip(plan.arrows().0.iter())
            .any(|(c, a)| *a == Arrow::Down && c.verdict != Verdict::Certified);
        plan.certification = certs;
        if !failed_down {
            return Ok(());
        }
        rho *= 0.5;
    }
    let d = plan
        .certification
        .iter()
        .find(|c| c.verdict != Verdict::Certified)
        .map(|c| c.d)
        .unwrap_or(plan.base_len());
    Err(DesignError::BudgetExhausted { d, arrow: Arrow::Down })
}

fn designed_step(plan: &CurvePlan, k: usize) -> StepSpec {
    let d = plan.base_len() + k;
    StepSpec {
        law: plan.laws.prefix(d).expect("designed step inside plan"),
        d,
        n: plan.n,
        new_law: *plan.laws.law(d + 1).expect("designed step inside plan"),
        eta: plan.eta,
        beta: plan.beta_spec(),
    }
}

fn certify_plan_steps(
    plan: &CurvePlan,
    budget: &SearchBudget,
    seed_for: impl Fn(usize) -> u64,
) -> Result<Vec<StepCertificate>, DesignError> {
    plan.arrows()
        .0
        .iter()
        .enumerate()
        .map(|(k, &arrow)| {
            let spec = designed_step(plan, k);
            let c = certify_step(&spec, arrow, 0.0, budget, seed_for(spec.d))?;
            Ok(StepCertificate::from_delta(&c.delta, c.verdict))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepVerdict {
    pub d: usize,
    pub arrow: Arrow,
    pub delta: PairedDelta,
    pub verdict: Verdict,
    /// For inconclusive steps whose estimate has the right sign: trials
    /// at which the current effect would clear the threshold.
    pub suggested_trials: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub steps: Vec<StepVerdict>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.steps.iter().all(|s| s.verdict == Verdict::Certified)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub budget: SearchBudget,
    pub seed: u64,
    /// Also check the underparametrized steps `d → d + 1` with `d + 1 < n`,
    /// which must ascend whatever the law.
    pub include_underparam: bool,
}

fn suggest(delta: &PairedDelta, arrow: Arrow, threshold: f64) -> Option<usize> {
    let effect = arrow.sign() * delta.delta_mean;
    if effect <= 0.0 {
        return None;
    }
    let factor = (threshold * delta.delta_stderr / effect).powi(2) * 1.5;
    Some(((delta.trials as f64) * factor).ceil().max(delta.trials as f64 * 2.0) as usize)
}

fn check_step(spec: StepSpec, arrow: Arrow, options: &VerifyOptions) -> Result<StepVerdict, DesignError> {
    let seed = derive_seed(options.seed, &[spec.d as u64, 3]);
    let c = certify_step(&spec, arrow, 0.0, &options.budget, seed)?;
    Ok(StepVerdict {
        d: spec.d,
        arrow,
        delta: c.delta,
        verdict: c.verdict,
        suggested_trials: if c.verdict == Verdict::Inconclusive {
            suggest(&c.delta, arrow, options.budget.threshold)
        } else {
            None
        },
    })
}

/// Checks every underparametrized step `d → d + 1` with `d + 1 < n` of an
/// arbitrary product law. All must ascend.
pub fn verify_underparam_steps(
    law: &ProductLaw,
    n: usize,
    eta: f64,
    beta: &BetaSpec,
    options: &VerifyOptions,
) -> Result<Vec<StepVerdict>, DesignError> {
    options.budget.validate()?;
    let last = n.saturating_sub(1).min(law.dim());
    (1..last)
        .map(|d| {
            let spec = StepSpec {
                law: law.prefix(d)?,
                d,
                n,
                new_law: *law.law(d + 1).expect("d + 1 < n and d + 1 <= D"),
                eta,
                beta: beta.clone(),
            };
            check_step(spec, Arrow::Up, options)
        })
        .collect()
}

/// Re-certifies every step of `plan` on fresh draws keyed by `options.seed`.
pub fn verify_plan(plan: &CurvePlan, options: &VerifyOptions) -> Result<VerifyReport, DesignError> {
    options.budget.validate()?;
    plan.validate()?;
    let mut steps = Vec::new();
    if options.include_underparam {
        steps = verify_underparam_steps(&plan.laws, plan.n, plan.eta, &plan.beta_spec(), options)?;
    }
    for (k, &arrow) in plan.arrows().0.iter().enumerate() {
        steps.push(check_step(designed_step(plan, k), arrow, options)?);
    }
    Ok(VerifyReport { steps })
}
