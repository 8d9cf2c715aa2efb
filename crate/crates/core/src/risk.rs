//! Monte Carlo estimation of the excess risk of minimum-norm regression.
//!
//! With test point `x`, noise level `η` and coefficient vector `β`, one draw
//! of the design `A` contributes
//! `(xᵀ(A⁺A - I)β)² + η²‖(Aᵀ)⁺x‖²`; the noise has already been averaged out
//! analytically. Everything here averages that quantity (or differences of
//! it) over fresh designs.
//!
//! Draw order inside a trial is fixed: for each feature `j = 1, 2, …` the
//! `n` training entries of column `j` are drawn, then `x_j`. A trial at
//! dimension `d` therefore uses exactly the first draws of the same trial at
//! any larger dimension, which keeps curves, single estimates and paired
//! differences on common random numbers.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::distributions::{sample, FeatureLaw, LawError, ProductLaw};
use crate::montecarlo::{self, derive_seed, summarize, trimmed_mean, Draws, McError, Summary, TrialRng};
use crate::pinv::{pinv_direct, DesignMatrix, PinvError, PinvState, Regime};

/// Highest tolerated share of degenerate, redrawn trials.
pub const MAX_RESAMPLE_RATE: f64 = 1e-3;
/// Share cut from each tail for the trimmed diagnostic mean.
pub const TRIM_FRACTION: f64 = 0.01;

#[derive(Debug, Error)]
pub enum RiskError {
    #[error(transparent)]
    Law(#[from] LawError),
    #[error(transparent)]
    Pinv(#[from] PinvError),
    #[error(transparent)]
    MonteCarlo(#[from] McError),
    #[error("need at least 2 trials, got {0}")]
    TooFewTrials(usize),
    #[error("dimension d = {d} equals n = {n}; the interpolation threshold is excluded")]
    Boundary { n: usize, d: usize },
    #[error("noise level must be finite and nonnegative, got {0}")]
    InvalidEta(f64),
    #[error("rho must be finite and positive, got {0}")]
    InvalidRho(f64),
    #[error("beta has {got} entries, need at least {expected}")]
    BetaLength { expected: usize, got: usize },
    #[error("resample rate {rate:.3e} exceeds {MAX_RESAMPLE_RATE:e}")]
    ExcessiveResampling { rate: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum BetaSpec {
    Zero,
    /// Fixed coefficients; the first `d` entries are used at dimension `d`.
    Fixed(Vec<f64>),
    /// `β ~ N(0, ρ²I)`, averaged analytically.
    GaussianBeta { rho: f64 },
}

impl BetaSpec {
    pub fn validate(&self, needed: usize) -> Result<(), RiskError> {
        match self {
            BetaSpec::Zero => Ok(()),
            BetaSpec::Fixed(b) => {
                if b.len() < needed {
                    Err(RiskError::BetaLength {
                        expected: needed,
                        got: b.len(),
                    })
                } else if b.iter().any(|v| !v.is_finite()) {
                    Err(RiskError::Pinv(PinvError::NonFinite))
                } else {
                    Ok(())
                }
            }
            BetaSpec::GaussianBeta { rho } => {
                if rho.is_finite() && *rho > 0.0 {
                    Ok(())
                } else {
                    Err(RiskError::InvalidRho(*rho))
                }
            }
        }
    }
}

fn check_eta(eta: f64) -> Result<(), RiskError> {
    if eta.is_finite() && eta >= 0.0 {
        Ok(())
    } else {
        Err(RiskError::InvalidEta(eta))
    }
}

fn check_trials(trials: usize) -> Result<(), RiskError> {
    if trials < 2 {
        Err(RiskError::TooFewTrials(trials))
    } else {
        Ok(())
    }
}

/// One regression problem: design, test point, noise level and `β`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionInstance {
    pub a: DesignMatrix,
    pub x: DVector<f64>,
    pub eta: f64,
    pub beta: BetaSpec,
}

impl RegressionInstance {
    pub fn new(a: DesignMatrix, x: DVector<f64>, eta: f64, beta: BetaSpec) -> Result<Self, RiskError> {
        if x.len() != a.d() {
            return Err(PinvError::DimensionMismatch {
                expected: a.d(),
                got: x.len(),
            }
            .into());
        }
        check_eta(eta)?;
        beta.validate(a.d())?;
        Ok(Self { a, x, eta, beta })
    }
}

/// The two summands of the per-design excess risk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTerms {
    pub bias: f64,
    pub variance: f64,
}

impl LossTerms {
    pub fn total(&self) -> f64 {
        self.bias + self.variance
    }
}

fn loss_terms_raw(state: &PinvState, x: &DVector<f64>, eta: f64, beta: &BetaSpec) -> LossTerms {
    let v = state.pinv().tr_mul(x);
    let variance = eta * eta * v.norm_squared();
    // Independent columns make A⁺A = I, so the bias vanishes exactly.
    let bias = if state.projection().is_some() {
        0.0
    } else {
        match beta {
            BetaSpec::Zero => 0.0,
            BetaSpec::Fixed(b) => {
                let beta = DVector::from_column_slice(&b[..state.d()]);
                let fitted = state.pinv() * (state.a() * &beta);
                let r = x.dot(&(fitted - beta));
                r * r
            }
            BetaSpec::GaussianBeta { rho } => rho * rho * null_quadratic(state, x),
        }
    };
    LossTerms { bias, variance }
}

fn null_quadratic(state: &PinvState, x: &DVector<f64>) -> f64 {
    let proj = state.pinv() * (state.a() * x);
    (x - proj).norm_squared()
}

/// Bias and variance terms for `inst`, given the pseudoinverse of `inst.a`.
pub fn loss_terms(inst: &RegressionInstance, state: &PinvState) -> Result<LossTerms, RiskError> {
    if state.n() != inst.a.n() || state.d() != inst.a.d() {
        return Err(PinvError::DimensionMismatch {
            expected: inst.a.d(),
            got: state.d(),
        }
        .into());
    }
    Ok(loss_terms_raw(state, &inst.x, inst.eta, &inst.beta))
}

/// `(xᵀ(A⁺A - I)β)² + η²‖(Aᵀ)⁺x‖²`. For `GaussianBeta` the bias is the
/// `β`-average, see [`bias_gaussian_beta`].
pub fn loss_sample(inst: &RegressionInstance, state: &PinvState) -> Result<f64, RiskError> {
    Ok(loss_terms(inst, state)?.total())
}

/// `E_β[(xᵀ(A⁺A - I)β)²] = ρ²·xᵀ(I - A⁺A)x` for `β ~ N(0, ρ²I)`.
pub fn bias_gaussian_beta(state: &PinvState, x: &DVector<f64>, rho: f64) -> Result<f64, RiskError> {
    if x.len() != state.d() {
        return Err(PinvError::DimensionMismatch {
            expected: state.d(),
            got: x.len(),
        }
        .into());
    }
    if !(rho.is_finite() && rho >= 0.0) {
        return Err(RiskError::InvalidRho(rho));
    }
    if rho == 0.0 || state.projection().is_some() {
        return Ok(0.0);
    }
    Ok(rho * rho * null_quadratic(state, x))
}

/// Oracle for [`bias_gaussian_beta`]: averages `(xᵀ(A⁺A - I)β)²` over sampled `β`.
pub fn bias_beta_sampling(
    state: &PinvState,
    x: &DVector<f64>,
    rho: f64,
    trials: usize,
    seed: u64,
) -> Result<Summary, RiskError> {
    check_trials(trials)?;
    let d = state.d();
    let draws = montecarlo::run(trials, seed, |rng| {
        let beta = DVector::from_fn(d, |_, _| rho * gauss(rng));
        let r = x.dot(&(state.pinv() * (state.a() * &beta) - beta));
        Some(r * r)
    })?;
    Ok(summarize(&draws.values))
}

/// Oracle for the analytic noise average: samples training noise and a test
/// label and averages `(y - xᵀβ̂)² - (y - xᵀβ)²`. `inst.beta` must be Fixed.
pub fn loss_epsilon_sampling(
    inst: &RegressionInstance,
    state: &PinvState,
    trials: usize,
    seed: u64,
) -> Result<Summary, RiskError> {
    check_trials(trials)?;
    let beta = match &inst.beta {
        BetaSpec::Fixed(b) => DVector::from_column_slice(&b[..inst.a.d()]),
        BetaSpec::Zero => DVector::zeros(inst.a.d()),
        BetaSpec::GaussianBeta { .. } => {
            return Err(RiskError::InvalidArgument("noise oracle needs a fixed beta".into()))
        }
    };
    let n = inst.a.n();
    let signal = inst.a.matrix() * &beta;
    let truth = inst.x.dot(&beta);
    let draws = montecarlo::run(trials, seed, |rng| {
        let y = DVector::from_fn(n, |i, _| signal[i] + inst.eta * gauss(rng));
        let fit = inst.x.dot(&(state.pinv() * y));
        let y_test = truth + inst.eta * gauss(rng);
        Some((y_test - fit).powi(2) - (y_test - truth).powi(2))
    })?;
    Ok(summarize(&draws.values))
}

fn gauss(rng: &mut TrialRng) -> f64 {
    StandardNormal.sample(rng)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskEstimate {
    pub d: usize,
    pub mean: f64,
    pub stderr: f64,
    pub trials: usize,
    pub seed: u64,
    pub regime: Regime,
    pub resample_rate: f64,
    /// 1%-trimmed mean; diagnostic only.
    pub trimmed_mean: f64,
}

impl RiskEstimate {
    fn from_values(d: usize, n: usize, values: &[f64], seed: u64, resample_rate: f64) -> Self {
        let s = summarize(values);
        RiskEstimate {
            d,
            mean: s.mean,
            stderr: s.stderr,
            trials: values.len(),
            seed,
            regime: Regime::of(n, d),
            resample_rate,
            trimmed_mean: trimmed_mean(values, TRIM_FRACTION),
        }
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.16e},{:.16e},{},{},{:.16e}",
            self.d, self.mean, self.stderr, self.trials, self.seed, self.resample_rate
        )
    }
}

pub const CSV_HEADER: &str = "d,mean,stderr,trials,seed,resample_rate";

/// Writes `# `-prefixed comment lines, the header, then one row per estimate.
pub fn write_estimates_csv<W: Write>(
    estimates: &[RiskEstimate],
    comments: &[String],
    mut out: W,
) -> io::Result<()> {
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    writeln!(out, "{CSV_HEADER}")?;
    for e in estimates {
        writeln!(out, "{}", e.csv_row())?;
    }
    Ok(())
}

/// Paired estimate of `L_{d+1} - L_d` on common draws.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedDelta {
    pub d_from: usize,
    pub delta_mean: f64,
    pub delta_stderr: f64,
    pub trials: usize,
    pub seed: u64,
    pub resample_rate: f64,
    /// Mean of the dimension-`d` loss over the same draws.
    pub base_mean: f64,
    /// Mean of `‖(AᵀA)⁺x‖²` over the same draws.
    pub gram_mean: f64,
}

impl PairedDelta {
    /// `(mean - threshold·stderr, mean + threshold·stderr)`.
    pub fn interval(&self, threshold: f64) -> (f64, f64) {
        (
            self.delta_mean - threshold * self.delta_stderr,
            self.delta_mean + threshold * self.delta_stderr,
        )
    }
}

/// One paired trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedSample {
    pub delta: f64,
    /// Loss at dimension `d`.
    pub base: f64,
    /// `‖(AᵀA)⁺x‖²` at dimension `d`.
    pub gram: f64,
}

/// Everything that defines a single step `d → d + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSpec {
    /// Supplies the laws of the first `d` coordinates.
    pub law: ProductLaw,
    pub d: usize,
    pub n: usize,
    pub new_law: FeatureLaw,
    pub eta: f64,
    pub beta: BetaSpec,
}

impl StepSpec {
    pub fn validate(&self) -> Result<(), RiskError> {
        self.law.prefix(self.d)?;
        self.new_law.validate()?;
        check_eta(self.eta)?;
        self.beta.validate(self.d + 1)?;
        if self.n == 0 {
            return Err(RiskError::InvalidArgument("n must be positive".into()));
        }
        if self.d == self.n || self.d + 1 == self.n {
            return Err(RiskError::Boundary { n: self.n, d: self.n });
        }
        Ok(())
    }
}

fn draw_prefix(law: &ProductLaw, d: usize, n: usize, rng: &mut TrialRng) -> (DMatrix<f64>, DVector<f64>) {
    let mut a = DMatrix::zeros(n, d);
    let mut x = DVector::zeros(d);
    for (j, l) in law.laws()[..d].iter().enumerate() {
        for i in 0..n {
            a[(i, j)] = sample(l, rng);
        }
        x[j] = sample(l, rng);
    }
    (a, x)
}

fn draw_feature(law: &FeatureLaw, n: usize, rng: &mut TrialRng) -> (DVector<f64>, f64) {
    let b = DVector::from_fn(n, |_, _| sample(law, rng));
    let a1 = sample(law, rng);
    (b, a1)
}

fn full_rank(state: &PinvState) -> bool {
    state.cond_estimate().is_finite()
}

fn gram_norm(state: &PinvState, x: &DVector<f64>) -> f64 {
    let v = state.pinv().tr_mul(x);
    (state.pinv() * v).norm_squared()
}

fn paired_trial(spec: &StepSpec, rng: &mut TrialRng) -> Option<PairedSample> {
    let (a, x) = draw_prefix(&spec.law, spec.d, spec.n, rng);
    let (b, a1) = draw_feature(&spec.new_law, spec.n, rng);
    let state = pinv_direct(&DesignMatrix::new(a).ok()?);
    if !full_rank(&state) {
        return None;
    }
    let base = loss_terms_raw(&state, &x, spec.eta, &spec.beta).total();
    let next = state.append(&b).ok()?;
    if !full_rank(&next) {
        return None;
    }
    let x1 = x.clone().insert_row(spec.d, a1);
    let stacked = loss_terms_raw(&next, &x1, spec.eta, &spec.beta).total();
    let sample = PairedSample {
        delta: stacked - base,
        base,
        gram: gram_norm(&state, &x),
    };
    (sample.delta.is_finite() && sample.base.is_finite()).then_some(sample)
}

/// Paired trials `range` of `spec`. Extending a range reproduces exactly what
/// a single longer run would have drawn.
pub fn paired_samples(
    spec: &StepSpec,
    range: std::ops::Range<u64>,
    seed: u64,
) -> Result<Draws<PairedSample>, RiskError> {
    spec.validate()?;
    Ok(montecarlo::run_range(range, seed, |rng| paired_trial(spec, rng))?)
}

/// Summary of accumulated paired trials. Fails if too many were redrawn.
pub fn summarize_paired(
    d_from: usize,
    samples: &[PairedSample],
    redraws: u64,
    seed: u64,
) -> Result<PairedDelta, RiskError> {
    check_trials(samples.len())?;
    let rate = redraws as f64 / (samples.len() as u64 + redraws) as f64;
    if rate > MAX_RESAMPLE_RATE {
        return Err(RiskError::ExcessiveResampling { rate });
    }
    let deltas: Vec<f64> = samples.iter().map(|s| s.delta).collect();
    let bases: Vec<f64> = samples.iter().map(|s| s.base).collect();
    let grams: Vec<f64> = samples.iter().map(|s| s.gram).collect();
    let s = summarize(&deltas);
    Ok(PairedDelta {
        d_from,
        delta_mean: s.mean,
        delta_stderr: s.stderr,
        trials: samples.len(),
        seed,
        resample_rate: rate,
        base_mean: montecarlo::pairwise_sum(&bases) / bases.len() as f64,
        gram_mean: montecarlo::pairwise_sum(&grams) / grams.len() as f64,
    })
}

/// Paired estimate of `L_{d+1} - L_d` where coordinate `d + 1` follows
/// `new_law`; both losses are evaluated on the same draw.
#[allow(clippy::too_many_arguments)]
pub fn estimate_delta(
    law: &ProductLaw,
    d: usize,
    n: usize,
    new_law: &FeatureLaw,
    eta: f64,
    beta: &BetaSpec,
    trials: usize,
    seed: u64,
) -> Result<PairedDelta, RiskError> {
    check_trials(trials)?;
    let spec = StepSpec {
        law: law.clone(),
        d,
        n,
        new_law: *new_law,
        eta,
        beta: beta.clone(),
    };
    let draws = paired_samples(&spec, 0..trials as u64, seed)?;
    summarize_paired(d, &draws.values, draws.redraws, seed)
}

/// Per-draw monotonicity check for the underparametrized step `d → d + 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotonicityReport {
    pub trials: usize,
    pub violations: usize,
    /// Smallest `delta / (1 + base)` seen.
    pub worst_relative: f64,
}

pub fn pathwise_monotonicity(samples: &[PairedSample], tolerance: f64) -> MonotonicityReport {
    let mut violations = 0;
    let mut worst = f64::INFINITY;
    for s in samples {
        let rel = s.delta / (1.0 + s.base);
        worst = worst.min(rel);
        if rel < -tolerance {
            violations += 1;
        }
    }
    MonotonicityReport {
        trials: samples.len(),
        violations,
        worst_relative: worst,
    }
}

fn estimate_values(
    d: usize,
    n: usize,
    draws: Draws<f64>,
    seed: u64,
) -> Result<RiskEstimate, RiskError> {
    let rate = draws.redraw_rate();
    if rate > MAX_RESAMPLE_RATE {
        return Err(RiskError::ExcessiveResampling { rate });
    }
    Ok(RiskEstimate::from_values(d, n, &draws.values, seed, rate))
}

/// Monte Carlo estimate of the excess risk at dimension `d`.
pub fn estimate_ld(
    law: &ProductLaw,
    d: usize,
    n: usize,
    eta: f64,
    beta: &BetaSpec,
    trials: usize,
    seed: u64,
) -> Result<RiskEstimate, RiskError> {
    check_trials(trials)?;
    law.prefix(d)?;
    check_eta(eta)?;
    beta.validate(d)?;
    if d == n {
        return Err(RiskError::Boundary { n, d });
    }
    let draws = montecarlo::run(trials, seed, |rng| {
        let (a, x) = draw_prefix(law, d, n, rng);
        let state = pinv_direct(&DesignMatrix::new(a).ok()?);
        if !full_rank(&state) {
            return None;
        }
        let l = loss_terms_raw(&state, &x, eta, beta).total();
        l.is_finite().then_some(l)
    })?;
    estimate_values(d, n, draws, seed)
}

/// Risk curve over `d_min..=d_max`, skipping `d = n`. Each trial reveals the
/// features one at a time, updating a single pseudoinverse.
#[allow(clippy::too_many_arguments)]
pub fn estimate_curve(
    law: &ProductLaw,
    n: usize,
    d_min: usize,
    d_max: usize,
    eta: f64,
    beta: &BetaSpec,
    trials: usize,
    seed: u64,
) -> Result<Vec<RiskEstimate>, RiskError> {
    check_trials(trials)?;
    if d_min == 0 || d_min > d_max {
        return Err(RiskError::InvalidArgument(format!("empty dimension range {d_min}..={d_max}")));
    }
    law.prefix(d_max)?;
    check_eta(eta)?;
    beta.validate(d_max)?;
    let dims: Vec<usize> = (d_min..=d_max).filter(|&d| d != n).collect();
    if dims.is_empty() {
        return Err(RiskError::InvalidArgument("range contains only d = n".into()));
    }
    let draws = montecarlo::run(trials, seed, |rng| {
        let (a, x) = draw_prefix(law, d_max, n, rng);
        let mut state = pinv_direct(&DesignMatrix::new(a.columns(0, d_min).into_owned()).ok()?);
        let mut losses = Vec::with_capacity(dims.len());
        for d in d_min..=d_max {
            if d > d_min {
                state = state.append(&a.column(d - 1).into_owned()).ok()?;
            }
            if d == n {
                continue;
            }
            if !full_rank(&state) {
                return None;
            }
            let xd = x.rows(0, d).into_owned();
            let l = loss_terms_raw(&state, &xd, eta, beta).total();
            if !l.is_finite() {
                return None;
            }
            losses.push(l);
        }
        Some(losses)
    })?;
    let rate = draws.redraw_rate();
    if rate > MAX_RESAMPLE_RATE {
        return Err(RiskError::ExcessiveResampling { rate });
    }
    Ok(dims
        .iter()
        .enumerate()
        .map(|(k, &d)| {
            let column: Vec<f64> = draws.values.iter().map(|row| row[k]).collect();
            RiskEstimate::from_values(d, n, &column, seed, rate)
        })
        .collect())
}

/// Moments entering the choice of the `β` scale at dimension `d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GramMoments {
    /// `E‖(AᵀA)⁺x‖²`.
    pub gram: RiskEstimate,
    /// `E‖(Aᵀ)⁺x‖²`.
    pub norm: RiskEstimate,
}

pub fn estimate_gram_moments(
    law: &ProductLaw,
    d: usize,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<GramMoments, RiskError> {
    check_trials(trials)?;
    law.prefix(d)?;
    if d == n {
        return Err(RiskError::Boundary { n, d });
    }
    let draws = montecarlo::run(trials, seed, |rng| {
        let (a, x) = draw_prefix(law, d, n, rng);
        let state = pinv_direct(&DesignMatrix::new(a).ok()?);
        if !full_rank(&state) {
            return None;
        }
        let v = state.pinv().tr_mul(&x);
        Some(((state.pinv() * &v).norm_squared(), v.norm_squared()))
    })?;
    let rate = draws.redraw_rate();
    if rate > MAX_RESAMPLE_RATE {
        return Err(RiskError::ExcessiveResampling { rate });
    }
    let g: Vec<f64> = draws.values.iter().map(|p| p.0).collect();
    let v: Vec<f64> = draws.values.iter().map(|p| p.1).collect();
    Ok(GramMoments {
        gram: RiskEstimate::from_values(d, n, &g, seed, rate),
        norm: RiskEstimate::from_values(d, n, &v, seed, rate),
    })
}

/// `delta_mean / (-2σ²·E‖(AᵀA)⁺x‖²)`, near 1 for small Gaussian `σ`.
pub fn descent_ratio(delta: &PairedDelta, sigma: f64) -> f64 {
    delta.delta_mean / (-2.0 * sigma * sigma * delta.gram_mean)
}

/// `E[1/z]` for `A` with standard Gaussian entries (`n × d`) and `b` from
/// `law_for_b`. `d = 0` means no projection, so `z = 1`.
pub fn diag_inv_z(
    n: usize,
    d: usize,
    law_for_b: &FeatureLaw,
    trials: usize,
    seed: u64,
) -> Result<RiskEstimate, RiskError> {
    check_trials(trials)?;
    law_for_b.validate()?;
    if d + 2 >= n && d > 0 {
        return Err(RiskError::InvalidArgument(format!("need d + 2 < n, got n = {n}, d = {d}")));
    }
    let draws = montecarlo::run(trials, seed, |rng| {
        if d == 0 {
            return Some(1.0);
        }
        let a = DMatrix::from_fn(n, d, |_, _| gauss(rng));
        let b = DVector::from_fn(n, |_, _| sample(law_for_b, rng));
        let state = pinv_direct(&DesignMatrix::new(a).ok()?);
        let p = state.projection()?;
        let resid = &b - p * &b;
        let z = resid.norm_squared() / b.norm_squared();
        (z > 0.0 && z.is_finite()).then(|| 1.0 / z)
    })?;
    estimate_values(d, n, draws, seed)
}

/// `1 + d/(n - d - 2)`, the Gaussian value of `E[1/z]`.
pub fn inv_z_gaussian(n: usize, d: usize) -> f64 {
    1.0 + d as f64 / (n as f64 - d as f64 - 2.0)
}

/// `(n - 2 + √d)/(n - d - 2)`, the mixture upper bound on `E[1/z]`.
pub fn inv_z_mixture_bound(n: usize, d: usize) -> f64 {
    (n as f64 - 2.0 + (d as f64).sqrt()) / (n as f64 - d as f64 - 2.0)
}

/// Empirical comparison of `χ²(k, λ)` against `χ²(k)` on independent samples.
#[derive(Debug, Clone, PartialEq)]
pub struct DominanceReport {
    /// Deciles of the central sample.
    pub grid: Vec<f64>,
    pub survival_noncentral: Vec<f64>,
    pub survival_central: Vec<f64>,
    /// Binomial stderr of each survival difference.
    pub stderr: Vec<f64>,
    /// Smallest survival difference measured in stderr units.
    pub min_margin: f64,
    pub ks_statistic: f64,
    /// Two-sample KS critical value at the 1% level.
    pub ks_critical: f64,
}

impl DominanceReport {
    /// Dominance holds at every grid point with `threshold` stderr to spare.
    pub fn dominates(&self, threshold: f64) -> bool {
        self.min_margin > threshold
    }

    pub fn indistinguishable(&self) -> bool {
        self.ks_statistic < self.ks_critical
    }
}

pub fn diag_noncentral_dominance(
    k: usize,
    lambda: f64,
    trials: usize,
    seed: u64,
) -> Result<DominanceReport, RiskError> {
    check_trials(trials)?;
    if k == 0 {
        return Err(RiskError::InvalidArgument("k must be at least 1".into()));
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(RiskError::InvalidArgument(format!("lambda must be nonnegative, got {lambda}")));
    }
    let shift = lambda.sqrt();
    let chi2 = |rng: &mut TrialRng, shift: f64| -> f64 {
        let first: f64 = gauss(rng) + shift;
        let mut s = first * first;
        for _ in 1..k {
            let g = gauss(rng);
            s += g * g;
        }
        s
    };
    let mut x = montecarlo::run(trials, derive_seed(seed, &[1]), |rng| Some(chi2(rng, shift)))?.values;
    let mut y = montecarlo::run(trials, derive_seed(seed, &[2]), |rng| Some(chi2(rng, 0.0)))?.values;
    x.sort_by(|a, b| a.total_cmp(b));
    y.sort_by(|a, b| a.total_cmp(b));
    let m = trials as f64;
    let survival = |sorted: &[f64], c: f64| -> f64 {
        let below = sorted.partition_point(|&v| v < c);
        (sorted.len() - below) as f64 / sorted.len() as f64
    };
    let grid: Vec<f64> = (1..10).map(|q| y[(q * trials) / 10]).collect();
    let mut sx = Vec::new();
    let mut sy = Vec::new();
    let mut se = Vec::new();
    let mut min_margin = f64::INFINITY;
    for &c in &grid {
        let px = survival(&x, c);
        let py = survival(&y, c);
        let s = ((px * (1.0 - px) + py * (1.0 - py)) / m).sqrt();
        min_margin = min_margin.min((px - py) / s);
        sx.push(px);
        sy.push(py);
        se.push(s);
    }
    Ok(DominanceReport {
        grid,
        survival_noncentral: sx,
        survival_central: sy,
        stderr: se,
        min_margin,
        ks_statistic: ks_two_sample(&x, &y),
        ks_critical: ks_critical_1pct(x.len(), y.len()),
    })
}

/// Two-sample Kolmogorov–Smirnov statistic of two sorted samples.
pub fn ks_two_sample(x: &[f64], y: &[f64]) -> f64 {
    let (nx, ny) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut stat: f64 = 0.0;
    while i < x.len() && j < y.len() {
        let t = x[i].min(y[j]);
        while i < x.len() && x[i] <= t {
            i += 1;
        }
        while j < y.len() && y[j] <= t {
            j += 1;
        }
        stat = stat.max((i as f64 / nx - j as f64 / ny).abs());
    }
    stat
}

/// Asymptotic two-sample KS critical value at the 1% level.
pub fn ks_critical_1pct(nx: usize, ny: usize) -> f64 {
    let c = (-(0.005f64).ln() / 2.0).sqrt();
    c * ((nx + ny) as f64 / (nx as f64 * ny as f64)).sqrt()
}

/// `E[a₁²/Σbᵢ²]` for `a₁, b₁…b_n` iid trimodal with offset 1.
pub fn diag_ascent_lower_bound(
    n: usize,
    sigma: f64,
    trials: usize,
    seed: u64,
) -> Result<RiskEstimate, RiskError> {
    check_trials(trials)?;
    let law = FeatureLaw::trimodal(sigma, 1.0)?;
    if n == 0 {
        return Err(RiskError::InvalidArgument("n must be positive".into()));
    }
    let draws = montecarlo::run(trials, seed, |rng| {
        let mut s = 0.0;
        for _ in 0..n {
            let b = sample(&law, rng);
            s += b * b;
        }
        let a = sample(&law, rng);
        (s > 0.0).then(|| a * a / s)
    })?;
    let mut est = estimate_values(0, n, draws, seed)?;
    est.regime = Regime::Under;
    Ok(est)
}

/// `1/(5^{n+1}·n·σ²)`.
pub fn ascent_lower_bound(n: usize, sigma: f64) -> f64 {
    1.0 / (5f64.powi(n as i32 + 1) * n as f64 * sigma * sigma)
}

/// Average over `(b, a₁)` from `law` of `‖[Aᵀ; bᵀ]⁺[x; a₁]‖²`, with `A` and
/// `x` held fixed.
pub fn conditional_stacked_loss(
    state: &PinvState,
    x: &DVector<f64>,
    law: &FeatureLaw,
    trials: usize,
    seed: u64,
) -> Result<RiskEstimate, RiskError> {
    check_trials(trials)?;
    law.validate()?;
    if x.len() != state.d() {
        return Err(PinvError::DimensionMismatch {
            expected: state.d(),
            got: x.len(),
        }
        .into());
    }
    let (n, d) = (state.n(), state.d());
    let draws = montecarlo::run(trials, seed, |rng| {
        let (b, a1) = draw_feature(law, n, rng);
        let next = state.append(&b).ok()?;
        if !full_rank(&next) {
            return None;
        }
        let x1 = x.clone().insert_row(d, a1);
        Some(next.pinv().tr_mul(&x1).norm_squared())
    })?;
    estimate_values(d + 1, n, draws, seed)
}

/// `((n - 2)‖v‖² + 1)/(n - d - 2)` for Gaussian `(b, a₁)`.
pub fn gaussian_conditional_bound(n: usize, d: usize, v_norm2: f64) -> f64 {
    ((n as f64 - 2.0) * v_norm2 + 1.0) / (n as f64 - d as f64 - 2.0)
}

/// `((n - 2 + √d)‖v‖² + 2/(3σ²) + 1)/(n - d - 2)` for trimodal `(b, a₁)`
/// with offset 1.
pub fn mixture_conditional_bound(n: usize, d: usize, v_norm2: f64, sigma: f64) -> f64 {
    ((n as f64 - 2.0 + (d as f64).sqrt()) * v_norm2 + 2.0 / (3.0 * sigma * sigma) + 1.0)
        / (n as f64 - d as f64 - 2.0)
}

/// Draws one `(A, x)` pair from `law` in the standard trial layout.
pub fn draw_instance(law: &ProductLaw, d: usize, n: usize, rng: &mut TrialRng) -> Result<(DesignMatrix, DVector<f64>), RiskError> {
    law.prefix(d)?;
    let (a, x) = draw_prefix(law, d, n, rng);
    Ok((DesignMatrix::new(a)?, x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montecarlo::trial_rng;

    fn std_law(d: usize) -> ProductLaw {
        ProductLaw::uniform(FeatureLaw::StdGaussian, d).unwrap()
    }

    #[test]
    fn hand_computed_loss() {
        let a = DesignMatrix::from_row_slice(2, 1, &[1.0, 1.0]).unwrap();
        let x = DVector::from_element(1, 1.0);
        let inst = RegressionInstance::new(a.clone(), x, 1.0, BetaSpec::Zero).unwrap();
        let state = pinv_direct(&a);
        assert!((loss_sample(&inst, &state).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn underparam_bias_vanishes() {
        let mut rng = trial_rng(1, 0);
        let (a, x) = draw_instance(&std_law(3), 3, 7, &mut rng).unwrap();
        let state = pinv_direct(&a);
        let inst = RegressionInstance::new(a, x.clone(), 0.7, BetaSpec::Fixed(vec![3.0, -1.0, 2.0])).unwrap();
        let t = loss_terms(&inst, &state).unwrap();
        assert_eq!(t.bias, 0.0);
        let v = state.pinv().tr_mul(&x);
        assert!((t.variance - 0.49 * v.norm_squared()).abs() < 1e-14);
        assert_eq!(bias_gaussian_beta(&state, &x, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn overparam_fixed_bias_matches_direct_formula() {
        let mut rng = trial_rng(2, 0);
        let (a, x) = draw_instance(&std_law(9), 9, 4, &mut rng).unwrap();
        let beta: Vec<f64> = (0..9).map(|i| (i as f64).sin()).collect();
        let state = pinv_direct(&a);
        let inst = RegressionInstance::new(a.clone(), x.clone(), 0.0, BetaSpec::Fixed(beta.clone())).unwrap();
        let b = DVector::from_column_slice(&beta);
        let m = state.pinv() * a.matrix() - DMatrix::<f64>::identity(9, 9);
        let expected = x.dot(&(m * b)).powi(2);
        assert!((loss_sample(&inst, &state).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn instance_validation() {
        let a = DesignMatrix::from_row_slice(2, 1, &[1.0, 1.0]).unwrap();
        let x = DVector::from_element(2, 1.0);
        assert!(RegressionInstance::new(a.clone(), x, 1.0, BetaSpec::Zero).is_err());
        let x = DVector::from_element(1, 1.0);
        assert!(RegressionInstance::new(a.clone(), x.clone(), -1.0, BetaSpec::Zero).is_err());
        assert!(RegressionInstance::new(a, x, 1.0, BetaSpec::GaussianBeta { rho: 0.0 }).is_err());
    }

    #[test]
    fn gaussian_beta_bias_matches_sampling() {
        let mut rng = trial_rng(3, 0);
        let (a, x) = draw_instance(&std_law(10), 10, 4, &mut rng).unwrap();
        let state = pinv_direct(&a);
        let closed = bias_gaussian_beta(&state, &x, 0.8).unwrap();
        let sampled = bias_beta_sampling(&state, &x, 0.8, 100_000, 5).unwrap();
        assert!((sampled.mean - closed).abs() < 3.0 * sampled.stderr, "{closed} {sampled:?}");
        assert_eq!(bias_gaussian_beta(&state, &x, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn noise_average_matches_epsilon_sampling() {
        let mut rng = trial_rng(4, 0);
        let (a, x) = draw_instance(&std_law(8), 8, 5, &mut rng).unwrap();
        let state = pinv_direct(&a);
        let beta: Vec<f64> = (0..8).map(|i| 0.3 * i as f64 - 1.0).collect();
        let inst = RegressionInstance::new(a, x, 0.9, BetaSpec::Fixed(beta)).unwrap();
        let terms = loss_terms(&inst, &state).unwrap();
        let oracle = loss_epsilon_sampling(&inst, &state, 200_000, 6).unwrap();
        assert!((oracle.mean - terms.total()).abs() < 3.0 * oracle.stderr);
        assert!(terms.bias > 0.0 && terms.variance > 0.0);
    }

    #[test]
    fn estimate_contracts() {
        let law = std_law(6);
        assert!(matches!(
            estimate_ld(&law, 3, 10, 1.0, &BetaSpec::Zero, 1, 0),
            Err(RiskError::TooFewTrials(1))
        ));
        assert!(matches!(
            estimate_ld(&law, 5, 5, 1.0, &BetaSpec::Zero, 10, 0),
            Err(RiskError::Boundary { .. })
        ));
        assert!(estimate_ld(&law, 7, 10, 1.0, &BetaSpec::Zero, 10, 0).is_err());
    }

    #[test]
    fn estimate_is_thread_count_invariant() {
        let law = std_law(5);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| estimate_ld(&law, 5, 20, 1.0, &BetaSpec::Zero, 3000, 11).unwrap())
        };
        assert_eq!(run(1).mean.to_bits(), run(4).mean.to_bits());
    }

    #[test]
    fn curve_matches_single_estimates() {
        let law = std_law(12);
        let curve = estimate_curve(&law, 6, 3, 12, 1.0, &BetaSpec::Zero, 500, 9).unwrap();
        assert_eq!(curve.iter().map(|e| e.d).collect::<Vec<_>>(), vec![3, 4, 5, 7, 8, 9, 10, 11, 12]);
        for e in &curve {
            let single = estimate_ld(&law, e.d, 6, 1.0, &BetaSpec::Zero, 500, 9).unwrap();
            let rel = (single.mean - e.mean).abs() / single.mean;
            assert!(rel < 1e-9, "d={} {} vs {}", e.d, single.mean, e.mean);
        }
        assert!(estimate_curve(&law, 6, 6, 6, 1.0, &BetaSpec::Zero, 10, 0).is_err());
        assert!(estimate_curve(&law, 6, 5, 4, 1.0, &BetaSpec::Zero, 10, 0).is_err());
    }

    #[test]
    fn gaussian_underparam_curve_value() {
        // E‖(Aᵀ)⁺x‖² = d/(n - d - 1) for standard Gaussian data.
        let est = estimate_ld(&std_law(5), 5, 20, 1.0, &BetaSpec::Zero, 40_000, 3).unwrap();
        let exact = 5.0 / 14.0;
        assert!((est.mean - exact).abs() < 4.0 * est.stderr, "{est:?}");
    }

    #[test]
    fn paired_delta_is_extendable_and_nonnegative_under() {
        let law = ProductLaw::uniform(FeatureLaw::trimodal(0.2, 1.0).unwrap(), 3).unwrap();
        let spec = StepSpec {
            law,
            d: 3,
            n: 9,
            new_law: FeatureLaw::gaussian(0.3).unwrap(),
            eta: 1.0,
            beta: BetaSpec::Zero,
        };
        let all = paired_samples(&spec, 0..1000, 4).unwrap();
        let head = paired_samples(&spec, 0..400, 4).unwrap();
        let tail = paired_samples(&spec, 400..1000, 4).unwrap();
        let joined: Vec<_> = head.values.iter().chain(&tail.values).cloned().collect();
        assert_eq!(all.values, joined);
        let report = pathwise_monotonicity(&all.values, 1e-10);
        assert_eq!(report.violations, 0);
        let est = summarize_paired(3, &all.values, all.redraws, 4).unwrap();
        assert!(est.delta_mean > 0.0);
    }

    #[test]
    fn inverse_z_diagnostics() {
        let g = diag_inv_z(20, 5, &FeatureLaw::StdGaussian, 40_000, 1).unwrap();
        assert!((g.mean - inv_z_gaussian(20, 5)).abs() < 3.0 * g.stderr);
        let z0 = diag_inv_z(5, 0, &FeatureLaw::StdGaussian, 10, 1).unwrap();
        assert_eq!(z0.mean, 1.0);
        assert!(diag_inv_z(7, 5, &FeatureLaw::StdGaussian, 10, 1).is_err());
    }

    #[test]
    fn dominance_diagnostics() {
        let r = diag_noncentral_dominance(5, 4.0, 50_000, 2).unwrap();
        assert!(r.dominates(3.0));
        let same = diag_noncentral_dominance(5, 0.0, 50_000, 2).unwrap();
        assert!(same.indistinguishable());
        // Larger noncentrality pushes mass further right.
        let c = 5.0;
        let tails: Vec<f64> = [1.0, 2.0, 4.0]
            .iter()
            .map(|&l: &f64| {
                let draws = montecarlo::run(50_000, derive_seed(3, &[1]), |rng| {
                    let f: f64 = gauss(rng) + l.sqrt();
                    let mut s = f * f;
                    for _ in 1..5 {
                        let g = gauss(rng);
                        s += g * g;
                    }
                    Some((s >= c) as u8 as f64)
                })
                .unwrap();
                summarize(&draws.values).mean
            })
            .collect();
        assert!(tails[0] < tails[1] && tails[1] < tails[2], "{tails:?}");
    }

    #[test]
    fn ks_statistic_basics() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(ks_two_sample(&a, &a), 0.0);
        assert_eq!(ks_two_sample(&[1.0, 2.0], &[3.0, 4.0]), 1.0);
        assert!((ks_critical_1pct(100, 100) - 1.6276 * (0.02f64).sqrt()).abs() < 1e-3);
    }

    #[test]
    fn ascent_lower_bound_diagnostic() {
        assert!((ascent_lower_bound(2, 0.1) - 0.4).abs() < 1e-12);
        let e = diag_ascent_lower_bound(2, 0.1, 50_000, 7).unwrap();
        assert!(e.mean - 3.0 * e.stderr > ascent_lower_bound(2, 0.1));
        let means: Vec<f64> = [0.2, 0.1, 0.05]
            .iter()
            .map(|&s| diag_ascent_lower_bound(4, s, 200_000, 8).unwrap().mean)
            .collect();
        assert!(means[0] < means[1] && means[1] < means[2], "{means:?}");
    }

    #[test]
    fn conditional_bound_gaussian() {
        let mut rng = trial_rng(12, 0);
        let (a, x) = draw_instance(&std_law(5), 5, 20, &mut rng).unwrap();
        let state = pinv_direct(&a);
        let v2 = state.pinv().tr_mul(&x).norm_squared();
        let est = conditional_stacked_loss(&state, &x, &FeatureLaw::StdGaussian, 20_000, 1).unwrap();
        // Exact conditional mean: ((n - d - 1)‖v‖² + 1)/(n - d - 2).
        let exact = (14.0 * v2 + 1.0) / 13.0;
        assert!((est.mean - exact).abs() < 4.0 * est.stderr);
        assert!(est.mean <= gaussian_conditional_bound(20, 5, v2) + 3.0 * est.stderr);
    }

    #[test]
    fn csv_rows_round_trip() {
        let e = RiskEstimate {
            d: 4,
            mean: 1.0 / 3.0,
            stderr: 0.1,
            trials: 10,
            seed: 7,
            regime: Regime::Under,
            resample_rate: 0.0,
            trimmed_mean: 0.3,
        };
        let mut buf = Vec::new();
        write_estimates_csv(&[e], &["note".into()], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# note");
        assert_eq!(lines[1], CSV_HEADER);
        let fields: Vec<&str> = lines[2].split(',').collect();
        assert_eq!(fields[1].parse::<f64>().unwrap(), 1.0 / 3.0);
    }
}
