//! Built-in diagnostic suite: closed-form identities and inequalities the
//! implementation must reproduce, each with its margin.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use crate::distributions::{mix_cdf, mix_quantile, FeatureLaw, ProductLaw};
use crate::montecarlo::{derive_seed, trial_rng};
use crate::pinv::{
    m_matrix_spectrum, moore_penrose_residuals, pinv_direct, projection_quantities, relative_frobenius_error,
    DesignMatrix, Projections,
};
use crate::risk::{
    ascent_lower_bound, bias_beta_sampling, bias_gaussian_beta, diag_ascent_lower_bound, diag_inv_z,
    diag_noncentral_dominance, inv_z_gaussian, inv_z_mixture_bound, paired_samples, pathwise_monotonicity, BetaSpec,
    RiskError, StepSpec,
};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    /// The mathematical statement being checked.
    pub statement: &'static str,
    pub value: f64,
    pub reference: f64,
    /// Positive when passing; in stderr units for statistical checks, as an
    /// absolute slack otherwise.
    pub margin: f64,
    pub passed: bool,
}

impl Check {
    pub fn line(&self) -> String {
        format!(
            "[{}] {:<24} {:<52} value={:.6e} reference={:.6e} margin={:+.3e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.statement,
            self.value,
            self.reference,
            self.margin
        )
    }
}

fn gaussian_matrix(n: usize, d: usize, seed: u64, k: u64) -> DMatrix<f64> {
    let mut rng = trial_rng(seed, k);
    DMatrix::from_fn(n, d, |_, _| StandardNormal.sample(&mut rng))
}

fn gaussian_vector(n: usize, seed: u64, k: u64) -> DVector<f64> {
    let mut rng = trial_rng(seed, k);
    DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng))
}

/// Worst relative error of the append updates against the direct route.
fn pinv_oracle(cases: usize, seed: u64) -> f64 {
    let mut worst: f64 = 0.0;
    for k in 0..cases as u64 {
        let (n, d) = if k % 2 == 0 {
            let n = 5 + (k as usize / 2) % 26;
            (n, 1 + (k as usize * 7) % (n - 2))
        } else {
            let n = 4 + (k as usize / 2) % 9;
            (n, n + (k as usize * 11) % 41)
        };
        let a = gaussian_matrix(n, d, seed, 2 * k);
        let b = gaussian_vector(n, seed, 2 * k + 1);
        let state = pinv_direct(&DesignMatrix::new(a.clone()).expect("finite"));
        let next = state.append(&b).expect("well-posed append");
        let mut stacked = a.insert_column(d, 0.0);
        stacked.set_column(d, &b);
        let direct = pinv_direct(&DesignMatrix::new(stacked.clone()).expect("finite"));
        worst = worst.max(relative_frobenius_error(next.pinv(), direct.pinv()));
        for r in moore_penrose_residuals(&stacked, next.pinv()) {
            worst = worst.max(r);
        }
    }
    worst
}

fn m_spectrum_worst(cases: usize, seed: u64) -> f64 {
    let mut worst: f64 = 0.0;
    for k in 0..cases as u64 {
        let n = 6 + (k as usize) % 10;
        let d = 1 + (k as usize) % (n - 2);
        let state = pinv_direct(&DesignMatrix::new(gaussian_matrix(n, d, seed, 2 * k)).expect("finite"));
        let b = gaussian_vector(n, seed, 2 * k + 1);
        let Ok(Projections::Under { p, q, z }) = projection_quantities(&state, &b) else {
            return f64::INFINITY;
        };
        let s = m_matrix_spectrum(&p, &q, z);
        let target = [1.0 - 1.0 / z, 1.0];
        let pair = [s.eig_a, s.eig_b];
        let direct = (pair[0] - target[0]).abs().max((pair[1] - target[1]).abs());
        let swapped = (pair[0] - target[1]).abs().max((pair[1] - target[0]).abs());
        let trace_err = (s.trace - (2.0 - 1.0 / z)).abs();
        let err = direct.min(swapped).max(trace_err);
        worst = worst.max(if s.residual_rank == 0 { err } else { f64::INFINITY });
    }
    worst
}

/// Runs the suite. `force_fail` appends a check that cannot pass.
pub fn run_selftest(seed: u64, force_fail: bool) -> Result<Vec<Check>, RiskError> {
    let mut checks = Vec::new();
    let s = |k: u64| derive_seed(seed, &[k]);

    let worst = pinv_oracle(400, s(1));
    checks.push(Check {
        name: "append_vs_direct",
        statement: "append updates equal the SVD pseudoinverse",
        value: worst,
        reference: 1e-9,
        margin: 1e-9 - worst,
        passed: worst <= 1e-9,
    });

    let worst = m_spectrum_worst(100, s(2));
    checks.push(Check {
        name: "m_matrix_spectrum",
        statement: "eigenvalues of M are {1 - 1/z, 1, 0, ...}",
        value: worst,
        reference: 1e-8,
        margin: 1e-8 - worst,
        passed: worst <= 1e-8,
    });

    let g = diag_inv_z(20, 5, &FeatureLaw::StdGaussian, 100_000, s(3))?;
    let exact = inv_z_gaussian(20, 5);
    let dev = (g.mean - exact).abs() / g.stderr;
    checks.push(Check {
        name: "inv_z_gaussian",
        statement: "E[1/z] = 1 + d/(n - d - 2), n = 20, d = 5",
        value: g.mean,
        reference: exact,
        margin: 3.0 - dev,
        passed: dev <= 3.0,
    });

    let m = diag_inv_z(20, 5, &FeatureLaw::trimodal(0.3, 1.0)?, 100_000, s(4))?;
    let bound = inv_z_mixture_bound(20, 5);
    checks.push(Check {
        name: "inv_z_mixture",
        statement: "E[1/z] <= (n - 2 + sqrt d)/(n - d - 2), trimodal b",
        value: m.mean,
        reference: bound,
        margin: (bound + 3.0 * m.stderr - m.mean) / m.stderr,
        passed: m.mean <= bound + 3.0 * m.stderr,
    });

    let dom = diag_noncentral_dominance(5, 4.0, 100_000, s(5))?;
    checks.push(Check {
        name: "noncentral_dominance",
        statement: "P(chi2(5, 4) >= c) > P(chi2(5) >= c) at deciles",
        value: dom.min_margin,
        reference: 3.0,
        margin: dom.min_margin - 3.0,
        passed: dom.dominates(3.0),
    });

    let asc = diag_ascent_lower_bound(2, 0.1, 100_000, s(6))?;
    let lb = ascent_lower_bound(2, 0.1);
    let lcb = asc.mean - 3.0 * asc.stderr;
    checks.push(Check {
        name: "ascent_lower_bound",
        statement: "E[a1^2 / sum b_i^2] >= 1/(5^(n+1) n sigma^2), n = 2",
        value: asc.mean,
        reference: lb,
        margin: lcb - lb,
        passed: lcb > lb,
    });

    let spec = StepSpec {
        law: ProductLaw::uniform(FeatureLaw::trimodal(0.2, 1.0)?, 4)?,
        d: 4,
        n: 9,
        new_law: FeatureLaw::gaussian(0.3)?,
        eta: 1.0,
        beta: BetaSpec::Zero,
    };
    let draws = paired_samples(&spec, 0..10_000, s(7))?;
    let mono = pathwise_monotonicity(&draws.values, 1e-10);
    checks.push(Check {
        name: "pathwise_monotonicity",
        statement: "below n, every paired draw has L_{d+1} >= L_d",
        value: mono.violations as f64,
        reference: 0.0,
        margin: mono.worst_relative,
        passed: mono.violations == 0,
    });

    let a = DesignMatrix::new(gaussian_matrix(4, 10, s(8), 0)).expect("finite");
    let x = gaussian_vector(10, s(8), 1);
    let state = pinv_direct(&a);
    let closed = bias_gaussian_beta(&state, &x, 0.7)?;
    let sampled = bias_beta_sampling(&state, &x, 0.7, 100_000, s(9))?;
    let dev = (sampled.mean - closed).abs() / sampled.stderr;
    checks.push(Check {
        name: "gaussian_beta_bias",
        statement: "E_beta bias = rho^2 x'(I - A+A)x",
        value: sampled.mean,
        reference: closed,
        margin: 3.0 - dev,
        passed: dev <= 3.0,
    });

    let mut worst: f64 = 0.0;
    for k in 1..100 {
        let p = k as f64 / 100.0;
        let t = mix_quantile(p, 0.2, 1.0)?;
        worst = worst.max((mix_cdf(t, 0.2, 1.0) - p).abs());
    }
    checks.push(Check {
        name: "mixture_quantile",
        statement: "F(F^-1(p)) = p for the trimodal mixture",
        value: worst,
        reference: 1e-10,
        margin: 1e-10 - worst,
        passed: worst <= 1e-10,
    });

    if force_fail {
        checks.push(Check {
            name: "forced_failure",
            statement: "deliberate failure requested on the command line",
            value: 1.0,
            reference: 0.0,
            margin: -1.0,
            passed: false,
        });
    }
    Ok(checks)
}
