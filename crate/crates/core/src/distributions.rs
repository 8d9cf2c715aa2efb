//! Per-coordinate feature laws and the product laws built from them.
//!
//! Three families are supported: the standard Gaussian, a centered Gaussian
//! with standard deviation `sigma`, and the equal-weight trimodal mixture
//! `(N(0, s²) + N(-m, s²) + N(m, s²)) / 3`. All of them have mean zero.
//!
//! The mixture can be sampled two ways. [`sample`] picks a component
//! uniformly and adds Gaussian noise; [`phi_map`] pushes a standard normal
//! draw through `F_mix⁻¹ ∘ Φ`. The two agree in distribution.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LawError {
    #[error("sigma must be finite and positive, got {0}")]
    InvalidSigma(f64),
    #[error("mu must be finite and positive, got {0}")]
    InvalidMu(f64),
    #[error("probability must lie strictly inside (0, 1), got {0}")]
    InvalidProbability(f64),
    #[error("a product law needs at least one coordinate")]
    EmptyProduct,
    #[error("dimension {d} is outside 1..={max}")]
    DimensionOutOfRange { d: usize, max: usize },
}

/// Distribution of a single feature coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureLaw {
    StdGaussian,
    Gaussian { sigma: f64 },
    #[serde(rename = "trimodal")]
    TrimodalMix { sigma: f64, mu: f64 },
}

impl FeatureLaw {
    pub fn gaussian(sigma: f64) -> Result<Self, LawError> {
        let law = FeatureLaw::Gaussian { sigma };
        law.validate()?;
        Ok(law)
    }

    pub fn trimodal(sigma: f64, mu: f64) -> Result<Self, LawError> {
        let law = FeatureLaw::TrimodalMix { sigma, mu };
        law.validate()?;
        Ok(law)
    }

    pub fn validate(&self) -> Result<(), LawError> {
        match *self {
            FeatureLaw::StdGaussian => Ok(()),
            FeatureLaw::Gaussian { sigma } => check_sigma(sigma),
            FeatureLaw::TrimodalMix { sigma, mu } => {
                check_sigma(sigma)?;
                if mu.is_finite() && mu > 0.0 {
                    Ok(())
                } else {
                    Err(LawError::InvalidMu(mu))
                }
            }
        }
    }

    pub fn mean(&self) -> f64 {
        0.0
    }

    /// `1`, `σ²`, or `σ² + 2μ²/3`.
    pub fn variance(&self) -> f64 {
        match *self {
            FeatureLaw::StdGaussian => 1.0,
            FeatureLaw::Gaussian { sigma } => sigma * sigma,
            FeatureLaw::TrimodalMix { sigma, mu } => sigma * sigma + 2.0 * mu * mu / 3.0,
        }
    }

    pub fn is_gaussian(&self) -> bool {
        !matches!(self, FeatureLaw::TrimodalMix { .. })
    }

    pub fn pdf(&self, t: f64) -> f64 {
        match *self {
            FeatureLaw::StdGaussian => std_normal_pdf(t),
            FeatureLaw::Gaussian { sigma } => std_normal_pdf(t / sigma) / sigma,
            FeatureLaw::TrimodalMix { sigma, mu } => mix_pdf(t, sigma, mu),
        }
    }

    pub fn cdf(&self, t: f64) -> f64 {
        match *self {
            FeatureLaw::StdGaussian => std_normal_cdf(t),
            FeatureLaw::Gaussian { sigma } => std_normal_cdf(t / sigma),
            FeatureLaw::TrimodalMix { sigma, mu } => mix_cdf(t, sigma, mu),
        }
    }
}

fn check_sigma(sigma: f64) -> Result<(), LawError> {
    if sigma.is_finite() && sigma > 0.0 {
        Ok(())
    } else {
        Err(LawError::InvalidSigma(sigma))
    }
}

/// One draw from `law`. The mixture draws its component index first, then
/// the Gaussian perturbation.
pub fn sample<R: Rng + ?Sized>(law: &FeatureLaw, rng: &mut R) -> f64 {
    match *law {
        FeatureLaw::StdGaussian => rng.sample(StandardNormal),
        FeatureLaw::Gaussian { sigma } => sigma * rng.sample::<f64, _>(StandardNormal),
        FeatureLaw::TrimodalMix { sigma, mu } => {
            let center = match rng.random_range(0..3u8) {
                0 => 0.0,
                1 => -mu,
                _ => mu,
            };
            center + sigma * rng.sample::<f64, _>(StandardNormal)
        }
    }
}

/// Product law `D₁ × … × D_D` over the ambient feature space.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductLaw {
    laws: Vec<FeatureLaw>,
}

impl ProductLaw {
    pub fn new(laws: Vec<FeatureLaw>) -> Result<Self, LawError> {
        if laws.is_empty() {
            return Err(LawError::EmptyProduct);
        }
        for law in &laws {
            law.validate()?;
        }
        Ok(Self { laws })
    }

    pub fn uniform(law: FeatureLaw, dim: usize) -> Result<Self, LawError> {
        Self::new(vec![law; dim])
    }

    /// Ambient dimension `D`.
    pub fn dim(&self) -> usize {
        self.laws.len()
    }

    pub fn laws(&self) -> &[FeatureLaw] {
        &self.laws
    }

    /// Law of coordinate `j`, 1-based.
    pub fn law(&self, j: usize) -> Option<&FeatureLaw> {
        j.checked_sub(1).and_then(|i| self.laws.get(i))
    }

    pub fn prefix(&self, d: usize) -> Result<ProductLaw, LawError> {
        self.check_dim(d)?;
        Ok(ProductLaw {
            laws: self.laws[..d].to_vec(),
        })
    }

    /// Copy of the law with `law` appended as coordinate `D + 1`.
    pub fn extended(&self, law: FeatureLaw) -> Result<ProductLaw, LawError> {
        law.validate()?;
        let mut laws = self.laws.clone();
        laws.push(law);
        Ok(ProductLaw { laws })
    }

    pub(crate) fn check_dim(&self, d: usize) -> Result<(), LawError> {
        if d == 0 || d > self.laws.len() {
            Err(LawError::DimensionOutOfRange {
                d,
                max: self.laws.len(),
            })
        } else {
            Ok(())
        }
    }

    pub(crate) fn fill_row<R: Rng + ?Sized>(&self, out: &mut [f64], rng: &mut R) {
        for (slot, law) in out.iter_mut().zip(&self.laws) {
            *slot = sample(law, rng);
        }
    }
}

/// First `d` coordinates of one draw from `law`, coordinates drawn in order.
pub fn sample_row<R: Rng + ?Sized>(
    law: &ProductLaw,
    d: usize,
    rng: &mut R,
) -> Result<Vec<f64>, LawError> {
    law.check_dim(d)?;
    let mut row = vec![0.0; d];
    law.fill_row(&mut row, rng);
    Ok(row)
}

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn std_normal_pdf(t: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * t * t).exp()
}

/// `Φ(t)` through the complementary error function, accurate in both tails.
pub fn std_normal_cdf(t: f64) -> f64 {
    0.5 * libm::erfc(-t * std::f64::consts::FRAC_1_SQRT_2)
}

pub fn mix_pdf(t: f64, sigma: f64, mu: f64) -> f64 {
    (std_normal_pdf(t / sigma) + std_normal_pdf((t + mu) / sigma) + std_normal_pdf((t - mu) / sigma))
        / (3.0 * sigma)
}

/// Evaluated through the lower tail, so `F(0) = 1/2` and `F(-t) = 1 - F(t)`
/// hold exactly up to the final subtraction.
pub fn mix_cdf(t: f64, sigma: f64, mu: f64) -> f64 {
    if t == 0.0 {
        0.5
    } else if t > 0.0 {
        1.0 - lower_mix_cdf(-t, sigma, mu)
    } else {
        lower_mix_cdf(t, sigma, mu)
    }
}

fn lower_mix_cdf(t: f64, sigma: f64, mu: f64) -> f64 {
    (std_normal_cdf(t / sigma) + std_normal_cdf((t + mu) / sigma) + std_normal_cdf((t - mu) / sigma))
        / 3.0
}

/// Inverse of [`mix_cdf`].
pub fn mix_quantile(p: f64, sigma: f64, mu: f64) -> Result<f64, LawError> {
    check_sigma(sigma)?;
    if !(mu.is_finite() && mu > 0.0) {
        return Err(LawError::InvalidMu(mu));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(LawError::InvalidProbability(p));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    // Work in the lower tail; 1 - p is exact for p in [0.5, 1).
    if p > 0.5 {
        return Ok(-lower_quantile(1.0 - p, sigma, mu));
    }
    Ok(lower_quantile(p, sigma, mu))
}

/// Root of `mix_cdf(t) = p` for `p < 1/2`, so `t < 0`.
fn lower_quantile(p: f64, sigma: f64, mu: f64) -> f64 {
    let span = mu + 10.0 * sigma;
    let mut lo = -span;
    let mut width = span;
    while lower_mix_cdf(lo, sigma, mu) > p {
        width *= 2.0;
        lo = -span - width;
        if !lo.is_finite() {
            break;
        }
    }
    let mut hi = 0.0;
    let mut t = 0.5 * (lo + hi);
    // Newton on ln F, guarded by the bracket, bisection otherwise. The log
    // keeps steps long in the far tail where F itself is nearly flat.
    let log_p = p.ln();
    for _ in 0..200 {
        let cdf = lower_mix_cdf(t, sigma, mu);
        let f = cdf.ln() - log_p;
        if f == 0.0 {
            return t;
        }
        if f > 0.0 {
            hi = t;
        } else {
            lo = t;
        }
        let tol = 1e-12_f64.max(4.0 * f64::EPSILON * t.abs());
        if hi - lo <= tol {
            break;
        }
        let slope = mix_pdf(t, sigma, mu) / cdf;
        let newton = t - f / slope;
        if slope > 0.0 && newton > lo && newton < hi {
            if (newton - t).abs() <= 0.25 * tol {
                return newton;
            }
            t = newton;
        } else {
            t = 0.5 * (lo + hi);
        }
    }
    t
}

/// Transport map `F_mix⁻¹(Φ(g))`; sends `N(0, 1)` to the trimodal mixture.
pub fn phi_map(g: f64, sigma: f64, mu: f64) -> f64 {
    if g == 0.0 {
        return 0.0;
    }
    let magnitude = g.abs();
    let tail = std_normal_cdf(-magnitude);
    let t = if tail > 0.0 {
        lower_quantile(tail, sigma, mu)
    } else {
        // Φ underflows; the far tail is the outer component alone, so solve
        // Φ((t + μ)/σ) = 3Φ(-|g|) asymptotically.
        let shifted = (magnitude * magnitude - 2.0 * 3f64.ln()).sqrt();
        -mu - sigma * shifted
    };
    if g > 0.0 {
        -t
    } else {
        t
    }
}
