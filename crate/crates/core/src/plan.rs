//! TOML plan files.
//!
//! ```toml
//! n = 6
//! D = 15
//! eta = 1.0
//! beta_mode = "zero"          # or "gaussian", which also needs `rho`
//!
//! [[laws]]
//! index = 1
//! kind = "std_gaussian"
//! # … one entry per coordinate, indices 1..=D in order …
//! [[laws]]
//! index = 15
//! kind = "trimodal"
//! sigma = 0.5
//! mu = 4.0
//!
//! [[certification]]
//! d = 14
//! delta_mean = 0.019
//! delta_stderr = 0.0036
//! trials = 20000
//! seed = 6051503337050926068
//! verdict = "certified"
//! ```
//!
//! Floats are written in shortest round-trip form, so reading a written
//! plan gives back exactly the same plan.

use serde::{Deserialize, Serialize};
use thiserror::Error;
use toml::Spanned;

use crate::designer::{BetaMode, CurvePlan, DesignError, StepCertificate, Verdict};
use crate::distributions::{FeatureLaw, ProductLaw};

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("plan file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid plan: {0}")]
    Invalid(#[from] DesignError),
    #[error("cannot write plan: {0}")]
    Write(String),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanFile {
    n: usize,
    #[serde(rename = "D")]
    dim: usize,
    eta: f64,
    beta_mode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rho: Option<f64>,
    laws: Vec<Spanned<LawEntry>>,
    #[serde(default)]
    certification: Vec<Spanned<CertEntry>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LawEntry {
    index: usize,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mu: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CertEntry {
    d: usize,
    delta_mean: f64,
    delta_stderr: f64,
    trials: usize,
    seed: u64,
    verdict: String,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn law_entry(index: usize, law: &FeatureLaw) -> LawEntry {
    let (kind, sigma, mu) = match *law {
        FeatureLaw::StdGaussian => ("std_gaussian", None, None),
        FeatureLaw::Gaussian { sigma } => ("gaussian", Some(sigma), None),
        FeatureLaw::TrimodalMix { sigma, mu } => ("trimodal", Some(sigma), Some(mu)),
    };
    LawEntry {
        index,
        kind: kind.to_string(),
        sigma,
        mu,
    }
}

fn parse_law(e: &LawEntry) -> Result<FeatureLaw, String> {
    let law = match (e.kind.as_str(), e.sigma, e.mu) {
        ("std_gaussian", None, None) => FeatureLaw::StdGaussian,
        ("gaussian", Some(sigma), None) => FeatureLaw::gaussian(sigma).map_err(|x| x.to_string())?,
        ("trimodal", Some(sigma), Some(mu)) => FeatureLaw::trimodal(sigma, mu).map_err(|x| x.to_string())?,
        ("std_gaussian" | "gaussian" | "trimodal", _, _) => {
            return Err(format!("wrong parameters for kind {:?}", e.kind));
        }
        (other, _, _) => return Err(format!("unknown law kind {other:?}")),
    };
    Ok(law)
}

/// Serializes `plan`, preceded by `comments` as `# ` lines.
pub fn write_plan(plan: &CurvePlan, comments: &[String]) -> Result<String, PlanError> {
    let file = PlanFile {
        n: plan.n,
        dim: plan.dim(),
        eta: plan.eta,
        beta_mode: plan.beta_mode.name().to_string(),
        rho: plan.rho,
        laws: plan
            .laws
            .laws()
            .iter()
            .enumerate()
            .map(|(i, l)| Spanned::new(0..0, law_entry(i + 1, l)))
            .collect(),
        certification: plan
            .certification
            .iter()
            .map(|c| {
                Spanned::new(
                    0..0,
                    CertEntry {
                        d: c.d,
                        delta_mean: c.delta_mean,
                        delta_stderr: c.delta_stderr,
                        trials: c.trials,
                        seed: c.seed,
                        verdict: c.verdict.name().to_string(),
                    },
                )
            })
            .collect(),
    };
    let body = toml::to_string(&file).map_err(|e| PlanError::Write(e.to_string()))?;
    let mut out = String::new();
    for c in comments {
        out.push_str("# ");
        out.push_str(c);
        out.push('\n');
    }
    out.push_str(&body);
    Ok(out)
}

/// Parses and validates a plan. Errors carry the 1-based line they refer to.
pub fn read_plan(text: &str) -> Result<CurvePlan, PlanError> {
    let file: PlanFile = toml::from_str(text).map_err(|e| PlanError::Parse {
        line: e.span().map(|s| line_of(text, s.start)).unwrap_or(1),
        message: e.message().to_string(),
    })?;
    let at = |span: std::ops::Range<usize>, message: String| PlanError::Parse {
        line: line_of(text, span.start),
        message,
    };
    let top = |message: String| PlanError::Parse { line: 1, message };
    let beta_mode = BetaMode::parse(&file.beta_mode)
        .ok_or_else(|| top(format!("beta_mode must be \"zero\" or \"gaussian\", got {:?}", file.beta_mode)))?;
    if file.laws.len() != file.dim {
        return Err(top(format!("D = {} but {} laws are listed", file.dim, file.laws.len())));
    }
    let mut laws = Vec::with_capacity(file.laws.len());
    for (k, entry) in file.laws.iter().enumerate() {
        let e = entry.get_ref();
        if e.index != k + 1 {
            return Err(at(entry.span(), format!("law index {} out of order, expected {}", e.index, k + 1)));
        }
        laws.push(parse_law(e).map_err(|m| at(entry.span(), m))?);
    }
    let mut certification = Vec::with_capacity(file.certification.len());
    for entry in &file.certification {
        let c = entry.get_ref();
        let verdict = Verdict::parse(&c.verdict)
            .ok_or_else(|| at(entry.span(), format!("unknown verdict {:?}", c.verdict)))?;
        certification.push(StepCertificate {
            d: c.d,
            delta_mean: c.delta_mean,
            delta_stderr: c.delta_stderr,
            trials: c.trials,
            seed: c.seed,
            verdict,
        });
    }
    let plan = CurvePlan {
        n: file.n,
        laws: ProductLaw::new(laws).map_err(|e| top(e.to_string()))?,
        eta: file.eta,
        beta_mode,
        rho: file.rho,
        certification,
    };
    plan.validate()?;
    Ok(plan)
}
