//! Reproducible trial engine.
//!
//! Trial `t` under seed `s` always draws from ChaCha8 stream `t` of key `s`,
//! so a trial's random numbers do not depend on how trials are scheduled.
//! Trials are grouped into fixed-size chunks for rayon; chunk outputs are
//! concatenated in trial order and every reduction runs sequentially over
//! that ordered buffer. Thread count therefore never changes a result bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

pub type TrialRng = ChaCha8Rng;

/// Trials per rayon work item. Fixed: results must not depend on it, but
/// keeping it constant keeps memory access patterns stable too.
const CHUNK: usize = 256;

/// A single trial gives up after this many degenerate redraws.
const MAX_REDRAWS: u32 = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum McError {
    #[error("trial {trial} stayed degenerate after {MAX_REDRAWS} redraws")]
    PersistentDegeneracy { trial: u64 },
}

/// Generator for trial `trial` of the run keyed by `seed`.
pub fn trial_rng(seed: u64, trial: u64) -> TrialRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// SplitMix64 finalizer, used to derive independent sub-seeds.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for a labelled sub-experiment. Masked to 63 bits so seeds survive
/// formats that store signed integers.
pub fn derive_seed(seed: u64, labels: &[u64]) -> u64 {
    let mut h = mix64(seed);
    for &l in labels {
        h = mix64(h ^ mix64(l.wrapping_add(0x632B_E59B_D9B4_E019)));
    }
    h & (i64::MAX as u64)
}

/// Ordered per-trial outputs plus the number of degenerate redraws.
#[derive(Debug, Clone)]
pub struct Draws<T> {
    pub values: Vec<T>,
    pub redraws: u64,
}

impl<T> Draws<T> {
    pub fn redraw_rate(&self) -> f64 {
        let attempted = self.values.len() as u64 + self.redraws;
        if attempted == 0 {
            0.0
        } else {
            self.redraws as f64 / attempted as f64
        }
    }
}

/// Runs trials `range.start..range.end`. `trial` returns `None` for a
/// degenerate draw; it is then called again on the same, advanced stream.
pub fn run_range<T, F>(range: std::ops::Range<u64>, seed: u64, trial: F) -> Result<Draws<T>, McError>
where
    T: Send,
    F: Fn(&mut TrialRng) -> Option<T> + Sync,
{
    let starts: Vec<u64> = (range.start..range.end).step_by(CHUNK).collect();
    let chunks: Vec<Result<(Vec<T>, u64), McError>> = starts
        .into_par_iter()
        .map(|start| {
            let end = (start + CHUNK as u64).min(range.end);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut out = Vec::with_capacity((end - start) as usize);
            let mut redraws = 0u64;
            for t in start..end {
                rng.set_stream(t);
                rng.set_word_pos(0);
                let mut attempts = 0;
                loop {
                    if let Some(v) = trial(&mut rng) {
                        out.push(v);
                        break;
                    }
                    attempts += 1;
                    redraws += 1;
                    if attempts >= MAX_REDRAWS {
                        return Err(McError::PersistentDegeneracy { trial: t });
                    }
                }
            }
            Ok((out, redraws))
        })
        .collect();
    let mut values = Vec::with_capacity((range.end - range.start) as usize);
    let mut redraws = 0;
    for chunk in chunks {
        let (v, r) = chunk?;
        values.extend(v);
        redraws += r;
    }
    Ok(Draws { values, redraws })
}

pub fn run<T, F>(trials: usize, seed: u64, trial: F) -> Result<Draws<T>, McError>
where
    T: Send,
    F: Fn(&mut TrialRng) -> Option<T> + Sync,
{
    run_range(0..trials as u64, seed, trial)
}

/// Pairwise (cascade) summation over a slice, in slice order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        let mut s = 0.0;
        for &x in xs {
            s += x;
        }
        return s;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Sample mean, sample standard deviation, and standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub std_dev: f64,
    pub stderr: f64,
    pub count: usize,
}

pub fn summarize(xs: &[f64]) -> Summary {
    let n = xs.len();
    if n == 0 {
        return Summary {
            mean: f64::NAN,
            std_dev: f64::NAN,
            stderr: f64::NAN,
            count: 0,
        };
    }
    let mean = pairwise_sum(xs) / n as f64;
    if n < 2 {
        return Summary {
            mean,
            std_dev: f64::NAN,
            stderr: f64::NAN,
            count: n,
        };
    }
    let centered: Vec<f64> = xs.iter().map(|&x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&centered) / (n - 1) as f64;
    let std_dev = var.sqrt();
    Summary {
        mean,
        std_dev,
        stderr: std_dev / (n as f64).sqrt(),
        count: n,
    }
}

/// Mean after dropping `fraction` of the sample from each tail.
pub fn trimmed_mean(xs: &[f64], fraction: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let cut = ((sorted.len() as f64) * fraction).floor() as usize;
    let kept = &sorted[cut..sorted.len() - cut];
    if kept.is_empty() {
        return f64::NAN;
    }
    pairwise_sum(kept) / kept.len() as f64
}
