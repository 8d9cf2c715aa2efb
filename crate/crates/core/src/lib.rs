//! Monte Carlo tools for minimum-norm least squares under a feature-revealing
//! process: pseudoinverse updates, risk estimation, and a designer that picks
//! per-feature laws so the risk curve rises and falls in a requested pattern.

pub mod cli;
pub mod designer;
pub mod distributions;
pub mod montecarlo;
pub mod pinv;
pub mod plan;
pub mod risk;
pub mod selftest;
