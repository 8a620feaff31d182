// SPDX-License-Identifier: Apache-2.0

//! Outer iteration shared by the MC fits.

use nalgebra::{DMatrix, DVector};

use super::numerics::{invert_information, to_rows, Centered};
use super::optimize::{maximize_in_region, Eval};
use super::{ChainSummary, FitConfig, FitMethod, FitResult, InferenceError, IterationRecord};
use crate::mcmc::{ChainConfig, SampleSet};
use crate::seeds::derive_seed;

/// Samples drawn at one outer iteration and the sampled objective they define.
pub(crate) trait Round {
    /// The observed-data target lies inside the sampled range in every coordinate.
    fn in_hull(&self) -> bool;
    /// Sampled log-likelihood ratio at `θ0 + delta` and its derivatives.
    fn eval(&self, delta: &DVector<f64>) -> Eval;
    /// Information estimate at `θ0 + delta`.
    fn information(&self, delta: &DVector<f64>) -> DMatrix<f64>;
    /// Covariance of `g` under `θ0` in the unconditional sample. The
    /// standard deviation of the log importance weights is `sqrt(δ' Σ δ)`.
    fn weight_metric(&self) -> &DMatrix<f64>;
    /// p-value of the test that the sampled score at `θ0` is zero, with
    /// batch-means variance.
    fn score_p_value(&self) -> f64;
    fn summaries(&self, delta: &DVector<f64>) -> Vec<ChainSummary>;
}

/// Chain settings for outer iteration `it`, chain `tag`.
pub(crate) fn iteration_chain(cfg: &FitConfig, it: usize, tag: u64, samples: usize) -> ChainConfig {
    ChainConfig {
        burn_in: if it == 0 { cfg.chain.burn_in } else { cfg.warm_burn_in },
        samples,
        seed: derive_seed(cfg.chain.seed, it as u64, tag),
        ..cfg.chain.clone()
    }
}

pub(crate) fn summarize(sample: &SampleSet, rows: &Centered, center: &[f64], delta: &DVector<f64>) -> ChainSummary {
    let t = rows.tilt(delta);
    ChainSummary {
        target: sample.target,
        samples: sample.len(),
        acceptance_rate: sample.acceptance_rate,
        mean: t.mean.iter().zip(center).map(|(m, c)| m + c).collect(),
        cov: to_rows(&t.cov),
    }
}

pub(crate) fn check_theta(q: usize, theta: &[f64]) -> Result<(), InferenceError> {
    super::check_dim(q, theta.len())?;
    if theta.iter().any(|t| !t.is_finite()) {
        return Err(InferenceError::Config("initial parameter vector is not finite".into()));
    }
    Ok(())
}

/// Runs outer iterations until an interior step with no hull failure has
/// either a sampled gain below tolerance or a score at `θ0` that is
/// indistinguishable from zero at level `score_p_min`.
///
/// Each step stays within `‖δ‖ ≤ step_bound` and keeps the standard
/// deviation of the log importance weights below `weight_sd_bound`.
///
/// A hull failure doubles `M` for later iterations, at most
/// `cfg.hull_retries` times; the bounded step is still taken.
pub(crate) fn run<R: Round>(
    method: FitMethod,
    labels: Vec<String>,
    theta0: Vec<f64>,
    cfg: &FitConfig,
    mut draw: impl FnMut(usize, &[f64], usize) -> Result<R, InferenceError>,
) -> Result<FitResult, InferenceError> {
    cfg.validate()?;
    let q = theta0.len();
    let mut theta = DVector::from_vec(theta0);
    let mut samples = cfg.chain.samples;
    let mut retries = cfg.hull_retries;
    let mut hull_failures = 0;
    let mut history = Vec::new();
    for it in 0..cfg.max_iterations {
        let used = samples;
        let round = draw(it, theta.as_slice(), used)?;
        let in_hull = round.in_hull();
        if !in_hull {
            hull_failures += 1;
            if retries > 0 {
                retries -= 1;
                samples *= 2;
            }
        }
        let metric = round.weight_metric();
        let norm = |d: &DVector<f64>| {
            let sd = d.dot(&(metric * d)).max(0.0).sqrt();
            (d.norm() / cfg.step_bound).max(sd / cfg.weight_sd_bound)
        };
        let step = maximize_in_region(q, norm, |d| round.eval(d));
        let theta1 = &theta + &step.delta;
        let score_p = round.score_p_value();
        history.push(IterationRecord {
            theta0: theta.iter().copied().collect(),
            theta1: theta1.iter().copied().collect(),
            gain: step.value,
            clipped: step.clipped,
            in_hull,
            samples: used,
            score_p,
        });
        let converged = in_hull && !step.clipped && (step.value < cfg.llr_tolerance || score_p >= cfg.score_p_min);
        if converged || it + 1 == cfg.max_iterations {
            let info = round.information(&step.delta);
            let (cov, se, floored) = invert_information(&info);
            return Ok(FitResult {
                method,
                labels,
                theta: theta1.iter().copied().collect(),
                std_errors: se,
                info: to_rows(&info),
                covariance: to_rows(&cov),
                iterations: it + 1,
                converged,
                info_floored: floored,
                hull_failures,
                history,
                summaries: round.summaries(&step.delta),
            });
        }
        theta = theta1;
    }
    unreachable!("max_iterations is validated positive")
}
