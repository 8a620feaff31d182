// SPDX-License-Identifier: Apache-2.0

//! Maximum-likelihood estimation for ERGMs on observed and on released
//! networks.
//!
//! * [`mcmle_fit`] maximises the Monte Carlo log-likelihood ratio
//!   `(θ-θ0)·g(x) - log mean_i exp((θ-θ0)·g(X_i))` with `X_i ~ P_θ0`.
//! * [`missing_data_fit`] maximises the face-value ratio
//!   `log mean_i exp((θ-θ0)·g(X'_i)) - log mean_i exp((θ-θ0)·g(X_i))` where
//!   `X'_i ~ P_{θ0,γ}(· | y)`.
//! * [`exact_fit_small`] and [`dyad_independent_fit`] are exact estimators
//!   for tiny graphs and for logistic-regression models.
//!
//! Each MC outer iteration samples at the current guess, maximises the
//! sampled ratio inside a trust region, and stops when the sampled
//! improvement drops below `llr_tolerance` with an interior step.

mod exact;
mod kl;
mod logistic;
mod mcmle;
mod missing;
pub mod numerics;
pub mod optimize;
mod outer;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::mcmc::{ChainConfig, McmcError, Target};
use crate::terms::TermError;

pub use exact::{exact_fit_small, ExactSpace, MAX_EXACT_DYADS};
pub use kl::{kl_utility, KlConfig, KlEstimate};
pub use logistic::{default_theta0, dyad_independent_fit};
pub use mcmle::mcmle_fit;
pub use missing::{denoise, missing_data_fit, missing_data_information};

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("parameter vector has length {found}, model has {expected} statistics")]
    Dimension { expected: usize, found: usize },
    #[error("model has dyad-dependent terms; the logistic fit needs a dyad-independent model")]
    NotDyadIndependent,
    #[error("{dyads} dyads is too many for exact enumeration (limit {limit})")]
    TooLarge { dyads: usize, limit: usize },
    #[error("MLE does not exist: {0}")]
    MleNotExist(String),
    #[error("separation: {0}")]
    Separation(String),
    #[error(
        "mechanism carries no information about the network (p + q = 1 on every dyad); parameters are not identifiable"
    )]
    NonIdentifiable,
    #[error("fit config: {0}")]
    Config(String),
    #[error("statistics are linearly dependent; information matrix is singular")]
    Singular,
    #[error(transparent)]
    Mcmc(#[from] McmcError),
    #[error(transparent)]
    Term(#[from] TermError),
}

/// Estimator that produced a [`FitResult`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitMethod {
    Mcmle,
    MissingData,
    Exact,
    DyadIndependentOracle,
}

impl FitMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            FitMethod::Mcmle => "mcmle",
            FitMethod::MissingData => "missing-data",
            FitMethod::Exact => "exact",
            FitMethod::DyadIndependentOracle => "dyad-independent-oracle",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Chain settings for the first outer iteration. `samples` is `M`.
    pub chain: ChainConfig,
    /// Burn-in for later iterations, which start from the previous final state.
    pub warm_burn_in: usize,
    pub max_iterations: usize,
    /// Radius of the trust region on `‖θ - θ0‖`.
    pub step_bound: f64,
    /// Bound on the standard deviation of `(θ - θ0)·g(X)` over the
    /// unconditional sample, i.e. of the log importance weights.
    pub weight_sd_bound: f64,
    /// An interior step also counts as converged when the zero-score test
    /// has at least this p-value.
    pub score_p_min: f64,
    /// Stop when the sampled log-likelihood-ratio gain is below this.
    pub llr_tolerance: f64,
    /// Times `M` may be doubled after a convex-hull failure.
    pub hull_retries: usize,
}

impl FitConfig {
    pub fn for_nodes(n: usize, samples: usize, seed: u64) -> Self {
        Self {
            chain: ChainConfig::for_nodes(n, samples, seed),
            warm_burn_in: 2 * n * n,
            max_iterations: 30,
            step_bound: 0.5,
            weight_sd_bound: 1.0,
            score_p_min: 0.5,
            llr_tolerance: 0.01,
            hull_retries: 3,
        }
    }

    pub fn validate(&self) -> Result<(), InferenceError> {
        self.chain.validate()?;
        if !(self.step_bound > 0.0) || !(self.llr_tolerance > 0.0) || !(self.weight_sd_bound > 0.0) {
            return Err(InferenceError::Config(
                "step_bound, weight_sd_bound and llr_tolerance must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.score_p_min) {
            return Err(InferenceError::Config("score_p_min must lie in [0, 1]".into()));
        }
        if self.max_iterations == 0 {
            return Err(InferenceError::Config("max_iterations must be positive".into()));
        }
        Ok(())
    }
}

/// One outer iteration of an MC fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub theta0: Vec<f64>,
    pub theta1: Vec<f64>,
    /// Sampled log-likelihood ratio at `theta1` relative to `theta0`.
    pub gain: f64,
    pub clipped: bool,
    pub in_hull: bool,
    pub samples: usize,
    /// p-value of the zero-score test on this iteration's samples.
    pub score_p: f64,
}

/// Moments of the final sample of one chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub target: Target,
    pub samples: usize,
    pub acceptance_rate: f64,
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub method: FitMethod,
    pub labels: Vec<String>,
    pub theta: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// Estimated Fisher information.
    pub info: Vec<Vec<f64>>,
    /// Inverse of `info` after any eigenvalue repair.
    pub covariance: Vec<Vec<f64>>,
    pub iterations: usize,
    pub converged: bool,
    /// `info` was not positive definite and was repaired by flooring.
    pub info_floored: bool,
    pub hull_failures: usize,
    pub history: Vec<IterationRecord>,
    pub summaries: Vec<ChainSummary>,
}

/// Significance marker: `***` for p ≤ 0.001, `**` for p ≤ 0.01, `*` for p ≤ 0.05.
pub fn stars(p: f64) -> &'static str {
    if p <= 0.001 {
        "***"
    } else if p <= 0.01 {
        "**"
    } else if p <= 0.05 {
        "*"
    } else {
        ""
    }
}

/// Two-sided normal p-value of `z`.
pub fn two_sided_p(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    let n = Normal::standard();
    2.0 * n.cdf(-z.abs())
}

impl FitResult {
    pub fn z_values(&self) -> Vec<f64> {
        self.theta.iter().zip(&self.std_errors).map(|(t, s)| t / s).collect()
    }

    /// Estimate, SE, z, p and stars per parameter.
    pub fn report_table(&self) -> String {
        let width = self.labels.iter().map(String::len).max().unwrap_or(4).max(9);
        let mut out = String::new();
        let _ = writeln!(out, "method: {}", self.method.as_str());
        let _ = writeln!(
            out,
            "converged: {} after {} iteration(s){}",
            self.converged,
            self.iterations,
            if self.info_floored {
                " (information not positive definite; floored)"
            } else {
                ""
            }
        );
        let _ = writeln!(
            out,
            "{:<width$} {:>10} {:>10} {:>8} {:>10}",
            "parameter", "estimate", "std.err", "z", "p"
        );
        for (k, label) in self.labels.iter().enumerate() {
            let z = self.theta[k] / self.std_errors[k];
            let p = two_sided_p(z);
            let _ = writeln!(
                out,
                "{:<width$} {:>10.4} {:>10.4} {:>8.2} {:>10.4} {}",
                label,
                self.theta[k],
                self.std_errors[k],
                z,
                p,
                stars(p)
            );
        }
        let _ = writeln!(out, "signif: 0.001 >= *** ; 0.01 >= ** ; 0.05 >= *");
        out
    }

    /// `parameter,estimate,std_error,z,p_value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("parameter,estimate,std_error,z,p_value\n");
        for (k, label) in self.labels.iter().enumerate() {
            let z = self.theta[k] / self.std_errors[k];
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                label,
                self.theta[k],
                self.std_errors[k],
                z,
                two_sided_p(z)
            );
        }
        out
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<(), InferenceError> {
    if expected != found {
        return Err(InferenceError::Dimension { expected, found });
    }
    Ok(())
}

pub(crate) fn check_nodes(
    g: &crate::graph::Graph,
    z: &crate::attributes::NodeAttributes,
) -> Result<(), InferenceError> {
    if g.n() != z.n() {
        return Err(InferenceError::Config(format!(
            "graph has {} nodes, attribute table has {}",
            g.n(),
            z.n()
        )));
    }
    Ok(())
}
