// SPDX-License-Identifier: Apache-2.0

//! Face-value MLE on a released network.
//!
//! The face-value likelihood of `y` marginalises the true network,
//! `L(θ) = Σ_x P_θ(x) P_γ(y | x)`. Its ratio to `L(θ0)` is estimated by the
//! ratio of two normalising-constant estimates: one from the posterior chain
//! `X' ~ P_{θ0,γ}(· | y)`, one from the unconditional chain `X ~ P_θ0`.
//! The information is the difference of the two tilted covariances.

use nalgebra::{DMatrix, DVector};

use super::numerics::{hotelling_p, to_rows, Centered};
use super::optimize::Eval;
use super::outer::{self, check_theta, iteration_chain, Round};
use super::{check_nodes, default_theta0, ChainSummary, FitConfig, FitMethod, FitResult, InferenceError};
use crate::attributes::NodeAttributes;
use crate::graph::Graph;
use crate::mcmc::{sample_conditional_from, sample_ergm, ChainConfig, McmcError, SampleSet};
use crate::privacy::MechanismParams;
use crate::seeds::derive_seed;
use crate::terms::Model;

struct MissingRound {
    uncond: SampleSet,
    cond: SampleSet,
    u: Centered,
    c: Centered,
    /// Plain mean of the conditional sample; both row sets are centred on it.
    center: Vec<f64>,
    metric: DMatrix<f64>,
}

impl MissingRound {
    fn new(uncond: SampleSet, cond: SampleSet) -> Self {
        let center = cond.mean();
        let u = Centered::new(&uncond, &center);
        let c = Centered::new(&cond, &center);
        let metric = u.tilt(&DVector::zeros(u.dim())).cov;
        Self {
            metric,
            uncond,
            cond,
            u,
            c,
            center,
        }
    }
}

impl Round for MissingRound {
    fn in_hull(&self) -> bool {
        (0..self.u.dim()).all(|k| {
            let (lo, hi) = self.u.range(k);
            lo <= 0.0 && 0.0 <= hi
        })
    }

    fn eval(&self, delta: &DVector<f64>) -> Eval {
        let tc = self.c.tilt(delta);
        let tu = self.u.tilt(delta);
        Eval {
            value: tc.lme - tu.lme,
            grad: tc.mean - tu.mean,
            hess: tc.cov - tu.cov,
        }
    }

    fn information(&self, delta: &DVector<f64>) -> DMatrix<f64> {
        self.u.tilt(delta).cov - self.c.tilt(delta).cov
    }

    fn weight_metric(&self) -> &DMatrix<f64> {
        &self.metric
    }

    fn score_p_value(&self) -> f64 {
        let bc = self.c.batch_means();
        let bu = self.u.batch_means();
        hotelling_p(&(bc.mean - bu.mean), &(bc.var + bu.var), bc.batches.min(bu.batches))
    }

    fn summaries(&self, delta: &DVector<f64>) -> Vec<ChainSummary> {
        vec![
            outer::summarize(&self.uncond, &self.u, &self.center, delta),
            outer::summarize(&self.cond, &self.c, &self.center, delta),
        ]
    }
}

fn check_mechanism(model: &Model, gamma: &MechanismParams) -> Result<(), InferenceError> {
    if gamma.n() != model.n() || gamma.is_directed() != model.is_directed() {
        return Err(McmcError::MechanismShape.into());
    }
    if !gamma.is_finite() {
        return Err(McmcError::InfiniteRisk.into());
    }
    if gamma.is_uninformative() {
        return Err(InferenceError::NonIdentifiable);
    }
    Ok(())
}

/// Missing-data MLE of `model` from the release `y` of mechanism `gamma`.
///
/// `theta0` defaults to [`default_theta0`] evaluated on `y`. The two chains
/// of each iteration run concurrently. An uninformative mechanism
/// (`p + q = 1` everywhere) is rejected as non-identifiable.
pub fn missing_data_fit(
    model: &Model,
    y: &Graph,
    z: &NodeAttributes,
    gamma: &MechanismParams,
    theta0: Option<&[f64]>,
    cfg: &FitConfig,
) -> Result<FitResult, InferenceError> {
    model.check_graph(y)?;
    check_nodes(y, z)?;
    check_mechanism(model, gamma)?;
    let theta0 = match theta0 {
        Some(t) => t.to_vec(),
        None => default_theta0(model, y, z),
    };
    check_theta(model.dim(), &theta0)?;
    let mut ustate = y.clone();
    let mut cstate = y.clone();
    outer::run(
        FitMethod::MissingData,
        model.labels().to_vec(),
        theta0,
        cfg,
        |it, theta, m| {
            let ucfg = iteration_chain(cfg, it, 0, m);
            let ccfg = iteration_chain(cfg, it, 1, m);
            let (u, c) = rayon::join(
                || sample_ergm(model, theta, &ustate, &ucfg),
                || sample_conditional_from(model, theta, gamma, y, &cstate, &ccfg),
            );
            let (u, c) = (u?, c?);
            ustate = u.last.clone();
            cstate = c.last.clone();
            Ok(MissingRound::new(u, c))
        },
    )
}

/// Difference-of-covariances information `Cov_θ[g] - Cov_{θ,γ}[g | y]` from
/// one pair of chains at `theta`.
pub fn missing_data_information(
    model: &Model,
    theta: &[f64],
    gamma: &MechanismParams,
    y: &Graph,
    chain: &ChainConfig,
) -> Result<Vec<Vec<f64>>, InferenceError> {
    check_mechanism(model, gamma)?;
    check_theta(model.dim(), theta)?;
    let u = sample_ergm(model, theta, y, &chain.with_seed(derive_seed(chain.seed, 0, 0)))?;
    let c = sample_conditional_from(
        model,
        theta,
        gamma,
        y,
        y,
        &chain.with_seed(derive_seed(chain.seed, 0, 1)),
    )?;
    let round = MissingRound::new(u, c);
    Ok(to_rows(&round.information(&DVector::zeros(model.dim()))))
}

/// Draws graphs from `P_{θ̂,γ}(X | y)`, keeping the graphs.
pub fn denoise(
    model: &Model,
    theta_hat: &[f64],
    y: &Graph,
    gamma: &MechanismParams,
    chain: &ChainConfig,
) -> Result<SampleSet, InferenceError> {
    check_theta(model.dim(), theta_hat)?;
    let cfg = ChainConfig {
        keep_graphs: true,
        ..chain.clone()
    };
    Ok(sample_conditional_from(model, theta_hat, gamma, y, y, &cfg)?)
}
