// SPDX-License-Identifier: Apache-2.0

//! Monte Carlo MLE on a fully observed network.

use nalgebra::{DMatrix, DVector};

use super::numerics::{hotelling_p, Centered};
use super::optimize::Eval;
use super::outer::{self, check_theta, iteration_chain, Round};
use super::{check_nodes, default_theta0, ChainSummary, FitConfig, FitMethod, FitResult, InferenceError};
use crate::attributes::NodeAttributes;
use crate::graph::Graph;
use crate::mcmc::{sample_ergm, SampleSet};
use crate::terms::Model;

struct McmleRound {
    sample: SampleSet,
    /// Sample statistics minus `g(x)`.
    rows: Centered,
    g_obs: Vec<f64>,
    metric: DMatrix<f64>,
}

impl Round for McmleRound {
    fn in_hull(&self) -> bool {
        (0..self.rows.dim()).all(|k| {
            let (lo, hi) = self.rows.range(k);
            lo <= 0.0 && 0.0 <= hi
        })
    }

    // l(δ) = δ·g(x) - log mean exp(δ·g(X_i)) = -log mean exp(δ·(g(X_i) - g(x)))
    fn eval(&self, delta: &DVector<f64>) -> Eval {
        let t = self.rows.tilt(delta);
        Eval {
            value: -t.lme,
            grad: -t.mean,
            hess: -t.cov,
        }
    }

    fn information(&self, delta: &DVector<f64>) -> DMatrix<f64> {
        self.rows.tilt(delta).cov
    }

    fn weight_metric(&self) -> &DMatrix<f64> {
        &self.metric
    }

    fn score_p_value(&self) -> f64 {
        let bm = self.rows.batch_means();
        hotelling_p(&bm.mean, &bm.var, bm.batches)
    }

    fn summaries(&self, delta: &DVector<f64>) -> Vec<ChainSummary> {
        vec![outer::summarize(&self.sample, &self.rows, &self.g_obs, delta)]
    }
}

/// Monte Carlo MLE of `model` on the observed graph `x`.
///
/// `theta0` defaults to [`default_theta0`]. Non-convergence is reported in
/// the result, not as an error.
pub fn mcmle_fit(
    model: &Model,
    x: &Graph,
    z: &NodeAttributes,
    theta0: Option<&[f64]>,
    cfg: &FitConfig,
) -> Result<FitResult, InferenceError> {
    model.check_graph(x)?;
    check_nodes(x, z)?;
    let theta0 = match theta0 {
        Some(t) => t.to_vec(),
        None => default_theta0(model, x, z),
    };
    check_theta(model.dim(), &theta0)?;
    let g_obs = model.stats(x)?;
    let mut state = x.clone();
    outer::run(
        FitMethod::Mcmle,
        model.labels().to_vec(),
        theta0,
        cfg,
        |it, theta, m| {
            let sample = sample_ergm(model, theta, &state, &iteration_chain(cfg, it, 0, m))?;
            state = sample.last.clone();
            let rows = Centered::new(&sample, &g_obs);
            let metric = rows.tilt(&DVector::zeros(rows.dim())).cov;
            Ok(McmleRound {
                sample,
                rows,
                metric,
                g_obs: g_obs.clone(),
            })
        },
    )
}
