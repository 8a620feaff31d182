// SPDX-License-Identifier: Apache-2.0

//! Exact MLE for dyad-independent models by logistic regression.
//!
//! Every dyad-independent statistic is a sum over edges of a per-dyad
//! covariate row, and that row is the change statistic of the dyad on the
//! empty graph. The ERGM likelihood is then a logistic regression of the
//! dyad states on those rows.

use nalgebra::{DMatrix, DVector};

use super::numerics::{invert_information, to_rows};
use super::{check_nodes, FitMethod, FitResult, InferenceError};
use crate::attributes::NodeAttributes;
use crate::graph::Graph;
use crate::terms::Model;

fn design(model: &Model) -> (Vec<crate::graph::DyadIndex>, DMatrix<f64>) {
    let empty = Graph::new(model.n(), model.is_directed()).expect("model has n > 0");
    let dyads: Vec<_> = empty.dyads().collect();
    let q = model.dim();
    let mut x = DMatrix::zeros(dyads.len(), q);
    let mut row = vec![0.0; q];
    for (r, &d) in dyads.iter().enumerate() {
        model.change_stats_into(&empty, d, &mut row);
        for k in 0..q {
            x[(r, k)] = row[k];
        }
    }
    (dyads, x)
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn log1pexp(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// Logistic-regression MLE of a dyad-independent model.
pub fn dyad_independent_fit(model: &Model, x: &Graph, z: &NodeAttributes) -> Result<FitResult, InferenceError> {
    if !model.is_dyad_independent() {
        return Err(InferenceError::NotDyadIndependent);
    }
    model.check_graph(x)?;
    check_nodes(x, z)?;
    let (dyads, design) = design(model);
    let q = model.dim();
    let resp = DVector::from_iterator(dyads.len(), dyads.iter().map(|&d| x.get(d) as u8 as f64));
    let g_obs = design.tr_mul(&resp);

    // a coordinate at the edge of its attainable range means separation
    for k in 0..q {
        let col = design.column(k);
        if col.iter().all(|&v| v == 0.0) {
            return Err(InferenceError::Singular);
        }
        let lo: f64 = col.iter().map(|&v| v.min(0.0)).sum();
        let hi: f64 = col.iter().map(|&v| v.max(0.0)).sum();
        let tol = 1e-9 * (hi - lo).abs().max(1.0);
        if g_obs[k] <= lo + tol || g_obs[k] >= hi - tol {
            return Err(InferenceError::Separation(format!(
                "{} = {} is at the boundary of its range [{lo}, {hi}]",
                model.labels()[k],
                g_obs[k]
            )));
        }
    }

    let loglik = |beta: &DVector<f64>| -> f64 {
        let eta = &design * beta;
        resp.dot(&eta) - eta.iter().map(|&t| log1pexp(t)).sum::<f64>()
    };
    let mut beta = DVector::zeros(q);
    let mut ll = loglik(&beta);
    let mut iterations = 0;
    let mut converged = false;
    for it in 1..=200 {
        iterations = it;
        let eta = &design * &beta;
        let p = eta.map(sigmoid);
        let grad = design.tr_mul(&(&resp - &p));
        let w = p.map(|v| v * (1.0 - v));
        let info = design.tr_mul(&DMatrix::from_diagonal(&w)) * &design;
        let step = info.cholesky().ok_or(InferenceError::Singular)?.solve(&grad);
        let mut t = 1.0;
        let mut next = &beta + &step;
        let mut nll = loglik(&next);
        while nll < ll - 1e-12 && t > 1e-8 {
            t *= 0.5;
            next = &beta + &step * t;
            nll = loglik(&next);
        }
        beta = next;
        ll = nll;
        if beta.amax() > 50.0 {
            return Err(InferenceError::Separation("coefficients diverge".into()));
        }
        if (&step * t).amax() < 1e-10 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(InferenceError::Separation("IRLS did not converge".into()));
    }
    let p = (&design * &beta).map(sigmoid);
    let w = p.map(|v| v * (1.0 - v));
    let info = design.tr_mul(&DMatrix::from_diagonal(&w)) * &design;
    let (cov, se, floored) = invert_information(&info);
    Ok(FitResult {
        method: FitMethod::DyadIndependentOracle,
        labels: model.labels().to_vec(),
        theta: beta.iter().copied().collect(),
        std_errors: se,
        info: to_rows(&info),
        covariance: to_rows(&cov),
        iterations,
        converged: true,
        info_floored: floored,
        hull_failures: 0,
        history: Vec::new(),
        summaries: Vec::new(),
    })
}

/// Starting point for MC fits: the logistic fit of the dyad-independent
/// sub-model on `g`, zeros for dyad-dependent terms (and everywhere if that
/// fit fails).
pub fn default_theta0(model: &Model, g: &Graph, z: &NodeAttributes) -> Vec<f64> {
    let mut theta = vec![0.0; model.dim()];
    if let Ok(Some((sub, coords))) = model.dyad_independent_part(z) {
        if let Ok(fit) = dyad_independent_fit(&sub, g, z) {
            for (v, &k) in fit.theta.iter().zip(&coords) {
                theta[k] = *v;
            }
        }
    }
    theta
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terms::ModelSpec;

    #[test]
    fn edges_only_is_logit_density() {
        let z = NodeAttributes::empty(6);
        let model = Model::new(&ModelSpec::parse("edges").unwrap(), &z, false).unwrap();
        let g = Graph::from_edges(6, false, [(0, 1), (1, 2), (2, 3), (4, 5)]).unwrap();
        let fit = dyad_independent_fit(&model, &g, &z).unwrap();
        let d: f64 = 4.0 / 15.0;
        assert!((fit.theta[0] - (d / (1.0 - d)).ln()).abs() < 1e-10);
        let se = (1.0 / (15.0 * d * (1.0 - d))).sqrt();
        assert!((fit.std_errors[0] - se).abs() < 1e-9);
    }

    #[test]
    fn separation_and_dependence() {
        let z = NodeAttributes::empty(4);
        let model = Model::new(&ModelSpec::parse("edges").unwrap(), &z, false).unwrap();
        let g = Graph::new(4, false).unwrap();
        assert!(matches!(
            dyad_independent_fit(&model, &g, &z),
            Err(InferenceError::Separation(_))
        ));
        let dep = Model::new(&ModelSpec::parse("edges\ngwesp(0, fixed)").unwrap(), &z, false).unwrap();
        assert!(matches!(
            dyad_independent_fit(&dep, &g, &z),
            Err(InferenceError::NotDyadIndependent)
        ));
        let theta = default_theta0(&dep, &Graph::from_edges(4, false, [(0, 1)]).unwrap(), &z);
        assert!((theta[0] - (1.0f64 / 5.0).ln()).abs() < 1e-10);
        assert_eq!(theta[1], 0.0);
    }
}
