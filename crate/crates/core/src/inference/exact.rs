// SPDX-License-Identifier: Apache-2.0

//! Exact likelihoods by enumerating every graph on a few dyads.

use nalgebra::{DMatrix, DVector};

use super::numerics::{invert_information, to_rows};
use super::{check_nodes, FitMethod, FitResult, InferenceError};
use crate::attributes::NodeAttributes;
use crate::graph::{DyadIndex, Graph};
use crate::privacy::MechanismParams;
use crate::terms::Model;

/// Largest dyad count accepted for enumeration (2^20 graphs).
pub const MAX_EXACT_DYADS: usize = 20;

/// Statistics of every graph on the model's node set.
///
/// State `s` has dyad `dyads()[b]` present iff bit `b` of `s` is set.
#[derive(Clone, Debug)]
pub struct ExactSpace {
    dim: usize,
    n: usize,
    directed: bool,
    dyads: Vec<DyadIndex>,
    stats: Vec<f64>,
}

impl ExactSpace {
    pub fn new(model: &Model) -> Result<Self, InferenceError> {
        let mut g = Graph::new(model.n(), model.is_directed()).expect("model has n > 0");
        let dyads: Vec<DyadIndex> = g.dyads().collect();
        if dyads.len() > MAX_EXACT_DYADS {
            return Err(InferenceError::TooLarge {
                dyads: dyads.len(),
                limit: MAX_EXACT_DYADS,
            });
        }
        let q = model.dim();
        let states = 1usize << dyads.len();
        let mut stats = vec![0.0; states * q];
        let mut cur = model.stats(&g)?;
        stats[..q].copy_from_slice(&cur);
        let mut delta = vec![0.0; q];
        let mut mask = 0usize;
        // Gray-code walk: one toggle per state, statistics updated incrementally
        for k in 1..states {
            let b = k.trailing_zeros() as usize;
            model.change_stats_into(&g, dyads[b], &mut delta);
            g.toggle(dyads[b]);
            mask ^= 1 << b;
            for (c, d) in cur.iter_mut().zip(&delta) {
                *c += d;
            }
            stats[mask * q..(mask + 1) * q].copy_from_slice(&cur);
        }
        Ok(Self {
            dim: q,
            n: model.n(),
            directed: model.is_directed(),
            dyads,
            stats,
        })
    }

    pub fn len(&self) -> usize {
        self.stats.len() / self.dim.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.stats.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dyads(&self) -> &[DyadIndex] {
        &self.dyads
    }

    pub fn stats(&self, s: usize) -> &[f64] {
        &self.stats[s * self.dim..(s + 1) * self.dim]
    }

    pub fn graph(&self, s: usize) -> Graph {
        let mut g = Graph::new(self.n, self.directed).expect("n > 0");
        for (b, &d) in self.dyads.iter().enumerate() {
            if s >> b & 1 == 1 {
                g.set(d, true);
            }
        }
        g
    }

    pub fn index_of(&self, g: &Graph) -> usize {
        self.dyads
            .iter()
            .enumerate()
            .filter(|(_, &d)| g.get(d))
            .map(|(b, _)| 1usize << b)
            .sum()
    }

    /// `log P_γ(y | x_s)` for every state.
    pub fn mechanism_log_probs(&self, gamma: &MechanismParams, y: &Graph) -> Vec<f64> {
        (0..self.len())
            .map(|s| {
                self.dyads
                    .iter()
                    .enumerate()
                    .map(|(b, &d)| gamma.log_prob(d, s >> b & 1 == 1, y.get(d)))
                    .sum()
            })
            .collect()
    }

    /// Log normaliser, mean and covariance of `g` under
    /// `P(s) ∝ exp(θ·g(s) + extra[s])`.
    pub fn moments(&self, theta: &[f64], extra: Option<&[f64]>) -> (f64, DVector<f64>, DMatrix<f64>) {
        let q = self.dim;
        let logw: Vec<f64> = (0..self.len())
            .map(|s| {
                let a: f64 = self.stats(s).iter().zip(theta).map(|(g, t)| g * t).sum();
                a + extra.map_or(0.0, |e| e[s])
            })
            .collect();
        let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = logw.iter().map(|v| (v - max).exp()).collect();
        let total: f64 = w.iter().sum();
        let mut mean = DVector::zeros(q);
        for (s, &ws) in w.iter().enumerate() {
            mean += DVector::from_column_slice(self.stats(s)) * (ws / total);
        }
        let mut cov = DMatrix::zeros(q, q);
        for (s, &ws) in w.iter().enumerate() {
            let d = DVector::from_column_slice(self.stats(s)) - &mean;
            cov.ger(ws / total, &d, &d, 1.0);
        }
        (max + total.ln(), mean, cov)
    }

    pub fn log_normalizer(&self, theta: &[f64]) -> f64 {
        self.moments(theta, None).0
    }

    /// Exact `log P_θ(x)`.
    pub fn log_likelihood(&self, theta: &[f64], x: &Graph) -> f64 {
        let s = self.index_of(x);
        let a: f64 = self.stats(s).iter().zip(theta).map(|(g, t)| g * t).sum();
        a - self.log_normalizer(theta)
    }

    /// Exact face-value log-likelihood `log Σ_x P_θ(x) P_γ(y | x)`.
    pub fn face_value_log_likelihood(&self, theta: &[f64], mech_log_probs: &[f64]) -> f64 {
        self.moments(theta, Some(mech_log_probs)).0 - self.log_normalizer(theta)
    }
}

/// Exact MLE by Newton iteration on the enumerated likelihood.
pub fn exact_fit_small(model: &Model, x: &Graph, z: &NodeAttributes) -> Result<FitResult, InferenceError> {
    model.check_graph(x)?;
    check_nodes(x, z)?;
    let space = ExactSpace::new(model)?;
    let q = model.dim();
    let obs = DVector::from_vec(model.stats(x)?);
    for k in 0..q {
        let (lo, hi) = (0..space.len())
            .map(|s| space.stats(s)[k])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if lo == hi {
            return Err(InferenceError::Singular);
        }
        if obs[k] <= lo || obs[k] >= hi {
            return Err(InferenceError::MleNotExist(format!(
                "{} = {} is on the boundary of the convex hull [{lo}, {hi}]",
                model.labels()[k],
                obs[k]
            )));
        }
    }
    let loglik = |t: &DVector<f64>| obs.dot(t) - space.log_normalizer(t.as_slice());
    let mut theta = DVector::zeros(q);
    let mut ll = loglik(&theta);
    let mut iterations = 0;
    let mut converged = false;
    for it in 1..=500 {
        iterations = it;
        let (_, mean, cov) = space.moments(theta.as_slice(), None);
        let grad = &obs - &mean;
        if grad.norm() < 1e-11 * (1.0 + obs.norm()) {
            converged = true;
            break;
        }
        let step = cov
            .cholesky()
            .ok_or_else(|| InferenceError::MleNotExist("information became singular".into()))?
            .solve(&grad);
        let mut t = 1.0;
        let mut next = &theta + &step;
        let mut nll = loglik(&next);
        while !(nll >= ll) && t > 1e-10 {
            t *= 0.5;
            next = &theta + &step * t;
            nll = loglik(&next);
        }
        theta = next;
        ll = nll;
        if theta.amax() > 100.0 {
            return Err(InferenceError::MleNotExist("Newton iterates diverge".into()));
        }
    }
    if !converged {
        return Err(InferenceError::MleNotExist("Newton iteration did not converge".into()));
    }
    let (_, _, info) = space.moments(theta.as_slice(), None);
    let (cov, se, floored) = invert_information(&info);
    Ok(FitResult {
        method: FitMethod::Exact,
        labels: model.labels().to_vec(),
        theta: theta.iter().copied().collect(),
        std_errors: se,
        info: to_rows(&info),
        covariance: to_rows(&cov),
        iterations,
        converged,
        info_floored: floored,
        hull_failures: 0,
        history: Vec::new(),
        summaries: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terms::ModelSpec;

    fn model(text: &str, n: usize) -> (Model, NodeAttributes) {
        let z = NodeAttributes::empty(n);
        (Model::new(&ModelSpec::parse(text).unwrap(), &z, false).unwrap(), z)
    }

    #[test]
    fn enumeration_matches_direct_stats() {
        let (m, _) = model("edges\ngwesp(0.4, fixed)\ndegreepopularity", 4);
        let space = ExactSpace::new(&m).unwrap();
        assert_eq!(space.len(), 64);
        for s in 0..64 {
            let g = space.graph(s);
            assert_eq!(space.index_of(&g), s);
            let direct = m.stats(&g).unwrap();
            for (a, b) in direct.iter().zip(space.stats(s)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn closed_form_normalizer() {
        let (m, _) = model("edges", 3);
        let space = ExactSpace::new(&m).unwrap();
        let t = 0.37;
        assert!((space.log_normalizer(&[t]) - 3.0 * (1.0 + t.exp()).ln()).abs() < 1e-12);
    }

    #[test]
    fn edges_only_fits() {
        let (m, z) = model("edges", 3);
        let empty = Graph::new(3, false).unwrap();
        assert!(matches!(
            exact_fit_small(&m, &empty, &z),
            Err(InferenceError::MleNotExist(_))
        ));
        let one = Graph::from_edges(3, false, [(0, 1)]).unwrap();
        let fit = exact_fit_small(&m, &one, &z).unwrap();
        assert!((fit.theta[0] - (0.5f64).ln()).abs() < 1e-10);
    }

    #[test]
    fn too_large() {
        let (m, _) = model("edges", 7);
        assert!(matches!(
            ExactSpace::new(&m),
            Err(InferenceError::TooLarge { dyads: 21, .. })
        ));
    }
}
