// SPDX-License-Identifier: Apache-2.0

//! Brute-force oracles shared by integration tests.
//!
//! Everything here enumerates graphs directly and never touches the
//! library's own enumeration or estimators.

#![allow(dead_code)]

use dpergm::attributes::NodeAttributes;
use dpergm::graph::{DyadIndex, Graph};
use dpergm::privacy::MechanismParams;
use dpergm::terms::{Model, ModelSpec};

pub fn bare_model(text: &str, n: usize, directed: bool) -> (Model, NodeAttributes) {
    let z = NodeAttributes::empty(n);
    let m = Model::new(&ModelSpec::parse(text).unwrap(), &z, directed).unwrap();
    (m, z)
}

/// Every graph on `n` nodes with its statistic vector.
pub struct Brute {
    pub graphs: Vec<Graph>,
    pub stats: Vec<Vec<f64>>,
    pub dyads: Vec<DyadIndex>,
}

impl Brute {
    pub fn new(model: &Model) -> Self {
        let base = Graph::new(model.n(), model.is_directed()).unwrap();
        let dyads: Vec<DyadIndex> = base.dyads().collect();
        assert!(dyads.len() <= 16);
        let mut graphs = Vec::new();
        let mut stats = Vec::new();
        for mask in 0u32..(1 << dyads.len()) {
            let mut g = base.clone();
            for (b, &d) in dyads.iter().enumerate() {
                if mask >> b & 1 == 1 {
                    g.set(d, true);
                }
            }
            stats.push(model.stats(&g).unwrap());
            graphs.push(g);
        }
        Self { graphs, stats, dyads }
    }

    pub fn index_of(&self, g: &Graph) -> usize {
        self.graphs.iter().position(|h| h == g).unwrap()
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    /// Normalised probabilities proportional to `exp(θ·g + extra)`.
    pub fn probs(&self, theta: &[f64], extra: Option<&[f64]>) -> Vec<f64> {
        let lw: Vec<f64> = self
            .stats
            .iter()
            .enumerate()
            .map(|(s, g)| Self::dot(theta, g) + extra.map_or(0.0, |e| e[s]))
            .collect();
        let max = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = lw.iter().map(|v| (v - max).exp()).collect();
        let t: f64 = w.iter().sum();
        w.into_iter().map(|v| v / t).collect()
    }

    pub fn log_c(&self, theta: &[f64]) -> f64 {
        let lw: Vec<f64> = self.stats.iter().map(|g| Self::dot(theta, g)).collect();
        let max = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        max + lw.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
    }

    /// `log P(y | x_s)` from the four retention cases.
    pub fn mech_log(&self, gamma: &MechanismParams, y: &Graph) -> Vec<f64> {
        self.graphs
            .iter()
            .map(|x| {
                self.dyads
                    .iter()
                    .map(|&d| {
                        let r = gamma.retention(d);
                        let p = match (x.get(d), y.get(d)) {
                            (true, true) => r.p,
                            (true, false) => 1.0 - r.p,
                            (false, true) => 1.0 - r.q,
                            (false, false) => r.q,
                        };
                        p.ln()
                    })
                    .sum()
            })
            .collect()
    }

    /// Face-value log-likelihood `log Σ_x P_θ(x) P(y|x)`.
    pub fn face_value(&self, theta: &[f64], mech: &[f64]) -> f64 {
        let lw: Vec<f64> = self
            .stats
            .iter()
            .zip(mech)
            .map(|(g, m)| Self::dot(theta, g) + m)
            .collect();
        let max = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        max + lw.iter().map(|v| (v - max).exp()).sum::<f64>().ln() - self.log_c(theta)
    }

    pub fn mean_cov(&self, p: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let q = self.stats[0].len();
        let mut mean = vec![0.0; q];
        for (w, g) in p.iter().zip(&self.stats) {
            for k in 0..q {
                mean[k] += w * g[k];
            }
        }
        let mut cov = vec![vec![0.0; q]; q];
        for (w, g) in p.iter().zip(&self.stats) {
            for a in 0..q {
                for b in 0..q {
                    cov[a][b] += w * (g[a] - mean[a]) * (g[b] - mean[b]);
                }
            }
        }
        (mean, cov)
    }

    /// Exact `KL(θx, θy)` evaluated at `x`, the log-likelihood ratio form.
    pub fn kl(&self, tx: &[f64], ty: &[f64], x: &Graph) -> f64 {
        let g = &self.stats[self.index_of(x)];
        (Self::dot(tx, g) - self.log_c(tx)) - (Self::dot(ty, g) - self.log_c(ty))
    }

    /// Face-value MLE by Newton ascent with analytic moments, gradient
    /// `E[g | y] - E[g]` and Hessian `Cov[g | y] - Cov[g]`.
    pub fn face_value_mle(&self, mech: &[f64], start: &[f64]) -> Vec<f64> {
        let q = start.len();
        let mut theta = start.to_vec();
        for _ in 0..500 {
            let (mc, cc) = self.mean_cov(&self.probs(&theta, Some(mech)));
            let (mu, cu) = self.mean_cov(&self.probs(&theta, None));
            let grad: Vec<f64> = (0..q).map(|k| mc[k] - mu[k]).collect();
            if grad.iter().map(|v| v * v).sum::<f64>().sqrt() < 1e-12 {
                return theta;
            }
            let h: Vec<Vec<f64>> = (0..q).map(|a| (0..q).map(|b| cc[a][b] - cu[a][b]).collect()).collect();
            let step = solve_neg(&h, &grad).unwrap_or_else(|| grad.iter().map(|g| 0.1 * g).collect());
            let f0 = self.face_value(&theta, mech);
            let mut t = 1.0;
            loop {
                let cand: Vec<f64> = theta.iter().zip(&step).map(|(a, s)| a + t * s).collect();
                if self.face_value(&cand, mech) >= f0 || t < 1e-10 {
                    theta = cand;
                    break;
                }
                t *= 0.5;
            }
        }
        theta
    }
}

/// Solves `(-h) s = g` by Gaussian elimination when `-h` is positive definite.
pub fn solve_neg(h: &[Vec<f64>], g: &[f64]) -> Option<Vec<f64>> {
    let q = g.len();
    let mut a: Vec<Vec<f64>> = (0..q)
        .map(|i| {
            let mut row: Vec<f64> = h[i].iter().map(|v| -v).collect();
            row.push(g[i]);
            row
        })
        .collect();
    for c in 0..q {
        if a[c][c] <= 1e-14 {
            return None;
        }
        for r in c + 1..q {
            let f = a[r][c] / a[c][c];
            for k in c..=q {
                a[r][k] -= f * a[c][k];
            }
        }
    }
    let mut s = vec![0.0; q];
    for c in (0..q).rev() {
        let mut v = a[c][q];
        for k in c + 1..q {
            v -= a[c][k] * s[k];
        }
        s[c] = v / a[c][c];
    }
    Some(s)
}

/// Total-variation distance between two distributions on the same states.
pub fn tv(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}
