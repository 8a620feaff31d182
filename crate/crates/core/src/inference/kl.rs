// SPDX-License-Identifier: Apache-2.0

//! KL divergence between two fitted ERGMs, evaluated at the observed graph.
//!
//! `KL(θx, θy) = (θx - θy)·g(x) + log c(θy) - log c(θx)`. The log ratio of
//! normalising constants is bridge-sampled along the straight path from θx
//! to θy. For consecutive path points `a`, `b` with `Δ = θb - θa` the
//! geometric bridge gives
//! `log c(b)/c(a) = log E_a[exp(Δ·g/2)] - log E_b[exp(-Δ·g/2)]`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::numerics::log_mean_exp;
use super::{check_dim, InferenceError};
use crate::graph::Graph;
use crate::mcmc::{sample_ergm, ChainConfig, SampleSet};
use crate::seeds::derive_seed;
use crate::terms::Model;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KlConfig {
    /// Settings for the chain at each path point.
    pub chain: ChainConfig,
    /// Path points including both ends; at least 2.
    pub path_points: usize,
}

impl KlConfig {
    pub fn for_nodes(n: usize, samples: usize, seed: u64) -> Self {
        Self {
            chain: ChainConfig::for_nodes(n, samples, seed),
            path_points: 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KlEstimate {
    /// `max(raw, 0)`.
    pub kl: f64,
    pub raw: f64,
    /// Estimated `log c(θy) - log c(θx)`.
    pub log_ratio: f64,
}

fn half_tilt(sample: &SampleSet, delta: &[f64], sign: f64) -> f64 {
    let a: Vec<f64> = sample
        .rows()
        .map(|r| sign * 0.5 * r.iter().zip(delta).map(|(g, d)| g * d).sum::<f64>())
        .collect();
    log_mean_exp(&a)
}

/// Estimates `KL(θx, θy)` at the observed graph `x`.
pub fn kl_utility(
    model: &Model,
    theta_x: &[f64],
    theta_y: &[f64],
    x: &Graph,
    cfg: &KlConfig,
) -> Result<KlEstimate, InferenceError> {
    let q = model.dim();
    check_dim(q, theta_x.len())?;
    check_dim(q, theta_y.len())?;
    if cfg.path_points < 2 {
        return Err(InferenceError::Config("path_points must be at least 2".into()));
    }
    let g = model.stats(x)?;
    if theta_x == theta_y {
        return Ok(KlEstimate {
            kl: 0.0,
            raw: 0.0,
            log_ratio: 0.0,
        });
    }
    let k = cfg.path_points;
    let path: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            let s = i as f64 / (k - 1) as f64;
            theta_x.iter().zip(theta_y).map(|(a, b)| a + s * (b - a)).collect()
        })
        .collect();
    let samples: Vec<SampleSet> = path
        .par_iter()
        .enumerate()
        .map(|(i, theta)| {
            sample_ergm(
                model,
                theta,
                x,
                &cfg.chain.with_seed(derive_seed(cfg.chain.seed, i as u64, 0)),
            )
        })
        .collect::<Result<_, _>>()?;
    let mut log_ratio = 0.0;
    for i in 0..k - 1 {
        let delta: Vec<f64> = path[i + 1].iter().zip(&path[i]).map(|(b, a)| b - a).collect();
        log_ratio += half_tilt(&samples[i], &delta, 1.0) - half_tilt(&samples[i + 1], &delta, -1.0);
    }
    let linear: f64 = theta_x.iter().zip(theta_y).zip(&g).map(|((a, b), s)| (a - b) * s).sum();
    let raw = linear + log_ratio;
    Ok(KlEstimate {
        kl: raw.max(0.0),
        raw,
        log_ratio,
    })
}
