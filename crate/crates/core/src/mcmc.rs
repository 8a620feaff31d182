// SPDX-License-Identifier: Apache-2.0

//! Metropolis–Hastings samplers over graph space.
//!
//! Two targets share one single-toggle chain:
//!
//! * the ERGM `P_theta(x) ∝ exp(theta · g(x))`, and
//! * the posterior of the true network given a release,
//!   `P_{theta,gamma}(x | y) ∝ exp(theta · g(x)) P_gamma(y | x)`.
//!
//! A proposal toggles one dyad. Its log acceptance ratio is
//! `theta · Δg + log P(y_d | 1 - x_d) - log P(y_d | x_d)` (the second part only
//! when conditioning), plus the Hastings term for the tie/no-tie proposal.
//! Only change statistics are evaluated; the running statistic vector is
//! updated incrementally.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{DyadIndex, Graph};
use crate::privacy::MechanismParams;
use crate::terms::{Model, TermError};

#[derive(Debug, Error)]
pub enum McmcError {
    #[error("parameter vector has length {found}, model has {expected} statistics")]
    Dimension { expected: usize, found: usize },
    #[error("chain config: {0}")]
    Config(String),
    #[error("conditional sampling needs finite-risk mechanism parameters")]
    InfiniteRisk,
    #[error("mechanism shape does not match the model")]
    MechanismShape,
    #[error(transparent)]
    Term(#[from] TermError),
}

/// Dyad proposal used by the chain.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Proposal {
    /// Toggle a uniformly chosen dyad (symmetric).
    #[default]
    UniformDyad,
    /// With probability 1/2 toggle an existing edge, otherwise a uniform dyad.
    TieNoTie,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub burn_in: usize,
    /// Toggle proposals between retained draws.
    pub interval: usize,
    /// Retained draws `M`.
    pub samples: usize,
    pub seed: u64,
    #[serde(default)]
    pub proposal: Proposal,
    /// Keep the retained graphs, not just their statistics.
    #[serde(default)]
    pub keep_graphs: bool,
}

impl ChainConfig {
    /// Burn-in `10 n^2` and interval `n^2`.
    pub fn for_nodes(n: usize, samples: usize, seed: u64) -> Self {
        Self {
            burn_in: 10 * n * n,
            interval: n * n,
            samples,
            seed,
            proposal: Proposal::UniformDyad,
            keep_graphs: false,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<(), McmcError> {
        if self.interval == 0 || self.samples == 0 {
            return Err(McmcError::Config("interval and samples must be positive".into()));
        }
        Ok(())
    }
}

/// Which distribution a [`SampleSet`] was drawn from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Target {
    Unconditional,
    Conditional,
}

/// Statistics (and optionally graphs) of retained chain states.
#[derive(Clone, Debug)]
pub struct SampleSet {
    dim: usize,
    stats: Vec<f64>,
    pub graphs: Option<Vec<Graph>>,
    pub acceptance_rate: f64,
    pub target: Target,
    /// Chain state after the last step.
    pub last: Graph,
}

impl PartialEq for SampleSet {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.stats.len() == other.stats.len()
            && self
                .stats
                .iter()
                .zip(&other.stats)
                .all(|(a, b)| a.to_bits() == b.to_bits())
            && self.graphs == other.graphs
            && self.acceptance_rate.to_bits() == other.acceptance_rate.to_bits()
            && self.target == other.target
            && self.last == other.last
    }
}

impl SampleSet {
    pub fn from_rows(dim: usize, stats: Vec<f64>, target: Target, last: Graph) -> Self {
        assert_eq!(stats.len() % dim.max(1), 0);
        Self {
            dim,
            stats,
            graphs: None,
            acceptance_rate: 0.0,
            target,
            last,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of retained draws.
    pub fn len(&self) -> usize {
        self.stats.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.stats.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.stats[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.stats.chunks_exact(self.dim)
    }

    /// Row-major `M x q` statistics.
    pub fn stats(&self) -> &[f64] {
        &self.stats
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for r in self.rows() {
            for (a, b) in m.iter_mut().zip(r) {
                *a += b;
            }
        }
        let len = self.len() as f64;
        m.iter_mut().for_each(|v| *v /= len);
        m
    }

    /// CSV with a header of statistic labels and one row per draw.
    pub fn to_csv(&self, labels: &[String]) -> String {
        let mut out = labels.join(",");
        out.push('\n');
        for r in self.rows() {
            let fields: Vec<String> = r.iter().map(|v| format!("{v}")).collect();
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }
}

/// `log` of the target ratio for toggling `d` in `g`, excluding any proposal
/// correction. `scratch` receives the change statistics.
pub fn toggle_log_ratio(
    model: &Model,
    theta: &[f64],
    conditioning: Option<(&MechanismParams, &Graph)>,
    g: &Graph,
    d: DyadIndex,
    scratch: &mut [f64],
) -> f64 {
    model.change_stats_into(g, d, scratch);
    let mut lr: f64 = theta.iter().zip(scratch.iter()).map(|(t, s)| t * s).sum();
    if let Some((gamma, y)) = conditioning {
        lr += gamma.toggle_log_ratio(d, g.get(d), y.get(d));
    }
    lr
}

/// Edge set with O(1) uniform draw, insert and delete.
struct EdgeIndex {
    edges: Vec<DyadIndex>,
    pos: Vec<u32>,
    n: usize,
    directed: bool,
}

impl EdgeIndex {
    const ABSENT: u32 = u32::MAX;

    fn new(g: &Graph) -> Self {
        let mut pos = vec![Self::ABSENT; g.dyad_count()];
        let edges: Vec<DyadIndex> = g.edges().collect();
        for (k, d) in edges.iter().enumerate() {
            pos[d.linear(g.n(), g.is_directed())] = k as u32;
        }
        Self {
            edges,
            pos,
            n: g.n(),
            directed: g.is_directed(),
        }
    }

    fn insert(&mut self, d: DyadIndex) {
        self.pos[d.linear(self.n, self.directed)] = self.edges.len() as u32;
        self.edges.push(d);
    }

    fn remove(&mut self, d: DyadIndex) {
        let li = d.linear(self.n, self.directed);
        let k = self.pos[li] as usize;
        let last = *self.edges.last().expect("removing from empty edge index");
        self.edges.swap_remove(k);
        if k < self.edges.len() {
            self.pos[last.linear(self.n, self.directed)] = k as u32;
        }
        self.pos[li] = Self::ABSENT;
    }
}

/// Log probability of proposing `d` from a state with `edges` edges, under
/// tie/no-tie, where `present` says whether `d` is an edge in that state.
fn tnt_log_q(edges: usize, dyads: usize, present: bool) -> f64 {
    if edges == 0 {
        -(dyads as f64).ln()
    } else {
        let tie = if present { 0.5 / edges as f64 } else { 0.0 };
        (tie + 0.5 / dyads as f64).ln()
    }
}

struct Chain<'a> {
    model: &'a Model,
    theta: &'a [f64],
    conditioning: Option<(&'a MechanismParams, &'a Graph)>,
    graph: Graph,
    stats: Vec<f64>,
    delta: Vec<f64>,
    rng: ChaCha8Rng,
    tnt: Option<EdgeIndex>,
    accepted: u64,
    proposed: u64,
}

impl<'a> Chain<'a> {
    fn uniform_dyad(&mut self) -> DyadIndex {
        let n = self.graph.n();
        let i = self.rng.gen_range(0..n);
        let mut j = self.rng.gen_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        if !self.graph.is_directed() && i > j {
            DyadIndex { i: j, j: i }
        } else {
            DyadIndex { i, j }
        }
    }

    fn step(&mut self) {
        let (d, log_hastings) = match &self.tnt {
            None => (self.uniform_dyad(), 0.0),
            Some(idx) => {
                let e = idx.edges.len();
                let d = if e > 0 && self.rng.gen::<bool>() {
                    idx.edges[self.rng.gen_range(0..e)]
                } else {
                    self.uniform_dyad()
                };
                let nd = self.graph.dyad_count();
                let present = self.graph.get(d);
                let e_after = if present { e - 1 } else { e + 1 };
                (d, tnt_log_q(e_after, nd, !present) - tnt_log_q(e, nd, present))
            }
        };
        let lr = toggle_log_ratio(
            self.model,
            self.theta,
            self.conditioning,
            &self.graph,
            d,
            &mut self.delta,
        ) + log_hastings;
        self.proposed += 1;
        let accept = lr >= 0.0 || self.rng.gen::<f64>().ln() < lr;
        if accept {
            self.accepted += 1;
            let now = self.graph.toggle(d);
            for (s, ds) in self.stats.iter_mut().zip(&self.delta) {
                *s += ds;
            }
            if let Some(idx) = &mut self.tnt {
                if now {
                    idx.insert(d);
                } else {
                    idx.remove(d);
                }
            }
        }
    }

    fn run(mut self, cfg: &ChainConfig, target: Target) -> SampleSet {
        for _ in 0..cfg.burn_in {
            self.step();
        }
        let dim = self.model.dim();
        let mut out = Vec::with_capacity(cfg.samples * dim);
        let mut graphs = cfg.keep_graphs.then(|| Vec::with_capacity(cfg.samples));
        for _ in 0..cfg.samples {
            for _ in 0..cfg.interval {
                self.step();
            }
            out.extend_from_slice(&self.stats);
            if let Some(gs) = &mut graphs {
                gs.push(self.graph.clone());
            }
        }
        SampleSet {
            dim,
            stats: out,
            graphs,
            acceptance_rate: if self.proposed == 0 {
                0.0
            } else {
                self.accepted as f64 / self.proposed as f64
            },
            target,
            last: self.graph,
        }
    }
}

fn start_chain<'a>(
    model: &'a Model,
    theta: &'a [f64],
    conditioning: Option<(&'a MechanismParams, &'a Graph)>,
    init: &Graph,
    cfg: &ChainConfig,
) -> Result<Chain<'a>, McmcError> {
    cfg.validate()?;
    if theta.len() != model.dim() {
        return Err(McmcError::Dimension {
            expected: model.dim(),
            found: theta.len(),
        });
    }
    if theta.iter().any(|t| !t.is_finite()) {
        return Err(McmcError::Config("parameter vector has non-finite entries".into()));
    }
    let stats = model.stats(init)?;
    Ok(Chain {
        model,
        theta,
        conditioning,
        graph: init.clone(),
        stats,
        delta: vec![0.0; model.dim()],
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        tnt: (cfg.proposal == Proposal::TieNoTie).then(|| EdgeIndex::new(init)),
        accepted: 0,
        proposed: 0,
    })
}

/// Draws from the ERGM at `theta`, starting at `init`.
pub fn sample_ergm(model: &Model, theta: &[f64], init: &Graph, cfg: &ChainConfig) -> Result<SampleSet, McmcError> {
    Ok(start_chain(model, theta, None, init, cfg)?.run(cfg, Target::Unconditional))
}

/// Draws from `P_{theta,gamma}(X | Y = y)`, starting at `y`.
pub fn sample_conditional(
    model: &Model,
    theta: &[f64],
    gamma: &MechanismParams,
    y: &Graph,
    cfg: &ChainConfig,
) -> Result<SampleSet, McmcError> {
    sample_conditional_from(model, theta, gamma, y, y, cfg)
}

/// As [`sample_conditional`] with an explicit initial state.
pub fn sample_conditional_from(
    model: &Model,
    theta: &[f64],
    gamma: &MechanismParams,
    y: &Graph,
    init: &Graph,
    cfg: &ChainConfig,
) -> Result<SampleSet, McmcError> {
    if !gamma.is_finite() {
        return Err(McmcError::InfiniteRisk);
    }
    if gamma.n() != model.n() || gamma.is_directed() != model.is_directed() {
        return Err(McmcError::MechanismShape);
    }
    model.check_graph(y)?;
    Ok(start_chain(model, theta, Some((gamma, y)), init, cfg)?.run(cfg, Target::Conditional))
}

/// Starting state for a chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitStrategy {
    /// The observed (or released) graph itself.
    Observed,
    /// Independent Bernoulli dyads; `density` defaults to the observed density.
    EmpiricalDensity {
        density: Option<f64>,
        seed: u64,
    },
    Empty,
}

/// Initial graph with the shape of `observed`.
pub fn init_graph(strategy: &InitStrategy, observed: &Graph) -> Graph {
    match strategy {
        InitStrategy::Observed => observed.clone(),
        InitStrategy::Empty => Graph::new(observed.n(), observed.is_directed()).expect("n > 0"),
        InitStrategy::EmpiricalDensity { density, seed } => {
            let rho = density.unwrap_or_else(|| observed.density()).clamp(0.0, 1.0);
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let mut g = Graph::new(observed.n(), observed.is_directed()).expect("n > 0");
            for d in observed.dyads() {
                if rng.gen::<f64>() < rho {
                    g.toggle(d);
                }
            }
            g
        }
    }
}
