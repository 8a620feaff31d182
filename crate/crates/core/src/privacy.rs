// SPDX-License-Identifier: Apache-2.0

//! Dyadwise randomized response and its edge-privacy accounting.
//!
//! Every dyad `(i, j)` carries a retention pair `(p, q)`: an edge survives with
//! probability `p`, a non-edge with probability `q`, independently across
//! dyads. The per-dyad risk is
//!
//! ```text
//! eps(p, q) = log max{ q/(1-p), (1-p)/q, (1-q)/p, p/(1-q) }
//! ```
//!
//! and the mechanism is `max eps`-edge-differentially private. For a target
//! risk the utility-optimal pair is `p = q = e^eps / (1 + e^eps)`, i.e. each
//! dyad is flipped with probability `pi = 1 / (1 + e^eps)`.
//!
//! Parameters are organised by node groups: nodes are labelled `0..K` from a
//! public attribute and a `K x K` table gives the pair for each group cell.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attributes::{AttributeError, NodeAttributes};
use crate::graph::{dyad_count, DyadIndex, Graph, GraphError};

#[derive(Debug, Error)]
pub enum PrivacyError {
    #[error("epsilon must be finite and positive, got {0}")]
    NonPositiveEpsilon(f64),
    #[error("perturbation probability must lie in (0, 0.5), got {0}")]
    BadPi(f64),
    #[error("retention probability {name} = {value} outside (0, 1); pass non-DP mode to allow it")]
    Degenerate { name: &'static str, value: f64 },
    #[error("retention probability {name} = {value} outside [0, 1]")]
    NotAProbability { name: &'static str, value: f64 },
    #[error("probability on the boundary: {0}")]
    Boundary(f64),
    #[error("undirected mechanism needs a symmetric table; cell ({0}, {1}) differs from ({1}, {0})")]
    Asymmetric(usize, usize),
    #[error("group label {label} outside 1..={k}")]
    BadGroup { label: usize, k: usize },
    #[error("epsilon table must be {k}x{k}")]
    TableShape { k: usize },
    #[error("mechanism is for n={n} directed={directed}, graph has n={gn} directed={gdirected}")]
    Shape {
        n: usize,
        directed: bool,
        gn: usize,
        gdirected: bool,
    },
    #[error("exhaustive verification limited to {max} dyads, mechanism has {found}")]
    TooLarge { max: usize, found: usize },
    #[error("mechanism config: {0}")]
    Config(String),
    #[error(transparent)]
    Attribute(#[from] AttributeError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Per-dyad risk: `log max{q/(1-p), (1-p)/q, (1-q)/p, p/(1-q)}`.
///
/// Infinite whenever `p` or `q` is 0 or 1.
pub fn epsilon_of(p: f64, q: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 || q <= 0.0 || q >= 1.0 {
        return f64::INFINITY;
    }
    let (lp, lq) = (p.ln(), q.ln());
    let (lnp, lnq) = ((-p).ln_1p(), (-q).ln_1p());
    [lq - lnp, lnp - lq, lnq - lp, lp - lnq]
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Optimal retention `p = q = e^eps / (1 + e^eps)` for a target risk.
pub fn optimal_pq(eps: f64) -> Result<(f64, f64), PrivacyError> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(PrivacyError::NonPositiveEpsilon(eps));
    }
    let p = 1.0 / (1.0 + (-eps).exp());
    Ok((p, p))
}

/// Flip probability `pi = 1 / (1 + e^eps)` of the optimal mechanism.
pub fn pi_from_epsilon(eps: f64) -> Result<f64, PrivacyError> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(PrivacyError::NonPositiveEpsilon(eps));
    }
    Ok(1.0 / (1.0 + eps.exp()))
}

/// Risk `log((1 - pi) / pi)` of flipping every dyad with probability `pi`.
pub fn epsilon_from_pi(pi: f64) -> Result<f64, PrivacyError> {
    if !(pi > 0.0 && pi < 0.5) {
        return Err(PrivacyError::BadPi(pi));
    }
    Ok((-pi).ln_1p() - pi.ln())
}

/// Interval `[LB(p), UB(p)]` of `q` values with `epsilon_of(p, q) <= eps`.
pub fn feasible_bounds(p: f64, eps: f64) -> Result<(f64, f64), PrivacyError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(PrivacyError::Boundary(p));
    }
    if !(eps > 0.0) || eps.is_nan() {
        return Err(PrivacyError::NonPositiveEpsilon(eps));
    }
    if eps.is_infinite() {
        return Ok((0.0, 1.0));
    }
    let e = eps.exp();
    let lb = if p < 1.0 / (1.0 + e) {
        1.0 - e * p
    } else {
        (1.0 - p) / e
    };
    let ub = if p < e / (1.0 + e) { 1.0 - p / e } else { e * (1.0 - p) };
    Ok((lb, ub))
}

/// Retention probabilities of one dyad.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Retention {
    /// Probability of keeping an edge.
    pub p: f64,
    /// Probability of keeping a non-edge.
    pub q: f64,
}

impl Retention {
    pub fn symmetric(eps: f64) -> Result<Self, PrivacyError> {
        let (p, q) = optimal_pq(eps)?;
        Ok(Self { p, q })
    }

    pub fn epsilon(&self) -> f64 {
        epsilon_of(self.p, self.q)
    }

    /// `P(y | x)` for one dyad.
    pub fn prob(&self, x: bool, y: bool) -> f64 {
        match (x, y) {
            (true, true) => self.p,
            (true, false) => 1.0 - self.p,
            (false, false) => self.q,
            (false, true) => 1.0 - self.q,
        }
    }

    fn log_table(&self) -> [f64; 4] {
        [
            self.q.ln(),       // x=0, y=0
            (-self.q).ln_1p(), // x=0, y=1
            (-self.p).ln_1p(), // x=1, y=0
            self.p.ln(),       // x=1, y=1
        ]
    }

    /// Independent of `x`: the released dyad carries no information.
    pub fn is_uninformative(&self) -> bool {
        (self.p + self.q - 1.0).abs() < 1e-12
    }
}

/// Whether degenerate (`p` or `q` in {0, 1}, infinite-risk) cells are allowed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum PrivacyMode {
    #[default]
    Private,
    /// Permits `eps = inf` cells. Never edge-differentially private.
    NonDp,
}

/// Group-structured randomized-response parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct MechanismParams {
    n: usize,
    directed: bool,
    groups: Vec<usize>,
    k: usize,
    cells: Vec<Retention>,
    log_cells: Vec<[f64; 4]>,
    mode: PrivacyMode,
}

#[inline]
fn cell_key(x: bool, y: bool) -> usize {
    (usize::from(x) << 1) | usize::from(y)
}

impl MechanismParams {
    /// General constructor: 0-based `groups`, row-major `k x k` `cells`.
    pub fn from_cells(
        groups: Vec<usize>,
        k: usize,
        cells: Vec<Retention>,
        directed: bool,
        mode: PrivacyMode,
    ) -> Result<Self, PrivacyError> {
        if cells.len() != k * k {
            return Err(PrivacyError::TableShape { k });
        }
        if groups.is_empty() {
            return Err(PrivacyError::Graph(GraphError::Empty));
        }
        if let Some(&g) = groups.iter().find(|&&g| g >= k) {
            return Err(PrivacyError::BadGroup { label: g + 1, k });
        }
        for c in &cells {
            for (name, value) in [("p", c.p), ("q", c.q)] {
                if !(0.0..=1.0).contains(&value) {
                    return Err(PrivacyError::NotAProbability { name, value });
                }
                if mode == PrivacyMode::Private && (value == 0.0 || value == 1.0) {
                    return Err(PrivacyError::Degenerate { name, value });
                }
            }
        }
        if !directed {
            for a in 0..k {
                for b in a + 1..k {
                    if cells[a * k + b] != cells[b * k + a] {
                        return Err(PrivacyError::Asymmetric(a + 1, b + 1));
                    }
                }
            }
        }
        let log_cells = cells.iter().map(Retention::log_table).collect();
        Ok(Self {
            n: groups.len(),
            directed,
            groups,
            k,
            cells,
            log_cells,
            mode,
        })
    }

    /// Same optimal pair for every dyad.
    pub fn uniform(n: usize, directed: bool, eps: f64) -> Result<Self, PrivacyError> {
        Self::from_cells(
            vec![0; n],
            1,
            vec![Retention::symmetric(eps)?],
            directed,
            PrivacyMode::Private,
        )
    }

    /// Every dyad flipped with probability `pi`.
    pub fn uniform_pi(n: usize, directed: bool, pi: f64) -> Result<Self, PrivacyError> {
        Self::uniform(n, directed, epsilon_from_pi(pi)?)
    }

    /// Same arbitrary pair for every dyad.
    pub fn uniform_pq(n: usize, directed: bool, p: f64, q: f64, mode: PrivacyMode) -> Result<Self, PrivacyError> {
        Self::from_cells(vec![0; n], 1, vec![Retention { p, q }], directed, mode)
    }

    /// Group mechanism from 1-based labels and a `K x K` table of risks, each
    /// cell at its optimal `p = q` corner.
    pub fn build(groups: &[usize], eps_table: &[Vec<f64>], directed: bool) -> Result<Self, PrivacyError> {
        let k = eps_table.len();
        if k == 0 || eps_table.iter().any(|row| row.len() != k) {
            return Err(PrivacyError::TableShape { k });
        }
        if !directed {
            for a in 0..k {
                for b in a + 1..k {
                    if eps_table[a][b] != eps_table[b][a] {
                        return Err(PrivacyError::Asymmetric(a + 1, b + 1));
                    }
                }
            }
        }
        let labels = groups
            .iter()
            .map(|&g| {
                if g == 0 || g > k {
                    Err(PrivacyError::BadGroup { label: g, k })
                } else {
                    Ok(g - 1)
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        let cells = eps_table
            .iter()
            .flatten()
            .map(|&e| Retention::symmetric(e))
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_cells(labels, k, cells, directed, PrivacyMode::Private)
    }

    /// Replaces the pair of one (1-based) group cell; mirrored when undirected.
    pub fn with_override(mut self, a: usize, b: usize, r: Retention) -> Result<Self, PrivacyError> {
        for g in [a, b] {
            if g == 0 || g > self.k {
                return Err(PrivacyError::BadGroup { label: g, k: self.k });
            }
        }
        let (a, b) = (a - 1, b - 1);
        self.cells[a * self.k + b] = r;
        if !self.directed {
            self.cells[b * self.k + a] = r;
        }
        Self::from_cells(self.groups, self.k, self.cells, self.directed, self.mode)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    pub fn groups(&self) -> &[usize] {
        &self.groups
    }

    pub fn group_count(&self) -> usize {
        self.k
    }

    pub fn mode(&self) -> PrivacyMode {
        self.mode
    }

    /// Pair for the 0-based group cell `(a, b)`.
    pub fn cell(&self, a: usize, b: usize) -> Retention {
        self.cells[a * self.k + b]
    }

    #[inline]
    pub fn retention(&self, d: DyadIndex) -> Retention {
        self.cells[self.groups[d.i] * self.k + self.groups[d.j]]
    }

    /// `log P(y_d | x_d)`.
    #[inline]
    pub fn log_prob(&self, d: DyadIndex, x: bool, y: bool) -> f64 {
        self.log_cells[self.groups[d.i] * self.k + self.groups[d.j]][cell_key(x, y)]
    }

    /// `log P(y_d | 1 - x_d) - log P(y_d | x_d)`: the mechanism factor of a
    /// proposal that toggles `d` in the true graph.
    #[inline]
    pub fn toggle_log_ratio(&self, d: DyadIndex, x: bool, y: bool) -> f64 {
        let t = &self.log_cells[self.groups[d.i] * self.k + self.groups[d.j]];
        t[cell_key(!x, y)] - t[cell_key(x, y)]
    }

    /// True when no dyad's release depends on its true state.
    pub fn is_uninformative(&self) -> bool {
        self.used_cells().all(|(a, b)| self.cell(a, b).is_uninformative())
    }

    /// Worst-case risk over all dyads.
    pub fn epsilon_worst(&self) -> f64 {
        self.used_cells()
            .map(|(a, b)| self.cell(a, b).epsilon())
            .fold(0.0, f64::max)
    }

    /// Whether every dyad has finite risk.
    pub fn is_finite(&self) -> bool {
        self.epsilon_worst().is_finite()
    }

    /// Group cells that contain at least one dyad.
    fn used_cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let mut size = vec![0usize; self.k];
        for &g in &self.groups {
            size[g] += 1;
        }
        let k = self.k;
        let directed = self.directed;
        (0..k)
            .flat_map(move |a| (0..k).map(move |b| (a, b)))
            .filter(move |&(a, b)| directed || a <= b)
            .filter(move |&(a, b)| {
                if a == b {
                    size[a] >= 2
                } else {
                    size[a] >= 1 && size[b] >= 1
                }
            })
    }

    pub fn risk_report(&self) -> RiskReport {
        let cells: Vec<RiskCell> = self
            .used_cells()
            .map(|(a, b)| {
                let r = self.cell(a, b);
                RiskCell {
                    group_a: a + 1,
                    group_b: b + 1,
                    p: r.p,
                    q: r.q,
                    epsilon: r.epsilon(),
                }
            })
            .collect();
        let eps_worst = cells.iter().map(|c| c.epsilon).fold(0.0, f64::max);
        RiskReport { cells, eps_worst }
    }

    fn check(&self, g: &Graph) -> Result<(), PrivacyError> {
        if g.n() != self.n || g.is_directed() != self.directed {
            return Err(PrivacyError::Shape {
                n: self.n,
                directed: self.directed,
                gn: g.n(),
                gdirected: g.is_directed(),
            });
        }
        Ok(())
    }
}

/// One group cell of a [`RiskReport`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RiskCell {
    pub group_a: usize,
    pub group_b: usize,
    pub p: f64,
    pub q: f64,
    pub epsilon: f64,
}

/// Per-cell and worst-case risks of a mechanism.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RiskReport {
    pub cells: Vec<RiskCell>,
    pub eps_worst: f64,
}

impl fmt::Display for RiskReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:>7} {:>7} {:>10} {:>10} {:>10} {:>10}",
            "group_a", "group_b", "p", "q", "pi", "epsilon"
        )?;
        for c in &self.cells {
            writeln!(
                f,
                "{:>7} {:>7} {:>10.6} {:>10.6} {:>9.4}% {:>10.4}",
                c.group_a,
                c.group_b,
                c.p,
                c.q,
                100.0 * (1.0 - c.p),
                c.epsilon
            )?;
        }
        write!(f, "worst-case epsilon: {:.4}", self.eps_worst)
    }
}

/// Draws one released graph. Dyad `k` (canonical order) uses its own ChaCha
/// stream `k` under `seed`, so the output does not depend on evaluation order.
pub fn release(x: &Graph, gamma: &MechanismParams, seed: u64) -> Result<Graph, PrivacyError> {
    gamma.check(x)?;
    let base = ChaCha8Rng::seed_from_u64(seed);
    let mut y = Graph::new(x.n(), x.is_directed())?;
    for (k, d) in x.dyads().enumerate() {
        let mut rng = base.clone();
        rng.set_stream(k as u64);
        let u: f64 = rng.gen();
        let r = gamma.retention(d);
        let keep_prob = if x.get(d) { r.p } else { r.q };
        let keep = u < keep_prob;
        if x.get(d) == keep {
            y.toggle(d);
        }
    }
    Ok(y)
}

/// `log P(Y = y | X = x)` under the mechanism.
pub fn log_mechanism_prob(y: &Graph, x: &Graph, gamma: &MechanismParams) -> Result<f64, PrivacyError> {
    gamma.check(x)?;
    gamma.check(y)?;
    Ok(x.dyads().map(|d| gamma.log_prob(d, x.get(d), y.get(d))).sum())
}

/// Result of exhaustive privacy verification.
#[derive(Clone, Debug)]
pub struct EdpReport {
    /// Maximum over outputs and neighbouring inputs of the absolute log ratio.
    pub max: f64,
    /// The same maximum restricted to neighbours differing at each dyad,
    /// in canonical dyad order.
    pub per_dyad: Vec<(DyadIndex, f64)>,
}

impl EdpReport {
    /// Maximum over dyads satisfying `keep`.
    pub fn max_where(&self, mut keep: impl FnMut(DyadIndex) -> bool) -> f64 {
        self.per_dyad
            .iter()
            .filter(|(d, _)| keep(*d))
            .map(|(_, v)| *v)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Largest dyad count [`verify_edp`] will enumerate.
pub const MAX_VERIFY_DYADS: usize = 10;

/// Exhaustively computes `max_y max_{x ~ x'} |log P(y|x) - log P(y|x')|`.
pub fn verify_edp(gamma: &MechanismParams) -> Result<EdpReport, PrivacyError> {
    let n = gamma.n();
    let nd = dyad_count(n, gamma.is_directed());
    if nd > MAX_VERIFY_DYADS {
        return Err(PrivacyError::TooLarge {
            max: MAX_VERIFY_DYADS,
            found: nd,
        });
    }
    let g = Graph::new(n, gamma.is_directed())?;
    let dyads: Vec<DyadIndex> = g.dyads().collect();
    let states = 1usize << nd;
    let mut logp = vec![0.0f64; states * states];
    for x in 0..states {
        for y in 0..states {
            logp[x * states + y] = dyads
                .iter()
                .enumerate()
                .map(|(k, &d)| gamma.log_prob(d, (x >> k) & 1 == 1, (y >> k) & 1 == 1))
                .sum();
        }
    }
    let mut per_dyad = vec![f64::NEG_INFINITY; nd];
    for x in 0..states {
        for (k, slot) in per_dyad.iter_mut().enumerate() {
            let xn = x ^ (1 << k);
            for y in 0..states {
                let (a, b) = (logp[x * states + y], logp[xn * states + y]);
                let r = if a == b { 0.0 } else { (a - b).abs() };
                if r > *slot {
                    *slot = r;
                }
            }
        }
    }
    let max = per_dyad.iter().copied().fold(0.0, f64::max);
    Ok(EdpReport {
        max,
        per_dyad: dyads.into_iter().zip(per_dyad).collect(),
    })
}

/// Parsed mechanism config file.
///
/// ```text
/// uniform eps=3.89
/// uniform pi=0.02
/// uniform p=0.99 q=0.95
/// groups attr=dept map{Legal=1,Trading=2,Other=2} table{(1,1)=3,(1,2)=6,(2,2)=6}
/// groups attr=drug map{yes=1,no=2} table{(1,1)=0.5,(1,2)=2,(2,2)=2} pq{(2,2)=0.9:0.95}
/// ```
///
/// Undirected tables may list each cell once, in either order. `pq{}`
/// overrides set an explicit, possibly asymmetric, `p:q` pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum MechanismConfig {
    UniformEps(f64),
    UniformPi(f64),
    UniformPq {
        p: f64,
        q: f64,
    },
    Groups {
        attr: String,
        map: BTreeMap<String, usize>,
        table: BTreeMap<(usize, usize), f64>,
        overrides: BTreeMap<(usize, usize), Retention>,
    },
}

fn cfg_err(msg: impl Into<String>) -> PrivacyError {
    PrivacyError::Config(msg.into())
}

fn parse_num(s: &str) -> Result<f64, PrivacyError> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| cfg_err(format!("bad number {s:?}")))
}

fn parse_cell(s: &str) -> Result<(usize, usize), PrivacyError> {
    let inner = s
        .trim()
        .strip_prefix('(')
        .and_then(|s| s.strip_suffix(')'))
        .ok_or_else(|| cfg_err(format!("bad cell {s:?}, expected (a,b)")))?;
    let (a, b) = inner
        .split_once(',')
        .ok_or_else(|| cfg_err(format!("bad cell {s:?}")))?;
    let a = a.trim().parse().map_err(|_| cfg_err(format!("bad group {a:?}")))?;
    let b = b.trim().parse().map_err(|_| cfg_err(format!("bad group {b:?}")))?;
    Ok((a, b))
}

/// Splits `a=1,(1,2)=3` at commas that are not inside parentheses.
fn split_entries(body: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let (mut depth, mut start) = (0i32, 0usize);
    for (idx, ch) in body.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                out.push(&body[start..idx]);
                start = idx + 1;
            }
            _ => {}
        }
    }
    out.push(&body[start..]);
    out.into_iter().map(str::trim).filter(|s| !s.is_empty()).collect()
}

fn block<'a>(text: &'a str, name: &str) -> Result<Option<&'a str>, PrivacyError> {
    let key = format!("{name}{{");
    let Some(start) = text.find(&key) else {
        return Ok(None);
    };
    let rest = &text[start + key.len()..];
    let end = rest
        .find('}')
        .ok_or_else(|| cfg_err(format!("unterminated {name}{{")))?;
    Ok(Some(&rest[..end]))
}

impl MechanismConfig {
    pub fn parse(text: &str) -> Result<Self, PrivacyError> {
        let joined: String = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or(""))
            .collect::<Vec<_>>()
            .join(" ");
        // Strip whitespace inside braces so blocks can span lines.
        let mut compact = String::new();
        let mut depth = 0;
        for ch in joined.chars() {
            match ch {
                '{' => depth += 1,
                '}' => depth -= 1,
                _ => {}
            }
            if depth > 0 && ch.is_whitespace() {
                continue;
            }
            compact.push(ch);
        }
        let mut words = compact.split_whitespace();
        let kind = words.next().ok_or_else(|| cfg_err("empty mechanism config"))?;
        let kv: BTreeMap<&str, &str> = words
            .clone()
            .filter(|w| !w.contains('{'))
            .map(|w| {
                w.split_once('=')
                    .ok_or_else(|| cfg_err(format!("expected key=value, got {w:?}")))
            })
            .collect::<Result<_, _>>()?;
        match kind {
            "uniform" => match (kv.get("eps"), kv.get("pi"), kv.get("p"), kv.get("q")) {
                (Some(e), None, None, None) => Ok(Self::UniformEps(parse_num(e)?)),
                (None, Some(pi), None, None) => Ok(Self::UniformPi(parse_num(pi)?)),
                (None, None, Some(p), Some(q)) => Ok(Self::UniformPq {
                    p: parse_num(p)?,
                    q: parse_num(q)?,
                }),
                _ => Err(cfg_err("uniform needs exactly one of eps=, pi=, or p= q=")),
            },
            "groups" => {
                let attr = kv
                    .get("attr")
                    .ok_or_else(|| cfg_err("groups needs attr=<column>"))?
                    .to_string();
                let map_body = block(&compact, "map")?.ok_or_else(|| cfg_err("groups needs map{...}"))?;
                let mut map = BTreeMap::new();
                for e in split_entries(map_body) {
                    let (level, g) = e
                        .split_once('=')
                        .ok_or_else(|| cfg_err(format!("bad map entry {e:?}")))?;
                    let g: usize = g.parse().map_err(|_| cfg_err(format!("bad group {g:?}")))?;
                    map.insert(level.to_string(), g);
                }
                let table_body = block(&compact, "table")?.ok_or_else(|| cfg_err("groups needs table{...}"))?;
                let mut table = BTreeMap::new();
                for e in split_entries(table_body) {
                    let (cell, eps) = e
                        .rsplit_once('=')
                        .ok_or_else(|| cfg_err(format!("bad table entry {e:?}")))?;
                    table.insert(parse_cell(cell)?, parse_num(eps)?);
                }
                let mut overrides = BTreeMap::new();
                if let Some(body) = block(&compact, "pq")? {
                    for e in split_entries(body) {
                        let (cell, pq) = e
                            .rsplit_once('=')
                            .ok_or_else(|| cfg_err(format!("bad pq entry {e:?}")))?;
                        let (p, q) = pq
                            .split_once(':')
                            .ok_or_else(|| cfg_err(format!("pq entry {e:?} needs p:q")))?;
                        overrides.insert(
                            parse_cell(cell)?,
                            Retention {
                                p: parse_num(p)?,
                                q: parse_num(q)?,
                            },
                        );
                    }
                }
                Ok(Self::Groups {
                    attr,
                    map,
                    table,
                    overrides,
                })
            }
            other => Err(cfg_err(format!("unknown mechanism kind {other:?}"))),
        }
    }

    /// Builds the mechanism for a graph shape. Group labels come only from
    /// the named public attribute.
    pub fn resolve(
        &self,
        attrs: &NodeAttributes,
        directed: bool,
        mode: PrivacyMode,
    ) -> Result<MechanismParams, PrivacyError> {
        let n = attrs.n();
        match self {
            Self::UniformEps(e) => MechanismParams::uniform(n, directed, *e),
            Self::UniformPi(pi) => MechanismParams::uniform_pi(n, directed, *pi),
            Self::UniformPq { p, q } => MechanismParams::uniform_pq(n, directed, *p, *q, mode),
            Self::Groups {
                attr,
                map,
                table,
                overrides,
            } => {
                let (codes, levels) = attrs.categorical(attr)?;
                let level_group = levels
                    .iter()
                    .map(|l| {
                        map.get(l)
                            .copied()
                            .ok_or_else(|| cfg_err(format!("level {l:?} of {attr:?} has no group")))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                let labels: Vec<usize> = codes.iter().map(|&c| level_group[c as usize]).collect();
                let k = map.values().copied().max().unwrap_or(0);
                if let Some(&g) = map.values().find(|&&g| g == 0) {
                    return Err(PrivacyError::BadGroup { label: g, k });
                }
                let mut eps = vec![vec![f64::NAN; k]; k];
                for (&(a, b), &e) in table {
                    for g in [a, b] {
                        if g == 0 || g > k {
                            return Err(PrivacyError::BadGroup { label: g, k });
                        }
                    }
                    eps[a - 1][b - 1] = e;
                    if !directed {
                        if let Some(&other) = table.get(&(b, a)) {
                            if other != e {
                                return Err(PrivacyError::Asymmetric(a, b));
                            }
                        }
                        eps[b - 1][a - 1] = e;
                    }
                }
                for (a, row) in eps.iter().enumerate() {
                    for (b, e) in row.iter().enumerate() {
                        if e.is_nan() {
                            return Err(cfg_err(format!("table is missing cell ({}, {})", a + 1, b + 1)));
                        }
                    }
                }
                let mut mech = MechanismParams::build(&labels, &eps, directed)?;
                for (&(a, b), &r) in overrides {
                    mech.mode = mode;
                    mech = mech.with_override(a, b, r)?;
                }
                Ok(mech)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn epsilon_examples() {
        assert_eq!(epsilon_of(0.5, 0.5), 0.0);
        assert!((epsilon_of(0.98, 0.98) - 49f64.ln()).abs() < 1e-12);
        assert!((49f64.ln() - 3.8918).abs() < 1e-4);
        assert_eq!(epsilon_of(1.0, 0.5), f64::INFINITY);
        assert_eq!(epsilon_of(0.3, 0.0), f64::INFINITY);
    }

    #[test]
    fn optimal_corner() {
        let (p, q) = optimal_pq(3.0).unwrap();
        assert_eq!(p, q);
        assert!((p - 0.95257).abs() < 1e-5);
        assert!((optimal_pq(6.0).unwrap().0 - 0.99753).abs() < 1e-5);
        assert!((optimal_pq(0.5).unwrap().0 - 0.62246).abs() < 1e-5);
        for eps in [0.01, 0.5, 1.0, 3.0, 6.0, 10.0] {
            let (p, q) = optimal_pq(eps).unwrap();
            assert!((epsilon_of(p, q) - eps).abs() < 1e-9 * eps.max(1.0), "{eps}");
        }
        assert!(optimal_pq(0.0).is_err());
        assert!(optimal_pq(-1.0).is_err());
        assert!(optimal_pq(f64::INFINITY).is_err());
    }

    #[test]
    fn bounds_corner_and_limit() {
        let eps = 2.0f64;
        let p = eps.exp() / (1.0 + eps.exp());
        let (_, ub) = feasible_bounds(p, eps).unwrap();
        assert!((ub - p).abs() < 1e-12);
        let (lb, ub) = feasible_bounds(0.3, 60.0).unwrap();
        assert!(lb < 1e-12 && (1.0 - ub) < 1e-12);
        assert_eq!(feasible_bounds(0.3, f64::INFINITY).unwrap(), (0.0, 1.0));
        assert!(feasible_bounds(0.0, 1.0).is_err());
        assert!(feasible_bounds(1.0, 1.0).is_err());
    }

    #[test]
    fn bounds_match_epsilon_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut checked = 0;
        while checked < 1000 {
            let p: f64 = rng.gen_range(0.001..0.999);
            let q: f64 = rng.gen_range(0.001..0.999);
            let eps: f64 = rng.gen_range(0.01..5.0);
            let (lb, ub) = feasible_bounds(p, eps).unwrap();
            let e = epsilon_of(p, q);
            // skip draws numerically on the rhombus edge
            if (e - eps).abs() < 1e-9 {
                continue;
            }
            assert_eq!(lb <= q && q <= ub, e <= eps, "p={p} q={q} eps={eps}");
            checked += 1;
        }
    }

    #[test]
    fn build_group_tables() {
        let labels = [1, 1, 2, 2, 2];
        let m = MechanismParams::build(&labels, &[vec![3.0, 6.0], vec![6.0, 6.0]], false).unwrap();
        let r = m.risk_report();
        assert!((r.eps_worst - 6.0).abs() < 1e-9);
        let legal = r.cells.iter().find(|c| c.group_a == 1 && c.group_b == 1).unwrap();
        assert!((legal.epsilon - 3.0).abs() < 1e-9);
        assert!((1.0 - legal.p - 0.048).abs() < 0.001);
        let other = r.cells.iter().find(|c| c.group_a == 2 && c.group_b == 2).unwrap();
        assert!((1.0 - other.p - 0.0025).abs() < 0.0001);

        let u = MechanismParams::build(&[1; 4], &[vec![2.0]], false).unwrap();
        let pi = 1.0 - u.cell(0, 0).p;
        assert!((pi - 0.12).abs() < 0.005);
        let g = Graph::new(4, false).unwrap();
        let first = u.retention(g.dyads().next().unwrap());
        assert!(g.dyads().all(|d| u.retention(d) == first));

        assert!(matches!(
            MechanismParams::build(&labels, &[vec![3.0, 5.0], vec![6.0, 6.0]], false),
            Err(PrivacyError::Asymmetric(1, 2))
        ));
        assert!(MechanismParams::build(&labels, &[vec![3.0, 5.0], vec![6.0, 6.0]], true).is_ok());
        assert!(matches!(
            MechanismParams::build(&labels, &[vec![0.0, 6.0], vec![6.0, 6.0]], false),
            Err(PrivacyError::NonPositiveEpsilon(_))
        ));
        assert!(matches!(
            MechanismParams::build(&[1, 3], &[vec![1.0]], false),
            Err(PrivacyError::BadGroup { label: 3, .. })
        ));
    }

    #[test]
    fn degenerate_needs_non_dp_mode() {
        assert!(matches!(
            MechanismParams::uniform_pq(3, false, 1.0, 0.9, PrivacyMode::Private),
            Err(PrivacyError::Degenerate { .. })
        ));
        let m = MechanismParams::uniform_pq(3, false, 1.0, 0.9, PrivacyMode::NonDp).unwrap();
        assert_eq!(m.risk_report().eps_worst, f64::INFINITY);
        assert!(!m.is_finite());
    }

    #[test]
    fn identity_limit_release() {
        let m = MechanismParams::uniform_pq(6, false, 1.0, 1.0, PrivacyMode::NonDp).unwrap();
        let x = Graph::from_edges(6, false, [(0, 1), (2, 5), (3, 4)]).unwrap();
        for seed in 0..10 {
            assert_eq!(release(&x, &m, seed).unwrap(), x);
        }
    }

    #[test]
    fn release_is_seeded() {
        let m = MechanismParams::uniform_pi(20, true, 0.2).unwrap();
        let x = Graph::new(20, true).unwrap();
        assert_eq!(release(&x, &m, 5).unwrap(), release(&x, &m, 5).unwrap());
        assert_ne!(release(&x, &m, 5).unwrap(), release(&x, &m, 6).unwrap());
        assert!(release(&Graph::new(21, true).unwrap(), &m, 5).is_err());
    }

    #[test]
    fn log_prob_cases() {
        let m = MechanismParams::uniform_pq(2, false, 0.8, 0.7, PrivacyMode::Private).unwrap();
        let empty = Graph::new(2, false).unwrap();
        let full = Graph::complete(2, false).unwrap();
        let lp = |y: &Graph, x: &Graph| log_mechanism_prob(y, x, &m).unwrap();
        assert!((lp(&full, &full) - 0.8f64.ln()).abs() < 1e-12);
        assert!((lp(&empty, &full) - 0.2f64.ln()).abs() < 1e-12);
        assert!((lp(&empty, &empty) - 0.7f64.ln()).abs() < 1e-12);
        assert!((lp(&full, &empty) - 0.3f64.ln()).abs() < 1e-12);

        let m = MechanismParams::uniform_pq(3, false, 0.98, 0.98, PrivacyMode::Private).unwrap();
        let x = Graph::from_edges(3, false, [(0, 1)]).unwrap();
        assert!((log_mechanism_prob(&x, &x, &m).unwrap() - 3.0 * 0.98f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn toggle_ratio_matches_log_probs() {
        let m = MechanismParams::uniform_pq(2, true, 0.9, 0.6, PrivacyMode::Private).unwrap();
        let d = DyadIndex { i: 0, j: 1 };
        for x in [false, true] {
            for y in [false, true] {
                let want = m.log_prob(d, !x, y) - m.log_prob(d, x, y);
                assert_eq!(m.toggle_log_ratio(d, x, y), want);
            }
        }
    }

    #[test]
    fn verify_constant_mechanism() {
        let m = MechanismParams::uniform_pq(3, false, 0.5, 0.5, PrivacyMode::Private).unwrap();
        assert_eq!(verify_edp(&m).unwrap().max, 0.0);
        let big = MechanismParams::uniform(6, false, 1.0).unwrap();
        assert!(matches!(verify_edp(&big), Err(PrivacyError::TooLarge { .. })));
    }

    #[test]
    fn config_parsing() {
        assert_eq!(
            MechanismConfig::parse("uniform eps=3.89").unwrap(),
            MechanismConfig::UniformEps(3.89)
        );
        assert_eq!(
            MechanismConfig::parse("# c\nuniform pi=0.02\n").unwrap(),
            MechanismConfig::UniformPi(0.02)
        );
        assert!(MechanismConfig::parse("uniform eps=1 pi=0.1").is_err());
        assert!(MechanismConfig::parse("laplace b=1").is_err());
        let cfg = MechanismConfig::parse(
            "groups attr=dept\n  map{Legal=1, Trading=2,\n Other=2}\n  table{(1,1)=3, (1,2)=6, (2,2)=6}\n",
        )
        .unwrap();
        let z = NodeAttributes::empty(5)
            .with_categorical("dept", &["Legal", "Legal", "Other", "Trading", "Other"])
            .unwrap();
        let m = cfg.resolve(&z, false, PrivacyMode::Private).unwrap();
        assert_eq!(m.groups(), &[0, 0, 1, 1, 1]);
        assert!((m.epsilon_worst() - 6.0).abs() < 1e-9);
        // directed needs all four cells
        assert!(cfg.resolve(&z, true, PrivacyMode::Private).is_err());

        let cfg =
            MechanismConfig::parse("groups attr=dept map{Legal=1,Trading=2} table{(1,1)=3,(1,2)=6,(2,2)=6}").unwrap();
        assert!(cfg.resolve(&z, false, PrivacyMode::Private).is_err());

        let cfg = MechanismConfig::parse(
            "groups attr=dept map{Legal=1,Trading=2,Other=2} table{(1,1)=3,(1,2)=6,(2,2)=6} pq{(1,1)=1:0.9}",
        )
        .unwrap();
        assert!(cfg.resolve(&z, false, PrivacyMode::Private).is_err());
        let m = cfg.resolve(&z, false, PrivacyMode::NonDp).unwrap();
        assert_eq!(m.epsilon_worst(), f64::INFINITY);
    }
}
