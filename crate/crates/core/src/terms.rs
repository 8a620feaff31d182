// SPDX-License-Identifier: Apache-2.0

//! ERGM sufficient statistics.
//!
//! A [`ModelSpec`] is an ordered list of [`TermSpec`]s, normally parsed from a
//! model file. Binding it to node attributes and a graph shape produces a
//! [`Model`], which evaluates the statistic vector `g(x)` and the change
//! statistic `g(x with d toggled) - g(x)` for a single dyad `d`.
//!
//! # Model file grammar
//!
//! One term per line; `#` starts a comment; blank lines are ignored.
//!
//! ```text
//! edges
//! mutual                          # directed graphs only
//! nodefactor(attr)                # omits the first (smallest) level
//! nodefactor(attr, Level)         # omits Level instead
//! nodecov(attr)                   # numeric column
//! nodematch(attr)                 # one statistic
//! nodematch(attr, diff)           # one statistic per level
//! nodemix(attr, A-B, C-D+D-C)     # one statistic per cell; `+` pools pairs
//! gwesp(0.0, fixed)               # undirected only; decay >= 0
//! degreepopularity                # undirected only; sum of degree^(3/2)
//! match_interaction(a, b)         # edges matching on both a and b
//! ```

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use thiserror::Error;

use crate::attributes::{AttributeError, NodeAttributes};
use crate::graph::{DyadIndex, Graph};

#[derive(Debug, Error)]
pub enum TermError {
    #[error("model line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("term {term} requires a {required} graph")]
    Incompatible { term: String, required: &'static str },
    #[error("term {term}: {source}")]
    Attribute {
        term: String,
        #[source]
        source: AttributeError,
    },
    #[error("term {term}: {msg}")]
    Invalid { term: String, msg: String },
    #[error("model has no terms")]
    EmptyModel,
    #[error("shape mismatch: {0}")]
    Shape(String),
}

/// One model term, before binding to data.
#[derive(Clone, Debug, PartialEq)]
pub enum TermSpec {
    Edges,
    Mutual,
    NodeFactor {
        attr: String,
        omit: Option<String>,
    },
    NodeCov {
        attr: String,
    },
    NodeMatch {
        attr: String,
        diff: bool,
    },
    /// Each cell is a set of `(from, to)` level pairs, pooled into one statistic.
    NodeMix {
        attr: String,
        cells: Vec<Vec<(String, String)>>,
    },
    Gwesp {
        decay: f64,
    },
    DegreePopularity,
    MatchInteraction {
        a: String,
        b: String,
    },
}

impl TermSpec {
    /// Terms whose change statistic does not depend on the rest of the graph.
    pub fn is_dyad_independent(&self) -> bool {
        !matches!(
            self,
            TermSpec::Mutual | TermSpec::Gwesp { .. } | TermSpec::DegreePopularity
        )
    }
}

impl fmt::Display for TermSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TermSpec::Edges => write!(f, "edges"),
            TermSpec::Mutual => write!(f, "mutual"),
            TermSpec::NodeFactor { attr, omit: None } => write!(f, "nodefactor({attr})"),
            TermSpec::NodeFactor { attr, omit: Some(l) } => write!(f, "nodefactor({attr}, {l})"),
            TermSpec::NodeCov { attr } => write!(f, "nodecov({attr})"),
            TermSpec::NodeMatch { attr, diff: false } => write!(f, "nodematch({attr})"),
            TermSpec::NodeMatch { attr, diff: true } => write!(f, "nodematch({attr}, diff)"),
            TermSpec::NodeMix { attr, cells } => {
                write!(f, "nodemix({attr}")?;
                for cell in cells {
                    let parts: Vec<String> = cell.iter().map(|(a, b)| format!("{a}-{b}")).collect();
                    write!(f, ", {}", parts.join("+"))?;
                }
                write!(f, ")")
            }
            TermSpec::Gwesp { decay } => write!(f, "gwesp({decay}, fixed)"),
            TermSpec::DegreePopularity => write!(f, "degreepopularity"),
            TermSpec::MatchInteraction { a, b } => write!(f, "match_interaction({a}, {b})"),
        }
    }
}

/// Ordered list of terms defining `g(x)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModelSpec {
    pub terms: Vec<TermSpec>,
}

impl ModelSpec {
    pub fn new(terms: Vec<TermSpec>) -> Self {
        Self { terms }
    }

    /// Parses a model file.
    pub fn parse(text: &str) -> Result<Self, TermError> {
        let mut terms = Vec::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            terms.push(parse_term(line).map_err(|msg| TermError::Parse { line: k + 1, msg })?);
        }
        if terms.is_empty() {
            return Err(TermError::EmptyModel);
        }
        Ok(Self { terms })
    }

    /// Model file text that parses back to `self`.
    pub fn to_text(&self) -> String {
        self.terms.iter().map(|t| format!("{t}\n")).collect()
    }
}

impl FromStr for ModelSpec {
    type Err = TermError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

fn parse_term(line: &str) -> Result<TermSpec, String> {
    let (name, args) = match line.find('(') {
        Some(open) => {
            let close = line
                .rfind(')')
                .filter(|&c| c > open && line[c + 1..].trim().is_empty())
                .ok_or_else(|| format!("unbalanced parentheses in {line:?}"))?;
            let args: Vec<String> = line[open + 1..close].split(',').map(|a| a.trim().to_string()).collect();
            if args.iter().any(|a| a.is_empty()) {
                return Err(format!("empty argument in {line:?}"));
            }
            (line[..open].trim(), args)
        }
        None => (line, Vec::new()),
    };
    let arity = |lo: usize, hi: usize| -> Result<(), String> {
        if args.len() < lo || args.len() > hi {
            Err(format!("{name} takes {lo}..={hi} arguments, got {}", args.len()))
        } else {
            Ok(())
        }
    };
    match name {
        "edges" => {
            arity(0, 0)?;
            Ok(TermSpec::Edges)
        }
        "mutual" => {
            arity(0, 0)?;
            Ok(TermSpec::Mutual)
        }
        "nodefactor" => {
            arity(1, 2)?;
            Ok(TermSpec::NodeFactor {
                attr: args[0].clone(),
                omit: args.get(1).cloned(),
            })
        }
        "nodecov" => {
            arity(1, 1)?;
            Ok(TermSpec::NodeCov { attr: args[0].clone() })
        }
        "nodematch" => {
            arity(1, 2)?;
            let diff = match args.get(1).map(String::as_str) {
                None | Some("uniform") => false,
                Some("diff") => true,
                Some(other) => return Err(format!("nodematch: expected diff, got {other:?}")),
            };
            Ok(TermSpec::NodeMatch {
                attr: args[0].clone(),
                diff,
            })
        }
        "nodemix" => {
            if args.len() < 2 {
                return Err("nodemix needs an attribute and at least one cell".into());
            }
            let cells = args[1..]
                .iter()
                .map(|cell| {
                    cell.split('+')
                        .map(|pair| {
                            let (a, b) = pair
                                .trim()
                                .split_once('-')
                                .ok_or_else(|| format!("nodemix cell {pair:?} is not A-B"))?;
                            Ok((a.trim().to_string(), b.trim().to_string()))
                        })
                        .collect::<Result<Vec<_>, String>>()
                })
                .collect::<Result<Vec<_>, String>>()?;
            Ok(TermSpec::NodeMix {
                attr: args[0].clone(),
                cells,
            })
        }
        "gwesp" => {
            arity(1, 2)?;
            let decay: f64 = args[0]
                .parse()
                .map_err(|_| format!("gwesp decay {:?} is not a number", args[0]))?;
            if let Some(mode) = args.get(1) {
                if mode != "fixed" {
                    return Err(format!("gwesp decay must be fixed, got {mode:?}"));
                }
            }
            Ok(TermSpec::Gwesp { decay })
        }
        "degreepopularity" | "degree_popularity" | "popularity" => {
            arity(0, 0)?;
            Ok(TermSpec::DegreePopularity)
        }
        "match_interaction" => {
            arity(2, 2)?;
            Ok(TermSpec::MatchInteraction {
                a: args[0].clone(),
                b: args[1].clone(),
            })
        }
        other => Err(format!("unknown term {other:?}")),
    }
}

#[derive(Clone, Debug)]
enum Bound {
    Edges,
    Mutual,
    NodeFactor {
        codes: Vec<u32>,
        slot: Vec<Option<usize>>,
    },
    NodeCov {
        values: Vec<f64>,
    },
    NodeMatch {
        codes: Vec<u32>,
        slot: Option<Vec<usize>>,
    },
    NodeMix {
        codes: Vec<u32>,
        levels: usize,
        cell: Vec<Option<usize>>,
    },
    Gwesp {
        weights: Vec<f64>,
    },
    DegreePopularity {
        pow: Vec<f64>,
    },
    MatchInteraction {
        a: Vec<u32>,
        b: Vec<u32>,
    },
}

#[derive(Clone, Debug)]
struct BoundTerm {
    spec: TermSpec,
    offset: usize,
    width: usize,
    kind: Bound,
}

/// Edgewise shared-partner weights `e^t (1 - (1 - e^-t)^k)` for `k = 0..=n`.
pub fn gwesp_weights(decay: f64, n: usize) -> Vec<f64> {
    let r = 1.0 - (-decay).exp();
    (0..=n)
        .map(|k| {
            if k == 0 {
                0.0
            } else {
                decay.exp() * (1.0 - r.powi(k as i32))
            }
        })
        .collect()
}

/// A model bound to node attributes and a graph shape.
#[derive(Clone, Debug)]
pub struct Model {
    spec: ModelSpec,
    n: usize,
    directed: bool,
    dim: usize,
    labels: Vec<String>,
    terms: Vec<BoundTerm>,
}

fn attr_err(term: &TermSpec) -> impl FnOnce(AttributeError) -> TermError + '_ {
    move |source| TermError::Attribute {
        term: term.to_string(),
        source,
    }
}

impl Model {
    pub fn new(spec: &ModelSpec, attrs: &NodeAttributes, directed: bool) -> Result<Self, TermError> {
        if spec.terms.is_empty() {
            return Err(TermError::EmptyModel);
        }
        let n = attrs.n();
        if n < 2 {
            return Err(TermError::Shape(format!("need at least 2 nodes, got {n}")));
        }
        let mut terms = Vec::new();
        let mut labels = Vec::new();
        for t in &spec.terms {
            let offset = labels.len();
            let kind = match t {
                TermSpec::Edges => {
                    labels.push("edges".to_string());
                    Bound::Edges
                }
                TermSpec::Mutual => {
                    if !directed {
                        return Err(TermError::Incompatible {
                            term: t.to_string(),
                            required: "directed",
                        });
                    }
                    labels.push("mutual".to_string());
                    Bound::Mutual
                }
                TermSpec::NodeFactor { attr, omit } => {
                    let (codes, levels) = attrs.categorical(attr).map_err(attr_err(t))?;
                    let omitted = match omit {
                        Some(l) => attrs.level_code(attr, l).map_err(attr_err(t))? as usize,
                        None => 0,
                    };
                    if levels.len() < 2 {
                        return Err(TermError::Invalid {
                            term: t.to_string(),
                            msg: "attribute has a single level".into(),
                        });
                    }
                    let mut slot = vec![None; levels.len()];
                    for (code, level) in levels.iter().enumerate() {
                        if code != omitted {
                            slot[code] = Some(labels.len());
                            labels.push(format!("nodefactor.{attr}.{level}"));
                        }
                    }
                    let slot = slot.into_iter().map(|s| s.map(|s| s - offset)).collect();
                    Bound::NodeFactor {
                        codes: codes.to_vec(),
                        slot,
                    }
                }
                TermSpec::NodeCov { attr } => {
                    let values = attrs.numeric(attr).map_err(attr_err(t))?.to_vec();
                    labels.push(format!("nodecov.{attr}"));
                    Bound::NodeCov { values }
                }
                TermSpec::NodeMatch { attr, diff } => {
                    let (codes, levels) = attrs.categorical(attr).map_err(attr_err(t))?;
                    let slot = if *diff {
                        for level in levels {
                            labels.push(format!("nodematch.{attr}.{level}"));
                        }
                        Some((0..levels.len()).collect())
                    } else {
                        labels.push(format!("nodematch.{attr}"));
                        None
                    };
                    Bound::NodeMatch {
                        codes: codes.to_vec(),
                        slot,
                    }
                }
                TermSpec::NodeMix { attr, cells } => {
                    let (codes, levels) = attrs.categorical(attr).map_err(attr_err(t))?;
                    let nl = levels.len();
                    let mut cell = vec![None; nl * nl];
                    for (k, pairs) in cells.iter().enumerate() {
                        let mut names = Vec::new();
                        for (a, b) in pairs {
                            let ca = attrs.level_code(attr, a).map_err(attr_err(t))? as usize;
                            let cb = attrs.level_code(attr, b).map_err(attr_err(t))? as usize;
                            let mut targets = vec![ca * nl + cb];
                            if !directed {
                                targets.push(cb * nl + ca);
                            }
                            for idx in targets {
                                match cell[idx] {
                                    Some(prev) if prev != k => {
                                        return Err(TermError::Invalid {
                                            term: t.to_string(),
                                            msg: format!("level pair {a}-{b} appears in two cells"),
                                        })
                                    }
                                    _ => cell[idx] = Some(k),
                                }
                            }
                            names.push(format!("{a}.{b}"));
                        }
                        labels.push(format!("mix.{attr}.{}", names.join("+")));
                    }
                    Bound::NodeMix {
                        codes: codes.to_vec(),
                        levels: nl,
                        cell,
                    }
                }
                TermSpec::Gwesp { decay } => {
                    if directed {
                        return Err(TermError::Incompatible {
                            term: t.to_string(),
                            required: "undirected",
                        });
                    }
                    if !(decay.is_finite() && *decay >= 0.0) {
                        return Err(TermError::Invalid {
                            term: t.to_string(),
                            msg: "decay must be finite and >= 0".into(),
                        });
                    }
                    labels.push(format!("gwesp.fixed.{decay}"));
                    Bound::Gwesp {
                        weights: gwesp_weights(*decay, n),
                    }
                }
                TermSpec::DegreePopularity => {
                    if directed {
                        return Err(TermError::Incompatible {
                            term: t.to_string(),
                            required: "undirected",
                        });
                    }
                    labels.push("degreepopularity".to_string());
                    Bound::DegreePopularity {
                        pow: (0..=n).map(|d| (d as f64).powf(1.5)).collect(),
                    }
                }
                TermSpec::MatchInteraction { a, b } => {
                    let (ca, _) = attrs.categorical(a).map_err(attr_err(t))?;
                    let (cb, _) = attrs.categorical(b).map_err(attr_err(t))?;
                    labels.push(format!("nodematch.{a}.{b}"));
                    Bound::MatchInteraction {
                        a: ca.to_vec(),
                        b: cb.to_vec(),
                    }
                }
            };
            terms.push(BoundTerm {
                spec: t.clone(),
                offset,
                width: labels.len() - offset,
                kind,
            });
        }
        Ok(Self {
            spec: spec.clone(),
            n,
            directed,
            dim: labels.len(),
            labels,
            terms,
        })
    }

    /// Number of statistics `q`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn is_dyad_independent(&self) -> bool {
        self.spec.terms.iter().all(TermSpec::is_dyad_independent)
    }

    /// Coordinate ranges of each term in the statistic vector.
    pub fn term_ranges(&self) -> Vec<(TermSpec, Range<usize>)> {
        self.terms
            .iter()
            .map(|t| (t.spec.clone(), t.offset..t.offset + t.width))
            .collect()
    }

    pub fn check_graph(&self, g: &Graph) -> Result<(), TermError> {
        if g.n() != self.n || g.is_directed() != self.directed {
            return Err(TermError::Shape(format!(
                "model is for n={} directed={}, graph has n={} directed={}",
                self.n,
                self.directed,
                g.n(),
                g.is_directed()
            )));
        }
        Ok(())
    }

    /// Full evaluation of `g(x)`.
    pub fn stats(&self, g: &Graph) -> Result<Vec<f64>, TermError> {
        self.check_graph(g)?;
        let mut out = vec![0.0; self.dim];
        for t in &self.terms {
            let o = &mut out[t.offset..t.offset + t.width];
            match &t.kind {
                Bound::Edges => o[0] = g.edge_count() as f64,
                Bound::Mutual => {
                    o[0] = g.edges().filter(|d| d.i < d.j && g.has_edge(d.j, d.i)).count() as f64;
                }
                Bound::NodeFactor { codes, slot } => {
                    for d in g.edges() {
                        for v in [d.i, d.j] {
                            if let Some(s) = slot[codes[v] as usize] {
                                o[s] += 1.0;
                            }
                        }
                    }
                }
                Bound::NodeCov { values } => {
                    o[0] = g.edges().map(|d| values[d.i] + values[d.j]).sum();
                }
                Bound::NodeMatch { codes, slot } => {
                    for d in g.edges() {
                        if codes[d.i] == codes[d.j] {
                            let s = slot.as_ref().map_or(0, |s| s[codes[d.i] as usize]);
                            o[s] += 1.0;
                        }
                    }
                }
                Bound::NodeMix { codes, levels, cell } => {
                    for d in g.edges() {
                        let c = codes[d.i] as usize * levels + codes[d.j] as usize;
                        if let Some(k) = cell[c] {
                            o[k] += 1.0;
                        }
                    }
                }
                Bound::Gwesp { weights } => {
                    o[0] = g.edges().map(|d| weights[g.common_neighbors(d.i, d.j)]).sum();
                }
                Bound::DegreePopularity { pow } => {
                    o[0] = (0..g.n()).map(|v| pow[g.degree(v)]).sum();
                }
                Bound::MatchInteraction { a, b } => {
                    o[0] = g.edges().filter(|d| a[d.i] == a[d.j] && b[d.i] == b[d.j]).count() as f64;
                }
            }
        }
        Ok(out)
    }

    /// Writes `g(x with d toggled) - g(x)` into `out` (length [`Model::dim`]).
    ///
    /// The dyad must be valid for `g`, which must match the model's shape.
    pub fn change_stats_into(&self, g: &Graph, d: DyadIndex, out: &mut [f64]) {
        let (i, j) = (d.i, d.j);
        let adding = !g.get(d);
        let s = if adding { 1.0 } else { -1.0 };
        for t in &self.terms {
            let o = &mut out[t.offset..t.offset + t.width];
            o.iter_mut().for_each(|v| *v = 0.0);
            match &t.kind {
                Bound::Edges => o[0] = s,
                Bound::Mutual => {
                    if g.has_edge(j, i) {
                        o[0] = s;
                    }
                }
                Bound::NodeFactor { codes, slot } => {
                    for v in [i, j] {
                        if let Some(k) = slot[codes[v] as usize] {
                            o[k] += s;
                        }
                    }
                }
                Bound::NodeCov { values } => o[0] = s * (values[i] + values[j]),
                Bound::NodeMatch { codes, slot } => {
                    if codes[i] == codes[j] {
                        let k = slot.as_ref().map_or(0, |sl| sl[codes[i] as usize]);
                        o[k] = s;
                    }
                }
                Bound::NodeMix { codes, levels, cell } => {
                    if let Some(k) = cell[codes[i] as usize * levels + codes[j] as usize] {
                        o[k] = s;
                    }
                }
                Bound::Gwesp { weights } => {
                    // Shared-partner counts are taken in the graph without (i, j).
                    let shift = usize::from(!adding);
                    let mut delta = weights[g.common_neighbors(i, j)];
                    for k in g.common_neighbor_iter(i, j) {
                        let a = g.common_neighbors(i, k) - shift;
                        let b = g.common_neighbors(j, k) - shift;
                        delta += weights[a + 1] - weights[a] + weights[b + 1] - weights[b];
                    }
                    o[0] = s * delta;
                }
                Bound::DegreePopularity { pow } => {
                    let (di, dj) = (g.degree(i), g.degree(j));
                    o[0] = if adding {
                        pow[di + 1] - pow[di] + pow[dj + 1] - pow[dj]
                    } else {
                        pow[di - 1] - pow[di] + pow[dj - 1] - pow[dj]
                    };
                }
                Bound::MatchInteraction { a, b } => {
                    if a[i] == a[j] && b[i] == b[j] {
                        o[0] = s;
                    }
                }
            }
        }
    }

    /// Checked change statistic for toggling `d`.
    pub fn change_stats(&self, g: &Graph, d: DyadIndex) -> Result<Vec<f64>, TermError> {
        self.check_graph(g)?;
        let d = g.dyad(d.i, d.j).map_err(|e| TermError::Shape(e.to_string()))?;
        let mut out = vec![0.0; self.dim];
        self.change_stats_into(g, d, &mut out);
        Ok(out)
    }

    /// The dyad-independent terms of this model, with their coordinates here.
    pub fn dyad_independent_part(&self, attrs: &NodeAttributes) -> Result<Option<(Model, Vec<usize>)>, TermError> {
        let mut specs = Vec::new();
        let mut coords = Vec::new();
        for t in &self.terms {
            if t.spec.is_dyad_independent() {
                specs.push(t.spec.clone());
                coords.extend(t.offset..t.offset + t.width);
            }
        }
        if specs.is_empty() {
            return Ok(None);
        }
        let sub = Model::new(&ModelSpec::new(specs), attrs, self.directed)?;
        Ok(Some((sub, coords)))
    }
}

/// Binds `spec` and evaluates `g(x)`.
pub fn compute_stats(spec: &ModelSpec, g: &Graph, z: &NodeAttributes) -> Result<Vec<f64>, TermError> {
    check_attrs(g, z)?;
    Model::new(spec, z, g.is_directed())?.stats(g)
}

/// Binds `spec` and evaluates the change statistic of `d`.
pub fn change_stats(spec: &ModelSpec, g: &Graph, z: &NodeAttributes, d: DyadIndex) -> Result<Vec<f64>, TermError> {
    check_attrs(g, z)?;
    Model::new(spec, z, g.is_directed())?.change_stats(g, d)
}

fn check_attrs(g: &Graph, z: &NodeAttributes) -> Result<(), TermError> {
    if g.n() != z.n() {
        return Err(TermError::Shape(format!(
            "graph has {} nodes, attributes have {}",
            g.n(),
            z.n()
        )));
    }
    Ok(())
}
