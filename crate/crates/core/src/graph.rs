// SPDX-License-Identifier: Apache-2.0

//! Binary network data model.
//!
//! A [`Graph`] is a simple (no loops, no multi-edges) binary network over `n`
//! nodes, directed or undirected. Adjacency is held as one packed bit row per
//! node so that dyad lookups and toggles are O(1) and common-neighbour counts
//! reduce to word-wise `AND` + `popcount`. Undirected graphs keep both halves
//! of the matrix in sync; the public dyad enumeration visits every unordered
//! pair exactly once, with `i < j`.

use std::fmt;
use std::fs;
use std::path::Path;

use thiserror::Error;

/// Errors raised while constructing, editing or ingesting graphs.
#[derive(Debug, Error)]
pub enum GraphError {
    #[error("graph must have at least one node")]
    Empty,
    #[error("self-loop at node {0} is not representable")]
    SelfLoop(usize),
    #[error("node id {id} out of range for n = {n}")]
    NodeOutOfRange { id: usize, n: usize },
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("graphs differ in shape: {0}")]
    ShapeMismatch(String),
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// A dyad (pair of distinct nodes), 0-based.
///
/// For undirected graphs the pair is always stored with `i < j`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DyadIndex {
    pub i: usize,
    pub j: usize,
}

impl DyadIndex {
    /// Builds a dyad, canonicalising undirected pairs to `i < j`.
    pub fn new(i: usize, j: usize, directed: bool) -> Result<Self, GraphError> {
        if i == j {
            return Err(GraphError::SelfLoop(i));
        }
        if !directed && i > j {
            Ok(Self { i: j, j: i })
        } else {
            Ok(Self { i, j })
        }
    }

    /// Position of this dyad in the canonical enumeration of [`Graph::dyads`].
    pub fn linear(&self, n: usize, directed: bool) -> usize {
        let (i, j) = (self.i, self.j);
        if directed {
            i * (n - 1) + if j > i { j - 1 } else { j }
        } else {
            // rows 0..i contribute (n-1) + (n-2) + ... + (n-i)
            i * (2 * n - i - 1) / 2 + (j - i - 1)
        }
    }
}

impl fmt::Display for DyadIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.i + 1, self.j + 1)
    }
}

/// Number of dyads for a graph of the given shape.
pub fn dyad_count(n: usize, directed: bool) -> usize {
    if directed {
        n * n.saturating_sub(1)
    } else {
        n * n.saturating_sub(1) / 2
    }
}

/// A simple binary network.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Graph {
    n: usize,
    directed: bool,
    words: usize,
    rows: Vec<u64>,
    degree: Vec<u32>,
    edges: usize,
}

impl fmt::Debug for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Graph")
            .field("n", &self.n)
            .field("directed", &self.directed)
            .field("edges", &self.edge_list())
            .finish()
    }
}

impl Graph {
    /// Empty graph on `n` nodes.
    pub fn new(n: usize, directed: bool) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::Empty);
        }
        let words = n.div_ceil(64);
        Ok(Self {
            n,
            directed,
            words,
            rows: vec![0; n * words],
            degree: vec![0; n],
            edges: 0,
        })
    }

    /// Complete graph on `n` nodes.
    pub fn complete(n: usize, directed: bool) -> Result<Self, GraphError> {
        let mut g = Self::new(n, directed)?;
        for d in g.dyads().collect::<Vec<_>>() {
            g.set(d, true);
        }
        Ok(g)
    }

    /// Builds a graph from 0-based edge pairs. Duplicates collapse.
    pub fn from_edges<I>(n: usize, directed: bool, edges: I) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut g = Self::new(n, directed)?;
        for (i, j) in edges {
            let d = g.dyad(i, j)?;
            g.set(d, true);
        }
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    /// Number of edges (ordered pairs if directed, unordered otherwise).
    pub fn edge_count(&self) -> usize {
        self.edges
    }

    pub fn dyad_count(&self) -> usize {
        dyad_count(self.n, self.directed)
    }

    pub fn density(&self) -> f64 {
        let d = self.dyad_count();
        if d == 0 {
            0.0
        } else {
            self.edges as f64 / d as f64
        }
    }

    /// Validated, canonical dyad for this graph's shape.
    pub fn dyad(&self, i: usize, j: usize) -> Result<DyadIndex, GraphError> {
        for id in [i, j] {
            if id >= self.n {
                return Err(GraphError::NodeOutOfRange { id, n: self.n });
            }
        }
        DyadIndex::new(i, j, self.directed)
    }

    #[inline]
    fn bit(&self, i: usize, j: usize) -> bool {
        (self.rows[i * self.words + j / 64] >> (j % 64)) & 1 == 1
    }

    #[inline]
    fn flip_bit(&mut self, i: usize, j: usize) {
        self.rows[i * self.words + j / 64] ^= 1u64 << (j % 64);
    }

    /// State of `x_ij`. Always `false` on the diagonal.
    #[inline]
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i != j && self.bit(i, j)
    }

    #[inline]
    pub fn get(&self, d: DyadIndex) -> bool {
        self.bit(d.i, d.j)
    }

    /// Flips the state of `d` and returns the new state.
    #[inline]
    pub fn toggle(&mut self, d: DyadIndex) -> bool {
        let now = !self.get(d);
        self.flip_bit(d.i, d.j);
        if !self.directed {
            self.flip_bit(d.j, d.i);
        }
        if now {
            self.edges += 1;
            self.degree[d.i] += 1;
            if !self.directed {
                self.degree[d.j] += 1;
            }
        } else {
            self.edges -= 1;
            self.degree[d.i] -= 1;
            if !self.directed {
                self.degree[d.j] -= 1;
            }
        }
        now
    }

    /// Copy of this graph with `d` flipped.
    pub fn toggled(&self, d: DyadIndex) -> Self {
        let mut g = self.clone();
        g.toggle(d);
        g
    }

    pub fn set(&mut self, d: DyadIndex, state: bool) {
        if self.get(d) != state {
            self.toggle(d);
        }
    }

    /// Degree (out-degree for directed graphs).
    #[inline]
    pub fn degree(&self, i: usize) -> usize {
        self.degree[i] as usize
    }

    /// Packed adjacency row of node `i` (out-neighbours when directed).
    #[inline]
    pub fn row(&self, i: usize) -> &[u64] {
        &self.rows[i * self.words..(i + 1) * self.words]
    }

    /// Number of nodes adjacent to both `i` and `j` (undirected sense).
    #[inline]
    pub fn common_neighbors(&self, i: usize, j: usize) -> usize {
        self.row(i)
            .iter()
            .zip(self.row(j))
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }

    /// Neighbours (out-neighbours when directed) of `i` in increasing order.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        bits_of(self.row(i))
    }

    /// Nodes adjacent to both `i` and `j`, in increasing order.
    pub fn common_neighbor_iter(&self, i: usize, j: usize) -> impl Iterator<Item = usize> + '_ {
        self.row(i)
            .iter()
            .zip(self.row(j))
            .enumerate()
            .flat_map(|(w, (a, b))| WordBits {
                base: w * 64,
                word: a & b,
            })
    }

    /// Every dyad in canonical order: row-major, `i < j` when undirected.
    pub fn dyads(&self) -> impl Iterator<Item = DyadIndex> {
        let (n, directed) = (self.n, self.directed);
        (0..n).flat_map(move |i| {
            let start = if directed { 0 } else { i + 1 };
            (start..n).filter(move |&j| j != i).map(move |j| DyadIndex { i, j })
        })
    }

    /// Present edges in canonical order.
    pub fn edges(&self) -> impl Iterator<Item = DyadIndex> + '_ {
        (0..self.n).flat_map(move |i| {
            self.neighbors(i)
                .filter(move |&j| self.directed || j > i)
                .map(move |j| DyadIndex { i, j })
        })
    }

    /// Edges as 0-based pairs.
    pub fn edge_list(&self) -> Vec<(usize, usize)> {
        self.edges().map(|d| (d.i, d.j)).collect()
    }

    fn check_shape(&self, other: &Graph) -> Result<(), GraphError> {
        if self.n != other.n || self.directed != other.directed {
            return Err(GraphError::ShapeMismatch(format!(
                "n={} directed={} vs n={} directed={}",
                self.n, self.directed, other.n, other.directed
            )));
        }
        Ok(())
    }
}

/// Number of dyads on which two same-shaped graphs differ.
pub fn hamming_distance(a: &Graph, b: &Graph) -> Result<usize, GraphError> {
    a.check_shape(b)?;
    let ones: usize = a
        .rows
        .iter()
        .zip(&b.rows)
        .map(|(x, y)| (x ^ y).count_ones() as usize)
        .sum();
    Ok(if a.directed { ones } else { ones / 2 })
}

/// Functional toggle: returns `g` with the dyad `(i, j)` flipped.
pub fn toggle_dyad(g: &Graph, i: usize, j: usize) -> Result<Graph, GraphError> {
    let d = g.dyad(i, j)?;
    Ok(g.toggled(d))
}

fn bits_of(words: &[u64]) -> impl Iterator<Item = usize> + '_ {
    words
        .iter()
        .enumerate()
        .flat_map(|(w, &word)| WordBits { base: w * 64, word })
}

struct WordBits {
    base: usize,
    word: u64,
}

impl Iterator for WordBits {
    type Item = usize;

    #[inline]
    fn next(&mut self) -> Option<usize> {
        if self.word == 0 {
            return None;
        }
        let tz = self.word.trailing_zeros() as usize;
        self.word &= self.word - 1;
        Some(self.base + tz)
    }
}

/// Parses the edge-list text format: one `i j` pair of 1-based ids per line,
/// `#` comment lines and blank lines ignored.
pub fn parse_edge_list(text: &str, n: usize, directed: bool) -> Result<Graph, GraphError> {
    let mut g = Graph::new(n, directed)?;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r').trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let line_no = lineno + 1;
        let mut fields = line.split_whitespace();
        let mut next_id = || -> Result<usize, GraphError> {
            let tok = fields.next().ok_or_else(|| GraphError::Malformed {
                line: line_no,
                msg: "expected two node ids".into(),
            })?;
            tok.parse::<usize>().map_err(|_| GraphError::Malformed {
                line: line_no,
                msg: format!("bad node id {tok:?}"),
            })
        };
        let a = next_id()?;
        let b = next_id()?;
        if fields.next().is_some() {
            return Err(GraphError::Malformed {
                line: line_no,
                msg: "trailing fields".into(),
            });
        }
        for id in [a, b] {
            if id == 0 || id > n {
                return Err(GraphError::NodeOutOfRange { id, n });
            }
        }
        if a == b {
            return Err(GraphError::SelfLoop(a));
        }
        let d = DyadIndex::new(a - 1, b - 1, directed)?;
        g.set(d, true);
    }
    Ok(g)
}

pub fn load_edge_list(path: impl AsRef<Path>, n: usize, directed: bool) -> Result<Graph, GraphError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| GraphError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_edge_list(&text, n, directed)
}

/// Canonical edge-list text: sorted, 1-based, undirected pairs written `i < j`.
pub fn write_edge_list(g: &Graph) -> String {
    let mut out = String::with_capacity(g.edge_count() * 8);
    for d in g.edges() {
        out.push_str(&format!("{} {}\n", d.i + 1, d.j + 1));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn load_examples() {
        let g = parse_edge_list("1 2\n2 3", 3, false).unwrap();
        assert_eq!(g.edge_count(), 2);
        let g = parse_edge_list("1 2\n1 2", 3, false).unwrap();
        assert_eq!(g.edge_count(), 1);
        let g = parse_edge_list("1 2\r\n2 1\r\n", 3, false).unwrap();
        assert_eq!(g.edge_count(), 1);
        let g = parse_edge_list("# header\n1 2\n\n2 1\n", 3, true).unwrap();
        assert_eq!(g.edge_count(), 2);
    }

    #[test]
    fn load_errors() {
        assert!(matches!(parse_edge_list("1 1", 3, false), Err(GraphError::SelfLoop(1))));
        assert!(matches!(
            parse_edge_list("1 4", 3, false),
            Err(GraphError::NodeOutOfRange { id: 4, n: 3 })
        ));
        assert!(matches!(
            parse_edge_list("0 2", 3, false),
            Err(GraphError::NodeOutOfRange { .. })
        ));
        assert!(matches!(
            parse_edge_list("1 x", 3, false),
            Err(GraphError::Malformed { line: 1, .. })
        ));
        assert!(matches!(
            parse_edge_list("1 2\n3", 3, false),
            Err(GraphError::Malformed { line: 2, .. })
        ));
        assert!(matches!(
            parse_edge_list("1 2 3", 3, false),
            Err(GraphError::Malformed { .. })
        ));
    }

    #[test]
    fn hamming_examples() {
        let e = Graph::new(4, false).unwrap();
        let k = Graph::complete(4, false).unwrap();
        assert_eq!(hamming_distance(&e, &e).unwrap(), 0);
        assert_eq!(hamming_distance(&e, &k).unwrap(), 6);
        let t = toggle_dyad(&e, 1, 2).unwrap();
        assert_eq!(hamming_distance(&e, &t).unwrap(), 1);
        let d = Graph::new(4, true).unwrap();
        assert!(hamming_distance(&e, &d).is_err());
        assert!(hamming_distance(&e, &Graph::new(3, false).unwrap()).is_err());
    }

    #[test]
    fn toggle_examples() {
        let e = Graph::new(3, false).unwrap();
        let t = toggle_dyad(&e, 0, 1).unwrap();
        assert_eq!(t.edge_count(), 1);
        assert_eq!(toggle_dyad(&t, 0, 1).unwrap(), e);
        assert_eq!(toggle_dyad(&e, 1, 0).unwrap(), t);
        assert!(t.has_edge(1, 0));
        assert!(matches!(toggle_dyad(&e, 2, 2), Err(GraphError::SelfLoop(2))));
    }

    #[test]
    fn linear_index_matches_enumeration() {
        for directed in [false, true] {
            for n in 2..9 {
                let g = Graph::new(n, directed).unwrap();
                for (k, d) in g.dyads().enumerate() {
                    assert_eq!(d.linear(n, directed), k);
                }
                assert_eq!(g.dyads().count(), g.dyad_count());
            }
        }
    }

    #[test]
    fn wide_rows() {
        let mut g = Graph::new(130, false).unwrap();
        g.set(g.dyad(0, 129).unwrap(), true);
        g.set(g.dyad(5, 129).unwrap(), true);
        g.set(g.dyad(0, 70).unwrap(), true);
        g.set(g.dyad(5, 70).unwrap(), true);
        assert_eq!(g.common_neighbors(0, 5), 2);
        assert_eq!(g.common_neighbor_iter(0, 5).collect::<Vec<_>>(), vec![70, 129]);
        assert_eq!(g.degree(129), 2);
    }

    fn arb_graph(n: usize, directed: bool) -> impl Strategy<Value = Graph> {
        proptest::collection::vec(any::<bool>(), dyad_count(n, directed)).prop_map(move |bits| {
            let mut g = Graph::new(n, directed).unwrap();
            let dyads: Vec<_> = g.dyads().collect();
            for (d, b) in dyads.into_iter().zip(bits) {
                g.set(d, b);
            }
            g
        })
    }

    proptest! {
        #[test]
        fn hamming_is_a_metric(a in arb_graph(6, false), b in arb_graph(6, false), c in arb_graph(6, false)) {
            let dab = hamming_distance(&a, &b).unwrap();
            prop_assert_eq!(dab == 0, a == b);
            prop_assert_eq!(dab, hamming_distance(&b, &a).unwrap());
            let dbc = hamming_distance(&b, &c).unwrap();
            let dac = hamming_distance(&a, &c).unwrap();
            prop_assert!(dac <= dab + dbc);
        }

        #[test]
        fn toggle_is_involution(g in arb_graph(7, true), i in 0usize..7, j in 0usize..7) {
            prop_assume!(i != j);
            let t = toggle_dyad(&g, i, j).unwrap();
            prop_assert_eq!(hamming_distance(&g, &t).unwrap(), 1);
            prop_assert_eq!(toggle_dyad(&t, i, j).unwrap(), g.clone());
            prop_assert_eq!(t.edges().count(), t.edge_count());
        }

        #[test]
        fn edge_list_round_trip(g in arb_graph(8, false)) {
            let text = write_edge_list(&g);
            let back = parse_edge_list(&text, 8, false).unwrap();
            prop_assert_eq!(write_edge_list(&back), text);
            prop_assert_eq!(back, g);
        }

        #[test]
        fn canonical_form_of_messy_file(pairs in proptest::collection::vec((1usize..=6, 1usize..=6), 0..30)) {
            let mut text = String::from("# messy\n");
            let mut expected = std::collections::BTreeSet::new();
            for (a, b) in pairs.iter().filter(|(a, b)| a != b) {
                text.push_str(&format!("{a}\t{b}\r\n"));
                expected.insert((*a.min(b), *a.max(b)));
            }
            let g = parse_edge_list(&text, 6, false).unwrap();
            let canonical: String = expected.iter().map(|(a, b)| format!("{a} {b}\n")).collect();
            prop_assert_eq!(write_edge_list(&g), canonical);
        }
    }
}
