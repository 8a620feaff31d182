// SPDX-License-Identifier: Apache-2.0

//! Statistics checked against a naive adjacency-matrix evaluator that shares
//! no code with the library.

use dpergm::attributes::NodeAttributes;
use dpergm::graph::Graph;
use dpergm::terms::{Model, ModelSpec};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Naive {
    n: usize,
    directed: bool,
    a: Vec<Vec<bool>>,
}

impl Naive {
    fn from(g: &Graph) -> Self {
        let n = g.n();
        let a = (0..n).map(|i| (0..n).map(|j| g.has_edge(i, j)).collect()).collect();
        Self {
            n,
            directed: g.is_directed(),
            a,
        }
    }

    fn edge_pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in 0..self.n {
                if i != j && self.a[i][j] && (self.directed || i < j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    fn degree(&self, i: usize) -> usize {
        (0..self.n).filter(|&j| self.a[i][j]).count()
    }

    fn shared_partners(&self, i: usize, j: usize) -> usize {
        (0..self.n)
            .filter(|&k| k != i && k != j && self.a[i][k] && self.a[j][k])
            .count()
    }
}

struct Data {
    cat_a: Vec<usize>,
    levels_a: Vec<&'static str>,
    cat_b: Vec<usize>,
    num: Vec<f64>,
}

fn random_data(n: usize, rng: &mut ChaCha8Rng) -> (Data, NodeAttributes) {
    let levels_a = vec!["p", "q", "r"];
    let levels_b = ["u", "v"];
    let cat_a: Vec<usize> = (0..n).map(|_| rng.gen_range(0..3)).collect();
    let cat_b: Vec<usize> = (0..n).map(|_| rng.gen_range(0..2)).collect();
    let num: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..3.0)).collect();
    // all levels present so lexicographic level order equals declaration order
    let mut cat_a = cat_a;
    let mut cat_b = cat_b;
    cat_a[0] = 0;
    cat_a[1] = 1;
    cat_a[2] = 2;
    cat_b[0] = 0;
    cat_b[1] = 1;
    let la: Vec<&str> = cat_a.iter().map(|&c| levels_a[c]).collect();
    let lb: Vec<&str> = cat_b.iter().map(|&c| levels_b[c]).collect();
    let z = NodeAttributes::empty(n)
        .with_categorical("a", &la)
        .unwrap()
        .with_categorical("b", &lb)
        .unwrap()
        .with_numeric("v", &num)
        .unwrap();
    (
        Data {
            cat_a,
            levels_a,
            cat_b,
            num,
        },
        z,
    )
}

const UNDIRECTED_MODEL: &str = "edges
nodefactor(a)
nodefactor(b, v)
nodecov(v)
nodematch(a)
nodematch(a, diff)
nodemix(a, p-q, r-r+p-p)
gwesp(0, fixed)
gwesp(0.7, fixed)
degreepopularity
match_interaction(a, b)
";

const DIRECTED_MODEL: &str = "edges
mutual
nodefactor(a)
nodecov(v)
nodematch(b, diff)
nodemix(a, p-q, q-p, r-r+p-r)
match_interaction(a, b)
";

fn gwesp_naive(g: &Naive, decay: f64) -> f64 {
    let mut ep = vec![0usize; g.n];
    for (i, j) in g.edge_pairs() {
        ep[g.shared_partners(i, j)] += 1;
    }
    (1..g.n.saturating_sub(1))
        .map(|k| decay.exp() * (1.0 - (1.0 - (-decay).exp()).powi(k as i32)) * ep[k] as f64)
        .sum()
}

fn naive_undirected(g: &Naive, d: &Data) -> Vec<f64> {
    let e = g.edge_pairs();
    let mut out = vec![e.len() as f64];
    // nodefactor(a): levels q, r
    for level in [1, 2] {
        out.push(
            e.iter()
                .map(|&(i, j)| (d.cat_a[i] == level) as usize + (d.cat_a[j] == level) as usize)
                .sum::<usize>() as f64,
        );
    }
    // nodefactor(b, omit v): level u only
    out.push(
        e.iter()
            .map(|&(i, j)| (d.cat_b[i] == 0) as usize + (d.cat_b[j] == 0) as usize)
            .sum::<usize>() as f64,
    );
    out.push(e.iter().map(|&(i, j)| d.num[i] + d.num[j]).sum());
    out.push(e.iter().filter(|&&(i, j)| d.cat_a[i] == d.cat_a[j]).count() as f64);
    for level in 0..d.levels_a.len() {
        out.push(
            e.iter()
                .filter(|&&(i, j)| d.cat_a[i] == level && d.cat_a[j] == level)
                .count() as f64,
        );
    }
    let pair = |i: usize, j: usize, a: usize, b: usize| {
        (d.cat_a[i] == a && d.cat_a[j] == b) || (d.cat_a[i] == b && d.cat_a[j] == a)
    };
    out.push(e.iter().filter(|&&(i, j)| pair(i, j, 0, 1)).count() as f64);
    out.push(e.iter().filter(|&&(i, j)| pair(i, j, 2, 2) || pair(i, j, 0, 0)).count() as f64);
    out.push(gwesp_naive(g, 0.0));
    out.push(gwesp_naive(g, 0.7));
    out.push((0..g.n).map(|i| (g.degree(i) as f64).powf(1.5)).sum());
    out.push(
        e.iter()
            .filter(|&&(i, j)| d.cat_a[i] == d.cat_a[j] && d.cat_b[i] == d.cat_b[j])
            .count() as f64,
    );
    out
}

fn naive_directed(g: &Naive, d: &Data) -> Vec<f64> {
    let e = g.edge_pairs();
    let mut out = vec![e.len() as f64];
    let mut mutual = 0;
    for i in 0..g.n {
        for j in i + 1..g.n {
            if g.a[i][j] && g.a[j][i] {
                mutual += 1;
            }
        }
    }
    out.push(mutual as f64);
    for level in [1, 2] {
        out.push(
            e.iter()
                .map(|&(i, j)| (d.cat_a[i] == level) as usize + (d.cat_a[j] == level) as usize)
                .sum::<usize>() as f64,
        );
    }
    out.push(e.iter().map(|&(i, j)| d.num[i] + d.num[j]).sum());
    for level in 0..2 {
        out.push(
            e.iter()
                .filter(|&&(i, j)| d.cat_b[i] == level && d.cat_b[j] == level)
                .count() as f64,
        );
    }
    let ordered = |i: usize, j: usize, a: usize, b: usize| d.cat_a[i] == a && d.cat_a[j] == b;
    out.push(e.iter().filter(|&&(i, j)| ordered(i, j, 0, 1)).count() as f64);
    out.push(e.iter().filter(|&&(i, j)| ordered(i, j, 1, 0)).count() as f64);
    out.push(
        e.iter()
            .filter(|&&(i, j)| ordered(i, j, 2, 2) || ordered(i, j, 0, 2))
            .count() as f64,
    );
    out.push(
        e.iter()
            .filter(|&&(i, j)| d.cat_a[i] == d.cat_a[j] && d.cat_b[i] == d.cat_b[j])
            .count() as f64,
    );
    out
}

fn random_graph(n: usize, directed: bool, density: f64, rng: &mut ChaCha8Rng) -> Graph {
    let mut g = Graph::new(n, directed).unwrap();
    for d in g.dyads().collect::<Vec<_>>() {
        if rng.gen::<f64>() < density {
            g.toggle(d);
        }
    }
    g
}

fn assert_close(a: &[f64], b: &[f64], what: &str) {
    assert_eq!(a.len(), b.len(), "{what}: length");
    for (k, (x, y)) in a.iter().zip(b).enumerate() {
        assert!((x - y).abs() < 1e-9, "{what}: coordinate {k}: {x} vs {y}");
    }
}

#[test]
fn stats_match_naive_evaluator_undirected() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let spec = ModelSpec::parse(UNDIRECTED_MODEL).unwrap();
    for trial in 0..200 {
        let (data, z) = random_data(5, &mut rng);
        let model = Model::new(&spec, &z, false).unwrap();
        let density = rng.gen_range(0.0..1.0);
        let g = random_graph(5, false, density, &mut rng);
        let want = naive_undirected(&Naive::from(&g), &data);
        assert_close(&model.stats(&g).unwrap(), &want, &format!("trial {trial}"));
    }
}

#[test]
fn stats_match_naive_evaluator_directed() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let spec = ModelSpec::parse(DIRECTED_MODEL).unwrap();
    for trial in 0..200 {
        let (data, z) = random_data(5, &mut rng);
        let model = Model::new(&spec, &z, true).unwrap();
        let density = rng.gen_range(0.0..1.0);
        let g = random_graph(5, true, density, &mut rng);
        let want = naive_directed(&Naive::from(&g), &data);
        assert_close(&model.stats(&g).unwrap(), &want, &format!("trial {trial}"));
    }
}

#[test]
fn change_stats_are_differences_of_full_evaluations() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for (text, directed) in [(UNDIRECTED_MODEL, false), (DIRECTED_MODEL, true)] {
        let spec = ModelSpec::parse(text).unwrap();
        for _ in 0..500 {
            let (_, z) = random_data(6, &mut rng);
            let model = Model::new(&spec, &z, directed).unwrap();
            let g = random_graph(6, directed, rng.gen_range(0.0..1.0), &mut rng);
            let i = rng.gen_range(0..6);
            let j = (i + rng.gen_range(1..6)) % 6;
            let d = g.dyad(i, j).unwrap();
            let before = model.stats(&g).unwrap();
            let t = g.toggled(d);
            let after = model.stats(&t).unwrap();
            let diff: Vec<f64> = after.iter().zip(&before).map(|(a, b)| a - b).collect();
            let change = model.change_stats(&g, d).unwrap();
            assert_close(&change, &diff, "change vs difference");
            // reverse toggle negates
            let back = model.change_stats(&t, d).unwrap();
            let neg: Vec<f64> = change.iter().map(|v| -v).collect();
            assert_close(&back, &neg, "reverse toggle");
        }
    }
}

#[test]
fn nodematch_levels_sum_to_uniform() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let spec = ModelSpec::parse("nodematch(a)\nnodematch(a, diff)").unwrap();
    for _ in 0..50 {
        let (_, z) = random_data(12, &mut rng);
        let model = Model::new(&spec, &z, false).unwrap();
        let g = random_graph(12, false, 0.3, &mut rng);
        let s = model.stats(&g).unwrap();
        assert_eq!(s[0], s[1..].iter().sum::<f64>());
    }
}

#[test]
fn gwesp_at_zero_decay_is_integer() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let spec = ModelSpec::parse("edges\ngwesp(0, fixed)").unwrap();
    let z = NodeAttributes::empty(15);
    let model = Model::new(&spec, &z, false).unwrap();
    for _ in 0..50 {
        let g = random_graph(15, false, rng.gen_range(0.0..0.6), &mut rng);
        let s = model.stats(&g).unwrap();
        assert_eq!(s[1].fract(), 0.0);
        assert!(s[1] <= s[0]);
        // Adding an edge raises gwesp(0) by at most 1 + 2 * (its shared partners)
        // and never lowers it.
        for d in g.dyads().filter(|d| !g.get(*d)).take(10) {
            let c = model.change_stats(&g, d).unwrap()[1];
            assert!(c >= 0.0);
            assert!(c <= 1.0 + 2.0 * g.common_neighbors(d.i, d.j) as f64);
        }
    }
}

fn permute(g: &Graph, perm: &[usize]) -> Graph {
    // new node k is old node perm[k]
    let mut inv = vec![0; perm.len()];
    for (k, &p) in perm.iter().enumerate() {
        inv[p] = k;
    }
    Graph::from_edges(g.n(), g.is_directed(), g.edges().map(|d| (inv[d.i], inv[d.j]))).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn label_equivariance(seed in any::<u64>(), perm in Just((0..7).collect::<Vec<usize>>()).prop_shuffle()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (_, z) = random_data(7, &mut rng);
        for (text, directed) in [(UNDIRECTED_MODEL, false), (DIRECTED_MODEL, true)] {
            let spec = ModelSpec::parse(text).unwrap();
            let g = random_graph(7, directed, 0.4, &mut rng);
            let zp = z.permuted(&perm);
            let gp = permute(&g, &perm);
            let a = Model::new(&spec, &z, directed).unwrap().stats(&g).unwrap();
            let b = Model::new(&spec, &zp, directed).unwrap().stats(&gp).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn per_term_change_consistency(seed in any::<u64>(), term in 0usize..11) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let line = UNDIRECTED_MODEL.lines().nth(term).unwrap();
        let spec = ModelSpec::parse(line).unwrap();
        let (_, z) = random_data(9, &mut rng);
        let model = Model::new(&spec, &z, false).unwrap();
        let mut g = random_graph(9, false, rng.gen_range(0.0..0.8), &mut rng);
        let mut running = model.stats(&g).unwrap();
        for _ in 0..40 {
            let i = rng.gen_range(0..9);
            let j = (i + rng.gen_range(1..9)) % 9;
            let d = g.dyad(i, j).unwrap();
            let c = model.change_stats(&g, d).unwrap();
            g.toggle(d);
            for (r, v) in running.iter_mut().zip(&c) {
                *r += v;
            }
            let exact = model.stats(&g).unwrap();
            for (x, y) in running.iter().zip(&exact) {
                prop_assert!((x - y).abs() < 1e-8, "{} {} {}", line, x, y);
            }
        }
    }
}
