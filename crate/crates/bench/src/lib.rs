// SPDX-License-Identifier: Apache-2.0

//! Fixtures shared by the benchmarks.

use dpergm::attributes::NodeAttributes;
use dpergm::graph::Graph;
use dpergm::terms::{Model, ModelSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random undirected graph with independent edges.
pub fn random_graph(n: usize, density: f64, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = Graph::new(n, false).expect("n > 0");
    for d in g.dyads().collect::<Vec<_>>() {
        if rng.gen::<f64>() < density {
            g.set(d, true);
        }
    }
    g
}

/// Structural model with one categorical covariate `c` on `n` nodes.
pub fn structural_model(n: usize) -> (Model, NodeAttributes) {
    let labels: Vec<&str> = (0..n).map(|i| if i % 3 == 0 { "a" } else { "b" }).collect();
    let z = NodeAttributes::empty(n)
        .with_categorical("c", &labels)
        .expect("n labels");
    let spec = ModelSpec::parse("edges\ngwesp(0.5, fixed)\ndegreepopularity\nnodematch(c)").expect("valid model");
    let m = Model::new(&spec, &z, false).expect("terms resolve");
    (m, z)
}
