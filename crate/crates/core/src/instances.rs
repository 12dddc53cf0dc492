//! Seeded random small instances for solver-versus-oracle comparisons.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diffusion::MassVectors;
use crate::embeddings::SimilarityKind;
use crate::graph::{Edge, Graph, Node, NodeId};
use crate::weighting::{Combine, ProductBandwidths, SchemeKind, WeightScheme};

#[derive(Debug, Clone)]
pub struct RandomInstance {
    pub seed: u64,
    pub graph: Graph,
    pub scheme: WeightScheme,
    pub query: Vec<f64>,
    pub mass: MassVectors,
    pub seeds: Vec<NodeId>,
}

/// Connected graph on `n ∈ [min_n, max_n]` nodes (random spanning tree plus
/// extra edges), random embeddings and base weights, one of several
/// weighting schemes, and sources that overflow their own sink on every
/// seed while keeping total source mass below total capacity.
pub fn random_instance(seed: u64, min_n: usize, max_n: usize) -> RandomInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(min_n.max(2)..=max_n.max(min_n.max(2)));
    let d = 4;
    let nodes: Vec<Node> = (0..n)
        .map(|i| {
            let e = (0..d).map(|_| rng.random_range(-0.5..0.5)).collect();
            Node::new(format!("v{i}"), e)
        })
        .collect();
    let query: Vec<f64> = (0..d).map(|_| rng.random_range(-0.5..0.5)).collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut pairs = std::collections::BTreeSet::new();
    for i in 1..n {
        let parent = order[rng.random_range(0..i)];
        let (a, b) = (order[i].min(parent), order[i].max(parent));
        pairs.insert((a, b));
    }
    let density = rng.random_range(0.0..(4.0 / n as f64).min(0.5));
    for a in 0..n {
        for b in a + 1..n {
            if rng.random_bool(density) {
                pairs.insert((a, b));
            }
        }
    }
    let edges = pairs
        .into_iter()
        .map(|(a, b)| Edge::weighted(a, b, rng.random_range(0.5..2.0)))
        .collect();
    let graph = Graph::build(nodes, edges).expect("valid random graph");

    let rbf = SimilarityKind::Rbf {
        gamma: rng.random_range(0.1..0.6),
    };
    let scheme = match rng.random_range(0..5) {
        0 => WeightScheme::new(SchemeKind::Mean, rbf),
        1 => WeightScheme::new(SchemeKind::Hybrid { a: 1.0, b: 0.25 }, rbf),
        2 => WeightScheme::new(SchemeKind::Product, rbf),
        3 => WeightScheme::new(
            SchemeKind::Generic {
                a: 0.5,
                b: 1.0,
                c: 1.0,
                combine: Combine::Add,
            },
            rbf,
        ),
        _ => WeightScheme::rbf_product(ProductBandwidths {
            node_node: rng.random_range(0.05..0.3),
            first_query: rng.random_range(0.05..0.3),
            second_query: rng.random_range(0.05..0.3),
        }),
    };

    let unit_floor = rng.random_bool(0.7);
    let sinks: Vec<f64> = (0..n)
        .map(|_| {
            if unit_floor {
                rng.random_range(1.0..3.0)
            } else {
                rng.random_range(0.3..2.0)
            }
        })
        .collect();
    let total_sink: f64 = sinks.iter().sum();
    let k = rng.random_range(1..=(n / 5).clamp(1, 3));
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(&mut rng);
    let mut seeds: Vec<NodeId> = ids[..k].iter().map(|&i| NodeId(i)).collect();
    seeds.sort();
    let seed_sink: f64 = seeds.iter().map(|s| sinks[s.0]).sum();
    let budget = rng.random_range(0.1..0.4) * (total_sink - seed_sink);
    let mut delta = vec![0.0; n];
    for s in &seeds {
        delta[s.0] = sinks[s.0] + budget / k as f64;
    }

    RandomInstance {
        seed,
        graph,
        scheme,
        query,
        mass: MassVectors { delta, sinks },
        seeds,
    }
}
