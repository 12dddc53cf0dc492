use std::collections::BTreeSet;

use qafd::diffusion::DiffusionConfig;
use qafd::graph::NodeId;
use qafd::synth::{generate_instance, run_recovery_suite, SynthModelParams};

fn within_edges(p: &SynthModelParams) -> (usize, qafd::synth::SynthInstance) {
    let inst = generate_instance(p).unwrap();
    let count = inst
        .graph
        .edges()
        .iter()
        .filter(|e| inst.relevant.contains(&e.u) && inst.relevant.contains(&e.v))
        .count();
    (count, inst)
}

#[test]
fn within_block_edge_count_concentrates() {
    let base = SynthModelParams {
        n: 40,
        r_k: 10,
        rho1: 0.5,
        ..SynthModelParams::default()
    };
    let trials = 200;
    let counts: Vec<f64> = (0..trials)
        .map(|s| within_edges(&SynthModelParams { seed: s, ..base.clone() }).0 as f64)
        .collect();
    let pairs = 45.0;
    let mean = pairs * 0.5;
    let sd = (pairs * 0.25f64).sqrt();
    let empirical = counts.iter().sum::<f64>() / trials as f64;
    assert!(
        (empirical - mean).abs() <= 3.0 * sd / (trials as f64).sqrt(),
        "{empirical} vs {mean}"
    );
    let var = counts.iter().map(|c| (c - empirical).powi(2)).sum::<f64>() / (trials as f64 - 1.0);
    assert!((var.sqrt() - sd).abs() < 0.2 * sd);
}

#[test]
fn boundary_and_background_rates() {
    let p = SynthModelParams {
        n: 120,
        r_k: 20,
        rho1: 0.3,
        rho2: 0.1,
        background: 0.05,
        ..SynthModelParams::default()
    };
    let (mut cross, mut bg) = (0usize, 0usize);
    let trials = 30;
    for s in 0..trials {
        let inst = generate_instance(&SynthModelParams { seed: s, ..p.clone() }).unwrap();
        for e in inst.graph.edges() {
            match (inst.relevant.contains(&e.u), inst.relevant.contains(&e.v)) {
                (true, true) => {}
                (false, false) => bg += 1,
                _ => cross += 1,
            }
        }
    }
    let cross_pairs = (20 * 100 * trials) as f64;
    let bg_pairs = (100 * 99 / 2 * trials) as f64;
    let check = |k: usize, n: f64, q: f64| {
        let sd = (n * q * (1.0 - q)).sqrt();
        assert!((k as f64 - n * q).abs() <= 4.0 * sd, "{k} vs {}", n * q);
    };
    check(cross, cross_pairs, 0.1);
    check(bg, bg_pairs, 0.05);
}

fn connected(nodes: &BTreeSet<NodeId>, edges: impl Iterator<Item = (usize, usize)>, n: usize) -> bool {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for (a, b) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        parent[ra] = rb;
    }
    let mut roots = nodes.iter().map(|v| find(&mut parent, v.0));
    let first = roots.next();
    roots.all(|r| Some(r) == first)
}

#[test]
fn plant_connected_above_threshold() {
    // 4 ln(100) / 99 ≈ 0.186, so 0.3 sits comfortably above the condition.
    let p = SynthModelParams {
        n: 150,
        r_k: 100,
        rho1: 0.3,
        ..SynthModelParams::default()
    };
    assert!(p.rho1 >= 4.0 * (p.r_k as f64).ln() / (p.r_k as f64 - 1.0));
    let trials = 100;
    let ok = (0..trials)
        .filter(|&s| {
            let inst = generate_instance(&SynthModelParams { seed: s, ..p.clone() }).unwrap();
            let inside = inst
                .graph
                .edges()
                .iter()
                .filter(|e| inst.relevant.contains(&e.u) && inst.relevant.contains(&e.v))
                .map(|e| (e.u.0, e.v.0));
            connected(&inst.relevant, inside, p.n)
        })
        .count();
    assert!(ok >= 95, "{ok}/{trials}");
}

#[test]
fn no_signal_control_arm() {
    let p = SynthModelParams {
        mu_gap: 0.0,
        n: 100,
        ..SynthModelParams::default()
    };
    let cfg = DiffusionConfig {
        max_iterations: 200_000,
        ..DiffusionConfig::qa()
    };
    let s = run_recovery_suite(&p, 20, &cfg).unwrap();
    println!(
        "mu_gap = 0: recovery rate {:.2}, seed-in-plant rate {:.2}, leakage median {:.3}",
        s.recovery_rate, s.seed_in_plant_rate, s.leakage_quantiles[1]
    );
    assert_eq!(s.trials, 20);
}
