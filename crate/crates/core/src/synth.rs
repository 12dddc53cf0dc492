//! Contextual random-graph model with a planted query-relevant set, and the
//! recovery experiments run on it.
//!
//! Edges are drawn independently: `rho1` inside the planted set `R`, `rho2`
//! across its boundary and `background` among the remaining pairs. Planted
//! nodes share the query mean; every other node gets a mean at distance
//! exactly `mu_gap` from it along a random orthonormal frame. Weights are the
//! three-factor RBF product.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffusion::{diffuse, DiffusionConfig, Selection, SourceMode, Termination};
use crate::embeddings::{sample_embeddings, SimilarityKind};
use crate::error::{Error, Result};
use crate::graph::{Edge, Graph, Node, NodeId};
use crate::seeding::{score_nodes, select_seeds, KeywordSet};
use crate::weighting::{ProductBandwidths, QueryContext, WeightScheme};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthModelParams {
    pub n: usize,
    pub r_k: usize,
    pub rho1: f64,
    pub rho2: f64,
    pub background: f64,
    pub d: usize,
    pub mu_gap: f64,
    /// Per-coordinate noise scale used when `sigma_per_coord` is absent.
    pub sigma: f64,
    pub sigma_per_coord: Option<Vec<f64>>,
    pub gammas: [f64; 3],
    pub beta: f64,
    pub seed: u64,
    /// Draw the query embedding with the same noise model as nodes.
    pub query_noise: bool,
}

impl Default for SynthModelParams {
    /// The desk-scale regime used by the recovery acceptance checks.
    fn default() -> Self {
        SynthModelParams {
            n: 200,
            r_k: 10,
            rho1: 0.6,
            rho2: 0.05,
            background: 0.02,
            d: 32,
            mu_gap: 4.0,
            sigma: 0.05,
            sigma_per_coord: None,
            gammas: [0.5, 0.5, 0.5],
            beta: 0.5,
            seed: 0,
            query_noise: true,
        }
    }
}

impl SynthModelParams {
    pub fn sigmas(&self) -> Vec<f64> {
        self.sigma_per_coord
            .clone()
            .unwrap_or_else(|| vec![self.sigma; self.d])
    }

    /// `σ̂ = max_ℓ σ_ℓ`.
    pub fn sigma_hat(&self) -> f64 {
        self.sigmas().into_iter().fold(0.0, f64::max)
    }

    pub fn bandwidths(&self) -> ProductBandwidths {
        ProductBandwidths {
            node_node: self.gammas[0],
            first_query: self.gammas[1],
            second_query: self.gammas[2],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Parameter(m));
        if self.n == 0 || self.d == 0 {
            return bad("n and d must be positive".into());
        }
        if self.r_k == 0 || self.r_k > self.n {
            return bad(format!("r_k must be in 1..=n, got {}", self.r_k));
        }
        for (name, p) in [("rho1", self.rho1), ("rho2", self.rho2), ("background", self.background)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must be a probability, got {p}"));
            }
        }
        if !(self.mu_gap >= 0.0 && self.mu_gap.is_finite()) {
            return bad(format!("mu_gap must be >= 0, got {}", self.mu_gap));
        }
        let sig = self.sigmas();
        if sig.len() != self.d {
            return bad(format!("sigma_per_coord has {} entries, expected {}", sig.len(), self.d));
        }
        if let Some(&s) = sig.iter().find(|s| !(**s >= 0.0)) {
            return Err(Error::NegativeSigma(s));
        }
        for g in self.gammas {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::NegativeBandwidth(g));
            }
        }
        if !(self.beta > 0.0) {
            return bad(format!("beta must be positive, got {}", self.beta));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthInstance {
    pub graph: Graph,
    pub query: Vec<f64>,
    pub relevant: BTreeSet<NodeId>,
    pub scheme: WeightScheme,
}

impl SynthInstance {
    pub fn context(&self) -> QueryContext {
        QueryContext::new(self.query.clone())
    }
}

/// Gram-Schmidt on Gaussian vectors.
fn orthonormal_frame<R: Rng>(rng: &mut R, d: usize) -> Vec<Vec<f64>> {
    let mut frame: Vec<Vec<f64>> = Vec::with_capacity(d);
    while frame.len() < d {
        let mut v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        for q in &frame {
            let proj: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
            for (vi, qi) in v.iter_mut().zip(q) {
                *vi -= proj * qi;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            frame.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    frame
}

pub fn generate_instance(p: &SynthModelParams) -> Result<SynthInstance> {
    p.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let d = p.d;

    let frame = orthonormal_frame(&mut rng, d);
    let mu_q: Vec<f64> = frame[0].iter().map(|x| p.mu_gap * x).collect();
    let directions: Vec<&Vec<f64>> = if d == 1 { vec![&frame[0]] } else { frame[1..].iter().collect() };
    let mut means = vec![mu_q.clone()];
    for dir in &directions {
        for sign in [1.0, -1.0] {
            means.push(mu_q.iter().zip(dir.iter()).map(|(m, x)| m + sign * p.mu_gap * x).collect());
        }
    }

    let mut order: Vec<usize> = (0..p.n).collect();
    order.shuffle(&mut rng);
    let relevant: BTreeSet<NodeId> = order[..p.r_k].iter().map(|&v| NodeId(v)).collect();
    let groups = means.len() - 1;
    let mut next_group = 0;
    let assignment: Vec<usize> = (0..p.n)
        .map(|v| {
            if relevant.contains(&NodeId(v)) {
                0
            } else {
                next_group += 1;
                1 + (next_group - 1) % groups
            }
        })
        .collect();

    let sigmas = p.sigmas();
    let embeddings = sample_embeddings(&mut rng, &means, &sigmas, &assignment)?;
    let query = if p.query_noise {
        sample_embeddings(&mut rng, &means, &sigmas, &[0])?.remove(0)
    } else {
        mu_q
    };

    let is_rel: Vec<bool> = (0..p.n).map(|v| relevant.contains(&NodeId(v))).collect();
    let mut edges = Vec::new();
    for u in 0..p.n {
        for v in u + 1..p.n {
            let prob = match (is_rel[u], is_rel[v]) {
                (true, true) => p.rho1,
                (false, false) => p.background,
                _ => p.rho2,
            };
            if rng.random_bool(prob) {
                edges.push(Edge::new(u, v));
            }
        }
    }
    let nodes = embeddings
        .into_iter()
        .enumerate()
        .map(|(v, e)| Node::new(format!("s{v}"), e))
        .collect();
    let graph = Graph::build(nodes, edges)?;
    Ok(SynthInstance {
        graph,
        query,
        relevant,
        scheme: WeightScheme::rbf_product(p.bandwidths()),
    })
}

/// Realized query-aware weights split by edge class.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightSeparation {
    pub within: Vec<f64>,
    pub boundary: Vec<f64>,
}

pub fn weight_separation(inst: &SynthInstance, ctx: &mut QueryContext) -> WeightSeparation {
    let mut out = WeightSeparation::default();
    for (k, e) in inst.graph.edges().iter().enumerate() {
        let (a, b) = (inst.relevant.contains(&e.u), inst.relevant.contains(&e.v));
        if !(a || b) {
            continue;
        }
        let w = ctx.weight_by_id(&inst.scheme, &inst.graph, crate::graph::EdgeId(k));
        if a && b {
            out.within.push(w);
        } else {
            out.boundary.push(w);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryOutcome {
    pub trial_seed: u64,
    /// `R ⊆ supp(x)`.
    pub full_recovery: bool,
    /// `Σ_{supp \ R} T_u / Σ_R T_u`.
    pub leakage_ratio: f64,
    pub support_size: usize,
    pub seed_in_plant: bool,
    pub iterations: u64,
    pub terminated_by: Termination,
    pub within_median: f64,
    pub boundary_median: f64,
    #[serde(skip)]
    pub separation: WeightSeparation,
}

pub fn run_recovery_trial(p: &SynthModelParams, cfg: &DiffusionConfig) -> Result<RecoveryOutcome> {
    let inst = generate_instance(p)?;
    let g = &inst.graph;
    let mut ctx = inst.context();

    let kw = KeywordSet::from_query("query", inst.query.clone());
    let scores = score_nodes(g, &kw, SimilarityKind::Rbf { gamma: p.gammas[1] })?;
    let seeds = select_seeds(&scores.scores, 1)?.seeds;

    cfg.validate()?;
    let sinks = cfg.sink_capacities(g)?;
    let target_total: f64 = inst.relevant.iter().map(|v| sinks[v.0]).sum();
    let trial_cfg = DiffusionConfig {
        source: SourceMode::RecoveryMass {
            beta: p.beta,
            target_set_total: target_total,
        },
        ..cfg.clone()
    };
    let result = diffuse(g, &inst.scheme, &mut ctx, &seeds, &trial_cfg)?;

    let full_recovery = inst.relevant.is_subset(&result.support);
    let leaked: f64 = result
        .support
        .difference(&inst.relevant)
        .map(|v| sinks[v.0])
        .fold(0.0, |a, b| a + b);
    let leakage_ratio = if target_total > 0.0 { leaked / target_total } else { 0.0 };
    let separation = weight_separation(&inst, &mut ctx);
    Ok(RecoveryOutcome {
        trial_seed: p.seed,
        full_recovery,
        leakage_ratio,
        support_size: result.support.len(),
        seed_in_plant: inst.relevant.contains(&seeds[0]),
        iterations: result.report.iterations,
        terminated_by: result.report.terminated_by,
        within_median: median(&separation.within),
        boundary_median: median(&separation.boundary),
        separation,
    })
}

/// PRNG stream for trial `index` of a suite seeded with `suite_seed`.
pub fn trial_seed(suite_seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = suite_seed
        .wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Trial `index` of a suite: model and selection seeds both derive from
/// `trial_seed(p.seed, index)`.
pub fn trial_inputs(
    p: &SynthModelParams,
    cfg: &DiffusionConfig,
    index: u64,
) -> (SynthModelParams, DiffusionConfig) {
    let s = trial_seed(p.seed, index);
    let params = SynthModelParams { seed: s, ..p.clone() };
    let mut cfg = cfg.clone();
    if let Selection::UniformRandom { .. } = cfg.selection {
        cfg.selection = Selection::UniformRandom { seed: s };
    }
    (params, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoverySummary {
    pub trials: usize,
    pub beta: f64,
    pub recovery_rate: f64,
    pub leakage_within_beta_rate: f64,
    /// Minimum, median, 95th percentile and maximum leakage ratio.
    pub leakage_quantiles: [f64; 4],
    /// Median over all within-plant edges of all trials.
    pub within_weight_median: f64,
    pub boundary_weight_median: f64,
    pub mean_support_size: f64,
    pub seed_in_plant_rate: f64,
    pub capped_trials: usize,
    pub outcomes: Vec<RecoveryOutcome>,
}

pub fn run_recovery_suite(
    p: &SynthModelParams,
    trials: usize,
    cfg: &DiffusionConfig,
) -> Result<RecoverySummary> {
    if trials == 0 {
        return Err(Error::Parameter("trials must be at least 1".into()));
    }
    let outcomes: Vec<RecoveryOutcome> = (0..trials as u64)
        .into_par_iter()
        .map(|i| {
            let (params, cfg) = trial_inputs(p, cfg, i);
            run_recovery_trial(&params, &cfg)
        })
        .collect::<Result<_>>()?;
    Ok(summarize(p.beta, outcomes))
}

pub fn summarize(beta: f64, outcomes: Vec<RecoveryOutcome>) -> RecoverySummary {
    let t = outcomes.len() as f64;
    let rate = |f: &dyn Fn(&RecoveryOutcome) -> bool| outcomes.iter().filter(|o| f(o)).count() as f64 / t;
    let mut leak: Vec<f64> = outcomes.iter().map(|o| o.leakage_ratio).collect();
    leak.sort_by(f64::total_cmp);
    let within: Vec<f64> = outcomes.iter().flat_map(|o| o.separation.within.iter().copied()).collect();
    let boundary: Vec<f64> = outcomes.iter().flat_map(|o| o.separation.boundary.iter().copied()).collect();
    RecoverySummary {
        trials: outcomes.len(),
        beta,
        recovery_rate: rate(&|o| o.full_recovery),
        leakage_within_beta_rate: rate(&|o| o.leakage_ratio <= beta),
        leakage_quantiles: [
            leak[0],
            quantile_sorted(&leak, 0.5),
            quantile_sorted(&leak, 0.95),
            leak[leak.len() - 1],
        ],
        within_weight_median: median(&within),
        boundary_weight_median: median(&boundary),
        mean_support_size: outcomes.iter().map(|o| o.support_size as f64).sum::<f64>() / t,
        seed_in_plant_rate: rate(&|o| o.seed_in_plant),
        capped_trials: outcomes
            .iter()
            .filter(|o| o.terminated_by == Termination::IterationCap)
            .count(),
        outcomes,
    }
}

impl RecoverySummary {
    /// One tab-separated row per trial followed by a `key<TAB>value`
    /// aggregate block.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str("trial\ttrial_seed\tfull_recovery\tleakage_ratio\tsupport_size\tseed_in_plant\titerations\tterminated_by\twithin_median\tboundary_median\n");
        for (i, o) in self.outcomes.iter().enumerate() {
            let _ = writeln!(
                s,
                "{i}\t{}\t{}\t{}\t{}\t{}\t{}\t{:?}\t{}\t{}",
                o.trial_seed,
                o.full_recovery,
                o.leakage_ratio,
                o.support_size,
                o.seed_in_plant,
                o.iterations,
                o.terminated_by,
                o.within_median,
                o.boundary_median
            );
        }
        s.push('\n');
        let q = self.leakage_quantiles;
        for (k, v) in [
            ("trials", self.trials.to_string()),
            ("beta", self.beta.to_string()),
            ("recovery_rate", self.recovery_rate.to_string()),
            ("leakage_within_beta_rate", self.leakage_within_beta_rate.to_string()),
            ("leakage_min", q[0].to_string()),
            ("leakage_median", q[1].to_string()),
            ("leakage_p95", q[2].to_string()),
            ("leakage_max", q[3].to_string()),
            ("within_weight_median", self.within_weight_median.to_string()),
            ("boundary_weight_median", self.boundary_weight_median.to_string()),
            ("mean_support_size", self.mean_support_size.to_string()),
            ("seed_in_plant_rate", self.seed_in_plant_rate.to_string()),
            ("capped_trials", self.capped_trials.to_string()),
        ] {
            let _ = writeln!(s, "{k}\t{v}");
        }
        s
    }
}

/// Median (mean of the two middle values for even counts); NaN when empty.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Nearest-rank quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> SynthModelParams {
        SynthModelParams {
            n: 40,
            r_k: 6,
            d: 8,
            seed,
            ..SynthModelParams::default()
        }
    }

    #[test]
    fn clique_plant() {
        let p = SynthModelParams {
            rho1: 1.0,
            rho2: 0.0,
            background: 0.0,
            ..small(3)
        };
        let inst = generate_instance(&p).unwrap();
        let g = &inst.graph;
        for e in g.edges() {
            assert!(inst.relevant.contains(&e.u) && inst.relevant.contains(&e.v));
        }
        assert_eq!(g.edge_count(), 6 * 5 / 2);
    }

    #[test]
    fn noiseless_plant_matches_query() {
        let p = SynthModelParams {
            sigma: 0.0,
            ..small(5)
        };
        let inst = generate_instance(&p).unwrap();
        for v in &inst.relevant {
            assert_eq!(inst.graph.embedding(*v), inst.query.as_slice());
        }
        for v in inst.graph.node_ids().filter(|v| !inst.relevant.contains(v)) {
            let d2: f64 = crate::embeddings::squared_distance(inst.graph.embedding(v), &inst.query);
            assert!((d2.sqrt() - p.mu_gap).abs() < 1e-9);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_instance(&small(9)).unwrap();
        let b = generate_instance(&small(9)).unwrap();
        assert_eq!(a.graph, b.graph);
        assert_eq!(a.query, b.query);
        assert_eq!(a.relevant, b.relevant);
    }

    #[test]
    fn parameter_errors() {
        let bad = SynthModelParams { r_k: 0, ..small(1) };
        assert!(generate_instance(&bad).is_err());
        let bad = SynthModelParams { rho1: 1.5, ..small(1) };
        assert!(generate_instance(&bad).is_err());
        let bad = SynthModelParams { sigma: -0.1, ..small(1) };
        assert_eq!(generate_instance(&bad).unwrap_err(), Error::NegativeSigma(-0.1));
    }

    #[test]
    fn clique_plant_recovers_without_leakage() {
        let p = SynthModelParams {
            rho1: 1.0,
            rho2: 0.0,
            background: 0.0,
            sigma: 0.0,
            ..small(2)
        };
        let o = run_recovery_trial(&p, &DiffusionConfig::qa()).unwrap();
        assert!(o.full_recovery);
        assert_eq!(o.leakage_ratio, 0.0);
        assert_eq!(o.support_size, 6);
    }

    #[test]
    fn single_trial_summary_is_that_trial() {
        let p = SynthModelParams { n: 60, ..small(4) };
        let cfg = DiffusionConfig { max_iterations: 20_000, ..DiffusionConfig::qa() };
        let s = run_recovery_suite(&p, 1, &cfg).unwrap();
        let (tp, tc) = trial_inputs(&p, &cfg, 0);
        let o = run_recovery_trial(&tp, &tc).unwrap();
        assert_eq!(s.outcomes, vec![o.clone()]);
        assert_eq!(s.recovery_rate, if o.full_recovery { 1.0 } else { 0.0 });
        assert_eq!(s.leakage_quantiles, [o.leakage_ratio; 4]);
        assert_eq!(s.within_weight_median, o.within_median);
    }

    #[test]
    fn suite_is_deterministic() {
        let p = small(8);
        let cfg = DiffusionConfig { max_iterations: 5_000, ..DiffusionConfig::qa() };
        let a = run_recovery_suite(&p, 4, &cfg).unwrap();
        let b = run_recovery_suite(&p, 4, &cfg).unwrap();
        assert_eq!(a.to_text(), b.to_text());
        // Parallel and serial evaluation agree.
        let serial: Vec<_> = (0..4)
            .map(|i| {
                let (tp, tc) = trial_inputs(&p, &cfg, i);
                run_recovery_trial(&tp, &tc).unwrap()
            })
            .collect();
        assert_eq!(summarize(p.beta, serial).to_text(), a.to_text());
    }

    #[test]
    fn median_and_quantiles() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
        let s = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0];
        assert_eq!(quantile_sorted(&s, 0.95), 10.0);
        assert_eq!(quantile_sorted(&s, 0.5), 5.0);
    }
}
