//! Push-relabel coordinate descent on the flow-diffusion dual
//!
//! ```text
//! min_{x ≥ 0}  F(x) = ½ xᵀ L(q) x + xᵀ (T − Δ),     L(q) = B W̄(q) Bᵀ
//! ```
//!
//! The solver tracks the mass vector `m = Δ − L(q) x`, so the gradient is
//! `∇F = T − m`. A push on a node with excess `m_v − T_v > 0` sets
//! `x_v += excess / w_v` (exact coordinate minimization, `w_v = L_vv`),
//! returns `m_v` to `T_v` and spreads the excess over the neighbors in
//! proportion to their query-aware edge weights. Each push lowers `F` by
//! exactly `excess² / (2 w_v)`.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EdgeId, Graph, NodeId};
use crate::weighting::{QueryContext, WeightScheme};

pub const DEFAULT_EPSILON: f64 = 0.05;
pub const DEFAULT_MAX_ITERATIONS: u64 = 1_000_000;
pub const DEFAULT_CHECK_CADENCE: u64 = 100;
pub const DEFAULT_SUPPORT_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SinkMode {
    /// `T_v = deg(v)`.
    Degree,
    /// `T_v = cap` for every node.
    Uniform(f64),
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SourceMode {
    /// Every seed receives `α · Σ_u T_u`.
    AlphaTimesTotalSink,
    Explicit(Vec<f64>),
    /// The seeds share `(1 + β) · target_set_total` equally.
    RecoveryMass { beta: f64, target_set_total: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Selection {
    /// Uniformly random node among those with excess, from a seeded stream.
    UniformRandom { seed: u64 },
    /// First-in first-out over nodes as they acquire excess.
    Fifo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionConfig {
    pub alpha: f64,
    pub sink: SinkMode,
    pub source: SourceMode,
    /// Stop once the total excess drops to this value.
    pub epsilon: f64,
    pub max_iterations: u64,
    pub check_cadence: u64,
    pub selection: Selection,
    /// Nodes with `x_v` above this value form the support.
    pub support_threshold: f64,
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        DiffusionConfig::qa()
    }
}

impl DiffusionConfig {
    /// QA-style defaults: `α = 50`.
    pub fn qa() -> Self {
        DiffusionConfig {
            alpha: 50.0,
            sink: SinkMode::Degree,
            source: SourceMode::AlphaTimesTotalSink,
            epsilon: DEFAULT_EPSILON,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            check_cadence: DEFAULT_CHECK_CADENCE,
            selection: Selection::UniformRandom { seed: 0 },
            support_threshold: DEFAULT_SUPPORT_THRESHOLD,
        }
    }

    /// Path-style defaults: `α = 10`.
    pub fn path() -> Self {
        DiffusionConfig {
            alpha: 10.0,
            ..DiffusionConfig::qa()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Parameter(msg));
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.max_iterations < 1 {
            return bad("max_iterations must be at least 1".into());
        }
        if self.check_cadence < 1 {
            return bad("check_cadence must be at least 1".into());
        }
        if !(self.support_threshold >= 0.0) {
            return bad(format!("support_threshold must be >= 0, got {}", self.support_threshold));
        }
        match &self.sink {
            SinkMode::Uniform(c) if !(*c > 0.0 && c.is_finite()) => {
                return bad(format!("uniform sink capacity must be positive, got {c}"))
            }
            SinkMode::Explicit(t) if t.iter().any(|x| !(*x >= 0.0 && x.is_finite())) => {
                return bad("explicit sink capacities must be finite and >= 0".into())
            }
            _ => {}
        }
        match &self.source {
            SourceMode::Explicit(d) if d.iter().any(|x| !(*x >= 0.0 && x.is_finite())) => {
                bad("explicit source masses must be finite and >= 0".into())
            }
            SourceMode::RecoveryMass {
                beta,
                target_set_total,
            } if !(*beta > 0.0 && *target_set_total >= 0.0) => {
                bad(format!("recovery mass needs beta > 0 and target total >= 0, got {beta}, {target_set_total}"))
            }
            _ => Ok(()),
        }
    }

    /// Sink capacities `T` for `g`.
    pub fn sink_capacities(&self, g: &Graph) -> Result<Vec<f64>> {
        let n = g.node_count();
        Ok(match &self.sink {
            SinkMode::Degree => g.node_ids().map(|v| g.degree(v) as f64).collect(),
            SinkMode::Uniform(c) => vec![*c; n],
            SinkMode::Explicit(t) => {
                if t.len() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        found: t.len(),
                    });
                }
                t.clone()
            }
        })
    }

    /// Resolves sink capacities `T` and source masses `Δ` for `g`.
    pub fn resolve(&self, g: &Graph, seeds: &[NodeId]) -> Result<MassVectors> {
        self.validate()?;
        let n = g.node_count();
        if n == 0 {
            return Err(Error::EmptyGraph);
        }
        let sinks = self.sink_capacities(g)?;
        if let Some(&s) = seeds.iter().find(|s| !g.contains(**s)) {
            return Err(Error::UnknownNode(s));
        }
        let mut delta = vec![0.0; n];
        match &self.source {
            SourceMode::Explicit(d) => {
                if d.len() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        found: d.len(),
                    });
                }
                delta.clone_from(d);
            }
            SourceMode::AlphaTimesTotalSink => {
                let total: f64 = sinks.iter().sum();
                for s in seeds {
                    delta[s.0] = self.alpha * total;
                }
            }
            SourceMode::RecoveryMass {
                beta,
                target_set_total,
            } => {
                let distinct: BTreeSet<_> = seeds.iter().collect();
                let share = (1.0 + beta) * target_set_total / distinct.len().max(1) as f64;
                for s in distinct {
                    delta[s.0] = share;
                }
            }
        }
        if !delta.iter().any(|&d| d > 0.0) {
            return Err(Error::NoSeeds);
        }
        Ok(MassVectors { delta, sinks })
    }
}

/// Source masses `Δ` and sink capacities `T`, one entry per node.
#[derive(Debug, Clone, PartialEq)]
pub struct MassVectors {
    pub delta: Vec<f64>,
    pub sinks: Vec<f64>,
}

impl MassVectors {
    pub fn total_source(&self) -> f64 {
        self.delta.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Converged,
    IterationCap,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub iterations: u64,
    /// `(iteration, F(x))` at every convergence check and at exit.
    pub objective_trace: Vec<(u64, f64)>,
    /// `(iteration, Σ max(0, m_v − T_v))`, sampled alongside the objective.
    pub total_excess_trace: Vec<(u64, f64)>,
    /// Largest weighted degree among pushed nodes.
    pub gamma_hat: f64,
    /// Smallest edge weight among edges incident to pushed nodes.
    pub eta_hat: f64,
    /// Total excess left at exit.
    pub target_gap: f64,
    pub terminated_by: Termination,
    /// Nodes holding excess with no incident edges; their mass stays put.
    pub absorbed: Vec<NodeId>,
    /// Nodes whose weights were evaluated (pushed nodes and their neighbors).
    pub touched: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionResult {
    pub x: Vec<f64>,
    pub m: Vec<f64>,
    pub mass: MassVectors,
    pub flows: BTreeMap<(NodeId, NodeId), f64>,
    pub support: BTreeSet<NodeId>,
    pub report: ConvergenceReport,
}

impl DiffusionResult {
    pub fn objective(&self) -> f64 {
        self.report
            .objective_trace
            .last()
            .map_or(0.0, |&(_, f)| f)
    }
}

/// State handed to an observer after every push.
pub struct Iterate<'a> {
    pub iteration: u64,
    pub pushed: NodeId,
    pub x: &'a [f64],
    pub m: &'a [f64],
    /// Objective maintained incrementally by the solver.
    pub objective: f64,
}

/// The excess set with O(1) insert, removal and uniform sampling.
struct ActiveSet {
    items: Vec<usize>,
    pos: Vec<usize>,
    queue: VecDeque<usize>,
    fifo: bool,
}

impl ActiveSet {
    const ABSENT: usize = usize::MAX;

    fn new(n: usize, fifo: bool) -> Self {
        ActiveSet {
            items: Vec::new(),
            pos: vec![Self::ABSENT; n],
            queue: VecDeque::new(),
            fifo,
        }
    }

    fn contains(&self, v: usize) -> bool {
        self.pos[v] != Self::ABSENT
    }

    fn insert(&mut self, v: usize) {
        if self.contains(v) {
            return;
        }
        if self.fifo {
            self.pos[v] = 0;
            self.queue.push_back(v);
        } else {
            self.pos[v] = self.items.len();
            self.items.push(v);
        }
    }

    fn is_empty(&self) -> bool {
        if self.fifo {
            self.queue.is_empty()
        } else {
            self.items.is_empty()
        }
    }

    fn take<R: Rng>(&mut self, rng: &mut R) -> usize {
        if self.fifo {
            let v = self.queue.pop_front().expect("non-empty");
            self.pos[v] = Self::ABSENT;
            return v;
        }
        let i = rng.random_range(0..self.items.len());
        let v = self.items.swap_remove(i);
        if i < self.items.len() {
            self.pos[self.items[i]] = i;
        }
        self.pos[v] = Self::ABSENT;
        v
    }

    fn iter(&self) -> Box<dyn Iterator<Item = usize> + '_> {
        if self.fifo {
            Box::new(self.queue.iter().copied())
        } else {
            Box::new(self.items.iter().copied())
        }
    }
}

struct NeighborWeights {
    total: f64,
    weights: Vec<f64>,
}

pub fn diffuse(
    g: &Graph,
    scheme: &WeightScheme,
    ctx: &mut QueryContext,
    seeds: &[NodeId],
    cfg: &DiffusionConfig,
) -> Result<DiffusionResult> {
    diffuse_observed(g, scheme, ctx, seeds, cfg, |_| {})
}

/// As [`diffuse`], calling `observer` after every push.
pub fn diffuse_observed<F>(
    g: &Graph,
    scheme: &WeightScheme,
    ctx: &mut QueryContext,
    seeds: &[NodeId],
    cfg: &DiffusionConfig,
    mut observer: F,
) -> Result<DiffusionResult>
where
    F: FnMut(&Iterate<'_>),
{
    if g.is_empty() {
        return Err(Error::EmptyGraph);
    }
    scheme.validate()?;
    if ctx.query().len() != g.dimension() {
        return Err(Error::DimensionMismatch {
            expected: g.dimension(),
            found: ctx.query().len(),
        });
    }
    if seeds.is_empty() && !matches!(cfg.source, SourceMode::Explicit(_)) {
        return Err(Error::NoSeeds);
    }
    let mass = cfg.resolve(g, seeds)?;
    let n = g.node_count();
    let sinks = &mass.sinks;
    let mut m = mass.delta.clone();
    let mut x = vec![0.0; n];

    let (mut rng, fifo) = match cfg.selection {
        Selection::UniformRandom { seed } => (ChaCha8Rng::seed_from_u64(seed), false),
        Selection::Fifo => (ChaCha8Rng::seed_from_u64(0), true),
    };
    let mut active = ActiveSet::new(n, fifo);
    for v in 0..n {
        if m[v] > sinks[v] {
            active.insert(v);
        }
    }

    let mut cache: Vec<Option<NeighborWeights>> = (0..n).map(|_| None).collect();
    let mut absorbed = vec![false; n];
    let mut touched = vec![false; n];
    let mut objective = 0.0;
    let mut gamma_hat: f64 = 0.0;
    let mut eta_hat = f64::INFINITY;
    let mut objective_trace = Vec::new();
    let mut excess_trace = Vec::new();
    let mut iterations: u64 = 0;

    let total_excess = |active: &ActiveSet, m: &[f64]| -> f64 {
        active.iter().map(|v| (m[v] - sinks[v]).max(0.0)).fold(0.0, |a, b| a + b)
    };

    let terminated_by = loop {
        if iterations % cfg.check_cadence == 0 || active.is_empty() {
            let excess = total_excess(&active, &m);
            objective_trace.push((iterations, objective));
            excess_trace.push((iterations, excess));
            if excess <= cfg.epsilon || active.is_empty() {
                break Termination::Converged;
            }
        }
        if iterations >= cfg.max_iterations {
            let excess = total_excess(&active, &m);
            if objective_trace.last().map(|t| t.0) != Some(iterations) {
                objective_trace.push((iterations, objective));
                excess_trace.push((iterations, excess));
            }
            break Termination::IterationCap;
        }

        let v = active.take(&mut rng);
        let excess = m[v] - sinks[v];
        let nw = cache[v].get_or_insert_with(|| {
            touched[v] = true;
            let weights: Vec<f64> = g
                .neighbors(NodeId(v))
                .iter()
                .map(|&(u, e)| {
                    touched[u.0] = true;
                    ctx.weight_by_id(scheme, g, e)
                })
                .collect();
            let total = weights.iter().sum();
            NeighborWeights { total, weights }
        });
        iterations += 1;

        if nw.weights.is_empty() {
            absorbed[v] = true;
            observer(&Iterate {
                iteration: iterations,
                pushed: NodeId(v),
                x: &x,
                m: &m,
                objective,
            });
            continue;
        }

        let w_v = nw.total;
        gamma_hat = gamma_hat.max(w_v);
        for &w in &nw.weights {
            eta_hat = eta_hat.min(w);
        }
        x[v] += excess / w_v;
        m[v] = sinks[v];
        objective -= excess * excess / (2.0 * w_v);
        for (&(u, _), &w) in g.neighbors(NodeId(v)).iter().zip(&nw.weights) {
            let u = u.0;
            m[u] += excess * w / w_v;
            if m[u] > sinks[u] && !absorbed[u] {
                active.insert(u);
            }
        }
        observer(&Iterate {
            iteration: iterations,
            pushed: NodeId(v),
            x: &x,
            m: &m,
            objective,
        });
    };

    let target_gap = excess_trace.last().map_or(0.0, |&(_, e)| e);
    let support = x
        .iter()
        .enumerate()
        .filter(|(_, &xv)| xv > cfg.support_threshold)
        .map(|(v, _)| NodeId(v))
        .collect();
    let flows = extract_flows(g, &x, scheme, ctx);
    Ok(DiffusionResult {
        x,
        m,
        mass,
        flows,
        support,
        report: ConvergenceReport {
            iterations,
            objective_trace,
            total_excess_trace: excess_trace,
            gamma_hat,
            eta_hat: if eta_hat.is_finite() { eta_hat } else { 0.0 },
            target_gap,
            terminated_by,
            absorbed: (0..n).filter(|&v| absorbed[v]).map(NodeId).collect(),
            touched: touched.iter().filter(|&&t| t).count(),
        },
    })
}

/// `L(q) x` by a single pass over the edges.
pub fn laplacian_apply(g: &Graph, scheme: &WeightScheme, ctx: &mut QueryContext, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; g.node_count()];
    for (k, e) in g.edges().iter().enumerate() {
        let (a, b) = (e.u.0, e.v.0);
        if x[a] == 0.0 && x[b] == 0.0 {
            continue;
        }
        let w = ctx.weight_by_id(scheme, g, EdgeId(k));
        let d = w * (x[a] - x[b]);
        out[a] += d;
        out[b] -= d;
    }
    out
}

/// `F(x) = ½ Σ_{(u,v)} w̄ (x_u − x_v)² + Σ_v x_v (T_v − Δ_v)`.
pub fn dual_objective(
    g: &Graph,
    scheme: &WeightScheme,
    ctx: &mut QueryContext,
    x: &[f64],
    mass: &MassVectors,
) -> Result<f64> {
    let n = g.node_count();
    for len in [x.len(), mass.delta.len(), mass.sinks.len()] {
        if len != n {
            return Err(Error::DimensionMismatch { expected: n, found: len });
        }
    }
    if let Some((i, &xi)) = x.iter().enumerate().find(|(_, &xi)| !(xi >= 0.0)) {
        return Err(Error::NegativeX(i, xi));
    }
    let mut quad = 0.0;
    for (k, e) in g.edges().iter().enumerate() {
        let d = x[e.u.0] - x[e.v.0];
        if d != 0.0 {
            quad += ctx.weight_by_id(scheme, g, EdgeId(k)) * d * d;
        }
    }
    let linear: f64 = (0..n).map(|v| x[v] * (mass.sinks[v] - mass.delta[v])).sum();
    Ok(0.5 * quad + linear)
}

/// `‖m − (Δ − L(q) x)‖_∞` recomputed from scratch.
pub fn gradient_mass_identity_check(
    g: &Graph,
    scheme: &WeightScheme,
    ctx: &mut QueryContext,
    x: &[f64],
    delta: &[f64],
    m: &[f64],
) -> f64 {
    let lx = laplacian_apply(g, scheme, ctx, x);
    (0..g.node_count())
        .map(|v| (m[v] - (delta[v] - lx[v])).abs())
        .fold(0.0, f64::max)
}

/// Edge flows `w̄ (x_u − x_v)` with `u < v`; positive values move mass from
/// the lower id to the higher id. Edges with both endpoints at `x = 0` carry
/// no flow and are omitted.
pub fn extract_flows(
    g: &Graph,
    x: &[f64],
    scheme: &WeightScheme,
    ctx: &mut QueryContext,
) -> BTreeMap<(NodeId, NodeId), f64> {
    let mut flows = BTreeMap::new();
    for v in 0..g.node_count() {
        if x[v] == 0.0 {
            continue;
        }
        for &(_, e) in g.neighbors(NodeId(v)) {
            let edge = g.edge(e);
            let key = (edge.u, edge.v);
            if flows.contains_key(&key) {
                continue;
            }
            let w = ctx.weight_by_id(scheme, g, e);
            let f = w * (x[edge.u.0] - x[edge.v.0]);
            flows.insert(key, if f == 0.0 { 0.0 } else { f });
        }
    }
    flows
}
