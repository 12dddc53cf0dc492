//! Query-aware edge weights, evaluated lazily and memoized per query.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::embeddings::{squared_distance, SimilarityKind};
use crate::error::{Error, Result};
use crate::graph::{EdgeId, Graph, NodeId};

pub const DEFAULT_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Combine {
    Add,
    Mul,
}

impl Combine {
    #[inline]
    fn apply(self, x: f64, y: f64) -> f64 {
        match self {
            Combine::Add => x + y,
            Combine::Mul => x * y,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SchemeKind {
    /// `(s_uv + s_uq + s_vq) / 3`
    Mean,
    /// `s_uv · s_uq · s_vq`
    Product,
    /// `s_uv · (a + b (s_uq + s_vq))`
    Hybrid { a: f64, b: f64 },
    /// `c · s_uv ∘ (a + b (s_uq ∘ s_vq))`
    Generic { a: f64, b: f64, c: f64, combine: Combine },
}

/// Separate RBF bandwidths for the three Product factors: node-node,
/// lower-id endpoint vs. query, higher-id endpoint vs. query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProductBandwidths {
    pub node_node: f64,
    pub first_query: f64,
    pub second_query: f64,
}

impl ProductBandwidths {
    pub fn uniform(gamma: f64) -> Self {
        ProductBandwidths {
            node_node: gamma,
            first_query: gamma,
            second_query: gamma,
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.node_node, self.first_query, self.second_query]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightScheme {
    pub kind: SchemeKind,
    pub node_node: SimilarityKind,
    pub node_query: SimilarityKind,
    /// Only read by `SchemeKind::Product`; overrides both similarity kinds.
    pub product_bandwidths: Option<ProductBandwidths>,
    pub floor: f64,
}

impl WeightScheme {
    pub fn new(kind: SchemeKind, sim: SimilarityKind) -> Self {
        WeightScheme {
            kind,
            node_node: sim,
            node_query: sim,
            product_bandwidths: None,
            floor: DEFAULT_FLOOR,
        }
    }

    /// Hybrid `a = 1`, `b = 1/4` with cosine similarity.
    pub fn hybrid_default() -> Self {
        WeightScheme::new(SchemeKind::Hybrid { a: 1.0, b: 0.25 }, SimilarityKind::Cosine)
    }

    /// Product of three RBF kernels with their own bandwidths.
    pub fn rbf_product(bandwidths: ProductBandwidths) -> Self {
        WeightScheme {
            kind: SchemeKind::Product,
            node_node: SimilarityKind::Rbf {
                gamma: bandwidths.node_node,
            },
            node_query: SimilarityKind::Rbf {
                gamma: bandwidths.first_query,
            },
            product_bandwidths: Some(bandwidths),
            floor: DEFAULT_FLOOR,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.floor > 0.0 && self.floor.is_finite()) {
            return Err(Error::Parameter(format!("floor must be positive, got {}", self.floor)));
        }
        self.node_node.validate()?;
        self.node_query.validate()?;
        if let Some(bw) = self.product_bandwidths {
            for g in bw.as_array() {
                if !(g > 0.0 && g.is_finite()) {
                    return Err(Error::NegativeBandwidth(g));
                }
            }
        }
        let nonneg = |name: &str, x: f64| {
            if x >= 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(Error::Parameter(format!("{name} must be >= 0, got {x}")))
            }
        };
        match self.kind {
            SchemeKind::Mean | SchemeKind::Product => Ok(()),
            SchemeKind::Hybrid { a, b } => {
                nonneg("a", a)?;
                nonneg("b", b)
            }
            SchemeKind::Generic { a, b, c, .. } => {
                nonneg("a", a)?;
                nonneg("b", b)?;
                nonneg("c", c)
            }
        }
    }

    /// Unclamped, unscaled formula value for the three similarities.
    #[inline]
    pub fn combine(&self, s_uv: f64, s_uq: f64, s_vq: f64) -> f64 {
        match self.kind {
            SchemeKind::Mean => (s_uv + s_uq + s_vq) / 3.0,
            SchemeKind::Product => s_uv * s_uq * s_vq,
            SchemeKind::Hybrid { a, b } => s_uv * (a + b * (s_uq + s_vq)),
            SchemeKind::Generic { a, b, c, combine } => {
                combine.apply(c * s_uv, a + b * combine.apply(s_uq, s_vq))
            }
        }
    }
}

/// Product of three RBF kernels, clamped below at `DEFAULT_FLOOR`.
pub fn rbf_product_weight(
    bandwidths: ProductBandwidths,
    e_u: &[f64],
    e_v: &[f64],
    e_q: &[f64],
) -> Result<f64> {
    for g in bandwidths.as_array() {
        if !(g > 0.0 && g.is_finite()) {
            return Err(Error::NegativeBandwidth(g));
        }
    }
    for other in [e_v, e_q] {
        if other.len() != e_u.len() {
            return Err(Error::DimensionMismatch {
                expected: e_u.len(),
                found: other.len(),
            });
        }
    }
    let exponent = bandwidths.node_node * squared_distance(e_u, e_v)
        + bandwidths.first_query * squared_distance(e_u, e_q)
        + bandwidths.second_query * squared_distance(e_v, e_q);
    Ok((-exponent).exp().max(DEFAULT_FLOOR))
}

/// Per-query state: the query embedding and memoized similarities/weights.
///
/// A context must only ever be used with one `WeightScheme`.
#[derive(Debug, Clone)]
pub struct QueryContext {
    query: Vec<f64>,
    node_query: HashMap<(NodeId, u8), f64>,
    edge_weights: HashMap<EdgeId, f64>,
}

impl QueryContext {
    pub fn new(query: Vec<f64>) -> Self {
        QueryContext {
            query,
            node_query: HashMap::new(),
            edge_weights: HashMap::new(),
        }
    }

    pub fn query(&self) -> &[f64] {
        &self.query
    }

    pub fn cached_edges(&self) -> usize {
        self.edge_weights.len()
    }

    pub fn clear(&mut self) {
        self.node_query.clear();
        self.edge_weights.clear();
    }

    fn node_query_sim(&mut self, g: &Graph, v: NodeId, slot: u8, kind: SimilarityKind) -> f64 {
        let q = &self.query;
        *self
            .node_query
            .entry((v, slot))
            .or_insert_with(|| kind.eval(g.embedding(v), q))
    }

    /// Weight of edge `e`, evaluated with the lower-id endpoint first so the
    /// result does not depend on traversal direction.
    pub fn weight_by_id(&mut self, scheme: &WeightScheme, g: &Graph, e: EdgeId) -> f64 {
        if let Some(&w) = self.edge_weights.get(&e) {
            return w;
        }
        let edge = g.edge(e);
        let (u, v) = (edge.u, edge.v);
        let raw = match (scheme.kind, scheme.product_bandwidths) {
            (SchemeKind::Product, Some(bw)) => {
                let s_uv = (-bw.node_node * squared_distance(g.embedding(u), g.embedding(v))).exp();
                let s_uq =
                    self.node_query_sim(g, u, 1, SimilarityKind::Rbf { gamma: bw.first_query });
                let s_vq =
                    self.node_query_sim(g, v, 2, SimilarityKind::Rbf { gamma: bw.second_query });
                s_uv * s_uq * s_vq
            }
            _ => {
                let s_uv = scheme.node_node.eval(g.embedding(u), g.embedding(v));
                let s_uq = self.node_query_sim(g, u, 0, scheme.node_query);
                let s_vq = self.node_query_sim(g, v, 0, scheme.node_query);
                scheme.combine(s_uv, s_uq, s_vq)
            }
        };
        let w = (edge.base_weight * raw).max(scheme.floor);
        let w = if w.is_nan() { scheme.floor } else { w };
        self.edge_weights.insert(e, w);
        w
    }
}

pub fn edge_weight(
    scheme: &WeightScheme,
    ctx: &mut QueryContext,
    g: &Graph,
    u: NodeId,
    v: NodeId,
) -> Result<f64> {
    let e = g.find_edge(u, v).ok_or(Error::NotAnEdge(u, v))?;
    Ok(ctx.weight_by_id(scheme, g, e))
}
