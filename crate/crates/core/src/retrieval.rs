//! Multi-subquery retrieval: one diffusion per subquery, thresholded
//! supports, and the union of the per-subquery induced subgraphs.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffusion::{diffuse, ConvergenceReport, DiffusionConfig, DiffusionResult};
use crate::embeddings::SimilarityKind;
use crate::error::{Error, Result};
use crate::graph::{EdgeId, Graph, NodeId};
use crate::seeding::{score_nodes, select_seeds, KeywordSet};
use crate::weighting::{QueryContext, WeightScheme};

#[derive(Debug, Clone, PartialEq)]
pub struct Subquery {
    pub text: String,
    pub embedding: Vec<f64>,
    /// Seeding keywords; the subquery embedding itself is used when absent.
    pub keywords: Option<KeywordSet>,
    pub config: Option<DiffusionConfig>,
}

impl Subquery {
    pub fn new(text: impl Into<String>, embedding: Vec<f64>) -> Self {
        Subquery {
            text: text.into(),
            embedding,
            keywords: None,
            config: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubqueryPlan {
    subqueries: Vec<Subquery>,
}

impl SubqueryPlan {
    pub fn new(subqueries: Vec<Subquery>) -> Result<Self> {
        if subqueries.is_empty() {
            return Err(Error::Parameter("a plan needs at least one subquery".into()));
        }
        let d = subqueries[0].embedding.len();
        if let Some(s) = subqueries.iter().find(|s| s.embedding.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: s.embedding.len(),
            });
        }
        Ok(SubqueryPlan { subqueries })
    }

    pub fn subqueries(&self) -> &[Subquery] {
        &self.subqueries
    }

    pub fn len(&self) -> usize {
        self.subqueries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subqueries.is_empty()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreAggregation {
    #[default]
    Max,
    Sum,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalConfig {
    pub num_seeds: usize,
    pub seed_similarity: SimilarityKind,
    pub diffusion: DiffusionConfig,
    pub aggregation: ScoreAggregation,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig {
            num_seeds: 40,
            seed_similarity: SimilarityKind::Cosine,
            diffusion: DiffusionConfig::qa(),
            aggregation: ScoreAggregation::Max,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievedSubgraph {
    /// Union graph; `graph.original_id` maps back to the input graph.
    pub graph: Graph,
    /// Keyed by input-graph id.
    pub node_scores: BTreeMap<NodeId, f64>,
    pub provenance: BTreeMap<NodeId, BTreeSet<usize>>,
    /// Input-graph endpoints `(u, v)` with `u < v` mapped to the largest
    /// query-aware weight among the subqueries that retrieved the edge.
    pub edge_weights: BTreeMap<(NodeId, NodeId), f64>,
    pub per_subquery_reports: Vec<ConvergenceReport>,
}

/// Runs one subquery end to end: seed selection against its keywords (or
/// embedding) followed by a diffusion with its own weight cache.
pub fn run_subquery(
    g: &Graph,
    scheme: &WeightScheme,
    sq: &Subquery,
    cfg: &RetrievalConfig,
) -> Result<(DiffusionResult, QueryContext)> {
    let kw = sq
        .keywords
        .clone()
        .unwrap_or_else(|| KeywordSet::from_query(sq.text.clone(), sq.embedding.clone()));
    let scores = score_nodes(g, &kw, cfg.seed_similarity)?;
    let n = cfg.num_seeds.min(g.node_count());
    let seeds = select_seeds(&scores.scores, n)?;
    let mut ctx = QueryContext::new(sq.embedding.clone());
    let dcfg = sq.config.as_ref().unwrap_or(&cfg.diffusion);
    let result = diffuse(g, scheme, &mut ctx, &seeds.seeds, dcfg)?;
    Ok((result, ctx))
}

pub fn retrieve(
    g: &Graph,
    scheme: &WeightScheme,
    plan: &SubqueryPlan,
    cfg: &RetrievalConfig,
) -> Result<RetrievedSubgraph> {
    if let Some(s) = plan
        .subqueries
        .iter()
        .find(|s| s.embedding.len() != g.dimension())
    {
        return Err(Error::DimensionMismatch {
            expected: g.dimension(),
            found: s.embedding.len(),
        });
    }
    let runs: Vec<(DiffusionResult, QueryContext)> = plan
        .subqueries
        .par_iter()
        .map(|sq| run_subquery(g, scheme, sq, cfg))
        .collect::<Result<_>>()?;

    let mut contributions: BTreeMap<NodeId, Vec<f64>> = BTreeMap::new();
    let mut provenance: BTreeMap<NodeId, BTreeSet<usize>> = BTreeMap::new();
    let mut edge_weights: BTreeMap<EdgeId, f64> = BTreeMap::new();
    for (k, (result, ctx)) in runs.iter().enumerate() {
        let support = &result.support;
        for &v in support {
            contributions.entry(v).or_default().push(result.x[v.0]);
            provenance.entry(v).or_default().insert(k);
        }
        let mut ctx = ctx.clone();
        for &u in support {
            for &(v, e) in g.neighbors(u) {
                if u < v && support.contains(&v) {
                    let w = ctx.weight_by_id(scheme, g, e);
                    let slot = edge_weights.entry(e).or_insert(w);
                    *slot = slot.max(w);
                }
            }
        }
    }
    if contributions.is_empty() {
        return Err(Error::EmptyRetrieval);
    }

    let node_scores = contributions
        .into_iter()
        .map(|(v, mut xs)| {
            let s = match cfg.aggregation {
                ScoreAggregation::Max => xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                ScoreAggregation::Sum => {
                    // Fixed summation order keeps the result independent of plan order.
                    xs.sort_by(f64::total_cmp);
                    xs.iter().sum()
                }
            };
            (v, s)
        })
        .collect::<BTreeMap<_, _>>();
    let keep: BTreeSet<NodeId> = node_scores.keys().copied().collect();
    let edge_ids: Vec<EdgeId> = edge_weights.keys().copied().collect();
    let graph = g.subgraph_with_edges(&keep, &edge_ids)?;
    let edge_weights = edge_weights
        .into_iter()
        .map(|(e, w)| {
            let edge = g.edge(e);
            ((edge.u, edge.v), w)
        })
        .collect();
    Ok(RetrievedSubgraph {
        graph,
        node_scores,
        provenance,
        edge_weights,
        per_subquery_reports: runs.into_iter().map(|(r, _)| r.report).collect(),
    })
}

/// Highest scores first, ties by ascending id.
pub fn rank_nodes(r: &RetrievedSubgraph, top_k: usize) -> Vec<(NodeId, f64)> {
    let mut ranked: Vec<(NodeId, f64)> = r.node_scores.iter().map(|(&v, &s)| (v, s)).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(top_k);
    ranked
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{Selection, SinkMode};

    fn fixture() -> RetrievedSubgraph {
        let g = Graph::build(vec![], vec![]).unwrap();
        RetrievedSubgraph {
            graph: g,
            node_scores: [(NodeId(0), 0.2), (NodeId(4), 0.9), (NodeId(7), 0.9)].into(),
            provenance: BTreeMap::new(),
            edge_weights: BTreeMap::new(),
            per_subquery_reports: vec![],
        }
    }

    #[test]
    fn ranking_order() {
        let r = fixture();
        assert_eq!(rank_nodes(&r, 2), vec![(NodeId(4), 0.9), (NodeId(7), 0.9)]);
        assert_eq!(
            rank_nodes(&r, 10),
            vec![(NodeId(4), 0.9), (NodeId(7), 0.9), (NodeId(0), 0.2)]
        );
    }

    #[test]
    fn empty_plan_rejected() {
        assert!(SubqueryPlan::new(vec![]).is_err());
    }

    #[test]
    fn empty_retrieval() {
        use crate::graph::{Edge, Node};
        // Seeds fit inside their own capacity, so nothing is ever pushed.
        let g = Graph::build(
            vec![Node::new("a", vec![1.0, 0.0]), Node::new("b", vec![0.0, 1.0])],
            vec![Edge::new(0, 1)],
        )
        .unwrap();
        let cfg = RetrievalConfig {
            num_seeds: 1,
            diffusion: DiffusionConfig {
                sink: SinkMode::Uniform(1e6),
                selection: Selection::Fifo,
                alpha: 1e-3,
                ..DiffusionConfig::qa()
            },
            ..RetrievalConfig::default()
        };
        let plan = SubqueryPlan::new(vec![Subquery::new("q", vec![1.0, 0.0])]).unwrap();
        assert_eq!(
            retrieve(&g, &WeightScheme::hybrid_default(), &plan, &cfg),
            Err(Error::EmptyRetrieval)
        );
    }
}
