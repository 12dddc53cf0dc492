//! Immutable attributed undirected graph.
//!
//! Node ids are dense indices assigned in input order; ascending id is the
//! tie-breaking order used everywhere else in the crate. The incidence
//! matrix is never stored: every `B`/`Bᵀ` action goes through adjacency.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub usize);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<usize> for NodeId {
    fn from(v: usize) -> Self {
        NodeId(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub label: String,
    pub embedding: Vec<f64>,
}

impl Node {
    pub fn new(label: impl Into<String>, embedding: Vec<f64>) -> Self {
        Node {
            label: label.into(),
            embedding,
        }
    }
}

/// Undirected edge. Endpoints are stored with `u < v` after graph build.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub u: NodeId,
    pub v: NodeId,
    pub base_weight: f64,
    /// Opaque relation annotation; the solver never reads it.
    pub relation: Option<String>,
}

impl Edge {
    pub fn new(u: impl Into<NodeId>, v: impl Into<NodeId>) -> Self {
        Edge {
            u: u.into(),
            v: v.into(),
            base_weight: 1.0,
            relation: None,
        }
    }

    pub fn weighted(u: impl Into<NodeId>, v: impl Into<NodeId>, base_weight: f64) -> Self {
        Edge {
            base_weight,
            ..Edge::new(u, v)
        }
    }

    pub fn with_relation(mut self, relation: impl Into<String>) -> Self {
        self.relation = Some(relation.into());
        self
    }

    pub fn other(&self, x: NodeId) -> NodeId {
        if self.u == x {
            self.v
        } else {
            self.u
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    /// Per node: `(neighbor, edge)` sorted by neighbor id.
    adjacency: Vec<Vec<(NodeId, EdgeId)>>,
    max_degree: usize,
    dimension: usize,
    original_ids: Vec<NodeId>,
}

impl Graph {
    /// Validates and builds a graph. Node `i` of `nodes` gets id `i`.
    pub fn build(nodes: Vec<Node>, edges: Vec<Edge>) -> Result<Graph> {
        let ids = (0..nodes.len()).map(NodeId).collect();
        Graph::build_with_origin(nodes, edges, ids)
    }

    fn build_with_origin(
        nodes: Vec<Node>,
        edges: Vec<Edge>,
        original_ids: Vec<NodeId>,
    ) -> Result<Graph> {
        let dimension = nodes.first().map_or(0, |n| n.embedding.len());
        for (i, node) in nodes.iter().enumerate() {
            if node.embedding.len() != dimension {
                return Err(Error::DimensionMismatch {
                    expected: dimension,
                    found: node.embedding.len(),
                });
            }
            if node.embedding.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFiniteEmbedding(i));
            }
        }

        let n = nodes.len();
        let mut adjacency: Vec<Vec<(NodeId, EdgeId)>> = vec![Vec::new(); n];
        let mut normalized = Vec::with_capacity(edges.len());
        for (k, mut e) in edges.into_iter().enumerate() {
            for end in [e.u, e.v] {
                if end.0 >= n {
                    return Err(Error::DanglingEndpoint(end));
                }
            }
            if e.u == e.v {
                return Err(Error::SelfLoop(e.u));
            }
            if !(e.base_weight.is_finite() && e.base_weight > 0.0) {
                return Err(Error::InvalidBaseWeight(e.u, e.v, e.base_weight));
            }
            if e.u > e.v {
                std::mem::swap(&mut e.u, &mut e.v);
            }
            adjacency[e.u.0].push((e.v, EdgeId(k)));
            adjacency[e.v.0].push((e.u, EdgeId(k)));
            normalized.push(e);
        }
        for (i, list) in adjacency.iter_mut().enumerate() {
            list.sort_unstable();
            if let Some(w) = list.windows(2).find(|w| w[0].0 == w[1].0) {
                let (a, b) = (NodeId(i).min(w[0].0), NodeId(i).max(w[0].0));
                return Err(Error::DuplicateEdge(a, b));
            }
        }
        let max_degree = adjacency.iter().map(Vec::len).max().unwrap_or(0);

        Ok(Graph {
            nodes,
            edges: normalized,
            adjacency,
            max_degree,
            dimension,
            original_ids,
        })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Embedding dimension shared by all nodes (0 for an empty graph).
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node(&self, v: NodeId) -> &Node {
        &self.nodes[v.0]
    }

    pub fn edge(&self, e: EdgeId) -> &Edge {
        &self.edges[e.0]
    }

    pub fn embedding(&self, v: NodeId) -> &[f64] {
        &self.nodes[v.0].embedding
    }

    pub fn contains(&self, v: NodeId) -> bool {
        v.0 < self.nodes.len()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.nodes.len()).map(NodeId)
    }

    pub fn neighbors(&self, v: NodeId) -> &[(NodeId, EdgeId)] {
        &self.adjacency[v.0]
    }

    pub fn degree(&self, v: NodeId) -> usize {
        self.adjacency[v.0].len()
    }

    pub fn find_edge(&self, u: NodeId, v: NodeId) -> Option<EdgeId> {
        if !self.contains(u) || !self.contains(v) {
            return None;
        }
        let list = &self.adjacency[u.0];
        list.binary_search_by_key(&v, |&(w, _)| w)
            .ok()
            .map(|i| list[i].1)
    }

    /// Id of `v` in the graph this one was extracted from (identity for
    /// graphs built directly).
    pub fn original_id(&self, v: NodeId) -> NodeId {
        self.original_ids[v.0]
    }

    pub fn original_ids(&self) -> &[NodeId] {
        &self.original_ids
    }

    pub fn find_label(&self, label: &str) -> Option<NodeId> {
        self.nodes.iter().position(|n| n.label == label).map(NodeId)
    }

    /// Graph over `keep` with every edge of `self` whose endpoints are both
    /// kept. Kept nodes are renumbered in ascending order; labels and
    /// original ids carry over.
    pub fn induced_subgraph(&self, keep: &BTreeSet<NodeId>) -> Result<Graph> {
        let edges: Vec<EdgeId> = keep
            .iter()
            .flat_map(|&u| {
                self.adjacency
                    .get(u.0)
                    .into_iter()
                    .flatten()
                    .filter(move |&&(v, _)| u < v && keep.contains(&v))
                    .map(|&(_, e)| e)
            })
            .collect();
        self.subgraph_with_edges(keep, &edges)
    }

    /// Graph over `keep` restricted to the listed edges, which must have both
    /// endpoints in `keep`.
    pub fn subgraph_with_edges(&self, keep: &BTreeSet<NodeId>, edges: &[EdgeId]) -> Result<Graph> {
        if let Some(&bad) = keep.iter().find(|v| !self.contains(**v)) {
            return Err(Error::UnknownNode(bad));
        }
        let mut remap = vec![usize::MAX; self.nodes.len()];
        for (new, old) in keep.iter().enumerate() {
            remap[old.0] = new;
        }
        let nodes = keep.iter().map(|&v| self.nodes[v.0].clone()).collect();
        let origin = keep.iter().map(|&v| self.original_ids[v.0]).collect();
        let mut sorted: Vec<EdgeId> = edges.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        let mut out_edges = Vec::with_capacity(sorted.len());
        for e in sorted {
            let edge = &self.edges[e.0];
            let (a, b) = (remap[edge.u.0], remap[edge.v.0]);
            if a == usize::MAX {
                return Err(Error::UnknownNode(edge.u));
            }
            if b == usize::MAX {
                return Err(Error::UnknownNode(edge.v));
            }
            out_edges.push(Edge {
                u: NodeId(a),
                v: NodeId(b),
                base_weight: edge.base_weight,
                relation: edge.relation.clone(),
            });
        }
        Graph::build_with_origin(nodes, out_edges, origin)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nodes(n: usize) -> Vec<Node> {
        (0..n).map(|i| Node::new(format!("n{i}"), vec![i as f64, 1.0])).collect()
    }

    fn triangle() -> Graph {
        Graph::build(nodes(3), vec![Edge::new(0, 1), Edge::new(1, 2), Edge::new(2, 0)]).unwrap()
    }

    #[test]
    fn path_degrees() {
        let g = Graph::build(nodes(3), vec![Edge::new(0, 1), Edge::new(1, 2)]).unwrap();
        let deg: Vec<_> = g.node_ids().map(|v| g.degree(v)).collect();
        assert_eq!(deg, vec![1, 2, 1]);
        assert_eq!(g.max_degree(), 2);
    }

    #[test]
    fn isolated_node() {
        let g = Graph::build(nodes(1), vec![]).unwrap();
        assert_eq!(g.max_degree(), 0);
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn rejects_bad_edges() {
        assert_eq!(
            Graph::build(nodes(2), vec![Edge::new(0, 0)]),
            Err(Error::SelfLoop(NodeId(0)))
        );
        assert_eq!(
            Graph::build(nodes(2), vec![Edge::new(0, 1), Edge::new(1, 0)]),
            Err(Error::DuplicateEdge(NodeId(0), NodeId(1)))
        );
        assert_eq!(
            Graph::build(nodes(2), vec![Edge::new(0, 5)]),
            Err(Error::DanglingEndpoint(NodeId(5)))
        );
        assert!(matches!(
            Graph::build(nodes(2), vec![Edge::weighted(0, 1, 0.0)]),
            Err(Error::InvalidBaseWeight(..))
        ));
    }

    #[test]
    fn rejects_mixed_dimensions() {
        let ns = vec![Node::new("a", vec![1.0]), Node::new("b", vec![1.0, 2.0])];
        assert_eq!(
            Graph::build(ns, vec![]),
            Err(Error::DimensionMismatch { expected: 1, found: 2 })
        );
        let ns = vec![Node::new("a", vec![f64::NAN])];
        assert_eq!(Graph::build(ns, vec![]), Err(Error::NonFiniteEmbedding(0)));
    }

    #[test]
    fn induced_pair_of_triangle() {
        let g = triangle();
        let sub = g.induced_subgraph(&[NodeId(0), NodeId(1)].into()).unwrap();
        assert_eq!(sub.node_count(), 2);
        assert_eq!(sub.edge_count(), 1);
        assert_eq!(sub.node(NodeId(1)).label, "n1");
    }

    #[test]
    fn induced_identity_and_empty() {
        let g = triangle();
        let all: BTreeSet<_> = g.node_ids().collect();
        assert_eq!(g.induced_subgraph(&all).unwrap(), g);
        let empty = g.induced_subgraph(&BTreeSet::new()).unwrap();
        assert!(empty.is_empty());
        assert_eq!(empty.edge_count(), 0);
    }

    #[test]
    fn induced_unknown_node() {
        let g = triangle();
        assert_eq!(
            g.induced_subgraph(&[NodeId(7)].into()),
            Err(Error::UnknownNode(NodeId(7)))
        );
    }

    #[test]
    fn original_ids_compose() {
        let g = Graph::build(nodes(5), vec![Edge::new(1, 3), Edge::new(3, 4)]).unwrap();
        let a = g.induced_subgraph(&[NodeId(1), NodeId(3), NodeId(4)].into()).unwrap();
        let b = a.induced_subgraph(&[NodeId(1), NodeId(2)].into()).unwrap();
        assert_eq!(b.original_ids(), &[NodeId(3), NodeId(4)]);
        assert_eq!(b.edge_count(), 1);
    }
}
