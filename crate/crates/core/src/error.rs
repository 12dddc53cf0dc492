use thiserror::Error;

use crate::graph::NodeId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("embedding of node {0} contains a non-finite value")]
    NonFiniteEmbedding(usize),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(NodeId, NodeId),
    #[error("self-loop on node {0}")]
    SelfLoop(NodeId),
    #[error("edge endpoint {0} does not reference a node")]
    DanglingEndpoint(NodeId),
    #[error("edge ({0}, {1}) has non-positive or non-finite base weight {2}")]
    InvalidBaseWeight(NodeId, NodeId, f64),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("({0}, {1}) is not an edge")]
    NotAnEdge(NodeId, NodeId),
    #[error("noise scale must be non-negative, got {0}")]
    NegativeSigma(f64),
    #[error("RBF bandwidth must be positive, got {0}")]
    NegativeBandwidth(f64),
    #[error("requested {requested} seeds from {available} nodes")]
    NTooLarge { requested: usize, available: usize },
    #[error("keyword set is empty or malformed")]
    EmptyKeywords,
    #[error("no seed nodes and no positive source mass")]
    NoSeeds,
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("dual variable x must be non-negative (x[{0}] = {1})")]
    NegativeX(usize, f64),
    #[error("dense oracle limited to {cap} nodes, got {n}")]
    TooLarge { n: usize, cap: usize },
    #[error("oracle residual {residual:e} stalled above tolerance {tol:e}")]
    NoProgress { residual: f64, tol: f64 },
    #[error("dual objective is unbounded below: source mass exceeds sink capacity on a component")]
    Unbounded,
    #[error("all subquery supports are empty")]
    EmptyRetrieval,
    #[error("invalid parameter: {0}")]
    Parameter(String),
}
