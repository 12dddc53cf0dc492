//! Keyword scoring and Top-N seed selection.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::embeddings::SimilarityKind;
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};

#[derive(Debug, Clone, PartialEq)]
pub struct KeywordSet {
    keywords: Vec<String>,
    embeddings: Vec<Vec<f64>>,
}

impl KeywordSet {
    pub fn new(keywords: Vec<String>, embeddings: Vec<Vec<f64>>) -> Result<Self> {
        if keywords.is_empty() || keywords.len() != embeddings.len() {
            return Err(Error::EmptyKeywords);
        }
        let d = embeddings[0].len();
        if let Some(e) = embeddings.iter().find(|e| e.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: e.len(),
            });
        }
        Ok(KeywordSet {
            keywords,
            embeddings,
        })
    }

    /// A single pseudo-keyword carrying a query embedding.
    pub fn from_query(text: impl Into<String>, embedding: Vec<f64>) -> Self {
        KeywordSet {
            keywords: vec![text.into()],
            embeddings: vec![embedding],
        }
    }

    pub fn len(&self) -> usize {
        self.keywords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keywords.is_empty()
    }

    pub fn keywords(&self) -> &[String] {
        &self.keywords
    }

    pub fn embeddings(&self) -> &[Vec<f64>] {
        &self.embeddings
    }
}

/// Per-node relevance scores plus the number of similarity evaluations
/// spent computing them.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeScores {
    pub scores: Vec<f64>,
    pub evaluations: usize,
}

/// `score(v) = max_i H_sim(e_{q,i}, e_v)`.
pub fn score_nodes(g: &Graph, kw: &KeywordSet, sim: SimilarityKind) -> Result<NodeScores> {
    sim.validate()?;
    let d = kw.embeddings[0].len();
    if !g.is_empty() && d != g.dimension() {
        return Err(Error::DimensionMismatch {
            expected: g.dimension(),
            found: d,
        });
    }
    let mut evaluations = 0;
    let scores = g
        .nodes()
        .iter()
        .map(|node| {
            kw.embeddings
                .iter()
                .map(|e| {
                    evaluations += 1;
                    sim.eval(e, &node.embedding)
                })
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    Ok(NodeScores {
        scores,
        evaluations,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedSelection {
    /// Sorted by score descending, then id ascending.
    pub seeds: Vec<NodeId>,
    pub scores: Vec<(NodeId, f64)>,
}

impl SeedSelection {
    pub fn from_ids(seeds: Vec<NodeId>) -> Self {
        let scores = seeds.iter().map(|&s| (s, f64::NAN)).collect();
        SeedSelection { seeds, scores }
    }

    pub fn len(&self) -> usize {
        self.seeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seeds.is_empty()
    }
}

/// Heap entry ordered so that the *worst* candidate is at the top.
#[derive(PartialEq)]
struct Candidate(f64, usize);

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(self.1.cmp(&other.1))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// The `n` best scores, ties going to the lower id.
pub fn select_seeds(scores: &[f64], n: usize) -> Result<SeedSelection> {
    if n > scores.len() {
        return Err(Error::NTooLarge {
            requested: n,
            available: scores.len(),
        });
    }
    let mut heap = BinaryHeap::with_capacity(n + 1);
    for (i, &s) in scores.iter().enumerate() {
        heap.push(Candidate(s, i));
        if heap.len() > n {
            heap.pop();
        }
    }
    let winners = heap.into_sorted_vec();
    Ok(SeedSelection {
        seeds: winners.iter().map(|c| NodeId(c.1)).collect(),
        scores: winners.iter().map(|c| (NodeId(c.1), c.0)).collect(),
    })
}

const STOPWORDS: &[&str] = &[
    "a", "about", "all", "an", "and", "any", "are", "as", "at", "be", "been", "but", "by", "can",
    "could", "did", "do", "does", "for", "from", "had", "has", "have", "how", "i", "if", "in",
    "into", "is", "it", "its", "me", "may", "more", "most", "my", "no", "not", "of", "on", "or",
    "our", "should", "so", "some", "than", "that", "the", "their", "them", "then", "there",
    "these", "they", "this", "those", "to", "was", "we", "were", "what", "when", "where", "which",
    "who", "whom", "why", "will", "with", "would", "you", "your",
];

/// Fallback keyword extraction: lowercase whitespace tokens with surrounding
/// punctuation trimmed and stopwords dropped. Order of first appearance is
/// kept and duplicates removed.
pub fn keywords_from_query(text: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for token in text.split_whitespace() {
        let t = token
            .trim_matches(|c: char| !c.is_alphanumeric())
            .to_lowercase();
        if t.is_empty() || STOPWORDS.contains(&t.as_str()) || out.contains(&t) {
            continue;
        }
        out.push(t);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Node;
    use proptest::prelude::*;

    fn toy() -> Graph {
        let ns = vec![
            Node::new("a", vec![1.0, 0.0]),
            Node::new("b", vec![0.6, 0.8]),
            Node::new("c", vec![-1.0, 1.0]),
            Node::new("d", vec![0.0, 2.0]),
        ];
        Graph::build(ns, vec![]).unwrap()
    }

    #[test]
    fn exact_keyword_scores_one() {
        let g = toy();
        let kw = KeywordSet::new(vec!["d".into()], vec![vec![0.0, 2.0]]).unwrap();
        let s = score_nodes(&g, &kw, SimilarityKind::Cosine).unwrap();
        assert!((s.scores[3] - 1.0).abs() < 1e-15);
        assert_eq!(s.evaluations, 4);
    }

    #[test]
    fn two_keywords_are_max_of_singles() {
        let g = toy();
        let (k1, k2) = (vec![1.0, 0.2], vec![-0.3, 1.0]);
        let both = KeywordSet::new(vec!["x".into(), "y".into()], vec![k1.clone(), k2.clone()]).unwrap();
        let s = score_nodes(&g, &both, SimilarityKind::Cosine).unwrap().scores;
        let s1 = score_nodes(&g, &KeywordSet::from_query("x", k1), SimilarityKind::Cosine).unwrap().scores;
        let s2 = score_nodes(&g, &KeywordSet::from_query("y", k2), SimilarityKind::Cosine).unwrap().scores;
        for i in 0..4 {
            assert_eq!(s[i], s1[i].max(s2[i]));
        }
    }

    #[test]
    fn matches_exhaustive_pair_table() {
        let g = toy();
        let kws = vec![vec![0.5, 0.5], vec![2.0, -1.0], vec![0.0, 3.0]];
        let kw = KeywordSet::new(vec!["p".into(), "q".into(), "r".into()], kws.clone()).unwrap();
        for sim in [SimilarityKind::Cosine, SimilarityKind::Dot, SimilarityKind::Rbf { gamma: 0.7 }] {
            let got = score_nodes(&g, &kw, sim).unwrap();
            for (v, node) in g.nodes().iter().enumerate() {
                let mut best = f64::NEG_INFINITY;
                for k in &kws {
                    let s = crate::embeddings::similarity(sim, k, &node.embedding).unwrap();
                    if s > best {
                        best = s;
                    }
                }
                assert_eq!(got.scores[v], best);
            }
            assert_eq!(got.evaluations, 12);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let kw = KeywordSet::from_query("q", vec![1.0, 2.0, 3.0]);
        assert!(matches!(
            score_nodes(&toy(), &kw, SimilarityKind::Cosine),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn selection_cases() {
        let s = select_seeds(&[0.1, 0.9, 0.5], 2).unwrap();
        assert_eq!(s.seeds, vec![NodeId(1), NodeId(2)]);
        let s = select_seeds(&[0.1, 0.9, 0.5], 3).unwrap();
        assert_eq!(s.seeds, vec![NodeId(1), NodeId(2), NodeId(0)]);
        let s = select_seeds(&[0.3, 0.7, 0.7, 0.2], 1).unwrap();
        assert_eq!(s.seeds, vec![NodeId(1)]);
        assert_eq!(
            select_seeds(&[0.1], 2),
            Err(Error::NTooLarge { requested: 2, available: 1 })
        );
    }

    #[test]
    fn fallback_keywords() {
        assert_eq!(
            keywords_from_query("What is the role of Elaine Benes in the show?"),
            vec!["role", "elaine", "benes", "show"]
        );
    }

    proptest! {
        #[test]
        fn selection_matches_sort(scores in proptest::collection::vec(0u8..6, 1..40), n in 0usize..40) {
            let scores: Vec<f64> = scores.into_iter().map(|s| s as f64 / 5.0).collect();
            let n = n.min(scores.len());
            let mut idx: Vec<usize> = (0..scores.len()).collect();
            idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
            let sel = select_seeds(&scores, n).unwrap();
            let expected: Vec<NodeId> = idx[..n].iter().map(|&i| NodeId(i)).collect();
            prop_assert_eq!(&sel.seeds, &expected);
        }

        #[test]
        fn monotone_transform_keeps_seed_set(scores in proptest::collection::vec(-3.0f64..3.0, 1..30), n in 1usize..30) {
            let n = n.min(scores.len());
            let a = select_seeds(&scores, n).unwrap();
            let mapped: Vec<f64> = scores.iter().map(|s| (2.0 * s).exp() + 1.0).collect();
            let b = select_seeds(&mapped, n).unwrap();
            let mut sa = a.seeds.clone();
            let mut sb = b.seeds.clone();
            sa.sort();
            sb.sort();
            prop_assert_eq!(sa, sb);
        }
    }
}
