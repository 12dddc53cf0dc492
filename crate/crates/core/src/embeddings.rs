//! Embedding tables and the similarity functions shared by seeding and
//! edge weighting.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SimilarityKind {
    Cosine,
    Dot,
    Rbf { gamma: f64 },
}

impl Default for SimilarityKind {
    fn default() -> Self {
        SimilarityKind::Cosine
    }
}

impl SimilarityKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SimilarityKind::Rbf { gamma } if !(gamma > 0.0 && gamma.is_finite()) => {
                Err(Error::NegativeBandwidth(gamma))
            }
            _ => Ok(()),
        }
    }

    /// Similarity without the dimension check.
    #[inline]
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            SimilarityKind::Cosine => {
                let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
                for (x, y) in a.iter().zip(b) {
                    dot += x * y;
                    na += x * x;
                    nb += y * y;
                }
                if na == 0.0 || nb == 0.0 {
                    0.0
                } else {
                    (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
                }
            }
            SimilarityKind::Dot => dot(a, b),
            SimilarityKind::Rbf { gamma } => (-gamma * squared_distance(a, b)).exp(),
        }
    }
}

pub fn similarity(kind: SimilarityKind, a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    kind.validate()?;
    Ok(kind.eval(a, b))
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Text-keyed embedding lookup with a fixed dimension.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmbeddingTable {
    dimension: usize,
    vectors: BTreeMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dimension: usize) -> Self {
        EmbeddingTable {
            dimension,
            vectors: BTreeMap::new(),
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn insert(&mut self, key: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                found: vector.len(),
            });
        }
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(Error::Parameter("embedding contains a non-finite value".into()));
        }
        self.vectors.insert(key.into(), vector);
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&[f64]> {
        self.vectors.get(key).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.vectors.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    /// Parses `key<TAB>v1,v2,...,vd` records. Blank lines and `#` comments
    /// are skipped. Errors carry the 1-based line number.
    pub fn parse(text: &str) -> std::result::Result<EmbeddingTable, (usize, String)> {
        let mut table: Option<EmbeddingTable> = None;
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, values) = line
                .split_once('\t')
                .ok_or((lineno, "expected key<TAB>vector".to_string()))?;
            let vector = parse_vector(values).map_err(|e| (lineno, e))?;
            let t = table.get_or_insert_with(|| EmbeddingTable::new(vector.len()));
            t.insert(key, vector).map_err(|e| (lineno, e.to_string()))?;
        }
        Ok(table.unwrap_or_default())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.vectors {
            let _ = writeln!(out, "{k}\t{}", format_vector(v));
        }
        out
    }
}

pub fn parse_vector(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.trim()
        .split(',')
        .map(|t| {
            let t = t.trim();
            let x: f64 = t.parse().map_err(|_| format!("invalid number {t:?}"))?;
            if x.is_finite() {
                Ok(x)
            } else {
                Err(format!("non-finite value {t:?}"))
            }
        })
        .collect()
}

pub fn format_vector(v: &[f64]) -> String {
    let mut s = String::new();
    for (i, x) in v.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        let _ = write!(s, "{x}");
    }
    s
}

/// Draws `e_u = μ_{assignment[u]} + z_u` with `z_u` coordinate `ℓ` Gaussian
/// of standard deviation `sigmas[ℓ]`.
pub fn sample_embeddings<R: rand::Rng>(
    rng: &mut R,
    means: &[Vec<f64>],
    sigmas: &[f64],
    assignment: &[usize],
) -> Result<Vec<Vec<f64>>> {
    if let Some(&s) = sigmas.iter().find(|s| !(**s >= 0.0) || !s.is_finite()) {
        return Err(Error::NegativeSigma(s));
    }
    let d = sigmas.len();
    for mu in means {
        if mu.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: mu.len(),
            });
        }
    }
    assignment
        .iter()
        .map(|&k| {
            let mu = means
                .get(k)
                .ok_or_else(|| Error::Parameter(format!("mean index {k} out of range")))?;
            Ok(mu
                .iter()
                .zip(sigmas)
                .map(|(&m, &s)| {
                    let z: f64 = StandardNormal.sample(rng);
                    m + s * z
                })
                .collect())
        })
        .collect()
}

/// Seeded synthetic table keyed by node index (`"0"`, `"1"`, ...).
pub fn synthetic_embeddings(
    seed: u64,
    means: &[Vec<f64>],
    sigmas: &[f64],
    assignment: &[usize],
) -> Result<EmbeddingTable> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vectors = sample_embeddings(&mut rng, means, sigmas, assignment)?;
    let mut table = EmbeddingTable::new(sigmas.len());
    for (u, v) in vectors.into_iter().enumerate() {
        table.insert(u.to_string(), v)?;
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn trivial_similarities() {
        let v = [0.3, -1.2, 2.0];
        assert!((similarity(SimilarityKind::Cosine, &v, &v).unwrap() - 1.0).abs() < 1e-15);
        let r = SimilarityKind::Rbf { gamma: 3.7 };
        assert_eq!(similarity(r, &v, &v).unwrap(), 1.0);
        assert_eq!(similarity(SimilarityKind::Cosine, &[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(similarity(SimilarityKind::Dot, &[1.0, 2.0], &[3.0, 4.0]).unwrap(), 11.0);
    }

    #[test]
    fn zero_norm_cosine_is_zero() {
        assert_eq!(similarity(SimilarityKind::Cosine, &[0.0, 0.0], &[1.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn dimension_and_bandwidth_errors() {
        assert_eq!(
            similarity(SimilarityKind::Dot, &[1.0], &[1.0, 2.0]),
            Err(Error::DimensionMismatch { expected: 1, found: 2 })
        );
        assert_eq!(
            similarity(SimilarityKind::Rbf { gamma: -1.0 }, &[1.0], &[1.0]),
            Err(Error::NegativeBandwidth(-1.0))
        );
    }

    #[test]
    fn noiseless_synthetic_is_exact() {
        let means = vec![vec![1.0, 2.0], vec![-3.0, 0.5]];
        let t = synthetic_embeddings(9, &means, &[0.0, 0.0], &[1, 0, 1]).unwrap();
        assert_eq!(t.get("0").unwrap(), &[-3.0, 0.5]);
        assert_eq!(t.get("1").unwrap(), &[1.0, 2.0]);
    }

    #[test]
    fn synthetic_is_seeded() {
        let means = vec![vec![0.0; 3]];
        let a = synthetic_embeddings(5, &means, &[0.2; 3], &[0; 10]).unwrap();
        let b = synthetic_embeddings(5, &means, &[0.2; 3], &[0; 10]).unwrap();
        let c = synthetic_embeddings(6, &means, &[0.2; 3], &[0; 10]).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn negative_sigma_rejected() {
        let r = synthetic_embeddings(1, &[vec![0.0]], &[-0.1], &[0]);
        assert_eq!(r, Err(Error::NegativeSigma(-0.1)));
    }

    #[test]
    fn synthetic_sample_mean() {
        let mu = vec![0.5, -1.0, 2.0, 0.0];
        let n = 10_000;
        let t = synthetic_embeddings(17, &[mu.clone()], &[0.1; 4], &vec![0; n]).unwrap();
        for (l, &m) in mu.iter().enumerate() {
            let mean: f64 = t.iter().map(|(_, v)| v[l]).sum::<f64>() / n as f64;
            assert!((mean - m).abs() < 0.01, "coord {l}: {mean} vs {m}");
        }
    }

    #[test]
    fn table_text_roundtrip() {
        let mut t = EmbeddingTable::new(2);
        t.insert("alpha", vec![0.1, -2.5e-7]).unwrap();
        t.insert("beta", vec![3.0, 1.0 / 3.0]).unwrap();
        assert_eq!(EmbeddingTable::parse(&t.to_text()).unwrap(), t);
    }

    #[test]
    fn table_parse_reports_line() {
        let err = EmbeddingTable::parse("a\t1,2\nb\t1,x\n").unwrap_err();
        assert_eq!(err.0, 2);
        let err = EmbeddingTable::parse("a\t1,2\nb\t1\n").unwrap_err();
        assert_eq!(err.0, 2);
    }

    fn vec_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (1usize..8).prop_flat_map(|d| {
            (
                proptest::collection::vec(-5.0f64..5.0, d),
                proptest::collection::vec(-5.0f64..5.0, d),
            )
        })
    }

    proptest! {
        #[test]
        fn similarity_ranges_and_symmetry((a, b) in vec_pair(), gamma in 0.01f64..3.0) {
            let c = SimilarityKind::Cosine.eval(&a, &b);
            prop_assert!((-1.0..=1.0).contains(&c));
            prop_assert_eq!(c, SimilarityKind::Cosine.eval(&b, &a));
            let rbf = SimilarityKind::Rbf { gamma };
            let r = rbf.eval(&a, &b);
            prop_assert!(r >= 0.0 && r <= 1.0);
            prop_assert_eq!(r, rbf.eval(&b, &a));
            prop_assert_eq!(SimilarityKind::Dot.eval(&a, &b), SimilarityKind::Dot.eval(&b, &a));
        }
    }
}
