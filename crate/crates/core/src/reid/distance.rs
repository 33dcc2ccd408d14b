//! Appearance distances between embeddings and between tracklets.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Metric {
    #[default]
    Euclidean,
    /// `1 - cos(a, b)`.
    Cosine,
}

/// How two embedding sets are compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TrackletDistanceMode {
    /// Distance between the L2-normalized means of each set.
    #[default]
    MeanEmbedding,
    /// Smallest distance over all cross-set pairs.
    MinPairwise,
}

/// A fixed-dimension appearance feature, optionally labeled.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub identity: Option<u64>,
    pub camera_id: Option<u32>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self {
            values,
            identity: None,
            camera_id: None,
        }
    }

    pub fn labeled(values: Vec<f64>, identity: u64) -> Self {
        Self {
            values,
            identity: Some(identity),
            camera_id: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Anything carrying a set of stored embeddings.
pub trait EmbeddingSet {
    fn embeddings(&self) -> &[Vec<f64>];
}

impl EmbeddingSet for Vec<Vec<f64>> {
    fn embeddings(&self) -> &[Vec<f64>] {
        self
    }
}

impl EmbeddingSet for [Vec<f64>] {
    fn embeddings(&self) -> &[Vec<f64>] {
        self
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Unit-length copy of `v`; fails on zero or non-finite norm.
pub fn normalize(v: &[f64]) -> Result<Vec<f64>> {
    let n = norm(v);
    if !(n.is_finite() && n > 0.0) {
        return Err(Error::Config(format!("cannot normalize vector with norm {n}")));
    }
    Ok(v.iter().map(|x| x / n).collect())
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    let na = norm(a);
    let nb = norm(b);
    if !(na > 0.0 && nb > 0.0 && na.is_finite() && nb.is_finite()) {
        return Err(Error::Config("cosine distance of a zero or non-finite vector".into()));
    }
    Ok((1.0 - dot(a, b) / (na * nb)).max(0.0))
}

pub fn distance(a: &[f64], b: &[f64], metric: Metric) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    match metric {
        Metric::Euclidean => Ok(euclidean(a, b)),
        Metric::Cosine => cosine_distance(a, b),
    }
}

/// `N x M` matrix of distances from each query to each gallery vector.
pub fn distance_matrix(query: &[EmbeddingVector], gallery: &[EmbeddingVector], metric: Metric) -> Result<Vec<Vec<f64>>> {
    let dim = query.first().or(gallery.first()).map_or(0, EmbeddingVector::dim);
    if let Some(bad) = query.iter().chain(gallery).find(|e| e.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: bad.dim(),
        });
    }
    query
        .iter()
        .map(|q| {
            gallery
                .iter()
                .map(|g| distance(&q.values, &g.values, metric))
                .collect()
        })
        .collect()
}

/// Normalized mean of a non-empty embedding set.
pub fn mean_embedding(set: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = set.first().ok_or(Error::EmptyEmbeddings)?;
    let dim = first.len();
    let mut acc = vec![0.0; dim];
    for e in set {
        if e.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: e.len(),
            });
        }
        for (a, v) in acc.iter_mut().zip(e) {
            *a += v;
        }
    }
    let n = set.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    normalize(&acc)
}

/// Appearance distance between two tracklets' embedding sets.
pub fn tracklet_distance<A, B>(a: &A, b: &B, metric: Metric, mode: TrackletDistanceMode) -> Result<f64>
where
    A: EmbeddingSet + ?Sized,
    B: EmbeddingSet + ?Sized,
{
    let (ea, eb) = (a.embeddings(), b.embeddings());
    if ea.is_empty() || eb.is_empty() {
        return Err(Error::EmptyEmbeddings);
    }
    match mode {
        TrackletDistanceMode::MeanEmbedding => distance(&mean_embedding(ea)?, &mean_embedding(eb)?, metric),
        TrackletDistanceMode::MinPairwise => {
            let mut best = f64::INFINITY;
            for x in ea {
                for y in eb {
                    best = best.min(distance(&normalize(x)?, &normalize(y)?, metric)?);
                }
            }
            Ok(best)
        }
    }
}
