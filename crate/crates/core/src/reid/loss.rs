//! Batch-hard triplet loss, softmax cross-entropy and their weighted sum.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::reid::distance::{distance, dot, norm, EmbeddingVector, Metric};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    /// Triplet margin.
    pub margin: f64,
    pub xe_weight: f64,
    pub tr_weight: f64,
    pub metric: Metric,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            margin: 0.3,
            xe_weight: 1.0,
            tr_weight: 1.0,
            metric: Metric::Euclidean,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin >= 0.0 && self.xe_weight >= 0.0 && self.tr_weight >= 0.0) {
            return Err(Error::Config("loss margin and weights must be non-negative".into()));
        }
        if self.xe_weight == 0.0 && self.tr_weight == 0.0 {
            return Err(Error::Config("loss weights cannot both be zero".into()));
        }
        Ok(())
    }
}

/// Per-anchor hardest pairs and the resulting hinge loss.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletOutcome {
    /// Mean hinge over anchors that have a positive.
    pub loss: f64,
    /// `None` for anchors whose identity has a single sample.
    pub hard_positive: Vec<Option<(usize, f64)>>,
    pub hard_negative: Vec<(usize, f64)>,
}

fn identities(batch: &[EmbeddingVector]) -> Result<Vec<u64>> {
    batch
        .iter()
        .map(|e| {
            e.identity
                .ok_or_else(|| Error::Batch("triplet batch contains an unlabeled embedding".into()))
        })
        .collect()
}

/// Batch-hard triplet loss.
///
/// For each anchor the hard positive is the farthest sample of the same
/// identity and the hard negative the nearest sample of any other identity;
/// the loss is the mean of `max(0, d_hp - d_hn + margin)` over anchors with a
/// positive. Ties resolve to the lowest batch index.
pub fn batch_hard_triplet(batch: &[EmbeddingVector], margin: f64, metric: Metric) -> Result<TripletOutcome> {
    let ids = identities(batch)?;
    let distinct: HashSet<u64> = ids.iter().copied().collect();
    if distinct.len() < 2 {
        return Err(Error::Batch("triplet batch needs at least two identities".into()));
    }
    let n = batch.len();
    let mut dist = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let d = distance(&batch[i].values, &batch[j].values, metric)?;
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }

    let mut hard_positive = Vec::with_capacity(n);
    let mut hard_negative = Vec::with_capacity(n);
    let mut total = 0.0;
    let mut anchors = 0usize;
    for a in 0..n {
        let mut hp: Option<(usize, f64)> = None;
        let mut hn: Option<(usize, f64)> = None;
        for j in 0..n {
            if j == a {
                continue;
            }
            let d = dist[a][j];
            if ids[j] == ids[a] {
                if hp.is_none_or(|(_, best)| d > best) {
                    hp = Some((j, d));
                }
            } else if hn.is_none_or(|(_, best)| d < best) {
                hn = Some((j, d));
            }
        }
        let hn = hn.expect("two identities guarantee a negative");
        if let Some((_, dp)) = hp {
            total += (dp - hn.1 + margin).max(0.0);
            anchors += 1;
        }
        hard_positive.push(hp);
        hard_negative.push(hn);
    }
    if anchors == 0 {
        return Err(Error::Batch("triplet batch has no positive pair".into()));
    }
    Ok(TripletOutcome {
        loss: total / anchors as f64,
        hard_positive,
        hard_negative,
    })
}

/// Gradient of `d(a, b)` with respect to `a` (the gradient wrt `b` follows by
/// symmetry of the metric).
fn distance_grad(a: &[f64], b: &[f64], metric: Metric) -> Vec<f64> {
    match metric {
        Metric::Euclidean => {
            let d = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
            if d == 0.0 {
                return vec![0.0; a.len()];
            }
            a.iter().zip(b).map(|(x, y)| (x - y) / d).collect()
        }
        Metric::Cosine => {
            let na = norm(a);
            let nb = norm(b);
            let ab = dot(a, b);
            a.iter()
                .zip(b)
                .map(|(x, y)| -(y / (na * nb) - ab * x / (na * na * na * nb)))
                .collect()
        }
    }
}

/// Triplet loss together with its gradient wrt each embedding.
pub fn batch_hard_triplet_grad(batch: &[EmbeddingVector], margin: f64, metric: Metric) -> Result<(f64, Vec<Vec<f64>>)> {
    let out = batch_hard_triplet(batch, margin, metric)?;
    let dim = batch[0].values.len();
    let mut grads = vec![vec![0.0; dim]; batch.len()];
    let anchors = out.hard_positive.iter().filter(|p| p.is_some()).count() as f64;
    for a in 0..batch.len() {
        let Some((p, dp)) = out.hard_positive[a] else {
            continue;
        };
        let (neg, dn) = out.hard_negative[a];
        if dp - dn + margin <= 0.0 {
            continue;
        }
        let ea = &batch[a].values;
        let gap = distance_grad(ea, &batch[p].values, metric);
        let gpa = distance_grad(&batch[p].values, ea, metric);
        let gan = distance_grad(ea, &batch[neg].values, metric);
        let gna = distance_grad(&batch[neg].values, ea, metric);
        for k in 0..dim {
            grads[a][k] += (gap[k] - gan[k]) / anchors;
            grads[p][k] += gpa[k] / anchors;
            grads[neg][k] -= gna[k] / anchors;
        }
    }
    Ok((out.loss, grads))
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `-log softmax(logits)[label]`, computed after subtracting the max logit.
pub fn cross_entropy(logits: &[f64], label: usize) -> Result<f64> {
    if label >= logits.len() {
        return Err(Error::LabelOutOfRange {
            label,
            classes: logits.len(),
        });
    }
    if logits.iter().any(|l| !l.is_finite()) {
        return Err(Error::Config("non-finite logit".into()));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_sum: f64 = logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    Ok((log_sum - (logits[label] - max)).max(0.0))
}

/// Cross-entropy and its gradient wrt the logits (`softmax - onehot`).
pub fn cross_entropy_grad(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    let loss = cross_entropy(logits, label)?;
    let mut g = softmax(logits);
    g[label] -= 1.0;
    Ok((loss, g))
}

/// `xe_weight * mean cross-entropy + tr_weight * batch-hard triplet`.
///
/// `labels[i]` is the class index of sample `i`; the triplet term groups
/// samples by `embeddings[i].identity`.
pub fn aggregation_loss(embeddings: &[EmbeddingVector], logits: &[Vec<f64>], labels: &[usize], cfg: &LossConfig) -> Result<f64> {
    cfg.validate()?;
    if embeddings.len() != logits.len() || logits.len() != labels.len() || embeddings.is_empty() {
        return Err(Error::Batch("embeddings, logits and labels must have equal non-zero length".into()));
    }
    let mut xe = 0.0;
    for (l, &y) in logits.iter().zip(labels) {
        xe += cross_entropy(l, y)?;
    }
    xe /= labels.len() as f64;
    let tr = batch_hard_triplet(embeddings, cfg.margin, cfg.metric)?.loss;
    Ok(cfg.xe_weight * xe + cfg.tr_weight * tr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn emb(v: &[f64], id: u64) -> EmbeddingVector {
        EmbeddingVector::labeled(v.to_vec(), id)
    }

    /// Enumerates every (anchor, positive, negative) triple, keeping the
    /// hardest per anchor.
    fn exhaustive(batch: &[EmbeddingVector], margin: f64, metric: Metric) -> f64 {
        let mut total = 0.0;
        let mut count = 0;
        for a in 0..batch.len() {
            let mut worst: Option<f64> = None;
            for p in 0..batch.len() {
                if p == a || batch[p].identity != batch[a].identity {
                    continue;
                }
                for n in 0..batch.len() {
                    if batch[n].identity == batch[a].identity {
                        continue;
                    }
                    let v = distance(&batch[a].values, &batch[p].values, metric).unwrap()
                        - distance(&batch[a].values, &batch[n].values, metric).unwrap();
                    worst = Some(worst.map_or(v, |w: f64| w.max(v)));
                }
            }
            if let Some(w) = worst {
                total += (w + margin).max(0.0);
                count += 1;
            }
        }
        total / f64::from(count)
    }

    fn random_batch(rng: &mut ChaCha8Rng, n: usize, ids: u64, dim: usize) -> Vec<EmbeddingVector> {
        (0..n)
            .map(|i| {
                let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                emb(&v, i as u64 % ids)
            })
            .collect()
    }

    #[test]
    fn separated_clusters_have_zero_loss() {
        let b = vec![
            emb(&[0.0, 0.0], 1),
            emb(&[0.01, 0.0], 1),
            emb(&[10.0, 0.0], 2),
            emb(&[10.0, 0.01], 2),
        ];
        assert_eq!(batch_hard_triplet(&b, 0.3, Metric::Euclidean).unwrap().loss, 0.0);
    }

    #[test]
    fn identical_embeddings_give_margin() {
        let b: Vec<_> = (0..6).map(|i| emb(&[0.5, 0.5], i % 2)).collect();
        let out = batch_hard_triplet(&b, 0.3, Metric::Euclidean).unwrap();
        assert_eq!(out.loss, 0.3);
    }

    #[test]
    fn matches_exhaustive_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let b = random_batch(&mut rng, 12, 3, 5);
        for metric in [Metric::Euclidean, Metric::Cosine] {
            let got = batch_hard_triplet(&b, 0.3, metric).unwrap().loss;
            assert!((got - exhaustive(&b, 0.3, metric)).abs() <= 1e-10);
        }
    }

    #[test]
    fn invalid_batches() {
        assert!(batch_hard_triplet(&[emb(&[0.0], 1), emb(&[1.0], 1)], 0.3, Metric::Euclidean).is_err());
        assert!(batch_hard_triplet(&[emb(&[0.0], 1), emb(&[1.0], 2)], 0.3, Metric::Euclidean).is_err());
        let unlabeled = vec![EmbeddingVector::new(vec![0.0]), emb(&[1.0], 2)];
        assert!(batch_hard_triplet(&unlabeled, 0.3, Metric::Euclidean).is_err());
    }

    #[test]
    fn permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = random_batch(&mut rng, 10, 3, 4);
        let mut r = b.clone();
        r.reverse();
        r.swap(1, 7);
        let x = batch_hard_triplet(&b, 0.2, Metric::Euclidean).unwrap().loss;
        let y = batch_hard_triplet(&r, 0.2, Metric::Euclidean).unwrap().loss;
        assert!((x - y).abs() < 1e-12);
    }

    #[test]
    fn cosine_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let b = random_batch(&mut rng, 9, 3, 4);
        let scaled: Vec<_> = b
            .iter()
            .map(|e| emb(&e.values.iter().map(|v| v * 3.7).collect::<Vec<_>>(), e.identity.unwrap()))
            .collect();
        let x = batch_hard_triplet(&b, 0.2, Metric::Cosine).unwrap();
        let y = batch_hard_triplet(&scaled, 0.2, Metric::Cosine).unwrap();
        for (a, b) in x.hard_negative.iter().zip(&y.hard_negative) {
            assert!((a.1 - b.1).abs() < 1e-12);
        }
        for (a, b) in x.hard_positive.iter().zip(&y.hard_positive) {
            assert!((a.unwrap().1 - b.unwrap().1).abs() < 1e-12);
        }
    }

    #[test]
    fn cross_entropy_examples() {
        assert!(cross_entropy(&[100.0, 0.0, 0.0], 0).unwrap() < 1e-10);
        let v = 7;
        let l = cross_entropy(&vec![0.25; v], 3).unwrap();
        assert!((l - (v as f64).ln()).abs() < 1e-15);
        assert!(matches!(cross_entropy(&[0.0, 1.0], 2), Err(Error::LabelOutOfRange { .. })));
    }

    #[test]
    fn cross_entropy_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let logits: Vec<f64> = (0..6).map(|_| rng.random_range(-3.0..3.0)).collect();
            let label = rng.random_range(0..6);
            let (_, g) = cross_entropy_grad(&logits, label).unwrap();
            for k in 0..logits.len() {
                let h = 1e-5;
                let mut up = logits.clone();
                let mut down = logits.clone();
                up[k] += h;
                down[k] -= h;
                let num = (cross_entropy(&up, label).unwrap() - cross_entropy(&down, label).unwrap()) / (2.0 * h);
                let rel = (g[k] - num).abs() / g[k].abs().max(num.abs()).max(1e-8);
                assert!(rel <= 1e-6, "rel {rel}");
            }
        }
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn triplet_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for metric in [Metric::Euclidean, Metric::Cosine] {
            let b = random_batch(&mut rng, 8, 2, 3);
            let (_, g) = batch_hard_triplet_grad(&b, 0.5, metric).unwrap();
            for i in 0..b.len() {
                for k in 0..3 {
                    let h = 1e-6;
                    let mut up = b.clone();
                    let mut down = b.clone();
                    up[i].values[k] += h;
                    down[i].values[k] -= h;
                    let num = (batch_hard_triplet(&up, 0.5, metric).unwrap().loss
                        - batch_hard_triplet(&down, 0.5, metric).unwrap().loss)
                        / (2.0 * h);
                    assert!((g[i][k] - num).abs() < 1e-6, "{metric:?} {i} {k}: {} vs {num}", g[i][k]);
                }
            }
        }
    }

    #[test]
    fn aggregation_reduces_to_components() {
        let b = vec![
            emb(&[0.0, 0.0], 0),
            emb(&[0.01, 0.0], 0),
            emb(&[10.0, 0.0], 1),
            emb(&[10.0, 0.01], 1),
        ];
        let logits = vec![vec![1.0, 0.0], vec![2.0, -1.0], vec![0.0, 0.5], vec![0.3, 0.2]];
        let labels = vec![0, 0, 1, 1];
        let xe: f64 = logits.iter().zip(&labels).map(|(l, &y)| cross_entropy(l, y).unwrap()).sum::<f64>() / 4.0;
        let cfg = LossConfig {
            xe_weight: 2.0,
            ..Default::default()
        };
        assert!((aggregation_loss(&b, &logits, &labels, &cfg).unwrap() - 2.0 * xe).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = random_batch(&mut rng, 6, 2, 2);
        let labels: Vec<usize> = b.iter().map(|e| e.identity.unwrap() as usize).collect();
        let tr = batch_hard_triplet(&b, 0.3, Metric::Euclidean).unwrap().loss;
        let xe: f64 = labels.iter().map(|&y| cross_entropy(&[0.2, -0.4], y).unwrap()).sum::<f64>() / 6.0;
        let total = aggregation_loss(&b, &vec![vec![0.2, -0.4]; 6], &labels, &LossConfig::default()).unwrap();
        assert!((total - (xe + tr)).abs() <= 1e-12);
    }
}
