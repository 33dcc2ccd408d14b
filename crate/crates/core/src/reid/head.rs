//! A linear embedding head with an identity classifier, trained on the
//! aggregation loss with PK-sampled batches and RMSProp.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::reid::distance::{distance, EmbeddingVector, Metric};
use crate::reid::loss::{batch_hard_triplet_grad, cross_entropy_grad, LossConfig};

/// `embedding = Wᵀ x + b`, `logits = Cᵀ embedding + c`.
///
/// `weights` is `F x D` and `classifier` is `D x V`, both row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingHead {
    pub feature_dim: usize,
    pub embedding_dim: usize,
    pub classes: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub classifier: Vec<f64>,
    pub class_bias: Vec<f64>,
}

/// Gradient with the same layout as [`EmbeddingHead`]'s parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadGradient {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub classifier: Vec<f64>,
    pub class_bias: Vec<f64>,
}

impl EmbeddingHead {
    /// Gaussian weights scaled by fan-in, zero biases.
    pub fn init(feature_dim: usize, embedding_dim: usize, classes: usize, seed: u64) -> Result<Self> {
        if feature_dim == 0 || embedding_dim == 0 || classes == 0 {
            return Err(Error::Config("head dimensions must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = Normal::new(0.0, 1.0 / (feature_dim as f64).sqrt()).expect("valid std");
        let c = Normal::new(0.0, 1.0 / (embedding_dim as f64).sqrt()).expect("valid std");
        Ok(Self {
            feature_dim,
            embedding_dim,
            classes,
            weights: (0..feature_dim * embedding_dim).map(|_| w.sample(&mut rng)).collect(),
            bias: vec![0.0; embedding_dim],
            classifier: (0..embedding_dim * classes).map(|_| c.sample(&mut rng)).collect(),
            class_bias: vec![0.0; classes],
        })
    }

    pub fn embed(&self, features: &[f64]) -> Result<Vec<f64>> {
        if features.len() != self.feature_dim {
            return Err(Error::DimensionMismatch {
                expected: self.feature_dim,
                actual: features.len(),
            });
        }
        let d = self.embedding_dim;
        let mut out = self.bias.clone();
        for (i, x) in features.iter().enumerate() {
            let row = &self.weights[i * d..(i + 1) * d];
            for (o, w) in out.iter_mut().zip(row) {
                *o += x * w;
            }
        }
        Ok(out)
    }

    pub fn logits(&self, embedding: &[f64]) -> Vec<f64> {
        let v = self.classes;
        let mut out = self.class_bias.clone();
        for (j, e) in embedding.iter().enumerate() {
            let row = &self.classifier[j * v..(j + 1) * v];
            for (o, c) in out.iter_mut().zip(row) {
                *o += e * c;
            }
        }
        out
    }

    fn zero_gradient(&self) -> HeadGradient {
        HeadGradient {
            weights: vec![0.0; self.weights.len()],
            bias: vec![0.0; self.bias.len()],
            classifier: vec![0.0; self.classifier.len()],
            class_bias: vec![0.0; self.class_bias.len()],
        }
    }

    /// Aggregation loss of a labeled batch and its gradient wrt every
    /// parameter. `labels[i]` is a class index in `0..classes`.
    #[allow(clippy::needless_range_loop)]
    pub fn loss_and_gradient(&self, features: &[Vec<f64>], labels: &[usize], cfg: &LossConfig) -> Result<(f64, HeadGradient)> {
        cfg.validate()?;
        if features.len() != labels.len() || features.is_empty() {
            return Err(Error::Batch("features and labels must have equal non-zero length".into()));
        }
        let n = features.len() as f64;
        let (d, v) = (self.embedding_dim, self.classes);
        let embeddings: Vec<EmbeddingVector> = features
            .iter()
            .zip(labels)
            .map(|(x, &y)| Ok(EmbeddingVector::labeled(self.embed(x)?, y as u64)))
            .collect::<Result<_>>()?;

        let mut grad = self.zero_gradient();
        let mut emb_grad = vec![vec![0.0; d]; features.len()];

        let mut xe = 0.0;
        for (s, e) in embeddings.iter().enumerate() {
            let logits = self.logits(&e.values);
            let (l, g) = cross_entropy_grad(&logits, labels[s])?;
            xe += l;
            let scale = cfg.xe_weight / n;
            for k in 0..v {
                let gk = g[k] * scale;
                grad.class_bias[k] += gk;
                for j in 0..d {
                    grad.classifier[j * v + k] += e.values[j] * gk;
                    emb_grad[s][j] += self.classifier[j * v + k] * gk;
                }
            }
        }
        xe /= n;

        let (tr, tr_grad) = batch_hard_triplet_grad(&embeddings, cfg.margin, cfg.metric)?;
        for (eg, tg) in emb_grad.iter_mut().zip(&tr_grad) {
            for (a, b) in eg.iter_mut().zip(tg) {
                *a += cfg.tr_weight * b;
            }
        }

        for (s, x) in features.iter().enumerate() {
            for j in 0..d {
                grad.bias[j] += emb_grad[s][j];
            }
            for (i, xi) in x.iter().enumerate() {
                for j in 0..d {
                    grad.weights[i * d + j] += xi * emb_grad[s][j];
                }
            }
        }
        Ok((cfg.xe_weight * xe + cfg.tr_weight * tr, grad))
    }

    /// Loss only.
    pub fn loss(&self, features: &[Vec<f64>], labels: &[usize], cfg: &LossConfig) -> Result<f64> {
        Ok(self.loss_and_gradient(features, labels, cfg)?.0)
    }

    fn params_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [&mut self.weights, &mut self.bias, &mut self.classifier, &mut self.class_bias]
    }

    /// Flattened parameters in checkpoint order.
    pub fn parameters(&self) -> Vec<f64> {
        [&self.weights, &self.bias, &self.classifier, &self.class_bias]
            .into_iter()
            .flatten()
            .copied()
            .collect()
    }

    pub fn set_parameters(&mut self, values: &[f64]) -> Result<()> {
        let total = self.weights.len() + self.bias.len() + self.classifier.len() + self.class_bias.len();
        if values.len() != total {
            return Err(Error::DimensionMismatch {
                expected: total,
                actual: values.len(),
            });
        }
        let mut offset = 0;
        for p in self.params_mut() {
            let len = p.len();
            p.copy_from_slice(&values[offset..offset + len]);
            offset += len;
        }
        Ok(())
    }
}

impl HeadGradient {
    pub fn flatten(&self) -> Vec<f64> {
        [&self.weights, &self.bias, &self.classifier, &self.class_bias]
            .into_iter()
            .flatten()
            .copied()
            .collect()
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Samples drawn per identity in a batch (the `K` of PK sampling).
    pub samples_per_identity: usize,
    pub learning_rate: f64,
    /// RMSProp squared-gradient decay.
    pub rho: f64,
    pub epsilon: f64,
    pub embedding_dim: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 128,
            samples_per_identity: 4,
            learning_rate: 0.001,
            rho: 0.9,
            epsilon: 1e-7,
            embedding_dim: 128,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedHead {
    pub head: EmbeddingHead,
    /// Identity label for each classifier output.
    pub class_identities: Vec<u64>,
    /// Mean aggregation loss of each epoch's batches.
    pub loss_trace: Vec<f64>,
}

/// Draws one PK batch: `P` distinct identities, `K` samples each (without
/// replacement while an identity has enough samples).
fn pk_batch(rng: &mut ChaCha8Rng, by_class: &[Vec<usize>], p: usize, k: usize) -> Vec<usize> {
    let mut classes: Vec<usize> = (0..by_class.len()).collect();
    classes.shuffle(rng);
    let mut out = Vec::with_capacity(p * k);
    for &c in classes.iter().take(p) {
        let pool = &by_class[c];
        if pool.len() >= k {
            out.extend(pool.choose_multiple(rng, k).copied());
        } else {
            for _ in 0..k {
                out.push(*pool.choose(rng).expect("non-empty class"));
            }
        }
    }
    out
}

/// Trains a head on labeled features.
///
/// Each epoch draws `ceil(n / batch_size)` PK batches. With a fixed seed the
/// loss trace and parameters are bitwise reproducible.
pub fn train_head(samples: &[EmbeddingVector], loss_cfg: &LossConfig, cfg: &TrainConfig) -> Result<TrainedHead> {
    loss_cfg.validate()?;
    let feature_dim = samples
        .first()
        .map(EmbeddingVector::dim)
        .ok_or_else(|| Error::Batch("no training samples".into()))?;
    let mut classes: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        if s.dim() != feature_dim {
            return Err(Error::DimensionMismatch {
                expected: feature_dim,
                actual: s.dim(),
            });
        }
        let id = s
            .identity
            .ok_or_else(|| Error::Batch("training sample without identity".into()))?;
        classes.entry(id).or_default().push(i);
    }
    if classes.len() < 2 {
        return Err(Error::Batch("training needs at least two identities".into()));
    }
    if cfg.samples_per_identity < 2 || cfg.batch_size < 2 * cfg.samples_per_identity {
        return Err(Error::Config(
            "batch must hold at least two identities with two samples each".into(),
        ));
    }
    let class_identities: Vec<u64> = classes.keys().copied().collect();
    let class_of: BTreeMap<u64, usize> = class_identities.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let by_class: Vec<Vec<usize>> = classes.into_values().collect();
    let labels: Vec<usize> = samples.iter().map(|s| class_of[&s.identity.unwrap_or_default()]).collect();

    let mut head = EmbeddingHead::init(feature_dim, cfg.embedding_dim, by_class.len(), cfg.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let p = (cfg.batch_size / cfg.samples_per_identity).min(by_class.len()).max(2);
    let batches_per_epoch = samples.len().div_ceil(cfg.batch_size).max(1);
    let mut sq_avg = vec![0.0; head.parameters().len()];
    let mut loss_trace = Vec::with_capacity(cfg.epochs);

    for _ in 0..cfg.epochs {
        let mut epoch_loss = 0.0;
        for _ in 0..batches_per_epoch {
            let idx = pk_batch(&mut rng, &by_class, p, cfg.samples_per_identity);
            let feats: Vec<Vec<f64>> = idx.iter().map(|&i| samples[i].values.clone()).collect();
            let labs: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            let (loss, grad) = head.loss_and_gradient(&feats, &labs, loss_cfg)?;
            epoch_loss += loss;
            let g = grad.flatten();
            let mut params = head.parameters();
            for ((theta, s), gi) in params.iter_mut().zip(sq_avg.iter_mut()).zip(&g) {
                *s = cfg.rho * *s + (1.0 - cfg.rho) * gi * gi;
                *theta -= cfg.learning_rate * gi / (s.sqrt() + cfg.epsilon);
            }
            head.set_parameters(&params)?;
        }
        loss_trace.push(epoch_loss / batches_per_epoch as f64);
    }
    Ok(TrainedHead {
        head,
        class_identities,
        loss_trace,
    })
}

/// Fraction of queries whose nearest gallery item shares their identity.
pub fn rank1_accuracy(query: &[EmbeddingVector], gallery: &[EmbeddingVector], metric: Metric) -> Result<f64> {
    if query.is_empty() || gallery.is_empty() {
        return Err(Error::Batch("rank-1 needs non-empty query and gallery".into()));
    }
    let mut hits = 0usize;
    for q in query {
        let mut best: Option<(f64, Option<u64>)> = None;
        for g in gallery {
            let d = distance(&q.values, &g.values, metric)?;
            if best.is_none_or(|(b, _)| d < b) {
                best = Some((d, g.identity));
            }
        }
        if best.and_then(|b| b.1) == q.identity && q.identity.is_some() {
            hits += 1;
        }
    }
    Ok(hits as f64 / query.len() as f64)
}

/// Text checkpoint: header `F,D,V`, then the `F` rows of `weights`, the bias
/// row, the `D` rows of `classifier` and the class-bias row. Values carry 17
/// significant digits so parsing restores them exactly.
pub fn write_checkpoint(head: &EmbeddingHead) -> String {
    let mut out = format!("{},{},{}\n", head.feature_dim, head.embedding_dim, head.classes);
    let mut row = |values: &[f64]| {
        let cells: Vec<String> = values.iter().map(|v| format!("{v:.16e}")).collect();
        let _ = writeln!(out, "{}", cells.join(","));
    };
    for r in head.weights.chunks(head.embedding_dim) {
        row(r);
    }
    row(&head.bias);
    for r in head.classifier.chunks(head.classes) {
        row(r);
    }
    row(&head.class_bias);
    out
}

pub fn parse_checkpoint(source: &str, text: &str) -> Result<EmbeddingHead> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (hline, header) = lines
        .next()
        .ok_or_else(|| Error::parse(source, 1, "empty checkpoint"))?;
    let dims: Vec<usize> = header
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::parse(source, hline + 1, "expected header `F,D,V`"))?;
    let [f, d, v] = dims[..] else {
        return Err(Error::parse(source, hline + 1, "expected header `F,D,V`"));
    };
    if f == 0 || d == 0 || v == 0 {
        return Err(Error::parse(source, hline + 1, "dimensions must be positive"));
    }
    let expected_rows = f.checked_add(d).and_then(|x| x.checked_add(2));
    let mut rows = Vec::new();
    for (i, l) in lines {
        let width = if rows.len() <= f { d } else { v };
        if Some(rows.len()) >= expected_rows {
            return Err(Error::parse(source, i + 1, "too many rows"));
        }
        let vals: Vec<f64> = l
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::parse(source, i + 1, "invalid parameter value"))?;
        if vals.len() != width || vals.iter().any(|x| !x.is_finite()) {
            return Err(Error::parse(source, i + 1, format!("expected {width} finite values")));
        }
        rows.push(vals);
    }
    if Some(rows.len()) != expected_rows {
        return Err(Error::parse(source, 0, "truncated checkpoint"));
    }
    let class_bias = rows.pop().expect("row count checked");
    let classifier: Vec<f64> = rows.drain(f + 1..).flatten().collect();
    let bias = rows.pop().expect("row count checked");
    let weights: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(EmbeddingHead {
        feature_dim: f,
        embedding_dim: d,
        classes: v,
        weights,
        bias,
        classifier,
        class_bias,
    })
}
