//! Softmax cross-entropy training of the GAP head over frozen features.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{class_scores, gap, PooledFeatures};
use crate::error::{Error, Result};
use crate::fmap::{ClassWeights, FeatureMaps};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapTrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// L2 penalty on the weights (not the bias).
    pub l2: f64,
}

impl Default for GapTrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 200,
            batch_size: 16,
            seed: 42,
            l2: 0.0,
        }
    }
}

impl GapTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::config("lr", format!("must be > 0, got {}", self.learning_rate)));
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs", "must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch-size", "must be >= 1"));
        }
        if !(self.l2.is_finite() && self.l2 >= 0.0) {
            return Err(Error::config("l2", format!("must be >= 0, got {}", self.l2)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainedClassifier {
    pub weights: ClassWeights,
    /// Mean regularized loss over the full dataset after the last epoch.
    pub final_loss: f64,
    /// Same quantity after every epoch.
    pub loss_history: Vec<f64>,
}

impl TrainedClassifier {
    pub fn accuracy(&self, data: &[(PooledFeatures, usize)]) -> f64 {
        let correct = data
            .iter()
            .filter(|(pf, label)| {
                class_scores(pf, &self.weights)
                    .map(|s| s.argmax() == *label)
                    .unwrap_or(false)
            })
            .count();
        correct as f64 / data.len().max(1) as f64
    }
}

/// Log of the softmax normalizer. Non-finite scores yield NaN.
fn log_sum_exp(scores: &[f64]) -> f64 {
    if scores.iter().any(|s| !s.is_finite()) {
        return f64::NAN;
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln()
}

/// Mean softmax cross-entropy over `batch` plus `0.5 * l2 * |W|^2`, and its
/// gradient with respect to the weights and biases (packed as `ClassWeights`).
pub fn loss_and_gradient(
    weights: &ClassWeights,
    batch: &[(PooledFeatures, usize)],
    l2: f64,
) -> Result<(f64, ClassWeights)> {
    if batch.is_empty() {
        return Err(Error::Empty("training batch"));
    }
    let (classes, channels) = (weights.classes(), weights.channels());
    let mut grad_w = vec![0f64; classes * channels];
    let mut grad_b = vec![0f64; classes];
    let mut loss = 0.0;
    for (pf, label) in batch {
        if *label >= classes {
            return Err(Error::ClassOutOfRange { index: *label, classes });
        }
        let scores = class_scores(pf, weights)?;
        let lse = log_sum_exp(&scores.0);
        loss += lse - scores.0[*label];
        for c in 0..classes {
            let delta = (scores.0[c] - lse).exp() - if c == *label { 1.0 } else { 0.0 };
            grad_b[c] += delta;
            for (g, &f) in grad_w[c * channels..(c + 1) * channels].iter_mut().zip(&pf.0) {
                *g += delta * f;
            }
        }
    }
    let n = batch.len() as f64;
    loss /= n;
    grad_w.iter_mut().for_each(|g| *g /= n);
    grad_b.iter_mut().for_each(|g| *g /= n);
    if l2 > 0.0 {
        loss += 0.5 * l2 * weights.weights().iter().map(|w| w * w).sum::<f64>();
        for (g, w) in grad_w.iter_mut().zip(weights.weights()) {
            *g += l2 * w;
        }
    }
    // gradients may be non-finite when training diverges; the caller checks the loss
    let grad = ClassWeights::new(classes, channels, grad_w, grad_b)
        .unwrap_or_else(|_| ClassWeights::zeros(classes, channels).expect("valid shape"));
    Ok((loss, grad))
}

/// Trains `C × K` weights on globally pooled features by seeded mini-batch
/// gradient descent, starting from zero. `C` is one more than the largest label
/// (at least 2) and every class in `0..C` needs an example.
pub fn train_gap_classifier(dataset: &[(FeatureMaps, usize)], cfg: &GapTrainConfig) -> Result<TrainedClassifier> {
    let pooled: Vec<(PooledFeatures, usize)> = dataset.iter().map(|(fm, l)| (gap(fm), *l)).collect();
    train_on_pooled(&pooled, cfg)
}

pub(crate) fn train_on_pooled(data: &[(PooledFeatures, usize)], cfg: &GapTrainConfig) -> Result<TrainedClassifier> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Empty("training dataset"));
    }
    let channels = data[0].0.channels();
    if let Some((pf, _)) = data.iter().find(|(pf, _)| pf.channels() != channels) {
        return Err(Error::ShapeMismatch(format!(
            "inconsistent channel counts in dataset: {} and {}",
            channels,
            pf.channels()
        )));
    }
    let classes = data.iter().map(|(_, l)| l + 1).max().unwrap_or(0).max(2);
    for c in 0..classes {
        if !data.iter().any(|(_, l)| *l == c) {
            return Err(Error::EmptyClass(c));
        }
    }

    let mut weights = ClassWeights::zeros(classes, channels)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut batch = Vec::with_capacity(cfg.batch_size);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| data[i].clone()));
            let (loss, grad) = loss_and_gradient(&weights, &batch, cfg.l2)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            for (w, g) in weights.weights_mut().iter_mut().zip(grad.weights()) {
                *w -= cfg.learning_rate * g;
            }
            for (b, g) in weights.bias_mut().iter_mut().zip(grad.bias()) {
                *b -= cfg.learning_rate * g;
            }
            if weights.weights().iter().chain(weights.bias()).any(|v| !v.is_finite()) {
                return Err(Error::Divergence { epoch });
            }
        }
        let (loss, _) = loss_and_gradient(&weights, data, cfg.l2)?;
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        history.push(loss);
    }
    Ok(TrainedClassifier {
        weights,
        final_loss: *history.last().expect("epochs >= 1"),
        loss_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn separable() -> Vec<(PooledFeatures, usize)> {
        let mut data = Vec::new();
        for i in 0..20 {
            let jitter = (i as f64 - 10.0) * 0.02;
            data.push((PooledFeatures(vec![1.0 + jitter, 1.0 - jitter]), 0));
            data.push((PooledFeatures(vec![-1.0 - jitter, -1.0 + jitter]), 1));
        }
        data
    }

    #[test]
    fn separable_clusters_fit() {
        let cfg = GapTrainConfig {
            learning_rate: 0.1,
            epochs: 200,
            batch_size: 8,
            seed: 42,
            l2: 0.0,
        };
        let data = separable();
        let trained = train_on_pooled(&data, &cfg).unwrap();
        assert_eq!(trained.accuracy(&data), 1.0);
        assert!(trained.final_loss < 0.1);
    }

    #[test]
    fn full_batch_loss_non_increasing() {
        let data = separable();
        let cfg = GapTrainConfig {
            learning_rate: 1e-3,
            epochs: 50,
            batch_size: data.len(),
            seed: 0,
            l2: 0.0,
        };
        let trained = train_on_pooled(&data, &cfg).unwrap();
        for pair in trained.loss_history.windows(2) {
            assert!(pair[1] <= pair[0], "{pair:?}");
        }
    }

    #[test]
    fn empty_class_rejected() {
        let data = vec![(PooledFeatures(vec![1.0]), 0), (PooledFeatures(vec![1.0]), 0)];
        assert!(matches!(
            train_on_pooled(&data, &GapTrainConfig::default()),
            Err(Error::EmptyClass(1))
        ));
        let gap_label = vec![(PooledFeatures(vec![1.0]), 0), (PooledFeatures(vec![2.0]), 2)];
        assert!(matches!(
            train_on_pooled(&gap_label, &GapTrainConfig::default()),
            Err(Error::EmptyClass(1))
        ));
    }

    #[test]
    fn divergence_reports_epoch() {
        let data = vec![(PooledFeatures(vec![1e200]), 0), (PooledFeatures(vec![-1e200]), 1)];
        let cfg = GapTrainConfig {
            learning_rate: 1e100,
            ..Default::default()
        };
        assert!(matches!(
            train_on_pooled(&data, &cfg),
            Err(Error::Divergence { epoch: 0 })
        ));
    }

    #[test]
    fn deterministic_for_seed() {
        let data = separable();
        let cfg = GapTrainConfig {
            epochs: 5,
            ..Default::default()
        };
        let a = train_on_pooled(&data, &cfg).unwrap();
        let b = train_on_pooled(&data, &cfg).unwrap();
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.loss_history, b.loss_history);
    }

    #[test]
    fn invalid_config() {
        let data = separable();
        for cfg in [
            GapTrainConfig {
                learning_rate: 0.0,
                ..Default::default()
            },
            GapTrainConfig {
                epochs: 0,
                ..Default::default()
            },
            GapTrainConfig {
                batch_size: 0,
                ..Default::default()
            },
            GapTrainConfig {
                l2: -1.0,
                ..Default::default()
            },
        ] {
            assert!(matches!(train_on_pooled(&data, &cfg), Err(Error::InvalidConfig { .. })));
        }
    }
}
