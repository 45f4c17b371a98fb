//! Desk-scale learning task: multinomial logistic regression.
//!
//! The model is deliberately small and convex; it exists to exercise the
//! aggregation machinery with real gradients, not to chase benchmarks. A
//! selected device runs `local_iterations` steps of mini-batch SGD from the
//! broadcast weights; what it contributes back is the cumulative update
//! `(w_start - w_end) / learning_rate`, the sum of the stochastic gradients
//! it applied. Batches are drawn uniformly without replacement within an
//! iteration and independently across iterations.

pub mod data;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};
use data::Dataset;

/// Flattened softmax-regression weights.
///
/// Row `c` of the `n_classes x (n_features + 1)` matrix holds class `c`'s
/// feature weights followed by its bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub weights: Vec<f64>,
    pub n_classes: usize,
    pub n_features: usize,
}

impl ModelParams {
    pub fn zeros(n_classes: usize, n_features: usize) -> Self {
        assert!(n_classes >= 2, "need at least two classes");
        assert!(n_features >= 1, "need at least one feature");
        ModelParams { weights: vec![0.0; n_classes * (n_features + 1)], n_classes, n_features }
    }

    /// Gaussian initialization with the given scale.
    pub fn random<R: Rng + ?Sized>(
        n_classes: usize,
        n_features: usize,
        scale: f64,
        rng: &mut R,
    ) -> Self {
        let mut model = Self::zeros(n_classes, n_features);
        for w in model.weights.iter_mut() {
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            *w = scale * z;
        }
        model
    }

    /// Total parameter count `d`.
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    fn row(&self, class: usize) -> &[f64] {
        let stride = self.n_features + 1;
        &self.weights[class * stride..(class + 1) * stride]
    }

    /// Class scores for one sample.
    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.n_features);
        (0..self.n_classes)
            .map(|c| {
                let row = self.row(c);
                row[..self.n_features]
                    .iter()
                    .zip(x)
                    .map(|(&w, &xi)| w * xi)
                    .sum::<f64>()
                    + row[self.n_features]
            })
            .collect()
    }

    /// Class probabilities for one sample (numerically stable softmax).
    pub fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        let mut logits = self.logits(x);
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for l in logits.iter_mut() {
            *l = (*l - max).exp();
            sum += *l;
        }
        for l in logits.iter_mut() {
            *l /= sum;
        }
        logits
    }
}

/// Local SGD hyperparameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub local_iterations: usize,
    pub batch_size: usize,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::domain(
                "TrainConfig",
                format!("learning_rate must be positive, got {}", self.learning_rate),
            ));
        }
        if self.local_iterations == 0 {
            return Err(Error::domain("TrainConfig", "local_iterations must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::domain("TrainConfig", "batch_size must be >= 1"));
        }
        Ok(())
    }
}

/// Mean cross-entropy of the model on a dataset.
pub fn cross_entropy(model: &ModelParams, data: &Dataset) -> f64 {
    assert!(!data.is_empty(), "loss of an empty dataset");
    let mut total = 0.0;
    for (x, &y) in data.features.iter().zip(&data.labels) {
        let p = model.probabilities(x);
        total -= p[y].max(1e-300).ln();
    }
    total / data.len() as f64
}

/// Weighted global objective `sum_n q_n * F_n(w)` over the given shards.
pub fn global_loss(model: &ModelParams, shards: &[Dataset], weights: &[f64]) -> f64 {
    assert_eq!(shards.len(), weights.len());
    shards
        .iter()
        .zip(weights)
        .map(|(shard, &q)| q * cross_entropy(model, shard))
        .sum()
}

/// Fraction of samples classified correctly (argmax of the scores).
pub fn accuracy(model: &ModelParams, data: &Dataset) -> f64 {
    assert!(!data.is_empty());
    let correct = data
        .features
        .iter()
        .zip(&data.labels)
        .filter(|(x, &y)| {
            let logits = model.logits(x);
            let best = logits
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| i)
                .expect("non-empty logits");
            best == y
        })
        .count();
    correct as f64 / data.len() as f64
}

/// Mean cross-entropy gradient over the indexed samples, flattened like the
/// weights: for class `c` and feature `j`, `(p_c - [c == y]) * x_j`, with
/// the bias entry `(p_c - [c == y])`.
pub fn gradient(model: &ModelParams, data: &Dataset, batch: &[usize]) -> Vec<f64> {
    assert!(!batch.is_empty(), "gradient of an empty batch");
    let stride = model.n_features + 1;
    let mut grad = vec![0.0; model.dim()];
    for &i in batch {
        let x = &data.features[i];
        let y = data.labels[i];
        let p = model.probabilities(x);
        for c in 0..model.n_classes {
            let coeff = p[c] - if c == y { 1.0 } else { 0.0 };
            let row = &mut grad[c * stride..(c + 1) * stride];
            for (g, &xj) in row[..model.n_features].iter_mut().zip(x) {
                *g += coeff * xj;
            }
            row[model.n_features] += coeff;
        }
    }
    let scale = 1.0 / batch.len() as f64;
    for g in grad.iter_mut() {
        *g *= scale;
    }
    grad
}

/// Runs local mini-batch SGD and returns the final weights together with
/// the cumulative update `(w_start - w_end) / learning_rate`.
///
/// A batch larger than the dataset degrades to full-batch steps.
pub fn local_sgd<R: Rng + ?Sized>(
    start: &ModelParams,
    data: &Dataset,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<(ModelParams, Vec<f64>)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::domain("local_sgd", "empty local dataset"));
    }
    let mut model = start.clone();
    let take = cfg.batch_size.min(data.len());
    for _ in 0..cfg.local_iterations {
        let batch: Vec<usize> = if take == data.len() {
            (0..data.len()).collect()
        } else {
            rand::seq::index::sample(rng, data.len(), take).into_vec()
        };
        let grad = gradient(&model, data, &batch);
        for (w, g) in model.weights.iter_mut().zip(&grad) {
            *w -= cfg.learning_rate * g;
        }
    }
    let theta = crate::aircomp::cumulative_update(&start.weights, &model.weights, cfg.learning_rate)?;
    Ok((model, theta))
}

/// Applies the aggregated update: `w <- w - learning_rate * theta_hat`.
pub fn global_update(model: &ModelParams, theta_hat: &[f64], learning_rate: f64) -> Result<ModelParams> {
    if theta_hat.len() != model.dim() {
        return Err(Error::LengthMismatch {
            context: "global_update",
            left: theta_hat.len(),
            right: model.dim(),
        });
    }
    let mut next = model.clone();
    for (w, &t) in next.weights.iter_mut().zip(theta_hat) {
        *w -= learning_rate * t;
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn toy_dataset() -> Dataset {
        // Three well-separated clusters in 4 dimensions.
        let mut rng = crate::rng::data_rng(99);
        data::gaussian_clusters(120, 3, 4, 0.4, 3.0, &mut rng)
    }

    #[test]
    fn zero_model_loss_is_log_c() {
        let data = toy_dataset();
        let model = ModelParams::zeros(3, 4);
        assert_relative_eq!(cross_entropy(&model, &data), 3.0f64.ln(), max_relative = 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let data = toy_dataset();
        let mut rng = crate::rng::init_rng(4);
        let model = ModelParams::random(3, 4, 0.3, &mut rng);
        let all: Vec<usize> = (0..data.len()).collect();
        let grad = gradient(&model, &data, &all);
        let eps = 1e-6;
        for j in 0..model.dim() {
            let mut plus = model.clone();
            plus.weights[j] += eps;
            let mut minus = model.clone();
            minus.weights[j] -= eps;
            let fd = (cross_entropy(&plus, &data) - cross_entropy(&minus, &data)) / (2.0 * eps);
            assert!(
                (grad[j] - fd).abs() <= 1e-5 * fd.abs().max(1e-3),
                "component {j}: analytic {} vs fd {}",
                grad[j],
                fd
            );
        }
    }

    #[test]
    fn one_full_batch_step_recovers_gradient_for_any_rate() {
        let data = toy_dataset();
        let model = ModelParams::zeros(3, 4);
        let all: Vec<usize> = (0..data.len()).collect();
        let g = gradient(&model, &data, &all);
        for lr in [0.01, 5.0] {
            let cfg = TrainConfig { learning_rate: lr, local_iterations: 1, batch_size: usize::MAX };
            let (_, theta) =
                local_sgd(&model, &data, &cfg, &mut crate::rng::batch_rng(1, 0, 0)).unwrap();
            for (t, gi) in theta.iter().zip(&g) {
                assert_relative_eq!(*t, *gi, max_relative = 1e-10, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn sgd_reduces_loss_on_separable_task() {
        let data = toy_dataset();
        let model = ModelParams::zeros(3, 4);
        let cfg = TrainConfig { learning_rate: 0.2, local_iterations: 60, batch_size: 32 };
        let before = cross_entropy(&model, &data);
        let (trained, theta) =
            local_sgd(&model, &data, &cfg, &mut crate::rng::batch_rng(1, 0, 1)).unwrap();
        let after = cross_entropy(&trained, &data);
        assert!(after < 0.5 * before, "loss {before} -> {after}");
        assert!(accuracy(&trained, &data) > 0.9);
        // Update direction reproduces the weight movement.
        let rebuilt = global_update(&model, &theta, cfg.learning_rate).unwrap();
        for (a, b) in rebuilt.weights.iter().zip(&trained.weights) {
            assert_relative_eq!(*a, *b, epsilon = 1e-12);
        }
    }

    #[test]
    fn batches_are_without_replacement_within_iteration() {
        let data = toy_dataset();
        // Probe the sampler directly: indices in one draw must be distinct.
        let mut rng = crate::rng::batch_rng(7, 3, 5);
        for _ in 0..50 {
            let mut idx = rand::seq::index::sample(&mut rng, data.len(), 32).into_vec();
            idx.sort_unstable();
            idx.dedup();
            assert_eq!(idx.len(), 32);
        }
    }

    #[test]
    fn weighted_global_loss_combines_shards() {
        let data = toy_dataset();
        let mut rng = crate::rng::data_rng(123);
        let (shards, q) = data::partition_by_classes(&data, &[2, 2, 3], &mut rng).unwrap();
        let model = ModelParams::zeros(3, 4);
        let total = global_loss(&model, &shards, &q);
        // Every shard of a zero model sits at ln(3), and q sums to one.
        assert_relative_eq!(total, 3.0f64.ln(), max_relative = 1e-12);
    }
}
