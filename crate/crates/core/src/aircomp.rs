//! Analog over-the-air aggregation of model updates.
//!
//! All selected devices transmit simultaneously in the same band; the
//! channel itself sums their signals. To make that sum meaningful each
//! device first normalizes its cumulative update with *shared* statistics:
//! the server collects every selected device's update mean and variance
//! over an error-free scalar side channel, forms the global mean and
//! variance, and broadcasts them. Device `n` then sends
//! `z_n = (theta_n - mean) / std` scaled by `sqrt(alpha_n * pmax_n)` and
//! phase-rotated by `conj(h_n) / |h_n|`, so its contribution arrives as the
//! real amplitude `sqrt(alpha_n * pmax_n) * |h_n| * z_n`.
//!
//! The server scales the received sum by `1 / sqrt(eta)` and undoes the
//! normalization. When every amplitude aligns to `sqrt(eta)` and the noise
//! is zero, the de-normalized estimate equals the plain average
//! `(1/K) * sum theta_n` exactly; any misalignment or noise shows up as the
//! aggregation error `(std / K) * (z_hat - sum z_n)`, which ties the
//! learning-side error to the power-control objective in [`crate::power`].
//!
//! With non-uniform aggregation weights the ideal transmitted target is
//! still `sum z_n`: the weighted global statistics shift the normalization,
//! but the de-normalized estimate remains the uniform average of the
//! selected updates. The gap between that and the weight-aware aggregate is
//! exposed by [`weighting_bias`] rather than silently folded in.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Global normalization statistics of one round's selected updates.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AggregateStats {
    /// Weighted global mean of update components.
    pub mean: f64,
    /// Weighted global variance of update components.
    pub variance: f64,
    /// Number of aggregated devices.
    pub k: usize,
}

impl AggregateStats {
    pub fn std(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// Cumulative local update: `(w_start - w_end) / learning_rate`, the sum of
/// the stochastic gradients applied during local training.
pub fn cumulative_update(w_start: &[f64], w_end: &[f64], learning_rate: f64) -> Result<Vec<f64>> {
    if w_start.len() != w_end.len() {
        return Err(Error::LengthMismatch {
            context: "cumulative_update",
            left: w_start.len(),
            right: w_end.len(),
        });
    }
    if !(learning_rate > 0.0) || !learning_rate.is_finite() {
        return Err(Error::domain(
            "cumulative_update",
            format!("learning rate must be positive, got {learning_rate}"),
        ));
    }
    Ok(w_start
        .iter()
        .zip(w_end)
        .map(|(&a, &b)| (a - b) / learning_rate)
        .collect())
}

/// Component mean and population variance of one device's update.
pub fn device_stats(theta: &[f64]) -> (f64, f64) {
    assert!(!theta.is_empty(), "empty update vector");
    let d = theta.len() as f64;
    let mean = theta.iter().sum::<f64>() / d;
    let variance = theta.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / d;
    (mean, variance)
}

/// Combines per-device statistics into the global normalization pair:
/// `mean = (N/K) * sum q_n * mean_n`, `variance = (N/K) * sum q_n * var_n`.
pub fn aggregate_stats(
    per_device: &[(f64, f64)],
    weights: &[f64],
    n_total: usize,
) -> Result<AggregateStats> {
    if per_device.len() != weights.len() {
        return Err(Error::LengthMismatch {
            context: "aggregate_stats",
            left: per_device.len(),
            right: weights.len(),
        });
    }
    let k = per_device.len();
    if k == 0 {
        return Err(Error::EmptySelection { context: "aggregate_stats" });
    }
    if n_total < k {
        return Err(Error::domain(
            "aggregate_stats",
            format!("{k} selected devices out of a fleet of {n_total}"),
        ));
    }
    let scale = n_total as f64 / k as f64;
    let mut mean = 0.0;
    let mut variance = 0.0;
    for (&(m, v), &q) in per_device.iter().zip(weights) {
        if v < 0.0 || !v.is_finite() || !m.is_finite() {
            return Err(Error::domain("aggregate_stats", format!("invalid stats ({m}, {v})")));
        }
        mean += q * m;
        variance += q * v;
    }
    Ok(AggregateStats { mean: scale * mean, variance: scale * variance, k })
}

/// Normalizes one update with the global statistics.
///
/// Fails with [`Error::DegenerateStats`] when the global variance is zero,
/// which happens exactly when every selected device produced a constant,
/// identical-spread update; the caller decides how to aggregate then (the
/// estimate collapses to the global mean regardless of the channel).
pub fn normalize(theta: &[f64], stats: &AggregateStats) -> Result<Vec<f64>> {
    if !(stats.variance > 0.0) {
        return Err(Error::DegenerateStats);
    }
    let std = stats.std();
    Ok(theta.iter().map(|&x| (x - stats.mean) / std).collect())
}

/// Undoes the normalization on the server's scaled receive signal:
/// `theta_hat = (std / K) * z_hat + mean`.
pub fn denormalize(z_hat: &[f64], stats: &AggregateStats) -> Vec<f64> {
    let scale = stats.std() / stats.k as f64;
    z_hat.iter().map(|&z| scale * z + stats.mean).collect()
}

/// The error-free aggregation target: the plain sum of normalized updates.
pub fn ideal_target(z_list: &[Vec<f64>]) -> Vec<f64> {
    assert!(!z_list.is_empty(), "no transmitters");
    let d = z_list[0].len();
    let mut out = vec![0.0; d];
    for z in z_list {
        assert_eq!(z.len(), d, "update dimension mismatch");
        for (o, &v) in out.iter_mut().zip(z) {
            *o += v;
        }
    }
    out
}

/// Simultaneous transmission over the fading channel.
///
/// Each device pre-rotates by `conj(h_n) / |h_n|`, so its signal lands with
/// real amplitude `sqrt(alpha_n * pmax_n) * |h_n|`; the server adds
/// receiver noise of variance `sigma2` per component and divides by
/// `sqrt(eta)`. A device with a dead channel (`|h| = 0`) contributes
/// nothing: there is no phase to compensate and no amplitude to carry.
pub fn transmit_and_aggregate<R: Rng + ?Sized>(
    z_list: &[Vec<f64>],
    alphas: &[f64],
    pmaxes: &[f64],
    channels: &[Complex64],
    eta: f64,
    sigma2: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let k = z_list.len();
    if alphas.len() != k || pmaxes.len() != k || channels.len() != k {
        return Err(Error::LengthMismatch {
            context: "transmit_and_aggregate",
            left: k,
            right: alphas.len().min(pmaxes.len()).min(channels.len()),
        });
    }
    if k == 0 {
        return Err(Error::EmptySelection { context: "transmit_and_aggregate" });
    }
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::domain("transmit_and_aggregate", format!("eta = {eta} invalid")));
    }
    if sigma2 < 0.0 || !sigma2.is_finite() {
        return Err(Error::domain("transmit_and_aggregate", format!("sigma2 = {sigma2} invalid")));
    }
    let d = z_list[0].len();
    let sqrt_eta = eta.sqrt();
    let mut received = vec![0.0; d];
    for ((z, (&alpha, &pmax)), &h) in z_list.iter().zip(alphas.iter().zip(pmaxes)).zip(channels) {
        if z.len() != d {
            return Err(Error::LengthMismatch {
                context: "transmit_and_aggregate",
                left: z.len(),
                right: d,
            });
        }
        let magnitude = h.norm();
        if magnitude == 0.0 {
            continue;
        }
        // Post-compensation coefficient: h * conj(h) / |h| is real |h|.
        let compensated = (h * h.conj()).re / magnitude;
        let amplitude = (alpha * pmax).sqrt() * compensated;
        for (r, &zj) in received.iter_mut().zip(z) {
            *r += amplitude * zj;
        }
    }
    if sigma2 > 0.0 {
        let noise = Normal::new(0.0, sigma2.sqrt())
            .map_err(|e| Error::domain("transmit_and_aggregate", e.to_string()))?;
        for r in received.iter_mut() {
            *r += noise.sample(rng);
        }
    }
    for r in received.iter_mut() {
        *r /= sqrt_eta;
    }
    Ok(received)
}

/// Aggregation error in model space: `e = (std / K) * (z_hat - z_ideal)`.
/// Returns the error vector and its squared norm.
pub fn aggregation_error(
    z_hat: &[f64],
    z_ideal: &[f64],
    stats: &AggregateStats,
) -> Result<(Vec<f64>, f64)> {
    if z_hat.len() != z_ideal.len() {
        return Err(Error::LengthMismatch {
            context: "aggregation_error",
            left: z_hat.len(),
            right: z_ideal.len(),
        });
    }
    let scale = stats.std() / stats.k as f64;
    let e: Vec<f64> = z_hat.iter().zip(z_ideal).map(|(&a, &b)| scale * (a - b)).collect();
    let norm2 = e.iter().map(|&x| x * x).sum();
    Ok((e, norm2))
}

/// Plain average of the selected updates, `(1/K) * sum theta_n`: what the
/// chain reproduces exactly under perfect alignment and zero noise.
pub fn uniform_average(thetas: &[Vec<f64>]) -> Vec<f64> {
    assert!(!thetas.is_empty(), "no updates");
    let k = thetas.len() as f64;
    let d = thetas[0].len();
    let mut out = vec![0.0; d];
    for theta in thetas {
        assert_eq!(theta.len(), d);
        for (o, &v) in out.iter_mut().zip(theta) {
            *o += v;
        }
    }
    for o in out.iter_mut() {
        *o /= k;
    }
    out
}

/// Norm of the gap between the weight-aware aggregate
/// `(N/K) * sum q_n * theta_n` and the uniform average the analog chain
/// actually delivers. Zero under uniform weights.
pub fn weighting_bias(thetas: &[Vec<f64>], weights: &[f64], n_total: usize) -> Result<f64> {
    if thetas.len() != weights.len() {
        return Err(Error::LengthMismatch {
            context: "weighting_bias",
            left: thetas.len(),
            right: weights.len(),
        });
    }
    if thetas.is_empty() {
        return Err(Error::EmptySelection { context: "weighting_bias" });
    }
    let k = thetas.len();
    let d = thetas[0].len();
    let scale = n_total as f64 / k as f64;
    let uniform = uniform_average(thetas);
    let mut gap2 = 0.0;
    for j in 0..d {
        let weighted: f64 = thetas.iter().zip(weights).map(|(t, &q)| q * t[j]).sum();
        let diff = scale * weighted - uniform[j];
        gap2 += diff * diff;
    }
    Ok(gap2.sqrt())
}
