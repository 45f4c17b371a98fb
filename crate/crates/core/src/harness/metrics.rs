//! Metric reduction over a finished run's records.

use serde::{Deserialize, Serialize};

use crate::harness::round::{RoundRecord, RunOutput};

/// Headline metrics of one run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Mean over rounds of misalignment + noise distortion.
    pub time_average_mse: f64,
    pub mean_misalignment: f64,
    pub mean_noise: f64,
    /// Mean over rounds of the post-round weighted PAoI sum.
    pub mean_ws_paoi: f64,
    pub final_ws_paoi: f64,
    /// Fraction of rounds each device's update reached the aggregate.
    pub selection_frequency: Vec<f64>,
    /// Fraction of rounds each device was picked (before any dropping).
    pub pick_frequency: Vec<f64>,
    pub average_completion: f64,
    pub final_loss: f64,
    pub final_accuracy: f64,
}

pub fn report(run: &RunOutput) -> MetricsReport {
    let records = &run.records;
    let t = records.len() as f64;
    let n = records[0].paoi.len();
    let mut selection = vec![0.0; n];
    let mut picks = vec![0.0; n];
    for r in records {
        for &d in &r.transmitters {
            selection[d] += 1.0;
        }
        for &d in &r.picked {
            picks[d] += 1.0;
        }
    }
    for f in selection.iter_mut().chain(picks.iter_mut()) {
        *f /= t;
    }
    let last = records.last().expect("non-empty run");
    MetricsReport {
        time_average_mse: run.time_average_mse(),
        mean_misalignment: records.iter().map(|r| r.misalignment).sum::<f64>() / t,
        mean_noise: records.iter().map(|r| r.noise).sum::<f64>() / t,
        mean_ws_paoi: records.iter().map(|r| r.ws_paoi).sum::<f64>() / t,
        final_ws_paoi: last.ws_paoi,
        selection_frequency: selection,
        pick_frequency: picks,
        average_completion: records.iter().map(|r| r.completion_time).sum::<f64>() / t,
        final_loss: last.global_loss,
        final_accuracy: last.test_accuracy,
    }
}

/// Per-round weighted PAoI sums.
pub fn ws_trajectory(records: &[RoundRecord]) -> Vec<f64> {
    records.iter().map(|r| r.ws_paoi).collect()
}

/// Prefix means: `out[t] = mean(xs[0..=t])`.
pub fn running_average(xs: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(xs.len());
    let mut sum = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        sum += x;
        out.push(sum / (i + 1) as f64);
    }
    out
}

/// Ordinary least-squares slope of `xs` against its index.
pub fn linear_slope(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    assert!(xs.len() >= 2, "slope of fewer than two points");
    let mean_i = (n - 1.0) / 2.0;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let di = i as f64 - mean_i;
        num += di * (x - mean_x);
        den += di * di;
    }
    num / den
}

/// Slope over the final quarter of the sequence.
pub fn last_quarter_slope(xs: &[f64]) -> f64 {
    let start = xs.len() - (xs.len() / 4).max(2);
    linear_slope(&xs[start..])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn slope_of_a_line_is_exact() {
        let xs: Vec<f64> = (0..40).map(|i| 3.0 + 0.25 * i as f64).collect();
        assert_relative_eq!(linear_slope(&xs), 0.25, max_relative = 1e-12);
        assert_relative_eq!(last_quarter_slope(&xs), 0.25, max_relative = 1e-12);
        let flat = vec![7.0; 16];
        assert_relative_eq!(linear_slope(&flat), 0.0);
    }

    #[test]
    fn running_average_hand_case() {
        let avg = running_average(&[2.0, 4.0, 6.0]);
        assert_eq!(avg, vec![2.0, 3.0, 4.0]);
    }
}
