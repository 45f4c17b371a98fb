//! Per-round latency model.
//!
//! A selected device first computes its local update, then transmits. Local
//! computation takes `mu * |D_n| / (tau_n * C_n)` seconds, where `mu` is the
//! processing density in CPU cycles per sample, `|D_n|` the local dataset
//! size, `C_n` the device's CPU frequency in cycles per second, and
//! `tau_n in (0, 1]` the fraction of the CPU the device can spare this
//! round. `tau` is redrawn uniformly from `[tau_min, 1]` each round, which
//! is what makes round times fluctuate even for a fixed fleet.
//!
//! Transmission is over-the-air: all selected devices transmit their `D`
//! model symbols simultaneously in a shared band of `B` symbols per second,
//! so communication time is `D / B` regardless of how many devices take
//! part. A round completes when its slowest selected device finishes.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Static computation characteristics of one device.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ComputeProfile {
    /// Processing density in CPU cycles per sample.
    pub cycles_per_sample: f64,
    /// Number of local training samples.
    pub dataset_size: usize,
    /// CPU frequency in cycles per second.
    pub cpu_cycles: f64,
}

impl ComputeProfile {
    pub fn validate(&self) -> Result<()> {
        if !(self.cycles_per_sample > 0.0) || !self.cycles_per_sample.is_finite() {
            return Err(Error::domain(
                "ComputeProfile",
                format!("cycles_per_sample must be positive, got {}", self.cycles_per_sample),
            ));
        }
        if self.dataset_size == 0 {
            return Err(Error::domain("ComputeProfile", "dataset_size must be >= 1"));
        }
        if !(self.cpu_cycles > 0.0) || !self.cpu_cycles.is_finite() {
            return Err(Error::domain(
                "ComputeProfile",
                format!("cpu_cycles must be positive, got {}", self.cpu_cycles),
            ));
        }
        Ok(())
    }
}

/// Shared over-the-air transmission characteristics.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CommParams {
    /// Model payload in symbols.
    pub model_symbols: f64,
    /// Channel rate in symbols per second.
    pub bandwidth: f64,
}

impl CommParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.model_symbols > 0.0) || !self.model_symbols.is_finite() {
            return Err(Error::domain(
                "CommParams",
                format!("model_symbols must be positive, got {}", self.model_symbols),
            ));
        }
        if !(self.bandwidth > 0.0) || !self.bandwidth.is_finite() {
            return Err(Error::domain(
                "CommParams",
                format!("bandwidth must be positive, got {}", self.bandwidth),
            ));
        }
        Ok(())
    }
}

/// Local computation time under resource fraction `tau`.
pub fn computation_time(profile: &ComputeProfile, tau: f64) -> Result<f64> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::domain(
            "computation_time",
            format!("resource fraction must be positive, got {tau}"),
        ));
    }
    Ok(profile.cycles_per_sample * profile.dataset_size as f64 / (tau * profile.cpu_cycles))
}

/// Over-the-air transmission time, independent of the number of
/// simultaneous transmitters.
pub fn communication_time(comm: &CommParams) -> f64 {
    comm.model_symbols / comm.bandwidth
}

/// Computation plus communication for one device in one round.
pub fn total_time(profile: &ComputeProfile, tau: f64, comm: &CommParams) -> Result<f64> {
    Ok(computation_time(profile, tau)? + communication_time(comm))
}

/// Draws this round's resource fraction uniformly from `[tau_min, 1]`.
pub fn draw_resource<R: Rng + ?Sized>(tau_min: f64, rng: &mut R) -> f64 {
    debug_assert!(tau_min > 0.0 && tau_min <= 1.0);
    rng.random_range(tau_min..=1.0)
}

/// Expected per-round total time under `tau ~ U[tau_min, 1]`, using
/// `E[1/tau] = ln(1/tau_min) / (1 - tau_min)` (continuity limit 1 at
/// `tau_min = 1`). Useful for picking deadlines before any draw happens.
pub fn expected_total_time(
    profile: &ComputeProfile,
    tau_min: f64,
    comm: &CommParams,
) -> Result<f64> {
    if !(tau_min > 0.0) || tau_min > 1.0 {
        return Err(Error::domain(
            "expected_total_time",
            format!("tau_min must lie in (0, 1], got {tau_min}"),
        ));
    }
    let inv_tau_mean =
        if tau_min == 1.0 { 1.0 } else { (1.0 / tau_min).ln() / (1.0 - tau_min) };
    let compute = profile.cycles_per_sample * profile.dataset_size as f64 / profile.cpu_cycles;
    Ok(compute * inv_tau_mean + communication_time(comm))
}

/// Round completion time: the slowest selected device.
pub fn completion_time(total_times: &[f64], selected: &[bool]) -> Result<f64> {
    if total_times.len() != selected.len() {
        return Err(Error::LengthMismatch {
            context: "completion_time",
            left: total_times.len(),
            right: selected.len(),
        });
    }
    let max = total_times
        .iter()
        .zip(selected)
        .filter(|(_, &s)| s)
        .map(|(&t, _)| t)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::EmptySelection { context: "completion_time" });
    }
    Ok(max)
}

/// [`completion_time`] over an index set instead of a mask.
pub fn completion_time_over(total_times: &[f64], selected: &[usize]) -> Result<f64> {
    let max = selected
        .iter()
        .map(|&n| total_times[n])
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::EmptySelection { context: "completion_time" });
    }
    Ok(max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn hand_values() {
        let profile = ComputeProfile {
            cycles_per_sample: 1e7,
            dataset_size: 500,
            cpu_cycles: 0.5e9,
        };
        assert_relative_eq!(computation_time(&profile, 1.0).unwrap(), 10.0);
        // Halving the available resource doubles the time.
        assert_relative_eq!(computation_time(&profile, 0.5).unwrap(), 20.0);

        let comm = CommParams { model_symbols: 11.7e6, bandwidth: 20e6 };
        assert_relative_eq!(communication_time(&comm), 0.585);
        assert_relative_eq!(total_time(&profile, 1.0, &comm).unwrap(), 10.585);
    }

    #[test]
    fn tau_domain() {
        let profile = ComputeProfile {
            cycles_per_sample: 1.0,
            dataset_size: 1,
            cpu_cycles: 1.0,
        };
        assert!(computation_time(&profile, 0.0).is_err());
        assert!(computation_time(&profile, -0.5).is_err());
        assert!(computation_time(&profile, f64::NAN).is_err());
    }

    #[test]
    fn completion_hand_value_and_empty() {
        let times = [3.0, 5.0, 2.0];
        assert_relative_eq!(completion_time(&times, &[true, false, true]).unwrap(), 3.0);
        assert_relative_eq!(completion_time_over(&times, &[0, 2]).unwrap(), 3.0);
        assert!(matches!(
            completion_time(&times, &[false, false, false]),
            Err(crate::Error::EmptySelection { .. })
        ));
        assert!(completion_time_over(&times, &[]).is_err());
    }

    #[test]
    fn expected_time_hand_value_and_limit() {
        let profile = ComputeProfile {
            cycles_per_sample: 1e7,
            dataset_size: 500,
            cpu_cycles: 0.5e9,
        };
        let comm = CommParams { model_symbols: 11.7e6, bandwidth: 20e6 };
        // E[1/tau] at tau_min = 0.2 is ln(5) / 0.8.
        let expected = 10.0 * 5.0f64.ln() / 0.8 + 0.585;
        assert_relative_eq!(
            expected_total_time(&profile, 0.2, &comm).unwrap(),
            expected,
            max_relative = 1e-15
        );
        // Degenerate resource distribution: tau is always 1.
        assert_relative_eq!(expected_total_time(&profile, 1.0, &comm).unwrap(), 10.585);
        // Monte-Carlo agreement.
        let mut rng = crate::rng::resource_rng(42, 0);
        let mean = (0..200_000)
            .map(|_| total_time(&profile, draw_resource(0.2, &mut rng), &comm).unwrap())
            .sum::<f64>()
            / 200_000.0;
        assert_relative_eq!(mean, expected, max_relative = 5e-3);
        assert!(expected_total_time(&profile, 0.0, &comm).is_err());
    }

    #[test]
    fn resource_draws_stay_in_range() {
        let mut rng = crate::rng::resource_rng(5, 0);
        for _ in 0..10_000 {
            let tau = draw_resource(0.2, &mut rng);
            assert!((0.2..=1.0).contains(&tau));
        }
        // Deterministic under the same stream.
        let a = draw_resource(0.2, &mut crate::rng::resource_rng(5, 3));
        let b = draw_resource(0.2, &mut crate::rng::resource_rng(5, 3));
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn completion_is_max_over_selected(
            times in proptest::collection::vec(0.0f64..1e6, 1..40),
            mask_bits in proptest::collection::vec(any::<bool>(), 1..40),
        ) {
            let n = times.len().min(mask_bits.len());
            let times = &times[..n];
            let mask = &mask_bits[..n];
            let expected = times
                .iter()
                .zip(mask)
                .filter(|(_, &s)| s)
                .map(|(&t, _)| t)
                .fold(f64::NEG_INFINITY, f64::max);
            match completion_time(times, mask) {
                Ok(t) => {
                    prop_assert_eq!(t, expected);
                    for (i, &sel) in mask.iter().enumerate() {
                        if sel {
                            prop_assert!(t >= times[i]);
                        }
                    }
                }
                Err(_) => prop_assert!(mask.iter().all(|&s| !s)),
            }
        }
    }
}
