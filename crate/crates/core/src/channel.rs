//! Wireless channel model between devices and the server.
//!
//! Uplinks experience independent Rayleigh block fading: the channel
//! coefficient of device `n` is constant within a communication round and
//! redrawn independently across rounds. The squared magnitude decomposes as
//!
//! ```text
//! |h_n|^2 = |v_n|^2 * g * r_n^(-p) * w^(-2)
//! ```
//!
//! where `v_n` is circularly-symmetric complex Gaussian with unit second
//! moment (real and imaginary parts each N(0, 1/2)), `g` is the antenna
//! gain, `r_n` the device-to-server distance, `p` the path-loss exponent,
//! and `w` the carrier wavelength. Distances are static across a run; only
//! the small-scale term is random.
//!
//! Coefficients are kept complex so the transmitter-side phase
//! pre-compensation in [`crate::aircomp`] can cancel the phase explicitly;
//! everything downstream of that cancellation depends on magnitudes only.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Static propagation geometry shared by all rounds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Antenna gain applied to every link.
    pub antenna_gain: f64,
    /// Path-loss exponent.
    pub path_loss_exponent: f64,
    /// Carrier wavelength.
    pub wavelength: f64,
    /// Device-to-server distances, one per device.
    pub distances: Vec<f64>,
}

impl ChannelParams {
    /// Unit-gain geometry: every device at distance 1 with gain 1 and
    /// wavelength 1, so `|h|^2 = |v|^2`.
    pub fn unit(n_devices: usize) -> Self {
        ChannelParams {
            antenna_gain: 1.0,
            path_loss_exponent: 2.0,
            wavelength: 1.0,
            distances: vec![1.0; n_devices],
        }
    }

    pub fn n_devices(&self) -> usize {
        self.distances.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.antenna_gain > 0.0) || !self.antenna_gain.is_finite() {
            return Err(Error::domain(
                "ChannelParams",
                format!("antenna_gain must be positive and finite, got {}", self.antenna_gain),
            ));
        }
        if !self.path_loss_exponent.is_finite() || self.path_loss_exponent < 0.0 {
            return Err(Error::domain(
                "ChannelParams",
                format!("path_loss_exponent must be finite and >= 0, got {}", self.path_loss_exponent),
            ));
        }
        if !(self.wavelength > 0.0) || !self.wavelength.is_finite() {
            return Err(Error::domain(
                "ChannelParams",
                format!("wavelength must be positive and finite, got {}", self.wavelength),
            ));
        }
        if self.distances.is_empty() {
            return Err(Error::domain("ChannelParams", "no devices: distances is empty"));
        }
        for (n, &r) in self.distances.iter().enumerate() {
            if !(r > 0.0) || !r.is_finite() {
                return Err(Error::domain(
                    "ChannelParams",
                    format!("distance of device {n} must be positive and finite, got {r}"),
                ));
            }
        }
        Ok(())
    }

    /// Deterministic large-scale attenuation of device `n`'s link:
    /// `g * r_n^(-p) * w^(-2)`.
    pub fn large_scale(&self, device: usize) -> f64 {
        self.antenna_gain
            * self.distances[device].powf(-self.path_loss_exponent)
            * self.wavelength.powi(-2)
    }
}

/// One round's channel draw for all devices.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    pub round: usize,
    /// Complex coefficients `h_n`, one per device.
    pub coefficients: Vec<Complex64>,
    /// Cached squared magnitudes `|h_n|^2`.
    pub gains: Vec<f64>,
}

impl ChannelRealization {
    pub fn n_devices(&self) -> usize {
        self.gains.len()
    }

    /// Checks the cached gains against the coefficients (exact equality:
    /// the cache is computed from the same values by the same expression).
    pub fn audit(&self) -> bool {
        self.coefficients.len() == self.gains.len()
            && self
                .coefficients
                .iter()
                .zip(&self.gains)
                .all(|(h, &g)| h.norm_sqr() == g)
    }
}

/// Draws one small-scale fading coefficient: real and imaginary parts
/// independent N(0, 1/2), so `E[|v|^2] = 1` and `|v|^2` is Exp(1).
pub fn sample_small_scale<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let half = Normal::new(0.0, std::f64::consts::FRAC_1_SQRT_2).expect("valid stddev");
    Complex64::new(half.sample(rng), half.sample(rng))
}

/// Squared channel magnitude of device `n` under small-scale draw `v`.
pub fn channel_gain(small_scale: Complex64, params: &ChannelParams, device: usize) -> f64 {
    assert!(device < params.n_devices(), "device index {device} out of range");
    small_scale.norm_sqr() * params.large_scale(device)
}

/// Draws the block-fading realization of one round for all devices.
///
/// The realization is constant within the round; callers pass a fresh
/// round-keyed stream (see [`crate::rng::channel_rng`]) so draws are
/// independent across rounds and identical across policies.
pub fn realize_round<R: Rng + ?Sized>(
    params: &ChannelParams,
    round: usize,
    rng: &mut R,
) -> ChannelRealization {
    let n = params.n_devices();
    let mut coefficients = Vec::with_capacity(n);
    let mut gains = Vec::with_capacity(n);
    for device in 0..n {
        let v = sample_small_scale(rng);
        let h = v * params.large_scale(device).sqrt();
        coefficients.push(h);
        gains.push(h.norm_sqr());
    }
    ChannelRealization { round, coefficients, gains }
}

/// Receiver noise variance from the mean power budget and an SNR in dB:
/// `sigma^2 = p_bar / 10^(snr_db / 10)`.
///
/// With heterogeneous budgets the caller passes the mean budget, keeping a
/// single receiver-side noise level for the whole fleet.
pub fn noise_variance_from_snr(p_bar: f64, snr_db: f64) -> f64 {
    assert!(p_bar >= 0.0 && p_bar.is_finite(), "power budget must be finite and >= 0");
    p_bar / 10f64.powf(snr_db / 10.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gain_hand_values() {
        // |v|^2 = 4, gain 0.5, distance 10, exponent 2, wavelength 1.
        let params = ChannelParams {
            antenna_gain: 0.5,
            path_loss_exponent: 2.0,
            wavelength: 1.0,
            distances: vec![10.0],
        };
        assert_relative_eq!(channel_gain(Complex64::new(2.0, 0.0), &params, 0), 0.02);

        // |v|^2 = 1, gain 1, distance 2, exponent 0, wavelength 2.
        let params = ChannelParams {
            antenna_gain: 1.0,
            path_loss_exponent: 0.0,
            wavelength: 2.0,
            distances: vec![2.0],
        };
        assert_relative_eq!(channel_gain(Complex64::new(0.0, 1.0), &params, 0), 0.25);

        // Unit geometry passes |v|^2 through.
        let params = ChannelParams::unit(1);
        assert_relative_eq!(channel_gain(Complex64::new(1.0, 1.0), &params, 0), 2.0);
    }

    #[test]
    fn small_scale_moments() {
        let mut rng = crate::rng::channel_rng(1234, 0);
        let n = 1_000_000usize;
        let mut sum_re = 0.0;
        let mut sum_im = 0.0;
        let mut sum_re2 = 0.0;
        let mut sum_im2 = 0.0;
        let mut sum_p = 0.0;
        let mut sum_p2 = 0.0;
        for _ in 0..n {
            let v = sample_small_scale(&mut rng);
            sum_re += v.re;
            sum_im += v.im;
            sum_re2 += v.re * v.re;
            sum_im2 += v.im * v.im;
            let p = v.norm_sqr();
            sum_p += p;
            sum_p2 += p * p;
        }
        let nf = n as f64;
        assert!(sum_re.abs() / nf < 3e-3, "Re mean {}", sum_re / nf);
        assert!(sum_im.abs() / nf < 3e-3, "Im mean {}", sum_im / nf);
        assert_relative_eq!(sum_re2 / nf, 0.5, max_relative = 0.01);
        assert_relative_eq!(sum_im2 / nf, 0.5, max_relative = 0.01);
        // |v|^2 is Exp(1): mean 1, variance 1.
        let mean_p = sum_p / nf;
        assert_relative_eq!(mean_p, 1.0, max_relative = 0.01);
        assert_relative_eq!(sum_p2 / nf - mean_p * mean_p, 1.0, max_relative = 0.03);
    }

    #[test]
    fn block_fading_constant_within_round_independent_across() {
        let params = ChannelParams::unit(4);
        let a = realize_round(&params, 17, &mut crate::rng::channel_rng(9, 17));
        let b = realize_round(&params, 17, &mut crate::rng::channel_rng(9, 17));
        assert_eq!(a.gains, b.gains, "same round must reproduce");

        // Lag-1 correlation of one device's gain across 10^4 rounds.
        let rounds = 10_000usize;
        let gains: Vec<f64> = (0..rounds)
            .map(|t| realize_round(&params, t, &mut crate::rng::channel_rng(9, t as u64)).gains[2])
            .collect();
        let m = gains.iter().sum::<f64>() / rounds as f64;
        let var = gains.iter().map(|g| (g - m) * (g - m)).sum::<f64>() / rounds as f64;
        let cov = gains
            .windows(2)
            .map(|w| (w[0] - m) * (w[1] - m))
            .sum::<f64>()
            / (rounds - 1) as f64;
        assert!((cov / var).abs() < 0.05, "lag-1 correlation {}", cov / var);
    }

    #[test]
    fn realization_caches_squared_magnitudes() {
        let params = ChannelParams {
            antenna_gain: 2.0,
            path_loss_exponent: 2.5,
            wavelength: 0.3,
            distances: vec![5.0, 50.0, 500.0],
        };
        let real = realize_round(&params, 0, &mut crate::rng::channel_rng(3, 0));
        assert!(real.audit());
        // Farther devices are weaker on average; check the deterministic part.
        assert!(params.large_scale(0) > params.large_scale(1));
        assert!(params.large_scale(1) > params.large_scale(2));
    }

    #[test]
    fn noise_variance_hand_values() {
        assert_relative_eq!(noise_variance_from_snr(1.0, 10.0), 0.1);
        assert_relative_eq!(noise_variance_from_snr(1.0, 0.0), 1.0);
        assert_relative_eq!(noise_variance_from_snr(2.0, 20.0), 0.02);
    }

    #[test]
    fn params_validation() {
        let mut p = ChannelParams::unit(3);
        assert!(p.validate().is_ok());
        p.distances[1] = 0.0;
        assert!(p.validate().is_err());
        p.distances[1] = 1.0;
        p.wavelength = -1.0;
        assert!(p.validate().is_err());
        p.wavelength = 1.0;
        p.distances.clear();
        assert!(p.validate().is_err());
    }
}
