//! Experiment configuration: a TOML document with one section per concern.
//!
//! Every key has a default matching the reference setup (20 devices, 10 dB
//! SNR, peak power three times the budget, 10 MHz-class timing constants),
//! so an empty document is a valid experiment. Unknown keys are rejected:
//! a typo must fail loudly, not silently fall back to a default.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::ChannelParams;
use crate::timing::{CommParams, ComputeProfile};
use crate::{Error, Result};

/// Who picks devices and how transmit power is set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    /// Age-aware greedy selection plus jointly optimized power.
    Fedairaoi,
    /// Age-aware greedy selection; every device transmits its budget power.
    FullPower,
    /// Age-aware greedy selection; devices invert their channels or drop out.
    ChannelInversion,
    /// Uniform random selection of a fixed-size set; optimized power.
    Fedavg,
    /// Uniform random selection, stragglers dropped at a deadline; optimized power.
    Hybridfl,
}

impl Policy {
    pub const ALL: [Policy; 5] = [
        Policy::Fedairaoi,
        Policy::FullPower,
        Policy::ChannelInversion,
        Policy::Fedavg,
        Policy::Hybridfl,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Policy::Fedairaoi => "fedairaoi",
            Policy::FullPower => "full-power",
            Policy::ChannelInversion => "channel-inversion",
            Policy::Fedavg => "fedavg",
            Policy::Hybridfl => "hybridfl",
        }
    }

    /// Whether selection is the age-aware greedy sweep (as opposed to
    /// uniform sampling).
    pub fn age_aware(&self) -> bool {
        matches!(self, Policy::Fedairaoi | Policy::FullPower | Policy::ChannelInversion)
    }
}

impl std::str::FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Policy::ALL
            .iter()
            .find(|p| p.name() == s)
            .copied()
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown policy '{s}'; expected one of {}",
                    Policy::ALL.map(|p| p.name()).join(", ")
                ))
            })
    }
}

impl std::fmt::Display for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// How power fractions are chosen for the optimizing policies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PowerMode {
    /// Joint optimization over the whole horizon (needs all rounds' gains).
    Offline,
    /// Per-round optimization with running budget multipliers.
    Online,
}

impl std::str::FromStr for PowerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "offline" => Ok(PowerMode::Offline),
            "online" => Ok(PowerMode::Online),
            _ => Err(Error::Config(format!(
                "unknown power mode '{s}'; expected offline or online"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelSection {
    /// Antenna gain factor in the large-scale model.
    pub antenna_gain: f64,
    /// Path-loss exponent applied to distance.
    pub path_loss_exponent: f64,
    /// Carrier wavelength; enters the large-scale model as `wavelength^-2`.
    pub wavelength: f64,
    /// Device distances are spaced evenly over `[distance_min, distance_max]`.
    pub distance_min: f64,
    pub distance_max: f64,
}

impl Default for ChannelSection {
    fn default() -> Self {
        ChannelSection {
            antenna_gain: 1.0,
            path_loss_exponent: 2.2,
            wavelength: 1.0,
            distance_min: 1.0,
            distance_max: 2.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimingSection {
    /// CPU cycles to train one sample.
    pub cycles_per_sample: f64,
    /// Device CPU frequency, cycles per second.
    pub cpu_cycles: f64,
    /// Lower end of the uniform per-round resource fraction.
    pub tau_min: f64,
    /// Upload bandwidth, symbols per second.
    pub bandwidth: f64,
    /// Model upload size, symbols.
    pub model_symbols: f64,
}

impl Default for TimingSection {
    fn default() -> Self {
        TimingSection {
            cycles_per_sample: 1e7,
            cpu_cycles: 0.5e9,
            tau_min: 0.2,
            bandwidth: 20e6,
            model_symbols: 11.7e6,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub local_iterations: usize,
    pub batch_size: usize,
    /// Synthetic task shape.
    pub n_classes: usize,
    pub n_features: usize,
    /// Total generated samples; a `test_fraction` slice is held out before
    /// partitioning the rest across devices.
    pub samples: usize,
    pub test_fraction: f64,
    pub cluster_std: f64,
    pub separation: f64,
    /// Distinct classes per device. Omitted: device `n` gets
    /// `1 + (n mod min(4, n_classes))` classes, a deliberately skewed fleet.
    pub class_counts: Option<Vec<usize>>,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            learning_rate: 0.2,
            local_iterations: 4,
            batch_size: 16,
            n_classes: 5,
            n_features: 8,
            samples: 1200,
            test_fraction: 0.2,
            cluster_std: 0.8,
            separation: 2.5,
            class_counts: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PowerSection {
    /// Per-device average power budget.
    pub pbar: f64,
    /// Peak power as a multiple of the budget.
    pub pmax_factor: f64,
    /// Alternating-optimizer stopping threshold (relative improvement).
    pub epsilon0: f64,
    /// Alternating-optimizer iteration cap.
    pub max_iters: usize,
    pub mode: PowerMode,
    /// Online multiplier step is `online_step_scale / pmax`.
    pub online_step_scale: f64,
}

impl Default for PowerSection {
    fn default() -> Self {
        PowerSection {
            pbar: 1.0,
            pmax_factor: 3.0,
            epsilon0: 1e-5,
            max_iters: 200,
            mode: PowerMode::Offline,
            online_step_scale: 0.1,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectionSection {
    /// Devices per round for the uniform-sampling policies. Omitted: matched
    /// to the age-aware policy's mean selection size on the same seed.
    pub k_fixed: Option<usize>,
    /// Straggler-dropping deadline, seconds. Omitted: the fleet's median
    /// expected per-round total time.
    pub deadline: Option<f64>,
}

/// Analytical constants for the convergence-bound report. The section is
/// optional; when present, the run summary carries the evaluated bound,
/// fed with the run's own distortion trace and participation size.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundSection {
    /// Smoothness constant of the loss.
    pub smoothness: f64,
    /// Stochastic-gradient variance cap.
    pub gradient_noise_sq: f64,
    /// Gradient-divergence (heterogeneity) constant.
    pub heterogeneity_sq: f64,
    /// Per-element update-variance cap.
    pub element_variance: f64,
    /// Squared gradient-norm cap.
    pub gradient_cap_sq: f64,
    /// Initial optimality gap of the loss.
    pub initial_gap: f64,
}

impl Default for BoundSection {
    fn default() -> Self {
        BoundSection {
            smoothness: 1.0,
            gradient_noise_sq: 1.0,
            heterogeneity_sq: 1.0,
            element_variance: 1.0,
            gradient_cap_sq: 1.0,
            initial_gap: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Fleet size `N`.
    pub devices: usize,
    /// Communication rounds `T`.
    pub rounds: usize,
    /// Seeds per sweep/comparison cell.
    pub replications: usize,
    pub master_seed: u64,
    pub policy: Policy,
    /// Receive SNR grid in dB; single runs use the first entry.
    pub snr_db: Vec<f64>,
    pub channel: ChannelSection,
    pub timing: TimingSection,
    pub train: TrainSection,
    pub power: PowerSection,
    pub selection: SelectionSection,
    /// Present: the run summary includes the convergence-bound report.
    pub bound: Option<BoundSection>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            devices: 20,
            rounds: 100,
            replications: 1,
            master_seed: 1,
            policy: Policy::Fedairaoi,
            snr_db: vec![10.0],
            channel: ChannelSection::default(),
            timing: TimingSection::default(),
            train: TrainSection::default(),
            power: PowerSection::default(),
            selection: SelectionSection::default(),
            bound: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_path(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.devices == 0 || self.rounds == 0 || self.replications == 0 {
            return Err(Error::Config(
                "devices, rounds, replications must all be >= 1".into(),
            ));
        }
        if self.snr_db.is_empty() {
            return Err(Error::Config("snr_db list must not be empty".into()));
        }
        if self.snr_db.iter().any(|s| !s.is_finite()) {
            return Err(Error::Config("snr_db entries must be finite".into()));
        }
        self.channel_params().validate()?;
        let t = &self.timing;
        if !(t.tau_min > 0.0) || t.tau_min > 1.0 {
            return Err(Error::Config(format!(
                "timing.tau_min must lie in (0, 1], got {}",
                t.tau_min
            )));
        }
        self.comm_params().validate()?;
        // A representative compute profile; per-device dataset sizes are
        // checked when shards exist.
        self.compute_profile(1).validate()?;
        let tr = &self.train;
        crate::fl::TrainConfig {
            learning_rate: tr.learning_rate,
            local_iterations: tr.local_iterations,
            batch_size: tr.batch_size,
        }
        .validate()?;
        if tr.n_classes < 2 || tr.n_features == 0 {
            return Err(Error::Config("train.n_classes >= 2 and n_features >= 1 required".into()));
        }
        if !(0.0..0.9).contains(&tr.test_fraction) {
            return Err(Error::Config(format!(
                "train.test_fraction must lie in [0, 0.9), got {}",
                tr.test_fraction
            )));
        }
        if !(tr.cluster_std > 0.0) || tr.separation < 0.0 {
            return Err(Error::Config("train.cluster_std > 0 and separation >= 0 required".into()));
        }
        if let Some(counts) = &tr.class_counts {
            if counts.len() != self.devices {
                return Err(Error::Config(format!(
                    "train.class_counts has {} entries for {} devices",
                    counts.len(),
                    self.devices
                )));
            }
        }
        let p = &self.power;
        if !(p.pbar > 0.0) || !(p.pmax_factor >= 1.0) {
            return Err(Error::Config(
                "power.pbar must be positive and pmax_factor >= 1".into(),
            ));
        }
        if !(p.epsilon0 > 0.0) || p.max_iters == 0 {
            return Err(Error::Config(
                "power.epsilon0 must be positive and max_iters >= 1".into(),
            ));
        }
        if !(p.online_step_scale >= 0.0) {
            return Err(Error::Config("power.online_step_scale must be >= 0".into()));
        }
        if let Some(k) = self.selection.k_fixed {
            if k == 0 || k > self.devices {
                return Err(Error::Config(format!(
                    "selection.k_fixed must lie in 1..={}, got {k}",
                    self.devices
                )));
            }
        }
        if let Some(d) = self.selection.deadline {
            if !(d > 0.0) {
                return Err(Error::Config(format!("selection.deadline must be positive, got {d}")));
            }
        }
        if let Some(b) = &self.bound {
            for (name, v) in [
                ("smoothness", b.smoothness),
                ("gradient_noise_sq", b.gradient_noise_sq),
                ("heterogeneity_sq", b.heterogeneity_sq),
                ("element_variance", b.element_variance),
                ("gradient_cap_sq", b.gradient_cap_sq),
                ("initial_gap", b.initial_gap),
            ] {
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::Config(format!(
                        "bound.{name} must be finite and >= 0, got {v}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Device distances spaced evenly over the configured range.
    pub fn channel_params(&self) -> ChannelParams {
        let n = self.devices;
        let lo = self.channel.distance_min;
        let hi = self.channel.distance_max;
        let distances = (0..n)
            .map(|i| if n == 1 { lo } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 })
            .collect();
        ChannelParams {
            antenna_gain: self.channel.antenna_gain,
            path_loss_exponent: self.channel.path_loss_exponent,
            wavelength: self.channel.wavelength,
            distances,
        }
    }

    pub fn comm_params(&self) -> CommParams {
        CommParams {
            model_symbols: self.timing.model_symbols,
            bandwidth: self.timing.bandwidth,
        }
    }

    pub fn compute_profile(&self, dataset_size: usize) -> ComputeProfile {
        ComputeProfile {
            cycles_per_sample: self.timing.cycles_per_sample,
            dataset_size,
            cpu_cycles: self.timing.cpu_cycles,
        }
    }

    pub fn train_config(&self) -> crate::fl::TrainConfig {
        crate::fl::TrainConfig {
            learning_rate: self.train.learning_rate,
            local_iterations: self.train.local_iterations,
            batch_size: self.train.batch_size,
        }
    }

    /// Per-device class counts: configured, or the default skewed cycle.
    pub fn class_counts(&self) -> Vec<usize> {
        match &self.train.class_counts {
            Some(counts) => counts.clone(),
            None => {
                let span = self.train.n_classes.min(4);
                (0..self.devices).map(|n| 1 + n % span).collect()
            }
        }
    }

    pub fn pmaxes(&self) -> Vec<f64> {
        vec![self.power.pbar * self.power.pmax_factor; self.devices]
    }

    pub fn pbars(&self) -> Vec<f64> {
        vec![self.power.pbar; self.devices]
    }

    pub fn sigma2(&self, snr_db: f64) -> f64 {
        crate::channel::noise_variance_from_snr(self.power.pbar, snr_db)
    }

    /// Flattened model size: per-class weights plus bias.
    pub fn model_dimension(&self) -> usize {
        self.train.n_classes * (self.train.n_features + 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_the_reference_setup() {
        let cfg = ExperimentConfig::from_toml_str("").unwrap();
        assert_eq!(cfg.devices, 20);
        assert_eq!(cfg.policy, Policy::Fedairaoi);
        assert_eq!(cfg.power.pmax_factor, 3.0);
        assert_eq!(cfg.pmaxes()[0], 3.0);
        // 10 dB SNR over unit budget power: sigma^2 = 0.1.
        approx::assert_relative_eq!(cfg.sigma2(cfg.snr_db[0]), 0.1, max_relative = 1e-12);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml_str("typo_key = 3").is_err());
        assert!(ExperimentConfig::from_toml_str("[power]\npbar = 1.0\nbogus = 2").is_err());
    }

    #[test]
    fn overrides_apply_and_validate() {
        let cfg = ExperimentConfig::from_toml_str(
            "devices = 4\nrounds = 7\npolicy = \"hybridfl\"\nsnr_db = [0.0, 5.0]\n\
             [power]\nmode = \"online\"\n[selection]\nk_fixed = 2",
        )
        .unwrap();
        assert_eq!(cfg.devices, 4);
        assert_eq!(cfg.policy, Policy::Hybridfl);
        assert_eq!(cfg.power.mode, PowerMode::Online);
        assert_eq!(cfg.selection.k_fixed, Some(2));
        assert_eq!(cfg.channel_params().distances.len(), 4);

        assert!(ExperimentConfig::from_toml_str("devices = 0").is_err());
        assert!(ExperimentConfig::from_toml_str("snr_db = []").is_err());
        assert!(ExperimentConfig::from_toml_str("[selection]\nk_fixed = 99").is_err());
    }

    #[test]
    fn policy_names_round_trip() {
        for p in Policy::ALL {
            assert_eq!(p.name().parse::<Policy>().unwrap(), p);
        }
        assert!("nonsense".parse::<Policy>().is_err());
    }

    #[test]
    fn default_class_counts_cycle_and_cover() {
        let cfg = ExperimentConfig::default();
        let counts = cfg.class_counts();
        assert_eq!(counts.len(), 20);
        assert_eq!(&counts[..5], &[1, 2, 3, 4, 1]);
        assert!(counts.iter().sum::<usize>() >= cfg.train.n_classes);
    }
}
