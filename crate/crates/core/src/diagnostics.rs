//! Analytical convergence diagnostics.
//!
//! The time-average squared gradient norm after `T` rounds is bounded by a
//! five-term expression over the common denominator `lambda (phi - 1) - 4`:
//!
//! ```text
//!   4 (F(w0) - F(w*)) / (D T)                              initial gap
//! + 4 phi (4 lambda^3 L^2 phi^2 + 3 lambda) xi^2 / (3 D)   gradient variance
//! + 16 lambda phi^2 sigma_h^2 / D
//!     * ((2 + L)(N - K) / ((N - 1) K) + lambda^2 L^2 phi)  divergence + partial participation
//! + 2 lambda (1 + 2 lambda L) / D
//!     * d Gamma (K + 1) / K^2 * mean_t MSE(t)              time-average distortion
//! + 4 L^2 lambda^2 G^2 / D                                 gradient-norm cap
//! ```
//!
//! with `D = lambda (phi - 1) - 4`. The expression is evaluated literally.
//! For every step size satisfying its own small-step condition, `D` is
//! negative; the report carries a sign flag instead of hiding that, and the
//! condition check is likewise reported, never enforced. Skewed aggregation
//! weights enter through `nu = N max_n q_n`, which rescales `L <- nu L`,
//! `xi^2 <- nu xi^2`, `Gamma <- sqrt(nu) Gamma` before evaluation.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Inputs to the convergence-bound calculator. The analytical constants
/// (smoothness, noise, heterogeneity, caps) are caller-supplied; nothing is
/// estimated behind the caller's back.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundParams {
    /// Smoothness constant `L`.
    pub smoothness: f64,
    /// Stochastic-gradient variance cap `xi^2`.
    pub gradient_noise_sq: f64,
    /// Heterogeneity (gradient divergence) `sigma_h^2`.
    pub heterogeneity_sq: f64,
    /// Per-element update-variance cap `Gamma`.
    pub element_variance: f64,
    /// Squared gradient-norm cap `G^2`.
    pub gradient_cap_sq: f64,
    /// Model dimension `d`.
    pub dimension: usize,
    /// Fleet size `N`.
    pub n_devices: usize,
    /// Participants per round `K`.
    pub k_selected: usize,
    /// Horizon `T`.
    pub rounds: usize,
    /// Step size `lambda`.
    pub learning_rate: f64,
    /// Local iterations `phi`.
    pub local_iterations: usize,
    /// Initial optimality gap `F(w0) - F(w*)`.
    pub initial_gap: f64,
    /// Per-round distortion values; their mean feeds the fourth term.
    pub mse_trace: Vec<f64>,
    /// Weight skew `nu = N max_n q_n`; 1 for uniform weights.
    pub weight_skew: f64,
}

impl BoundParams {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("smoothness", self.smoothness),
            ("gradient_noise_sq", self.gradient_noise_sq),
            ("heterogeneity_sq", self.heterogeneity_sq),
            ("element_variance", self.element_variance),
            ("gradient_cap_sq", self.gradient_cap_sq),
            ("initial_gap", self.initial_gap),
        ];
        for (name, v) in nonneg {
            if v < 0.0 || !v.is_finite() {
                return Err(Error::domain(
                    "BoundParams",
                    format!("{name} must be finite and >= 0, got {v}"),
                ));
            }
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::domain(
                "BoundParams",
                format!("learning_rate must be positive, got {}", self.learning_rate),
            ));
        }
        if !(self.weight_skew >= 1.0) || !self.weight_skew.is_finite() {
            // nu = N max q >= N * (1/N) = 1 whenever the weights sum to one.
            return Err(Error::domain(
                "BoundParams",
                format!("weight_skew must be >= 1, got {}", self.weight_skew),
            ));
        }
        if self.dimension == 0
            || self.n_devices == 0
            || self.k_selected == 0
            || self.rounds == 0
            || self.local_iterations == 0
        {
            return Err(Error::domain(
                "BoundParams",
                "dimension, n_devices, k_selected, rounds, local_iterations must be >= 1",
            ));
        }
        if self.k_selected > self.n_devices {
            return Err(Error::domain(
                "BoundParams",
                format!("k_selected {} exceeds n_devices {}", self.k_selected, self.n_devices),
            ));
        }
        if self.mse_trace.iter().any(|m| !m.is_finite() || *m < 0.0) {
            return Err(Error::domain("BoundParams", "mse_trace must be finite and >= 0"));
        }
        Ok(())
    }

    /// Parses a full parameter set from a TOML document. Unknown keys are
    /// rejected; validation runs before returning.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let params: BoundParams = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        params.validate()?;
        Ok(params)
    }

    pub fn from_toml_path(path: &std::path::Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_toml_str(&text)
    }
}

/// Labeled evaluation of the bound, term by term.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundReport {
    pub initial_gap_term: f64,
    pub gradient_variance_term: f64,
    pub divergence_participation_term: f64,
    pub time_average_mse_term: f64,
    pub gradient_norm_term: f64,
    pub total: f64,
    /// The literal denominator `lambda (phi - 1) - 4`.
    pub denominator: f64,
    /// Raised when the denominator is negative: the literal expression then
    /// carries no guarantee and the terms flip sign.
    pub denominator_negative: bool,
    /// The largest step size the analysis tolerates,
    /// `min(1/(2 L phi), 1/sqrt(6 L^2 phi^3), sqrt(phi - 1)/(4 L phi))`.
    pub step_size_limit: f64,
    /// Whether the supplied step size respects that limit.
    pub step_size_ok: bool,
    /// `(N - K) / ((N - 1) K)`; exactly zero under full participation.
    pub participation_factor: f64,
    /// Mean of the supplied per-round distortions.
    pub mean_mse: f64,
}

/// Evaluates the five-term bound, applying the weight-skew rescaling first.
pub fn convergence_bound(params: &BoundParams) -> Result<BoundReport> {
    params.validate()?;
    let nu = params.weight_skew;
    let l = nu * params.smoothness;
    let xi_sq = nu * params.gradient_noise_sq;
    let gamma = nu.sqrt() * params.element_variance;

    let lambda = params.learning_rate;
    let phi = params.local_iterations as f64;
    let n = params.n_devices as f64;
    let k = params.k_selected as f64;
    let t = params.rounds as f64;
    let d = params.dimension as f64;

    let denominator = lambda * (phi - 1.0) - 4.0;
    if denominator == 0.0 {
        return Err(Error::domain(
            "convergence_bound",
            "denominator lambda (phi - 1) - 4 is exactly zero",
        ));
    }

    let step_size_limit = if params.local_iterations < 2 || l == 0.0 {
        // sqrt(phi - 1) vanishes at phi = 1: no positive step qualifies.
        // A zero smoothness constant makes every limit infinite.
        if l == 0.0 { f64::INFINITY } else { 0.0 }
    } else {
        (1.0 / (2.0 * l * phi))
            .min(1.0 / (6.0 * l * l * phi.powi(3)).sqrt())
            .min((phi - 1.0).sqrt() / (4.0 * l * phi))
    };
    let step_size_ok = lambda <= step_size_limit;

    let participation_factor = if params.k_selected == params.n_devices {
        0.0
    } else {
        (n - k) / ((n - 1.0) * k)
    };

    let mean_mse = if params.mse_trace.is_empty() {
        0.0
    } else {
        params.mse_trace.iter().sum::<f64>() / params.mse_trace.len() as f64
    };

    let initial_gap_term = 4.0 * params.initial_gap / (denominator * t);
    let gradient_variance_term =
        4.0 * phi * (4.0 * lambda.powi(3) * l * l * phi * phi + 3.0 * lambda) * xi_sq
            / (3.0 * denominator);
    let divergence_participation_term = 16.0 * lambda * phi * phi * params.heterogeneity_sq
        / denominator
        * ((2.0 + l) * participation_factor + lambda * lambda * l * l * phi);
    let time_average_mse_term = 2.0 * lambda * (1.0 + 2.0 * lambda * l) / denominator
        * (d * gamma * (k + 1.0) / (k * k))
        * mean_mse;
    let gradient_norm_term =
        4.0 * l * l * lambda * lambda * params.gradient_cap_sq / denominator;

    let total = initial_gap_term
        + gradient_variance_term
        + divergence_participation_term
        + time_average_mse_term
        + gradient_norm_term;

    Ok(BoundReport {
        initial_gap_term,
        gradient_variance_term,
        divergence_participation_term,
        time_average_mse_term,
        gradient_norm_term,
        total,
        denominator,
        denominator_negative: denominator < 0.0,
        step_size_limit,
        step_size_ok,
        participation_factor,
        mean_mse,
    })
}

/// Per-round cap on the aggregation error's squared norm in terms of the
/// round's distortion: `d Gamma (K + 1) / K^2 * mse`.
pub fn aggregation_error_cap(k: usize, dimension: usize, gamma: f64, mse: f64) -> f64 {
    assert!(k >= 1, "need at least one participant");
    let kf = k as f64;
    dimension as f64 * gamma * (kf + 1.0) / (kf * kf) * mse
}
