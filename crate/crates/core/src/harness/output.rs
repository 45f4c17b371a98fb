//! Plot-ready file output: CSV tables plus a JSON run summary.
//!
//! Floats are written as `{:.16e}` (17 significant digits), so re-reading a
//! file reproduces the exact bit pattern and identical runs produce
//! byte-identical artifacts.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::diagnostics::{convergence_bound, BoundParams, BoundReport};
use crate::harness::config::ExperimentConfig;
use crate::harness::metrics::MetricsReport;
use crate::harness::round::RunOutput;
use crate::harness::sweep::{SweepCell, SweepSummaryRow};
use crate::{Error, Result};

/// Canonical float serialization for all emitted tables: 17 significant
/// digits, so parsing the text reproduces the exact bit pattern.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path.display().to_string(), e))
}

/// `summary.json` contents for a single run.
#[derive(Serialize)]
struct RunSummary<'a> {
    policy: &'a str,
    snr_db: f64,
    seed: u64,
    k_fixed: usize,
    deadline: f64,
    sigma2: f64,
    power_iterations: usize,
    /// Largest absolute gap between recorded distortion and a recomputation
    /// from the stored plan and gains.
    audit_max_mse_deviation: f64,
    metrics: &'a MetricsReport,
    /// Present when the config carries a `[bound]` section.
    #[serde(skip_serializing_if = "Option::is_none")]
    bound: Option<BoundReport>,
    config: &'a ExperimentConfig,
}

/// Evaluates the convergence bound for a finished run, feeding the
/// analytical constants from the config and the distortion trace,
/// participation size, and weight skew from the run itself.
pub fn bound_report(run: &RunOutput, cfg: &ExperimentConfig) -> Result<Option<BoundReport>> {
    let Some(b) = &cfg.bound else {
        return Ok(None);
    };
    let max_weight = run.weights.iter().cloned().fold(0.0_f64, f64::max);
    let params = BoundParams {
        smoothness: b.smoothness,
        gradient_noise_sq: b.gradient_noise_sq,
        heterogeneity_sq: b.heterogeneity_sq,
        element_variance: b.element_variance,
        gradient_cap_sq: b.gradient_cap_sq,
        dimension: cfg.model_dimension(),
        n_devices: cfg.devices,
        k_selected: run.k_fixed,
        rounds: run.records.len(),
        learning_rate: cfg.train.learning_rate,
        local_iterations: cfg.train.local_iterations,
        initial_gap: b.initial_gap,
        mse_trace: run.records.iter().map(|r| r.misalignment + r.noise).collect(),
        // Weights sum to one, so N max q >= 1 up to rounding; clamp the jitter.
        weight_skew: (cfg.devices as f64 * max_weight).max(1.0),
    };
    convergence_bound(&params).map(Some)
}

/// Writes `rounds.csv`, `paoi.csv`, `devices.csv`, and `summary.json`.
pub fn write_run(
    dir: &Path,
    run: &RunOutput,
    metrics: &MetricsReport,
    cfg: &ExperimentConfig,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let n = run.records[0].paoi.len();

    let mut rounds = String::from(
        "round,picked,transmitters,completion_time,eta,misalignment,noise,ws_paoi,\
         global_loss,test_accuracy,weighting_bias,aggregation_error_sq,aggregation_error_cap,\
         k_opt,predicted_ws_paoi\n",
    );
    for r in &run.records {
        let k_opt = r.k_opt.map(|k| k.to_string()).unwrap_or_default();
        let predicted = r.predicted_ws_paoi.map(fmt_float).unwrap_or_default();
        writeln!(
            rounds,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.round,
            r.picked.len(),
            r.transmitters.len(),
            fmt_float(r.completion_time),
            fmt_float(r.eta),
            fmt_float(r.misalignment),
            fmt_float(r.noise),
            fmt_float(r.ws_paoi),
            fmt_float(r.global_loss),
            fmt_float(r.test_accuracy),
            fmt_float(r.weighting_bias),
            fmt_float(r.aggregation_error_sq),
            fmt_float(r.aggregation_error_cap),
            k_opt,
            predicted,
        )
        .expect("writing to a string");
    }
    write_file(&dir.join("rounds.csv"), &rounds)?;

    let mut paoi = String::from("round");
    for d in 0..n {
        write!(paoi, ",device_{d}").expect("writing to a string");
    }
    paoi.push('\n');
    for r in &run.records {
        write!(paoi, "{}", r.round).expect("writing to a string");
        for &a in &r.paoi {
            write!(paoi, ",{}", fmt_float(a)).expect("writing to a string");
        }
        paoi.push('\n');
    }
    write_file(&dir.join("paoi.csv"), &paoi)?;

    let mut devices =
        String::from("round,device,picked,transmitted,alpha,gain,total_time\n");
    for r in &run.records {
        for d in 0..n {
            writeln!(
                devices,
                "{},{},{},{},{},{},{}",
                r.round,
                d,
                r.picked.contains(&d) as u8,
                r.transmitters.contains(&d) as u8,
                fmt_float(r.alphas[d]),
                fmt_float(r.gains[d]),
                fmt_float(r.total_times[d]),
            )
            .expect("writing to a string");
        }
    }
    write_file(&dir.join("devices.csv"), &devices)?;

    let summary = RunSummary {
        policy: run.policy.name(),
        snr_db: run.snr_db,
        seed: run.seed,
        k_fixed: run.k_fixed,
        deadline: run.deadline,
        sigma2: run.sigma2,
        power_iterations: run.power_iterations,
        audit_max_mse_deviation: run.audit_mse()?,
        metrics,
        bound: bound_report(run, cfg)?,
        config: cfg,
    };
    let json = serde_json::to_string_pretty(&summary)
        .map_err(|e| Error::Config(format!("summary serialization: {e}")))?;
    write_file(&dir.join("summary.json"), &format!("{json}\n"))
}

/// Writes the per-cell sweep table as `sweep.csv`.
pub fn write_sweep_cells(path: &Path, cells: &[SweepCell]) -> Result<()> {
    let mut out = String::from(
        "policy,snr_db,seed,time_average_mse,mean_misalignment,mean_noise,mean_ws_paoi,\
         final_ws_paoi,average_completion,min_selection_frequency,final_loss,final_accuracy\n",
    );
    for c in cells {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            c.policy.name(),
            fmt_float(c.snr_db),
            c.seed,
            fmt_float(c.metrics.time_average_mse),
            fmt_float(c.metrics.mean_misalignment),
            fmt_float(c.metrics.mean_noise),
            fmt_float(c.metrics.mean_ws_paoi),
            fmt_float(c.metrics.final_ws_paoi),
            fmt_float(c.metrics.average_completion),
            fmt_float(
                c.metrics
                    .selection_frequency
                    .iter()
                    .cloned()
                    .fold(f64::INFINITY, f64::min)
            ),
            fmt_float(c.metrics.final_loss),
            fmt_float(c.metrics.final_accuracy),
        )
        .expect("writing to a string");
    }
    write_file(path, &out)
}

/// Writes the aggregated sweep table (mean and standard error per cell
/// group) as `sweep_summary.csv`.
pub fn write_sweep_summary(path: &Path, rows: &[SweepSummaryRow]) -> Result<()> {
    let mut out = String::from(
        "policy,snr_db,replications,mean_mse,stderr_mse,mean_ws_paoi,stderr_ws_paoi,\
         mean_completion,stderr_completion\n",
    );
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.policy.name(),
            fmt_float(r.snr_db),
            r.replications,
            fmt_float(r.mean_mse),
            fmt_float(r.stderr_mse),
            fmt_float(r.mean_ws_paoi),
            fmt_float(r.stderr_ws_paoi),
            fmt_float(r.mean_completion),
            fmt_float(r.stderr_completion),
        )
        .expect("writing to a string");
    }
    write_file(path, &out)
}
