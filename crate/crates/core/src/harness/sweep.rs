//! Sweeps and paired comparisons over (policy, SNR, seed) cells.
//!
//! Every cell is a fully deterministic single-threaded run; cells execute in
//! parallel and the table is sorted by cell coordinates afterwards, so the
//! output is independent of scheduling. All policies at a given seed consume
//! identical channel, resource, batch, and noise streams, which makes
//! per-seed differences directly attributable to the policy.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::harness::config::{ExperimentConfig, Policy};
use crate::harness::metrics::{self, MetricsReport};
use crate::harness::round::Simulation;
use crate::Result;

/// One (policy, SNR, seed) cell's reduced metrics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepCell {
    pub policy: Policy,
    pub snr_db: f64,
    pub seed: u64,
    pub metrics: MetricsReport,
}

/// Mean and standard error over a cell group's replications.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSummaryRow {
    pub policy: Policy,
    pub snr_db: f64,
    pub replications: usize,
    pub mean_mse: f64,
    pub stderr_mse: f64,
    pub mean_ws_paoi: f64,
    pub stderr_ws_paoi: f64,
    pub mean_completion: f64,
    pub stderr_completion: f64,
}

/// Seeds for the configured replications: consecutive from the master seed
/// (stream derivation decorrelates them).
pub fn replication_seeds(cfg: &ExperimentConfig) -> Vec<u64> {
    (0..cfg.replications).map(|r| cfg.master_seed.wrapping_add(r as u64)).collect()
}

/// Runs one cell and reduces it to metrics.
pub fn run_cell(
    cfg: &ExperimentConfig,
    policy: Policy,
    snr_db: f64,
    seed: u64,
) -> Result<SweepCell> {
    let sim = Simulation::new(cfg, policy, snr_db, seed)?;
    let run = sim.run()?;
    Ok(SweepCell { policy, snr_db, seed, metrics: metrics::report(&run) })
}

/// The full grid: `policies x cfg.snr_db x replications`, paired seeds.
pub fn sweep(cfg: &ExperimentConfig, policies: &[Policy]) -> Result<Vec<SweepCell>> {
    let seeds = replication_seeds(cfg);
    let mut coords = Vec::new();
    for (pi, &policy) in policies.iter().enumerate() {
        for &snr in &cfg.snr_db {
            for &seed in &seeds {
                coords.push((pi, policy, snr, seed));
            }
        }
    }
    let mut cells: Vec<(usize, SweepCell)> = coords
        .par_iter()
        .map(|&(pi, policy, snr, seed)| Ok((pi, run_cell(cfg, policy, snr, seed)?)))
        .collect::<Result<_>>()?;
    cells.sort_by(|(pa, a), (pb, b)| {
        pa.cmp(pb).then(a.snr_db.total_cmp(&b.snr_db)).then(a.seed.cmp(&b.seed))
    });
    Ok(cells.into_iter().map(|(_, c)| c).collect())
}

/// Groups cells by (policy, SNR) and reduces to mean and standard error.
pub fn summarize(cells: &[SweepCell]) -> Vec<SweepSummaryRow> {
    let mut rows: Vec<SweepSummaryRow> = Vec::new();
    let mut groups: Vec<(Policy, f64, Vec<&SweepCell>)> = Vec::new();
    for cell in cells {
        match groups
            .iter_mut()
            .find(|(p, s, _)| *p == cell.policy && *s == cell.snr_db)
        {
            Some((_, _, members)) => members.push(cell),
            None => groups.push((cell.policy, cell.snr_db, vec![cell])),
        }
    }
    for (policy, snr_db, members) in groups {
        let reduce = |f: &dyn Fn(&SweepCell) -> f64| -> (f64, f64) {
            let xs: Vec<f64> = members.iter().map(|c| f(c)).collect();
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            if xs.len() < 2 {
                return (mean, 0.0);
            }
            let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
            (mean, (var / n).sqrt())
        };
        let (mean_mse, stderr_mse) = reduce(&|c| c.metrics.time_average_mse);
        let (mean_ws_paoi, stderr_ws_paoi) = reduce(&|c| c.metrics.mean_ws_paoi);
        let (mean_completion, stderr_completion) = reduce(&|c| c.metrics.average_completion);
        rows.push(SweepSummaryRow {
            policy,
            snr_db,
            replications: members.len(),
            mean_mse,
            stderr_mse,
            mean_ws_paoi,
            stderr_ws_paoi,
            mean_completion,
            stderr_completion,
        });
    }
    rows
}

/// Replication-averaged per-round weighted PAoI trajectory for one policy.
pub fn mean_ws_trajectory(
    cfg: &ExperimentConfig,
    policy: Policy,
    snr_db: f64,
) -> Result<Vec<f64>> {
    let seeds = replication_seeds(cfg);
    let trajectories: Vec<Vec<f64>> = seeds
        .par_iter()
        .map(|&seed| {
            let run = Simulation::new(cfg, policy, snr_db, seed)?.run()?;
            Ok(metrics::ws_trajectory(&run.records))
        })
        .collect::<Result<_>>()?;
    let t = cfg.rounds;
    let mut mean = vec![0.0; t];
    for traj in &trajectories {
        for (m, &x) in mean.iter_mut().zip(traj) {
            *m += x;
        }
    }
    for m in mean.iter_mut() {
        *m /= trajectories.len() as f64;
    }
    Ok(mean)
}
