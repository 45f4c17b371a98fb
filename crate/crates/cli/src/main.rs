//! Command-line front end for the simulator: single runs, SNR/policy
//! sweeps, paired-seed policy comparisons, and the convergence-bound
//! calculator. All output files are byte-stable for a fixed config and
//! master seed.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fedairaoi::diagnostics::{convergence_bound, BoundParams};
use fedairaoi::harness::output::fmt_float;
use fedairaoi::harness::{metrics, output, sweep, ExperimentConfig, Policy, PowerMode, Simulation};
use fedairaoi::{Error, Result};

#[derive(Parser)]
#[command(
    name = "fedairaoi",
    version,
    about = "Deterministic experiments in age-aware device scheduling and over-the-air aggregation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its per-round artifacts.
    Run(RunArgs),
    /// Run the policy x SNR grid and write the sweep tables.
    Sweep(SweepArgs),
    /// Compare policies on paired seeds at a single SNR.
    Compare(CompareArgs),
    /// Evaluate the convergence bound from explicit constants.
    Bound(BoundArgs),
}

/// Config loading shared by the experiment subcommands. Flags override the
/// file; the file's omitted keys take the reference defaults.
#[derive(Args)]
struct ConfigArgs {
    /// Experiment config file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the fleet size.
    #[arg(long)]
    devices: Option<usize>,
    /// Override the number of rounds.
    #[arg(long)]
    rounds: Option<usize>,
    /// Override the power mode (offline or online).
    #[arg(long)]
    power_mode: Option<PowerMode>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_toml_path(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(n) = self.devices {
            cfg.devices = n;
        }
        if let Some(t) = self.rounds {
            cfg.rounds = t;
        }
        if let Some(m) = self.power_mode {
            cfg.power.mode = m;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Seed for this run.
    #[arg(long)]
    seed: u64,
    /// Override the policy.
    #[arg(long)]
    policy: Option<Policy>,
    /// Receive SNR in dB; default: the config's first grid entry.
    #[arg(long)]
    snr: Option<f64>,
    /// Directory for rounds.csv, paoi.csv, devices.csv, summary.json.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Policies to sweep, comma-separated; default: all five.
    #[arg(long, value_delimiter = ',')]
    policies: Vec<Policy>,
    /// Override the SNR grid, dB, comma-separated.
    #[arg(long, value_delimiter = ',')]
    snr: Vec<f64>,
    /// Override the replications per cell.
    #[arg(long)]
    replications: Option<usize>,
    /// Override the master seed.
    #[arg(long)]
    master_seed: Option<u64>,
    /// Directory for sweep.csv and sweep_summary.csv.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Policies to compare, comma-separated; default: all five.
    #[arg(long, value_delimiter = ',')]
    policies: Vec<Policy>,
    /// Single SNR point, dB; default: the config's first grid entry.
    #[arg(long)]
    snr: Option<f64>,
    /// Override the replications (paired seeds per policy).
    #[arg(long)]
    replications: Option<usize>,
    /// Override the master seed.
    #[arg(long)]
    master_seed: Option<u64>,
    /// Directory for compare.csv.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct BoundArgs {
    /// Full parameter file (TOML); omitted: reference-shaped defaults.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Smoothness constant of the loss.
    #[arg(long)]
    smoothness: Option<f64>,
    /// Stochastic-gradient variance cap.
    #[arg(long)]
    gradient_noise_sq: Option<f64>,
    /// Gradient-divergence (heterogeneity) constant.
    #[arg(long)]
    heterogeneity_sq: Option<f64>,
    /// Per-element update-variance cap.
    #[arg(long)]
    element_variance: Option<f64>,
    /// Squared gradient-norm cap.
    #[arg(long)]
    gradient_cap_sq: Option<f64>,
    /// Model dimension.
    #[arg(long)]
    dimension: Option<usize>,
    /// Fleet size.
    #[arg(long)]
    devices: Option<usize>,
    /// Participants per round.
    #[arg(long)]
    k_selected: Option<usize>,
    /// Horizon in rounds.
    #[arg(long)]
    rounds: Option<usize>,
    /// Step size.
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Local iterations per round.
    #[arg(long)]
    local_iterations: Option<usize>,
    /// Initial optimality gap.
    #[arg(long)]
    initial_gap: Option<f64>,
    /// Aggregation-weight skew (N times the largest weight).
    #[arg(long)]
    weight_skew: Option<f64>,
    /// Constant per-round distortion; replaces the whole trace.
    #[arg(long)]
    mse: Option<f64>,
    /// Also write the JSON report to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Bound(args) => cmd_bound(args),
    }
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let mut cfg = args.cfg.load()?;
    cfg.master_seed = args.seed;
    if let Some(p) = args.policy {
        cfg.policy = p;
    }
    if let Some(s) = args.snr {
        cfg.snr_db = vec![s];
    }
    cfg.validate()?;
    let snr = cfg.snr_db[0];

    let run = Simulation::new(&cfg, cfg.policy, snr, args.seed)?.run()?;
    let report = metrics::report(&run);
    output::write_run(&args.out, &run, &report, &cfg)?;

    println!(
        "{} @ {} dB, seed {}: {} devices, {} rounds, K = {}",
        cfg.policy, snr, args.seed, cfg.devices, cfg.rounds, run.k_fixed
    );
    println!("  time-average distortion  {:.6e}", report.time_average_mse);
    println!("  mean weighted PAoI       {:.6}", report.mean_ws_paoi);
    println!("  mean completion time     {:.6} s", report.average_completion);
    println!(
        "  final loss / accuracy    {:.6} / {:.4}",
        report.final_loss, report.final_accuracy
    );
    println!(
        "wrote rounds.csv, paoi.csv, devices.csv, summary.json under {}",
        args.out.display()
    );
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let mut cfg = args.cfg.load()?;
    if !args.snr.is_empty() {
        cfg.snr_db = args.snr.clone();
    }
    if let Some(r) = args.replications {
        cfg.replications = r;
    }
    if let Some(s) = args.master_seed {
        cfg.master_seed = s;
    }
    cfg.validate()?;
    let policies = chosen_policies(&args.policies);

    let cells = sweep::sweep(&cfg, &policies)?;
    let rows = sweep::summarize(&cells);
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(args.out.display().to_string(), e))?;
    output::write_sweep_cells(&args.out.join("sweep.csv"), &cells)?;
    output::write_sweep_summary(&args.out.join("sweep_summary.csv"), &rows)?;

    println!(
        "{:<18} {:>7} {:>13} {:>10} {:>13} {:>13}",
        "policy", "snr_db", "mean_mse", "stderr", "mean_ws_paoi", "mean_compl"
    );
    for r in &rows {
        println!(
            "{:<18} {:>7.1} {:>13.4e} {:>10.2e} {:>13.4} {:>13.4}",
            r.policy.name(),
            r.snr_db,
            r.mean_mse,
            r.stderr_mse,
            r.mean_ws_paoi,
            r.mean_completion
        );
    }
    println!("wrote sweep.csv, sweep_summary.csv under {}", args.out.display());
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> Result<()> {
    let mut cfg = args.cfg.load()?;
    if let Some(r) = args.replications {
        cfg.replications = r;
    }
    if let Some(s) = args.master_seed {
        cfg.master_seed = s;
    }
    match args.snr {
        Some(s) => cfg.snr_db = vec![s],
        None => cfg.snr_db.truncate(1),
    }
    cfg.validate()?;
    let snr = cfg.snr_db[0];
    let policies = chosen_policies(&args.policies);

    let cells = sweep::sweep(&cfg, &policies)?;
    let rows = sweep::summarize(&cells);
    // Completion times are reported relative to uniform sampling when it is
    // in the comparison; every policy saw the same seeds.
    let fedavg_completion = rows
        .iter()
        .find(|r| r.policy == Policy::Fedavg)
        .map(|r| r.mean_completion);

    let mut table = String::from(
        "policy,snr_db,replications,mean_mse,mean_ws_paoi,mean_completion,\
         relative_completion,min_selection_frequency,mean_final_accuracy\n",
    );
    println!(
        "{:<18} {:>13} {:>13} {:>11} {:>9} {:>9} {:>9}",
        "policy", "mean_mse", "mean_ws_paoi", "mean_compl", "rel_compl", "min_freq", "accuracy"
    );
    for row in &rows {
        let of_policy: Vec<_> = cells.iter().filter(|c| c.policy == row.policy).collect();
        let n = of_policy.len() as f64;
        let min_freq = of_policy
            .iter()
            .map(|c| c.metrics.selection_frequency.iter().cloned().fold(f64::INFINITY, f64::min))
            .sum::<f64>()
            / n;
        let accuracy = of_policy.iter().map(|c| c.metrics.final_accuracy).sum::<f64>() / n;
        let relative = fedavg_completion.map(|f| row.mean_completion / f);

        table.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            row.policy.name(),
            fmt_float(row.snr_db),
            row.replications,
            fmt_float(row.mean_mse),
            fmt_float(row.mean_ws_paoi),
            fmt_float(row.mean_completion),
            relative.map(fmt_float).unwrap_or_default(),
            fmt_float(min_freq),
            fmt_float(accuracy),
        ));
        println!(
            "{:<18} {:>13.4e} {:>13.4} {:>11.4} {:>9} {:>9.4} {:>9.4}",
            row.policy.name(),
            row.mean_mse,
            row.mean_ws_paoi,
            row.mean_completion,
            relative.map(|r| format!("{r:.3}")).unwrap_or_default(),
            min_freq,
            accuracy
        );
    }
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(args.out.display().to_string(), e))?;
    let path = args.out.join("compare.csv");
    std::fs::write(&path, &table).map_err(|e| Error::io(path.display().to_string(), e))?;
    println!(
        "compared {} policies at {} dB over {} paired seeds; wrote {}",
        rows.len(),
        snr,
        cfg.replications,
        path.display()
    );
    Ok(())
}

/// Defaults for the bound calculator shaped like the reference experiment:
/// unit analytical constants, the default fleet and task dimensions, half
/// the fleet participating, and a flat distortion trace at the reference
/// noise level.
fn default_bound_params() -> BoundParams {
    let cfg = ExperimentConfig::default();
    BoundParams {
        smoothness: 1.0,
        gradient_noise_sq: 1.0,
        heterogeneity_sq: 1.0,
        element_variance: 1.0,
        gradient_cap_sq: 1.0,
        dimension: cfg.model_dimension(),
        n_devices: cfg.devices,
        k_selected: cfg.devices / 2,
        rounds: cfg.rounds,
        learning_rate: cfg.train.learning_rate,
        local_iterations: cfg.train.local_iterations,
        initial_gap: 1.0,
        mse_trace: vec![cfg.sigma2(cfg.snr_db[0]); cfg.rounds],
        weight_skew: 1.0,
    }
}

fn cmd_bound(args: BoundArgs) -> Result<()> {
    let mut p = match &args.params {
        Some(path) => BoundParams::from_toml_path(path)?,
        None => default_bound_params(),
    };
    if let Some(v) = args.smoothness {
        p.smoothness = v;
    }
    if let Some(v) = args.gradient_noise_sq {
        p.gradient_noise_sq = v;
    }
    if let Some(v) = args.heterogeneity_sq {
        p.heterogeneity_sq = v;
    }
    if let Some(v) = args.element_variance {
        p.element_variance = v;
    }
    if let Some(v) = args.gradient_cap_sq {
        p.gradient_cap_sq = v;
    }
    if let Some(v) = args.dimension {
        p.dimension = v;
    }
    if let Some(v) = args.devices {
        p.n_devices = v;
    }
    if let Some(v) = args.k_selected {
        p.k_selected = v;
    }
    if let Some(v) = args.rounds {
        p.rounds = v;
    }
    if let Some(v) = args.learning_rate {
        p.learning_rate = v;
    }
    if let Some(v) = args.local_iterations {
        p.local_iterations = v;
    }
    if let Some(v) = args.initial_gap {
        p.initial_gap = v;
    }
    if let Some(v) = args.weight_skew {
        p.weight_skew = v;
    }
    // Last: the constant trace takes the final horizon length.
    if let Some(m) = args.mse {
        p.mse_trace = vec![m; p.rounds];
    }

    let report = convergence_bound(&p)?;
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::Config(format!("report serialization: {e}")))?;
    println!("{json}");
    if let Some(out) = &args.out {
        std::fs::write(out, format!("{json}\n"))
            .map_err(|e| Error::io(out.display().to_string(), e))?;
    }
    Ok(())
}

fn chosen_policies(flag: &[Policy]) -> Vec<Policy> {
    if flag.is_empty() {
        Policy::ALL.to_vec()
    } else {
        flag.to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_structure_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn policy_lists_parse_from_flags() {
        let cli = Cli::try_parse_from([
            "fedairaoi",
            "sweep",
            "--policies",
            "fedairaoi,fedavg",
            "--snr",
            "0,10",
        ])
        .unwrap();
        match cli.command {
            Command::Sweep(args) => {
                assert_eq!(args.policies, vec![Policy::Fedairaoi, Policy::Fedavg]);
                assert_eq!(args.snr, vec![0.0, 10.0]);
            }
            _ => panic!("parsed the wrong subcommand"),
        }
        assert!(Cli::try_parse_from(["fedairaoi", "run"]).is_err(), "seed is mandatory");
        assert!(Cli::try_parse_from(["fedairaoi", "run", "--seed", "1", "--policy", "bogus"])
            .is_err());
    }
}
