//! The per-seed simulation: selection, power, training, and recording.
//!
//! A run proceeds in three phases. Selection only ever consumes ages, round
//! times, and (for the sampling policies) its own random stream, so the full
//! selection trajectory is laid down first. Power allocation comes second:
//! the optimizing policies solve over the whole horizon offline (or walk
//! multipliers forward online), the fixed rules are applied round by round.
//! Training replays the horizon with the plan frozen, so every policy sees
//! identical channels, resource draws, local batches, and receiver noise for
//! a given seed, and differences in the records are attributable to the
//! policy alone.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{realize_round, ChannelParams, ChannelRealization};
use crate::fl::data::Dataset;
use crate::fl::{self, ModelParams};
use crate::harness::config::{ExperimentConfig, Policy, PowerMode};
use crate::power::{self, PowerPlan};
use crate::scheduler::{self, AoiState};
use crate::timing::{self, CommParams, ComputeProfile};
use crate::{rng, Error, Result};

/// Everything a single (policy, SNR, seed) cell needs, resolved once.
pub struct Simulation {
    pub cfg: ExperimentConfig,
    pub policy: Policy,
    pub snr_db: f64,
    pub seed: u64,
    pub sigma2: f64,
    pub channel_params: ChannelParams,
    pub comm: CommParams,
    pub pmaxes: Vec<f64>,
    pub pbars: Vec<f64>,
    pub shards: Vec<Dataset>,
    pub test_set: Dataset,
    pub weights: Vec<f64>,
    pub profiles: Vec<ComputeProfile>,
    pub k_fixed: usize,
    pub deadline: f64,
}

/// One round's full record. Fleet-length vectors are indexed by device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    /// Devices the selection rule committed to.
    pub picked: Vec<usize>,
    /// Devices whose updates actually reached the aggregate.
    pub transmitters: Vec<usize>,
    pub completion_time: f64,
    pub eta: f64,
    pub misalignment: f64,
    pub noise: f64,
    /// Weighted PAoI sum after this round's update.
    pub ws_paoi: f64,
    pub paoi: Vec<f64>,
    pub alphas: Vec<f64>,
    pub total_times: Vec<f64>,
    pub gains: Vec<f64>,
    pub global_loss: f64,
    pub test_accuracy: f64,
    pub weighting_bias: f64,
    pub aggregation_error_sq: f64,
    pub aggregation_error_cap: f64,
    /// Winning prefix length, age-aware policies only.
    pub k_opt: Option<usize>,
    /// The greedy sweep's objective value, age-aware policies only.
    pub predicted_ws_paoi: Option<f64>,
}

/// A completed run: records plus the artifacts needed to audit them.
pub struct RunOutput {
    pub policy: Policy,
    pub snr_db: f64,
    pub seed: u64,
    pub k_fixed: usize,
    pub deadline: f64,
    pub sigma2: f64,
    pub weights: Vec<f64>,
    pub pmaxes: Vec<f64>,
    pub records: Vec<RoundRecord>,
    pub plan: PowerPlan,
    /// Per round, the set the distortion is charged over. Channel inversion
    /// keeps its deactivated picks here (they count as fully missed
    /// updates); the deadline policy charges only actual survivors.
    pub mse_sets: Vec<Vec<usize>>,
    /// Alternating-optimizer iterations (zero for the fixed power rules).
    pub power_iterations: usize,
}

impl RunOutput {
    /// Recomputes every round's distortion from the stored plan and gains
    /// and returns the largest absolute deviation from the records.
    pub fn audit_mse(&self) -> Result<f64> {
        let gains: Vec<Vec<f64>> = self.records.iter().map(|r| r.gains.clone()).collect();
        let breakdown =
            power::plan_mse(&self.plan, &self.mse_sets, &gains, &self.pmaxes, self.sigma2)?;
        let mut worst: f64 = 0.0;
        for (r, record) in self.records.iter().enumerate() {
            worst = worst
                .max((breakdown.misalignment[r] - record.misalignment).abs())
                .max((breakdown.noise[r] - record.noise).abs());
        }
        Ok(worst)
    }

    /// Time-average total distortion across the horizon.
    pub fn time_average_mse(&self) -> f64 {
        let t = self.records.len() as f64;
        self.records.iter().map(|r| r.misalignment + r.noise).sum::<f64>() / t
    }
}

/// Phase-1 product: the selection trajectory and everything it pins down.
struct Trajectory {
    channels: Vec<ChannelRealization>,
    times: Vec<Vec<f64>>,
    picked: Vec<Vec<usize>>,
    transmitters: Vec<Vec<usize>>,
    completion: Vec<f64>,
    paoi: Vec<Vec<f64>>,
    ws: Vec<f64>,
    k_opt: Vec<Option<usize>>,
    predicted: Vec<Option<f64>>,
    /// Per-round inversion rows, only under the channel-inversion policy.
    ci_plan: Option<PowerPlan>,
}

impl Simulation {
    pub fn new(cfg: &ExperimentConfig, policy: Policy, snr_db: f64, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut data_rng = rng::data_rng(seed);
        let full = fl::data::gaussian_clusters(
            cfg.train.samples,
            cfg.train.n_classes,
            cfg.train.n_features,
            cfg.train.cluster_std,
            cfg.train.separation,
            &mut data_rng,
        );
        // Hold out the test slice before partitioning. The stride is applied
        // within each class, so the split stays class-balanced no matter how
        // the generator orders its samples.
        let test_n = ((cfg.train.samples as f64 * cfg.train.test_fraction) as usize)
            .max(cfg.train.n_classes);
        let stride = cfg.train.samples.div_ceil(test_n).max(1);
        let mut seen = vec![0usize; cfg.train.n_classes];
        let mut test = Vec::new();
        let mut train = Vec::new();
        for (i, &y) in full.labels.iter().enumerate() {
            if seen[y] % stride == 0 && test.len() < test_n {
                test.push(i);
            } else {
                train.push(i);
            }
            seen[y] += 1;
        }
        let take = |idx: &[usize]| Dataset {
            features: idx.iter().map(|&i| full.features[i].clone()).collect(),
            labels: idx.iter().map(|&i| full.labels[i]).collect(),
            n_classes: full.n_classes,
            n_features: full.n_features,
        };
        let test_set = take(&test);
        let train_set = take(&train);
        let (shards, weights) =
            fl::data::partition_by_classes(&train_set, &cfg.class_counts(), &mut data_rng)?;

        let profiles: Vec<ComputeProfile> =
            shards.iter().map(|s| cfg.compute_profile(s.len())).collect();
        let comm = cfg.comm_params();
        let deadline = match cfg.selection.deadline {
            Some(d) => d,
            None => {
                let mut expected: Vec<f64> = profiles
                    .iter()
                    .map(|p| timing::expected_total_time(p, cfg.timing.tau_min, &comm))
                    .collect::<Result<_>>()?;
                expected.sort_by(f64::total_cmp);
                let mid = expected.len() / 2;
                if expected.len() % 2 == 1 {
                    expected[mid]
                } else {
                    0.5 * (expected[mid - 1] + expected[mid])
                }
            }
        };

        let mut sim = Simulation {
            cfg: cfg.clone(),
            policy,
            snr_db,
            seed,
            sigma2: cfg.sigma2(snr_db),
            channel_params: cfg.channel_params(),
            comm,
            pmaxes: cfg.pmaxes(),
            pbars: cfg.pbars(),
            shards,
            test_set,
            weights,
            profiles,
            k_fixed: 1,
            deadline,
        };
        sim.k_fixed = match cfg.selection.k_fixed {
            Some(k) => k,
            None => {
                // Participation-matched: the sampling policies field as many
                // devices per round as the age-aware sweep does on this seed.
                let reference = sim.selection_trajectory(Policy::Fedairaoi)?;
                let mean = reference.picked.iter().map(Vec::len).sum::<usize>() as f64
                    / reference.picked.len() as f64;
                (mean.round() as usize).clamp(1, cfg.devices)
            }
        };
        Ok(sim)
    }

    /// Phase 1: walk the horizon with the given policy's selection rule,
    /// advancing ages. All randomness comes from per-concern streams keyed
    /// by round, so every policy sees identical channels and resource draws.
    fn selection_trajectory(&self, policy: Policy) -> Result<Trajectory> {
        let n = self.cfg.devices;
        let t_rounds = self.cfg.rounds;
        let mut aoi = AoiState::initial(self.weights.clone())?;
        let mut out = Trajectory {
            channels: Vec::with_capacity(t_rounds),
            times: Vec::with_capacity(t_rounds),
            picked: Vec::with_capacity(t_rounds),
            transmitters: Vec::with_capacity(t_rounds),
            completion: Vec::with_capacity(t_rounds),
            paoi: Vec::with_capacity(t_rounds),
            ws: Vec::with_capacity(t_rounds),
            k_opt: Vec::with_capacity(t_rounds),
            predicted: Vec::with_capacity(t_rounds),
            ci_plan: (policy == Policy::ChannelInversion)
                .then(|| PowerPlan { alpha: Vec::new(), eta: Vec::new() }),
        };
        for t in 0..t_rounds {
            let channels =
                realize_round(&self.channel_params, t, &mut rng::channel_rng(self.seed, t as u64));
            let mut resource = rng::resource_rng(self.seed, t as u64);
            let times: Vec<f64> = self
                .profiles
                .iter()
                .map(|p| {
                    let tau = timing::draw_resource(self.cfg.timing.tau_min, &mut resource);
                    timing::total_time(p, tau, &self.comm)
                })
                .collect::<Result<_>>()?;

            let (picked, transmitters, completion, k_opt, predicted) = match policy {
                Policy::Fedairaoi | Policy::FullPower => {
                    let d = scheduler::greedy_select(&aoi, &times)?;
                    (d.selected.clone(), d.selected, d.completion_time, Some(d.k_opt), Some(d.predicted_ws_paoi))
                }
                Policy::ChannelInversion => {
                    let d = scheduler::greedy_select(&aoi, &times)?;
                    let mut actives = Vec::new();
                    let mut row = vec![0.0; n];
                    let mut eta = 1.0;
                    if !d.selected.is_empty() {
                        // Per-round inversion; an uninvertible round means
                        // nothing is received and the model simply waits.
                        match crate::baselines::channel_inversion_plan(
                            &[d.selected.clone()],
                            &[channels.gains.clone()],
                            &self.pmaxes,
                            &self.pbars,
                            self.sigma2,
                        ) {
                            Ok((plan, mut act)) => {
                                row = plan.alpha.into_iter().next().expect("one round");
                                eta = plan.eta[0];
                                actives = act.pop().expect("one round");
                            }
                            Err(Error::AllDeactivated { .. }) => {}
                            Err(e) => return Err(e),
                        }
                    }
                    let ci = out.ci_plan.as_mut().expect("inversion plan under way");
                    ci.alpha.push(row);
                    ci.eta.push(eta);
                    (d.selected, actives, d.completion_time, Some(d.k_opt), Some(d.predicted_ws_paoi))
                }
                Policy::Fedavg => {
                    let picked = crate::baselines::fedavg_select(
                        n,
                        self.k_fixed,
                        &mut rng::selection_rng(self.seed, t as u64),
                    );
                    let completion = timing::completion_time_over(&times, &picked)?;
                    (picked.clone(), picked, completion, None, None)
                }
                Policy::Hybridfl => {
                    let (picked, survivors) = crate::baselines::hybridfl_select(
                        &times,
                        self.k_fixed,
                        self.deadline,
                        &mut rng::selection_rng(self.seed, t as u64),
                    );
                    // The server proceeds at the deadline or when the whole
                    // pick finishes, whichever comes first.
                    let completion =
                        timing::completion_time_over(&times, &picked)?.min(self.deadline);
                    (picked, survivors, completion, None, None)
                }
            };

            let mut aggregated = vec![false; n];
            for &d in &transmitters {
                aggregated[d] = true;
            }
            aoi = scheduler::update_paoi(&aoi, &aggregated, completion)?;

            out.channels.push(channels);
            out.times.push(times);
            out.picked.push(picked);
            out.transmitters.push(transmitters);
            out.completion.push(completion);
            out.paoi.push(aoi.paoi.clone());
            out.ws.push(scheduler::ws_paoi(&self.weights, &aoi.paoi));
            out.k_opt.push(k_opt);
            out.predicted.push(predicted);
        }
        Ok(out)
    }

    /// Phase 2: fix the power plan for the whole horizon.
    fn plan_power(&self, trajectory: &Trajectory) -> Result<(PowerPlan, usize)> {
        let gains: Vec<Vec<f64>> =
            trajectory.channels.iter().map(|c| c.gains.clone()).collect();
        match self.policy {
            Policy::FullPower => {
                let plan = crate::baselines::full_power_plan(
                    &trajectory.transmitters,
                    &gains,
                    &self.pmaxes,
                    &self.pbars,
                    self.sigma2,
                )?;
                Ok((plan, 0))
            }
            Policy::ChannelInversion => {
                Ok((trajectory.ci_plan.clone().expect("built during phase 1"), 0))
            }
            Policy::Fedairaoi | Policy::Fedavg | Policy::Hybridfl => match self.cfg.power.mode {
                PowerMode::Offline => {
                    let outcome = power::alternating_optimize(
                        &trajectory.transmitters,
                        &gains,
                        &self.pmaxes,
                        &self.pbars,
                        self.sigma2,
                        self.cfg.power.epsilon0,
                        self.cfg.power.max_iters,
                    )?;
                    Ok((outcome.plan, outcome.iterations))
                }
                PowerMode::Online => self.online_plan(trajectory, &gains),
            },
        }
    }

    /// Causal per-round planning: each round alternates the receive scaling
    /// with the multiplier-damped fractions for that round alone, then the
    /// multipliers absorb the observed budget deviation.
    fn online_plan(&self, trajectory: &Trajectory, gains: &[Vec<f64>]) -> Result<(PowerPlan, usize)> {
        let n = self.cfg.devices;
        let mut gammas = vec![0.0; n];
        let mut alpha = vec![vec![0.0; n]; trajectory.transmitters.len()];
        let mut eta = vec![1.0; trajectory.transmitters.len()];
        for (t, devs) in trajectory.transmitters.iter().enumerate() {
            if devs.is_empty() {
                continue;
            }
            let g: Vec<f64> = devs.iter().map(|&d| gains[t][d]).collect();
            let p: Vec<f64> = devs.iter().map(|&d| self.pmaxes[d]).collect();
            let mut a: Vec<f64> =
                devs.iter().map(|&d| (self.pbars[d] / self.pmaxes[d]).min(1.0)).collect();
            let mut e = power::optimal_eta(&a, &g, &p, self.sigma2)?;
            let mut prev = f64::INFINITY;
            for _ in 0..50 {
                for (i, &d) in devs.iter().enumerate() {
                    let (ai, _) = power::online_alpha_step(
                        g[i],
                        e,
                        gammas[d],
                        self.pmaxes[d],
                        self.pbars[d],
                        0.0,
                    );
                    a[i] = ai;
                }
                e = power::optimal_eta(&a, &g, &p, self.sigma2)?;
                let (mis, nz) = power::instantaneous_mse(&a, &g, &p, e, self.sigma2)?;
                let mse = mis + nz;
                if mse == 0.0 || (prev - mse).abs() < self.cfg.power.epsilon0 * mse.max(1e-300) {
                    break;
                }
                prev = mse;
            }
            let step_base = self.cfg.power.online_step_scale;
            for (i, &d) in devs.iter().enumerate() {
                let (ai, next_gamma) = power::online_alpha_step(
                    g[i],
                    e,
                    gammas[d],
                    self.pmaxes[d],
                    self.pbars[d],
                    step_base / self.pmaxes[d],
                );
                alpha[t][d] = ai;
                gammas[d] = next_gamma;
            }
            eta[t] = e;
        }
        Ok((PowerPlan { alpha, eta }, 0))
    }

    /// Phase 3: replay the horizon, training and aggregating with the plan
    /// frozen, and assemble the records.
    pub fn run(&self) -> Result<RunOutput> {
        let trajectory = self.selection_trajectory(self.policy)?;
        let (plan, power_iterations) = self.plan_power(&trajectory)?;
        let n = self.cfg.devices;
        let gains: Vec<Vec<f64>> =
            trajectory.channels.iter().map(|c| c.gains.clone()).collect();
        let mse_sets: Vec<Vec<usize>> = if self.policy == Policy::ChannelInversion {
            trajectory.picked.clone()
        } else {
            trajectory.transmitters.clone()
        };
        let breakdown = power::plan_mse(&plan, &mse_sets, &gains, &self.pmaxes, self.sigma2)?;

        let train_cfg = self.cfg.train_config();
        let dim = self.cfg.train.n_classes * (self.cfg.train.n_features + 1);
        let mut model = ModelParams::zeros(self.cfg.train.n_classes, self.cfg.train.n_features);
        let mut records = Vec::with_capacity(self.cfg.rounds);
        for t in 0..self.cfg.rounds {
            let devs = &trajectory.transmitters[t];
            let mut weighting_bias = 0.0;
            let mut aggregation_error_sq = 0.0;
            let mut aggregation_error_cap = 0.0;
            if !devs.is_empty() {
                let mut thetas = Vec::with_capacity(devs.len());
                for &d in devs {
                    let (_, theta) = fl::local_sgd(
                        &model,
                        &self.shards[d],
                        &train_cfg,
                        &mut rng::batch_rng(self.seed, d as u64, t as u64),
                    )?;
                    thetas.push(theta);
                }
                let q: Vec<f64> = devs.iter().map(|&d| self.weights[d]).collect();
                let per_device: Vec<(f64, f64)> =
                    thetas.iter().map(|th| crate::aircomp::device_stats(th)).collect();
                let stats = crate::aircomp::aggregate_stats(&per_device, &q, n)?;
                let theta_hat = if stats.variance <= 0.0 {
                    // Degenerate spread: the normalized symbols carry no
                    // information and the de-normalization collapses to the
                    // weighted mean regardless of what was received.
                    vec![stats.mean; dim]
                } else {
                    let z_list: Vec<Vec<f64>> = thetas
                        .iter()
                        .map(|th| crate::aircomp::normalize(th, &stats))
                        .collect::<Result<_>>()?;
                    let a: Vec<f64> = devs.iter().map(|&d| plan.alpha[t][d]).collect();
                    let p: Vec<f64> = devs.iter().map(|&d| self.pmaxes[d]).collect();
                    let h: Vec<Complex64> =
                        devs.iter().map(|&d| trajectory.channels[t].coefficients[d]).collect();
                    let z_hat = crate::aircomp::transmit_and_aggregate(
                        &z_list,
                        &a,
                        &p,
                        &h,
                        plan.eta[t],
                        self.sigma2,
                        &mut rng::noise_rng(self.seed, t as u64),
                    )?;
                    let ideal = crate::aircomp::ideal_target(&z_list);
                    let (_, err_sq) = crate::aircomp::aggregation_error(&z_hat, &ideal, &stats)?;
                    aggregation_error_sq = err_sq;
                    let gamma_cap = per_device.iter().map(|&(_, v)| v).fold(0.0, f64::max);
                    aggregation_error_cap = crate::diagnostics::aggregation_error_cap(
                        devs.len(),
                        dim,
                        gamma_cap,
                        breakdown.total(t),
                    );
                    weighting_bias = crate::aircomp::weighting_bias(&thetas, &q, n)?;
                    crate::aircomp::denormalize(&z_hat, &stats)
                };
                model = fl::global_update(&model, &theta_hat, train_cfg.learning_rate)?;
            }
            records.push(RoundRecord {
                round: t,
                picked: trajectory.picked[t].clone(),
                transmitters: devs.clone(),
                completion_time: trajectory.completion[t],
                eta: plan.eta[t],
                misalignment: breakdown.misalignment[t],
                noise: breakdown.noise[t],
                ws_paoi: trajectory.ws[t],
                paoi: trajectory.paoi[t].clone(),
                alphas: plan.alpha[t].clone(),
                total_times: trajectory.times[t].clone(),
                gains: gains[t].clone(),
                global_loss: fl::global_loss(&model, &self.shards, &self.weights),
                test_accuracy: fl::accuracy(&model, &self.test_set),
                weighting_bias,
                aggregation_error_sq,
                aggregation_error_cap,
                k_opt: trajectory.k_opt[t],
                predicted_ws_paoi: trajectory.predicted[t],
            });
        }
        Ok(RunOutput {
            policy: self.policy,
            snr_db: self.snr_db,
            seed: self.seed,
            k_fixed: self.k_fixed,
            deadline: self.deadline,
            sigma2: self.sigma2,
            weights: self.weights.clone(),
            pmaxes: self.pmaxes.clone(),
            records,
            plan,
            mse_sets,
            power_iterations,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn small_config() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.devices = 5;
        cfg.rounds = 12;
        cfg.train.samples = 150;
        cfg.train.n_classes = 3;
        cfg.train.n_features = 4;
        cfg.train.local_iterations = 2;
        cfg
    }

    #[test]
    fn single_device_is_always_fresh() {
        let mut cfg = small_config();
        cfg.devices = 1;
        cfg.train.class_counts = Some(vec![3]);
        let sim = Simulation::new(&cfg, Policy::Fedairaoi, 10.0, 7).unwrap();
        let run = sim.run().unwrap();
        for r in &run.records {
            assert_eq!(r.picked, vec![0]);
            assert_eq!(r.transmitters, vec![0]);
            // The lone device aggregates every round, so its age is exactly
            // the round it just waited through.
            assert_relative_eq!(r.paoi[0], r.completion_time);
        }
    }

    #[test]
    fn identical_seeds_replay_identically() {
        let cfg = small_config();
        for policy in [Policy::Fedairaoi, Policy::Hybridfl] {
            let a = Simulation::new(&cfg, policy, 10.0, 3).unwrap().run().unwrap();
            let b = Simulation::new(&cfg, policy, 10.0, 3).unwrap().run().unwrap();
            assert_eq!(a.records, b.records);
        }
    }

    #[test]
    fn recorded_distortion_survives_the_audit() {
        let cfg = small_config();
        for policy in Policy::ALL {
            let run = Simulation::new(&cfg, policy, 5.0, 11).unwrap().run().unwrap();
            let worst = run.audit_mse().unwrap();
            assert!(worst <= 1e-9, "{policy}: audit deviation {worst}");
        }
    }

    #[test]
    fn policies_share_realizations_at_a_seed() {
        let cfg = small_config();
        let a = Simulation::new(&cfg, Policy::Fedairaoi, 10.0, 9).unwrap().run().unwrap();
        let b = Simulation::new(&cfg, Policy::Fedavg, 10.0, 9).unwrap().run().unwrap();
        for (ra, rb) in a.records.iter().zip(&b.records) {
            assert_eq!(ra.gains, rb.gains);
            assert_eq!(ra.total_times, rb.total_times);
        }
        // And distinct seeds genuinely change the environment.
        let c = Simulation::new(&cfg, Policy::Fedairaoi, 10.0, 10).unwrap().run().unwrap();
        assert_ne!(a.records[0].gains, c.records[0].gains);
    }

    #[test]
    fn selection_frequency_counts_transmissions() {
        let cfg = small_config();
        let run = Simulation::new(&cfg, Policy::Hybridfl, 10.0, 21).unwrap().run().unwrap();
        let m = crate::harness::metrics::report(&run);
        let total: f64 = m.selection_frequency.iter().sum::<f64>() * cfg.rounds as f64;
        let expected: usize = run.records.iter().map(|r| r.transmitters.len()).sum();
        assert_relative_eq!(total, expected as f64, max_relative = 1e-12);
        // Dropped stragglers make transmissions a subset of picks.
        for (s, p) in m.selection_frequency.iter().zip(&m.pick_frequency) {
            assert!(s <= p);
        }
    }

    #[test]
    fn online_mode_stays_near_budget() {
        let mut cfg = small_config();
        cfg.rounds = 400;
        cfg.power.mode = PowerMode::Online;
        let sim = Simulation::new(&cfg, Policy::Fedairaoi, 10.0, 5).unwrap();
        let run = sim.run().unwrap();
        // Long-run average spend per device, counted over every round (idle
        // rounds spend nothing), within a few percent of the budget.
        let t = run.records.len() as f64;
        for d in 0..cfg.devices {
            let spent: f64 =
                run.records.iter().map(|r| r.alphas[d] * run.pmaxes[d]).sum::<f64>() / t;
            let share: f64 =
                run.records.iter().filter(|r| r.transmitters.contains(&d)).count() as f64 / t;
            // The budget binds only on rounds the device transmits; scale
            // the allowance by its participation share.
            let budget = share * cfg.power.pbar;
            assert!(
                spent <= budget * 1.10 + 1e-6,
                "device {d}: spent {spent:.4} vs scaled budget {budget:.4}"
            );
        }
    }

    #[test]
    fn written_artifacts_are_byte_stable() {
        let cfg = small_config();
        let dir = tempfile::tempdir().unwrap();
        let mut snapshots: Vec<Vec<(String, Vec<u8>)>> = Vec::new();
        for pass in 0..2 {
            let run = Simulation::new(&cfg, Policy::Fedairaoi, 10.0, 2).unwrap().run().unwrap();
            let metrics = crate::harness::metrics::report(&run);
            let out = dir.path().join(format!("pass{pass}"));
            crate::harness::output::write_run(&out, &run, &metrics, &cfg).unwrap();
            let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(&out)
                .unwrap()
                .map(|e| {
                    let e = e.unwrap();
                    (e.file_name().into_string().unwrap(), std::fs::read(e.path()).unwrap())
                })
                .collect();
            files.sort();
            snapshots.push(files);
        }
        assert_eq!(snapshots[0].len(), 4);
        assert_eq!(snapshots[0], snapshots[1]);
    }

    #[test]
    fn bound_section_flows_into_the_summary_report() {
        let mut cfg = small_config();
        assert!(matches!(
            crate::harness::output::bound_report(
                &Simulation::new(&cfg, Policy::Fedairaoi, 10.0, 3).unwrap().run().unwrap(),
                &cfg
            ),
            Ok(None)
        ));
        cfg.bound = Some(crate::harness::config::BoundSection::default());
        let run = Simulation::new(&cfg, Policy::Fedairaoi, 10.0, 3).unwrap().run().unwrap();
        let report = crate::harness::output::bound_report(&run, &cfg).unwrap().unwrap();
        assert!(report.total.is_finite());
        assert!(report.mean_mse > 0.0);
        // Skewed class counts give one device more than uniform weight.
        assert!(run.weights.iter().cloned().fold(0.0_f64, f64::max) * cfg.devices as f64 > 1.0);
    }
}
