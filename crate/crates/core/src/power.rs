//! Transmit-power allocation and receive scaling for analog aggregation.
//!
//! Device `n` transmits its normalized update scaled by
//! `b_n = sqrt(alpha_n * pmax_n) * |h_n|`; the server divides the
//! superposed signal by `sqrt(eta)`. The per-round aggregation distortion is
//!
//! ```text
//! MSE = sum_n (b_n / sqrt(eta) - 1)^2  +  sigma^2 / eta
//! ```
//!
//! (misalignment of each received amplitude from 1, plus scaled noise).
//! For fixed amplitudes the optimal receive scaling has the closed form
//! `eta* = ((sigma^2 + sum b_n^2) / sum b_n)^2` ([`optimal_eta`]).
//!
//! For fixed scalings, each device's power fractions decouple: minimizing
//! its misalignment over a horizon subject to `0 <= alpha_t <= 1` and the
//! average-power budget `sum_t alpha_t <= T * pbar / pmax` gives capped
//! channel inversion `alpha_t = min(eta_t / (pmax * g_t), 1)` when that
//! already fits the budget, and otherwise the dual-damped form
//!
//! ```text
//! alpha_t(gamma) = min( eta_t * g_t / (pmax * (g_t + gamma * eta_t)^2), 1 )
//! ```
//!
//! with the multiplier `gamma > 0` bisected so the budget holds with
//! equality ([`optimal_alpha_schedule`]). [`alternating_optimize`] rotates
//! between the two exact block solutions; each block step solves its
//! subproblem to optimality, so the objective is non-increasing and the
//! loop stops on relative improvement below `epsilon0`.
//!
//! [`online_alpha_step`] is the causal variant: it applies the dual-damped
//! form with the *current* multiplier estimate and then nudges the
//! multiplier along the observed budget violation, so no future channel
//! knowledge is needed.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Bisection budget-residual tolerance.
const BISECT_TOL: f64 = 1e-10;
/// Bisection iteration cap (also caps bracket doubling).
const BISECT_MAX_ITERS: usize = 200;

/// Power fractions and receive scalings for a whole run.
///
/// `alpha[t][n]` is device `n`'s power fraction in round `t` (zero when it
/// does not transmit); `eta[t]` is the round's receive scaling.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PowerPlan {
    pub alpha: Vec<Vec<f64>>,
    pub eta: Vec<f64>,
}

impl PowerPlan {
    pub fn rounds(&self) -> usize {
        self.eta.len()
    }

    /// Checks plan-level feasibility: fractions in `[0, 1]`, positive
    /// scalings, and each device's average spent power within its budget
    /// (tolerance 1e-9 absolute on the average).
    pub fn validate(&self, pmaxes: &[f64], pbars: &[f64]) -> Result<()> {
        if self.alpha.len() != self.eta.len() {
            return Err(Error::LengthMismatch {
                context: "PowerPlan",
                left: self.alpha.len(),
                right: self.eta.len(),
            });
        }
        let t = self.alpha.len();
        if t == 0 {
            return Err(Error::domain("PowerPlan", "empty plan"));
        }
        let n = pmaxes.len();
        let mut spent = vec![0.0; n];
        for (ti, (alphas, &eta)) in self.alpha.iter().zip(&self.eta).enumerate() {
            if alphas.len() != n {
                return Err(Error::LengthMismatch {
                    context: "PowerPlan",
                    left: alphas.len(),
                    right: n,
                });
            }
            if !(eta > 0.0) || !eta.is_finite() {
                return Err(Error::domain("PowerPlan", format!("eta[{ti}] = {eta} invalid")));
            }
            for (ni, &a) in alphas.iter().enumerate() {
                if !a.is_finite() || !(0.0..=1.0).contains(&a) {
                    return Err(Error::domain(
                        "PowerPlan",
                        format!("alpha[{ti}][{ni}] = {a} outside [0, 1]"),
                    ));
                }
                spent[ni] += a * pmaxes[ni];
            }
        }
        for ni in 0..n {
            let avg = spent[ni] / t as f64;
            if avg > pbars[ni] + 1e-9 {
                return Err(Error::domain(
                    "PowerPlan",
                    format!("device {ni} average power {avg} exceeds budget {}", pbars[ni]),
                ));
            }
        }
        Ok(())
    }
}

/// Per-round distortion split into its two sources.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MseBreakdown {
    pub misalignment: Vec<f64>,
    pub noise: Vec<f64>,
}

impl MseBreakdown {
    pub fn total(&self, round: usize) -> f64 {
        self.misalignment[round] + self.noise[round]
    }

    pub fn time_average(&self) -> f64 {
        let t = self.misalignment.len();
        if t == 0 {
            return 0.0;
        }
        self.misalignment
            .iter()
            .zip(&self.noise)
            .map(|(&m, &z)| m + z)
            .sum::<f64>()
            / t as f64
    }
}

/// Received amplitude of one device: `sqrt(alpha * pmax) * |h|`.
fn amplitude(alpha: f64, gain: f64, pmax: f64) -> f64 {
    (alpha * pmax * gain).sqrt()
}

/// One round's distortion as `(misalignment, noise)`.
///
/// Slices are aligned over the transmitting set; a device listed with
/// `alpha = 0` contributes the full misalignment of a missing update,
/// `(0 - 1)^2 = 1`.
pub fn instantaneous_mse(
    alphas: &[f64],
    gains: &[f64],
    pmaxes: &[f64],
    eta: f64,
    sigma2: f64,
) -> Result<(f64, f64)> {
    if alphas.len() != gains.len() || alphas.len() != pmaxes.len() {
        return Err(Error::LengthMismatch {
            context: "instantaneous_mse",
            left: alphas.len(),
            right: gains.len().max(pmaxes.len()),
        });
    }
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::domain("instantaneous_mse", format!("eta must be positive, got {eta}")));
    }
    if sigma2 < 0.0 || !sigma2.is_finite() {
        return Err(Error::domain("instantaneous_mse", format!("sigma2 must be >= 0, got {sigma2}")));
    }
    let sqrt_eta = eta.sqrt();
    let misalignment = alphas
        .iter()
        .zip(gains)
        .zip(pmaxes)
        .map(|((&a, &g), &p)| {
            let d = amplitude(a, g, p) / sqrt_eta - 1.0;
            d * d
        })
        .sum();
    Ok((misalignment, sigma2 / eta))
}

/// Closed-form optimal receive scaling for fixed amplitudes:
/// `eta* = ((sigma^2 + sum b_n^2) / sum b_n)^2`.
pub fn optimal_eta(alphas: &[f64], gains: &[f64], pmaxes: &[f64], sigma2: f64) -> Result<f64> {
    if alphas.len() != gains.len() || alphas.len() != pmaxes.len() {
        return Err(Error::LengthMismatch {
            context: "optimal_eta",
            left: alphas.len(),
            right: gains.len().max(pmaxes.len()),
        });
    }
    if sigma2 < 0.0 || !sigma2.is_finite() {
        return Err(Error::domain("optimal_eta", format!("sigma2 must be >= 0, got {sigma2}")));
    }
    let mut sum_b = 0.0;
    let mut sum_b2 = 0.0;
    for ((&a, &g), &p) in alphas.iter().zip(gains).zip(pmaxes) {
        let b = amplitude(a, g, p);
        sum_b += b;
        sum_b2 += b * b;
    }
    if sum_b <= 0.0 {
        return Err(Error::domain(
            "optimal_eta",
            "no device transmits with positive amplitude",
        ));
    }
    let root = (sigma2 + sum_b2) / sum_b;
    Ok(root * root)
}

/// One device's optimal power fractions over its transmitting rounds.
#[derive(Debug, Clone)]
pub struct AlphaSolution {
    /// Power fraction per transmitting round, aligned with the inputs.
    pub alpha: Vec<f64>,
    /// Budget multiplier; zero when capped inversion already fits.
    pub multiplier: f64,
    /// `sum alpha - budget` after solving (meaningful in the budgeted case).
    pub budget_residual: f64,
}

/// Capped channel inversion for one round.
fn inversion(eta: f64, gain: f64, pmax: f64) -> f64 {
    // gain = 0 divides to +inf and caps at 1.
    (eta / (pmax * gain)).min(1.0)
}

/// Dual-damped fraction for one round at multiplier `gamma > 0`.
fn damped(eta: f64, gain: f64, pmax: f64, gamma: f64) -> f64 {
    if gain == 0.0 {
        // A dead channel conveys nothing at any power; spend none.
        return 0.0;
    }
    let den = gain + gamma * eta;
    (eta * gain / (pmax * den * den)).min(1.0)
}

/// Minimizes one device's total misalignment over the rounds it transmits,
/// subject to `0 <= alpha_t <= 1` and the average-power budget taken over
/// the full `horizon` (rounds it sits out spend nothing, freeing budget).
///
/// `etas` and `gains` are aligned over the device's transmitting rounds.
pub fn optimal_alpha_schedule(
    etas: &[f64],
    gains: &[f64],
    pmax: f64,
    pbar: f64,
    horizon: usize,
) -> Result<AlphaSolution> {
    if etas.len() != gains.len() {
        return Err(Error::LengthMismatch {
            context: "optimal_alpha_schedule",
            left: etas.len(),
            right: gains.len(),
        });
    }
    if !(pmax > 0.0) || !pmax.is_finite() || !(pbar > 0.0) || !pbar.is_finite() || pbar > pmax {
        return Err(Error::domain(
            "optimal_alpha_schedule",
            format!("need 0 < pbar <= pmax, got pbar = {pbar}, pmax = {pmax}"),
        ));
    }
    if horizon == 0 || etas.len() > horizon {
        return Err(Error::domain(
            "optimal_alpha_schedule",
            format!("{} transmitting rounds exceed horizon {horizon}", etas.len()),
        ));
    }
    for (t, (&eta, &g)) in etas.iter().zip(gains).enumerate() {
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(Error::domain(
                "optimal_alpha_schedule",
                format!("eta[{t}] = {eta} must be positive"),
            ));
        }
        if g < 0.0 || !g.is_finite() {
            return Err(Error::domain(
                "optimal_alpha_schedule",
                format!("gain[{t}] = {g} must be >= 0"),
            ));
        }
    }
    if etas.is_empty() {
        return Ok(AlphaSolution { alpha: Vec::new(), multiplier: 0.0, budget_residual: 0.0 });
    }

    let budget = horizon as f64 * pbar / pmax;
    let spend =
        |alpha: &[f64]| -> f64 { alpha.iter().sum::<f64>() };

    // Unconstrained block optimum: capped inversion per round.
    let inv: Vec<f64> = etas.iter().zip(gains).map(|(&e, &g)| inversion(e, g, pmax)).collect();
    if spend(&inv) <= budget {
        return Ok(AlphaSolution {
            alpha: inv.clone(),
            multiplier: 0.0,
            budget_residual: spend(&inv) - budget,
        });
    }

    // Budget binds: bisect the multiplier until the spend meets the budget.
    let eval = |gamma: f64| -> Vec<f64> {
        etas.iter().zip(gains).map(|(&e, &g)| damped(e, g, pmax, gamma)).collect()
    };
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut doublings = 0;
    while spend(&eval(hi)) > budget {
        hi *= 2.0;
        doublings += 1;
        if doublings > BISECT_MAX_ITERS {
            return Err(Error::NoConvergence {
                solver: "alpha multiplier bisection",
                message: format!("no bracket up to gamma = {hi}"),
            });
        }
    }
    let mut mid = hi;
    let mut residual = spend(&eval(mid)) - budget;
    for _ in 0..BISECT_MAX_ITERS {
        mid = 0.5 * (lo + hi);
        residual = spend(&eval(mid)) - budget;
        if residual.abs() <= BISECT_TOL {
            break;
        }
        if residual > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if residual.abs() > 1e-8 {
        return Err(Error::NoConvergence {
            solver: "alpha multiplier bisection",
            message: format!("budget residual {residual} after {BISECT_MAX_ITERS} iterations"),
        });
    }
    Ok(AlphaSolution { alpha: eval(mid), multiplier: mid, budget_residual: residual })
}

/// Result of the alternating optimizer.
#[derive(Debug, Clone)]
pub struct AlternatingOutcome {
    pub plan: PowerPlan,
    /// Time-average MSE after each iteration; `trace[0]` is the value at
    /// the initial fractions (scaling already optimized), so the trace is
    /// non-increasing throughout.
    pub mse_trace: Vec<f64>,
    pub iterations: usize,
}

/// Jointly optimizes fractions and scalings by exact block updates.
///
/// `participants[t]` lists the devices transmitting in round `t` (a round
/// may be empty: it keeps `eta = 1`, spends nothing, and contributes zero
/// distortion). `gains[t]` is the full fleet's gain vector for round `t`.
pub fn alternating_optimize(
    participants: &[Vec<usize>],
    gains: &[Vec<f64>],
    pmaxes: &[f64],
    pbars: &[f64],
    sigma2: f64,
    epsilon0: f64,
    max_iters: usize,
) -> Result<AlternatingOutcome> {
    let init = initial_fractions(participants, pmaxes, pbars)?;
    alternating_optimize_from(init, participants, gains, pmaxes, pbars, sigma2, epsilon0, max_iters)
}

/// Full-budget starting point: every transmitting device at `pbar / pmax`.
pub fn initial_fractions(
    participants: &[Vec<usize>],
    pmaxes: &[f64],
    pbars: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let n = pmaxes.len();
    if pbars.len() != n {
        return Err(Error::LengthMismatch { context: "initial_fractions", left: pbars.len(), right: n });
    }
    let mut alpha = vec![vec![0.0; n]; participants.len()];
    for (t, devs) in participants.iter().enumerate() {
        for &d in devs {
            if d >= n {
                return Err(Error::domain(
                    "initial_fractions",
                    format!("participant {d} out of range in round {t}"),
                ));
            }
            alpha[t][d] = (pbars[d] / pmaxes[d]).min(1.0);
        }
    }
    Ok(alpha)
}

/// [`alternating_optimize`] from caller-supplied starting fractions.
#[allow(clippy::too_many_arguments)]
pub fn alternating_optimize_from(
    mut alpha: Vec<Vec<f64>>,
    participants: &[Vec<usize>],
    gains: &[Vec<f64>],
    pmaxes: &[f64],
    pbars: &[f64],
    sigma2: f64,
    epsilon0: f64,
    max_iters: usize,
) -> Result<AlternatingOutcome> {
    let t_rounds = participants.len();
    let n = pmaxes.len();
    if gains.len() != t_rounds {
        return Err(Error::LengthMismatch {
            context: "alternating_optimize",
            left: gains.len(),
            right: t_rounds,
        });
    }
    if t_rounds == 0 {
        return Err(Error::domain("alternating_optimize", "no rounds"));
    }
    if alpha.len() != t_rounds {
        return Err(Error::LengthMismatch {
            context: "alternating_optimize",
            left: alpha.len(),
            right: t_rounds,
        });
    }
    if !(epsilon0 > 0.0) {
        return Err(Error::domain("alternating_optimize", "epsilon0 must be positive"));
    }
    if max_iters == 0 {
        return Err(Error::domain("alternating_optimize", "max_iters must be >= 1"));
    }
    for (t, g) in gains.iter().enumerate() {
        if g.len() != n {
            return Err(Error::LengthMismatch { context: "alternating_optimize", left: g.len(), right: n });
        }
        if alpha[t].len() != n {
            return Err(Error::LengthMismatch {
                context: "alternating_optimize",
                left: alpha[t].len(),
                right: n,
            });
        }
        let _ = t;
    }

    // Rounds each device transmits in.
    let mut device_rounds: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (t, devs) in participants.iter().enumerate() {
        for &d in devs {
            device_rounds[d].push(t);
        }
    }

    let mut eta = vec![1.0; t_rounds];
    let update_eta = |alpha: &[Vec<f64>], eta: &mut [f64]| -> Result<()> {
        for (t, devs) in participants.iter().enumerate() {
            if devs.is_empty() {
                eta[t] = 1.0;
                continue;
            }
            let a: Vec<f64> = devs.iter().map(|&d| alpha[t][d]).collect();
            let g: Vec<f64> = devs.iter().map(|&d| gains[t][d]).collect();
            let p: Vec<f64> = devs.iter().map(|&d| pmaxes[d]).collect();
            eta[t] = optimal_eta(&a, &g, &p, sigma2)?;
        }
        Ok(())
    };
    let objective = |alpha: &[Vec<f64>], eta: &[f64]| -> Result<f64> {
        let mut total = 0.0;
        for (t, devs) in participants.iter().enumerate() {
            if devs.is_empty() {
                continue;
            }
            let a: Vec<f64> = devs.iter().map(|&d| alpha[t][d]).collect();
            let g: Vec<f64> = devs.iter().map(|&d| gains[t][d]).collect();
            let p: Vec<f64> = devs.iter().map(|&d| pmaxes[d]).collect();
            let (mis, noise) = instantaneous_mse(&a, &g, &p, eta[t], sigma2)?;
            total += mis + noise;
        }
        Ok(total / t_rounds as f64)
    };

    update_eta(&alpha, &mut eta)?;
    let mut trace = vec![objective(&alpha, &eta)?];
    let mut iterations = 0;
    for _ in 0..max_iters {
        iterations += 1;
        // Block 1 already applied for the first iteration; afterwards the
        // scaling is refreshed at the top of each pass.
        if iterations > 1 {
            update_eta(&alpha, &mut eta)?;
        }
        // Block 2: per-device budgeted schedules against fixed scalings.
        for d in 0..n {
            let rounds = &device_rounds[d];
            if rounds.is_empty() {
                continue;
            }
            let e: Vec<f64> = rounds.iter().map(|&t| eta[t]).collect();
            let g: Vec<f64> = rounds.iter().map(|&t| gains[t][d]).collect();
            let sol = optimal_alpha_schedule(&e, &g, pmaxes[d], pbars[d], t_rounds)?;
            for (&t, &a) in rounds.iter().zip(&sol.alpha) {
                alpha[t][d] = a;
            }
        }
        let mse = objective(&alpha, &eta)?;
        let prev = *trace.last().expect("trace non-empty");
        trace.push(mse);
        // Relative-improvement stop; a zero objective cannot improve.
        if mse == 0.0 || (prev - mse) < epsilon0 * mse {
            break;
        }
    }

    Ok(AlternatingOutcome { plan: PowerPlan { alpha, eta }, mse_trace: trace, iterations })
}

/// Causal fraction choice and multiplier update for one device and round.
///
/// Applies the dual-damped form at the current multiplier, then moves the
/// multiplier along the observed budget violation:
/// `gamma' = max(0, gamma + step * (alpha * pmax - pbar))`.
pub fn online_alpha_step(
    gain: f64,
    eta: f64,
    gamma: f64,
    pmax: f64,
    pbar: f64,
    step: f64,
) -> (f64, f64) {
    debug_assert!(eta > 0.0 && pmax > 0.0 && gamma >= 0.0 && step >= 0.0);
    let alpha = if gamma == 0.0 { inversion(eta, gain, pmax) } else { damped(eta, gain, pmax, gamma) };
    let next_gamma = (gamma + step * (alpha * pmax - pbar)).max(0.0);
    (alpha, next_gamma)
}

/// Recomputes the per-round distortion a plan produces (audit path).
pub fn plan_mse(
    plan: &PowerPlan,
    participants: &[Vec<usize>],
    gains: &[Vec<f64>],
    pmaxes: &[f64],
    sigma2: f64,
) -> Result<MseBreakdown> {
    let t_rounds = plan.rounds();
    if participants.len() != t_rounds || gains.len() != t_rounds {
        return Err(Error::LengthMismatch {
            context: "plan_mse",
            left: participants.len().min(gains.len()),
            right: t_rounds,
        });
    }
    let mut misalignment = Vec::with_capacity(t_rounds);
    let mut noise = Vec::with_capacity(t_rounds);
    for t in 0..t_rounds {
        if participants[t].is_empty() {
            misalignment.push(0.0);
            noise.push(0.0);
            continue;
        }
        let a: Vec<f64> = participants[t].iter().map(|&d| plan.alpha[t][d]).collect();
        let g: Vec<f64> = participants[t].iter().map(|&d| gains[t][d]).collect();
        let p: Vec<f64> = participants[t].iter().map(|&d| pmaxes[d]).collect();
        let (mis, nz) = instantaneous_mse(&a, &g, &p, plan.eta[t], sigma2)?;
        misalignment.push(mis);
        noise.push(nz);
    }
    Ok(MseBreakdown { misalignment, noise })
}
