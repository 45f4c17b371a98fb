//! Reference policies the scheduler and the power optimizer are measured
//! against.
//!
//! Two fixed power rules bracket the optimizer: full power spends the whole
//! per-round budget regardless of the channel, and channel inversion aligns
//! amplitudes exactly by spending whatever inversion costs, deactivating any
//! device whose channel is too weak to invert within its power limit. Two
//! selection rules bracket the scheduler: plain uniform sampling, and uniform
//! sampling followed by a completion deadline that drops stragglers after
//! the fact.

use rand::Rng;

use crate::power::{optimal_eta, PowerPlan};
use crate::{Error, Result};

/// Every transmitting device at its budget fraction `pbar / pmax`, with the
/// receive scaling chosen optimally for those amplitudes. Rounds with no
/// participants keep `eta = 1` and spend nothing.
pub fn full_power_plan(
    participants: &[Vec<usize>],
    gains: &[Vec<f64>],
    pmaxes: &[f64],
    pbars: &[f64],
    sigma2: f64,
) -> Result<PowerPlan> {
    let alpha = crate::power::initial_fractions(participants, pmaxes, pbars)?;
    if gains.len() != participants.len() {
        return Err(Error::LengthMismatch {
            context: "full_power_plan",
            left: gains.len(),
            right: participants.len(),
        });
    }
    let mut eta = Vec::with_capacity(participants.len());
    for (t, devs) in participants.iter().enumerate() {
        if devs.is_empty() {
            eta.push(1.0);
            continue;
        }
        let a: Vec<f64> = devs.iter().map(|&d| alpha[t][d]).collect();
        let g: Vec<f64> = devs.iter().map(|&d| gains[t][d]).collect();
        let p: Vec<f64> = devs.iter().map(|&d| pmaxes[d]).collect();
        eta.push(optimal_eta(&a, &g, &p, sigma2)?);
    }
    Ok(PowerPlan { alpha, eta })
}

/// Per-round channel inversion toward a common receive scaling.
///
/// The round's target scaling is the one full power would pick; each
/// participant then inverts its channel, `alpha = eta / (pmax * gain)`.
/// A device that would need more than its peak power is deactivated and
/// keeps `alpha = 0`, so in the distortion accounting it contributes the
/// full squared miss of an update that never arrived. The rule tracks no
/// long-run power budget; that is its known weakness, not a bug.
///
/// Returns the plan together with the surviving (active) subset per round.
/// A round whose every participant deactivates is an error: nothing would
/// be received at all.
pub fn channel_inversion_plan(
    participants: &[Vec<usize>],
    gains: &[Vec<f64>],
    pmaxes: &[f64],
    pbars: &[f64],
    sigma2: f64,
) -> Result<(PowerPlan, Vec<Vec<usize>>)> {
    let full = full_power_plan(participants, gains, pmaxes, pbars, sigma2)?;
    let n = pmaxes.len();
    let mut alpha = vec![vec![0.0; n]; participants.len()];
    let mut active = Vec::with_capacity(participants.len());
    for (t, devs) in participants.iter().enumerate() {
        let mut survivors = Vec::new();
        for &d in devs {
            let need = full.eta[t] / (pmaxes[d] * gains[t][d]);
            if need <= 1.0 {
                alpha[t][d] = need;
                survivors.push(d);
            }
        }
        if survivors.is_empty() && !devs.is_empty() {
            return Err(Error::AllDeactivated { round: t });
        }
        active.push(survivors);
    }
    Ok((PowerPlan { alpha, eta: full.eta }, active))
}

/// Uniform random selection of `k` distinct devices, ascending.
pub fn fedavg_select<R: Rng + ?Sized>(n_devices: usize, k: usize, rng: &mut R) -> Vec<usize> {
    assert!(k >= 1 && k <= n_devices, "need 1 <= k <= n_devices");
    let mut picked = rand::seq::index::sample(rng, n_devices, k).into_vec();
    picked.sort_unstable();
    picked
}

/// Uniform selection of `k` devices followed by a hard completion deadline:
/// a picked device whose round time exceeds the deadline is dropped.
///
/// Returns `(picked, survivors)`; the survivor list may be empty, in which
/// case the round carries nothing and the caller decides how time passes.
pub fn hybridfl_select<R: Rng + ?Sized>(
    total_times: &[f64],
    k: usize,
    deadline: f64,
    rng: &mut R,
) -> (Vec<usize>, Vec<usize>) {
    assert!(deadline > 0.0, "deadline must be positive");
    let picked = fedavg_select(total_times.len(), k, rng);
    let survivors: Vec<usize> =
        picked.iter().cloned().filter(|&d| total_times[d] <= deadline).collect();
    (picked, survivors)
}
