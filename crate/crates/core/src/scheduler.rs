//! Age-aware device selection.
//!
//! Each device `n` carries a peak age of information `A_n`: the time since
//! the server last aggregated an update from it. After a round with
//! completion time `T_c` the recursion is
//!
//! ```text
//! A_n <- (1 - s_n) * A_n + T_c
//! ```
//!
//! where `s_n` is 1 when `n`'s update was aggregated (its age resets to the
//! just-elapsed round) and 0 otherwise (it keeps aging). The scheduler's
//! objective is the weighted-sum PAoI of the *next* state,
//! `r = (1/N) * sum_n q_n * A_n'`, which splits into a completion-time part
//! paid by everyone and a residual paid by the excluded:
//!
//! ```text
//! r = (1/N) * T_c + (1/N) * sum_{n excluded} q_n * A_n .
//! ```
//!
//! Minimizing a quadratic Lyapunov drift bound over single-round decisions
//! yields the priority `q_n * A_n / T_n`: urgent (aged, heavy) devices rank
//! high, slow devices rank low. [`greedy_select`] sweeps prefixes of the
//! priority order. For a prefix of length `k`, completion time is locked at
//! `psi(k)`, the slowest prefix member; every other device with
//! `T_n <= psi(k)` rides along for free (it cannot extend the round, and
//! including it clears its residual), so the candidate set is the whole
//! sub-`psi(k)` population. `psi` only changes at prefix lengths where the
//! next device raises the running maximum, so only those candidates (plus
//! the all-devices one) need evaluating.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Ages and aggregation weights of the fleet at the start of a round.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AoiState {
    /// Peak age of information per device, seconds.
    pub paoi: Vec<f64>,
    /// Aggregation weights `q_n`; non-negative, summing to 1.
    pub weights: Vec<f64>,
    /// Round index this state is current for.
    pub round: usize,
}

impl AoiState {
    /// Fresh state: every device starts at age zero.
    pub fn initial(weights: Vec<f64>) -> Result<Self> {
        let state = AoiState { paoi: vec![0.0; weights.len()], weights, round: 0 };
        state.validate()?;
        Ok(state)
    }

    pub fn n_devices(&self) -> usize {
        self.paoi.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.paoi.len() != self.weights.len() {
            return Err(Error::LengthMismatch {
                context: "AoiState",
                left: self.paoi.len(),
                right: self.weights.len(),
            });
        }
        if self.paoi.is_empty() {
            return Err(Error::domain("AoiState", "no devices"));
        }
        for (n, &a) in self.paoi.iter().enumerate() {
            if !a.is_finite() || a < 0.0 {
                return Err(Error::domain("AoiState", format!("paoi[{n}] = {a} invalid")));
            }
        }
        let mut sum = 0.0;
        for (n, &q) in self.weights.iter().enumerate() {
            if !q.is_finite() || !(0.0..=1.0).contains(&q) {
                return Err(Error::domain("AoiState", format!("weight[{n}] = {q} outside [0, 1]")));
            }
            sum += q;
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::domain("AoiState", format!("weights sum to {sum}, expected 1")));
        }
        Ok(())
    }
}

/// Outcome of one round's selection sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionDecision {
    /// Selected device indices, ascending.
    pub selected: Vec<usize>,
    /// Length of the winning priority prefix. The selected set may be
    /// larger: sub-`psi` devices ride along.
    pub k_opt: usize,
    /// Predicted weighted-sum PAoI of the next state.
    pub predicted_ws_paoi: f64,
    /// Completion time the selection commits to (slowest selected device).
    pub completion_time: f64,
}

/// Advances the PAoI recursion after a round with completion time `t_c`.
pub fn update_paoi(state: &AoiState, aggregated: &[bool], t_c: f64) -> Result<AoiState> {
    if aggregated.len() != state.n_devices() {
        return Err(Error::LengthMismatch {
            context: "update_paoi",
            left: aggregated.len(),
            right: state.n_devices(),
        });
    }
    if !t_c.is_finite() || t_c < 0.0 {
        return Err(Error::domain("update_paoi", format!("completion time {t_c} invalid")));
    }
    let paoi = state
        .paoi
        .iter()
        .zip(aggregated)
        .map(|(&a, &s)| if s { t_c } else { a + t_c })
        .collect();
    Ok(AoiState { paoi, weights: state.weights.clone(), round: state.round + 1 })
}

/// Selection priority `q * a / total_time`.
pub fn device_priority(weight: f64, paoi: f64, total_time: f64) -> Result<f64> {
    if !(total_time > 0.0) || !total_time.is_finite() {
        return Err(Error::domain(
            "device_priority",
            format!("total time must be positive, got {total_time}"),
        ));
    }
    Ok(weight * paoi / total_time)
}

/// Priorities for the whole fleet.
pub fn priorities(state: &AoiState, total_times: &[f64]) -> Result<Vec<f64>> {
    if total_times.len() != state.n_devices() {
        return Err(Error::LengthMismatch {
            context: "priorities",
            left: total_times.len(),
            right: state.n_devices(),
        });
    }
    state
        .weights
        .iter()
        .zip(&state.paoi)
        .zip(total_times)
        .map(|((&q, &a), &t)| device_priority(q, a, t))
        .collect()
}

/// Quadratic Lyapunov potential `(1/N) * sum_n q_n * A_n^2`.
pub fn lyapunov(state: &AoiState) -> f64 {
    let n = state.n_devices() as f64;
    state
        .weights
        .iter()
        .zip(&state.paoi)
        .map(|(&q, &a)| q * a * a)
        .sum::<f64>()
        / n
}

/// One-round change of the Lyapunov potential.
pub fn lyapunov_drift(before: &AoiState, after: &AoiState) -> f64 {
    lyapunov(after) - lyapunov(before)
}

/// Weighted-sum PAoI `(1/N) * sum_n q_n * A_n` of a state's age vector.
pub fn ws_paoi(weights: &[f64], paoi: &[f64]) -> f64 {
    let n = weights.len() as f64;
    weights.iter().zip(paoi).map(|(&q, &a)| q * a).sum::<f64>() / n
}

/// Mean weighted-sum PAoI over a trajectory of age snapshots.
pub fn ews_paoi(weights: &[f64], trajectory: &[Vec<f64>]) -> f64 {
    assert!(!trajectory.is_empty(), "empty trajectory");
    trajectory.iter().map(|paoi| ws_paoi(weights, paoi)).sum::<f64>() / trajectory.len() as f64
}

/// Devices ordered by descending priority, ties broken by ascending index.
pub fn priority_order(prio: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..prio.len()).collect();
    order.sort_by(|&a, &b| prio[b].total_cmp(&prio[a]).then(a.cmp(&b)));
    order
}

/// Completion-time staircase: the slowest device among the `k` highest
/// priorities. Non-decreasing in `k`.
pub fn staircase_psi(prio: &[f64], total_times: &[f64], k: usize) -> f64 {
    assert!(k >= 1 && k <= prio.len(), "prefix length {k} out of range");
    let order = priority_order(prio);
    order[..k]
        .iter()
        .map(|&n| total_times[n])
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Greedy prefix sweep minimizing the predicted weighted-sum PAoI.
///
/// Only prefix lengths where the running completion time jumps produce new
/// candidates (plus the all-devices prefix); between jumps the excluded set
/// and therefore the objective are unchanged. Ties in the objective keep
/// the earliest (smallest-prefix) candidate.
pub fn greedy_select(state: &AoiState, total_times: &[f64]) -> Result<SelectionDecision> {
    state.validate()?;
    let n = state.n_devices();
    if total_times.len() != n {
        return Err(Error::LengthMismatch {
            context: "greedy_select",
            left: total_times.len(),
            right: n,
        });
    }
    for (i, &t) in total_times.iter().enumerate() {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::domain(
                "greedy_select",
                format!("total time of device {i} must be positive, got {t}"),
            ));
        }
    }

    let prio = priorities(state, total_times)?;
    let order = priority_order(&prio);

    let evaluate = |k: usize, psi: f64| -> (f64, f64) {
        // Prefix members satisfy T <= psi by construction, so the excluded
        // set is exactly { m : T_m > psi } regardless of prefix membership.
        let residual: f64 = total_times
            .iter()
            .zip(&state.weights)
            .zip(&state.paoi)
            .filter(|((&t, _), _)| t > psi)
            .map(|((_, &q), &a)| q * a)
            .sum();
        let _ = k;
        ((psi + residual) / n as f64, residual)
    };

    let mut best_k = 0usize;
    let mut best_psi = 0.0f64;
    let mut best_r = f64::INFINITY;
    let mut t_max = total_times[order[0]];
    for (i, &dev) in order.iter().enumerate().skip(1) {
        if total_times[dev] > t_max {
            let (r, _) = evaluate(i, t_max);
            if r < best_r {
                best_r = r;
                best_k = i;
                best_psi = t_max;
            }
            t_max = total_times[dev];
        }
    }
    let (r_all, _) = evaluate(n, t_max);
    if r_all < best_r {
        best_r = r_all;
        best_k = n;
        best_psi = t_max;
    }

    let selected: Vec<usize> = (0..n).filter(|&m| total_times[m] <= best_psi).collect();
    debug_assert!(best_k <= selected.len());
    Ok(SelectionDecision {
        selected,
        k_opt: best_k,
        predicted_ws_paoi: best_r,
        completion_time: best_psi,
    })
}

/// Aggregation weights growing exponentially with per-device class counts:
/// `q_n = 2^(M_n) / sum_m 2^(M_m)`.
///
/// Devices holding more classes see rarer label diversity, so their updates
/// carry exponentially more weight.
pub fn exponential_class_weights(class_counts: &[usize]) -> Vec<f64> {
    assert!(!class_counts.is_empty());
    let raw: Vec<f64> = class_counts.iter().map(|&m| (m as f64).exp2()).collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / sum).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn state(paoi: Vec<f64>, weights: Vec<f64>) -> AoiState {
        let s = AoiState { paoi, weights, round: 0 };
        s.validate().unwrap();
        s
    }

    #[test]
    fn paoi_recursion_hand_values() {
        let s = state(vec![1.0, 4.0], vec![0.5, 0.5]);
        let next = update_paoi(&s, &[true, false], 3.0).unwrap();
        assert_eq!(next.paoi, vec![3.0, 7.0]);
        assert_eq!(next.round, 1);

        let all = update_paoi(&s, &[true, true], 2.0).unwrap();
        assert_eq!(all.paoi, vec![2.0, 2.0]);

        let none = update_paoi(&s, &[false, false], 2.0).unwrap();
        assert_eq!(none.paoi, vec![3.0, 6.0]);

        // From the zero state every device's age equals the first round.
        let zero = AoiState::initial(vec![0.5, 0.5]).unwrap();
        let first = update_paoi(&zero, &[false, true], 5.0).unwrap();
        assert_eq!(first.paoi, vec![5.0, 5.0]);
    }

    #[test]
    fn priority_hand_values() {
        assert_relative_eq!(device_priority(0.1, 10.0, 2.0).unwrap(), 0.5);
        assert!(device_priority(0.1, 10.0, 0.0).is_err());
        assert!(device_priority(0.1, 10.0, -1.0).is_err());
        // Zero age means zero priority regardless of weight.
        assert_relative_eq!(device_priority(0.9, 0.0, 3.0).unwrap(), 0.0);
    }

    #[test]
    fn lyapunov_hand_values() {
        let s = state(vec![2.0, 4.0], vec![0.5, 0.5]);
        assert_relative_eq!(lyapunov(&s), 5.0);
        let next = state(vec![3.0, 3.0], vec![0.5, 0.5]);
        assert_relative_eq!(lyapunov_drift(&s, &next), -0.5);
    }

    #[test]
    fn ws_paoi_hand_value() {
        // Select the first device, T_c = 3: ages become [3, 7], and
        // (1/2)(0.5*3 + 0.5*7) = 2.5.
        let s = state(vec![1.0, 4.0], vec![0.5, 0.5]);
        let next = update_paoi(&s, &[true, false], 3.0).unwrap();
        assert_relative_eq!(ws_paoi(&next.weights, &next.paoi), 2.5);
    }

    #[test]
    fn ews_is_mean_of_ws() {
        let w = vec![0.5, 0.5];
        let traj = vec![vec![1.0, 1.0], vec![2.0, 0.0]];
        assert_relative_eq!(ews_paoi(&w, &traj), 0.5);
    }

    #[test]
    fn staircase_hand_values_and_ordering() {
        let prio = [3.0, 1.0, 2.0];
        let times = [5.0, 1.0, 9.0];
        assert_relative_eq!(staircase_psi(&prio, &times, 1), 5.0);
        assert_relative_eq!(staircase_psi(&prio, &times, 2), 9.0);
        assert_relative_eq!(staircase_psi(&prio, &times, 3), 9.0);
        // Priority ties broken by ascending index.
        let tied = [1.0, 1.0, 1.0];
        assert_eq!(priority_order(&tied), vec![0, 1, 2]);
    }

    #[test]
    fn greedy_excludes_straggler() {
        // Two urgent fast devices and one fresh straggler: waiting 100 s
        // for a device with negligible age is never worth it.
        let q = vec![1.0 / 3.0; 3];
        let s = state(vec![10.0, 10.0, 0.1], q);
        let times = [1.0, 1.0, 100.0];
        let d = greedy_select(&s, &times).unwrap();
        assert_eq!(d.selected, vec![0, 1]);
        assert_eq!(d.k_opt, 2);
        assert_relative_eq!(d.completion_time, 1.0);
        // r = (1/3) * (1 + (1/3) * 0.1) = 31/90.
        assert_relative_eq!(d.predicted_ws_paoi, 31.0 / 90.0, max_relative = 1e-12);
    }

    #[test]
    fn greedy_single_device() {
        let s = state(vec![7.0], vec![1.0]);
        let d = greedy_select(&s, &[2.5]).unwrap();
        assert_eq!(d.selected, vec![0]);
        assert_eq!(d.k_opt, 1);
        assert_relative_eq!(d.completion_time, 2.5);
        assert_relative_eq!(d.predicted_ws_paoi, 2.5);
    }

    #[test]
    fn greedy_takes_everyone_when_ages_dominate() {
        // Huge ages on slow devices force full participation.
        let s = state(vec![1000.0, 1000.0, 1000.0], vec![1.0 / 3.0; 3]);
        let times = [1.0, 2.0, 3.0];
        let d = greedy_select(&s, &times).unwrap();
        assert_eq!(d.selected, vec![0, 1, 2]);
        assert_relative_eq!(d.completion_time, 3.0);
    }

    /// Exhaustive reference: evaluate every prefix length directly.
    fn exhaustive_best_r(state: &AoiState, times: &[f64]) -> f64 {
        let n = state.n_devices();
        let prio = priorities(state, times).unwrap();
        let mut best = f64::INFINITY;
        for k in 1..=n {
            let psi = staircase_psi(&prio, times, k);
            let residual: f64 = (0..n)
                .filter(|&m| times[m] > psi)
                .map(|m| state.weights[m] * state.paoi[m])
                .sum();
            best = best.min((psi + residual) / n as f64);
        }
        best
    }

    #[test]
    fn greedy_matches_exhaustive_enumeration() {
        let mut rng = crate::rng::stream(2024, crate::rng::StreamTag::Selection, 0, 0);
        for _ in 0..300 {
            let n = rng.random_range(1..=10usize);
            let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
            let sum: f64 = raw.iter().sum();
            let weights: Vec<f64> = raw.iter().map(|x| x / sum).collect();
            let paoi: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..50.0)).collect();
            let times: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..20.0)).collect();
            let s = state(paoi, weights);
            let d = greedy_select(&s, &times).unwrap();
            let best = exhaustive_best_r(&s, &times);
            assert_relative_eq!(d.predicted_ws_paoi, best, max_relative = 1e-12);
        }
    }

    #[test]
    fn greedy_prediction_matches_realized_ws_paoi() {
        // The objective it minimizes is exactly the WS-PAoI of the state the
        // decision produces.
        let mut rng = crate::rng::stream(77, crate::rng::StreamTag::Selection, 1, 0);
        for _ in 0..100 {
            let n = rng.random_range(1..=12usize);
            let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
            let sum: f64 = raw.iter().sum();
            let weights: Vec<f64> = raw.iter().map(|x| x / sum).collect();
            let paoi: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..30.0)).collect();
            let times: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..10.0)).collect();
            let s = state(paoi, weights);
            let d = greedy_select(&s, &times).unwrap();
            let mut mask = vec![false; n];
            for &m in &d.selected {
                mask[m] = true;
            }
            let next = update_paoi(&s, &mask, d.completion_time).unwrap();
            assert_relative_eq!(
                ws_paoi(&next.weights, &next.paoi),
                d.predicted_ws_paoi,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn exponential_weights_hand_value() {
        let q = exponential_class_weights(&[1, 2]);
        assert_relative_eq!(q[0], 1.0 / 3.0);
        assert_relative_eq!(q[1], 2.0 / 3.0);
        let q = exponential_class_weights(&[3, 3, 3]);
        for &x in &q {
            assert_relative_eq!(x, 1.0 / 3.0);
        }
    }

    #[test]
    fn state_validation_rejects_bad_weights() {
        assert!(AoiState { paoi: vec![0.0; 2], weights: vec![0.7, 0.7], round: 0 }
            .validate()
            .is_err());
        assert!(AoiState { paoi: vec![-1.0, 0.0], weights: vec![0.5, 0.5], round: 0 }
            .validate()
            .is_err());
        assert!(AoiState { paoi: vec![0.0], weights: vec![0.5, 0.5], round: 0 }
            .validate()
            .is_err());
    }

    proptest! {
        #[test]
        fn staircase_non_decreasing(
            seed in 0u64..1000,
            n in 1usize..12,
        ) {
            let mut rng = crate::rng::stream(seed, crate::rng::StreamTag::Selection, 99, 0);
            let prio: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..10.0)).collect();
            let times: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..10.0)).collect();
            let mut last = f64::NEG_INFINITY;
            for k in 1..=n {
                let psi = staircase_psi(&prio, &times, k);
                prop_assert!(psi >= last);
                last = psi;
            }
        }

        #[test]
        fn greedy_completion_is_max_over_selected(
            seed in 0u64..500,
        ) {
            let mut rng = crate::rng::stream(seed, crate::rng::StreamTag::Selection, 7, 0);
            let n = rng.random_range(1..=15usize);
            let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
            let sum: f64 = raw.iter().sum();
            let weights: Vec<f64> = raw.iter().map(|x| x / sum).collect();
            let paoi: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..40.0)).collect();
            let times: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..10.0)).collect();
            let s = AoiState { paoi, weights, round: 0 };
            let d = greedy_select(&s, &times).unwrap();
            prop_assert!(!d.selected.is_empty());
            prop_assert!(d.k_opt >= 1 && d.k_opt <= d.selected.len());
            let max_t = d.selected.iter().map(|&m| times[m]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(max_t, d.completion_time);
        }
    }
}
