//! Simulator and numerical optimizers for age-of-information-aware device
//! scheduling and transmit-power control in over-the-air federated learning.
//!
//! An orchestrating server trains a shared model with `N` edge devices. Each
//! round it selects a subset of devices, the selected devices run local SGD,
//! and their normalized updates are aggregated analogically over a fading
//! multiple-access channel (signals superpose in the air). Two couplings make
//! this interesting:
//!
//! * **Staleness vs. speed.** Waiting for slow devices stretches the round,
//!   which ages *every* device's information; skipping them lets their
//!   peak age of information (PAoI) grow unboundedly. [`scheduler`]
//!   implements a Lyapunov-drift-derived priority rule and a greedy sweep
//!   that minimizes the predicted weighted-sum PAoI of the next round.
//! * **Alignment vs. noise.** Over-the-air aggregation is unbiased only if
//!   all received amplitudes match the receive scaling; pushing the scaling
//!   up suppresses noise but makes weak channels impossible to align.
//!   [`power`] solves the joint scaling/power-allocation problem under
//!   per-round and average power budgets.
//!
//! The remaining modules provide the channel and timing models ([`channel`],
//! [`timing`]), the analog aggregation chain ([`aircomp`]), a desk-scale
//! learning task ([`fl`]), reference policies ([`baselines`]), a convergence
//! bound calculator ([`diagnostics`]), and a deterministic experiment harness
//! with CSV/JSON output ([`harness`]).
//!
//! Everything is driven by explicit seeds; see [`rng`] for how per-concern
//! random streams are derived so that paired policy comparisons consume
//! identical channel and timing realizations.

pub mod aircomp;
pub mod baselines;
pub mod channel;
pub mod diagnostics;
pub mod error;
pub mod fl;
pub mod harness;
pub mod power;
pub mod rng;
pub mod scheduler;
pub mod timing;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
