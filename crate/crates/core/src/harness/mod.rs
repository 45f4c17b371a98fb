//! Experiment orchestration: configuration, the three-phase per-seed
//! simulation, metric reduction, sweeps, and file output.
//!
//! The replayability contract: a run's full record stream is a pure function
//! of (config, policy, SNR, seed). Policies compared at the same seed share
//! every random draw they have in common, so paired differences isolate the
//! policy itself.

pub mod config;
pub mod metrics;
pub mod output;
pub mod round;
pub mod sweep;

pub use config::{BoundSection, ExperimentConfig, Policy, PowerMode};
pub use metrics::MetricsReport;
pub use round::{RoundRecord, RunOutput, Simulation};
pub use sweep::{SweepCell, SweepSummaryRow};
