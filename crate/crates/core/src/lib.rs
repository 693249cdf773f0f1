//! Joint time allocation and power control for two-stage NOMA computation
//! offloading.
//!
//! A set of mobile devices first offloads a block of *common* data
//! cooperatively over a NOMA uplink, then each device offloads its own
//! *individual* data over a second NOMA sub-slot. The crate maximizes the
//! minimum individual-stage throughput subject to per-device energy budgets,
//! a latency budget and the common-data requirement, using successive convex
//! approximation over a slack-variable reformulation.
//!
//! Module map:
//!
//! - [`channel`]: scenario parameters, geometry and Rayleigh fading draws.
//! - [`model`]: rate expressions, objective and feasibility checks.
//! - [`solver`]: interior-point solver for linear + perspective-log constraints.
//! - [`sca`]: the successive convex approximation loop.
//! - [`baselines`]: S-NOMA, S-OMA and Benchmark comparison schemes.
//! - [`metrics`]: Jain fairness, per-stage bits and stage ratios.
//! - [`harness`]: seeded Monte-Carlo sweeps and the grid-search oracle.
//! - [`config`] / [`cli`]: flat key-value config files and the command line.

pub mod baselines;
pub mod channel;
pub mod cli;
pub mod config;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod sca;
pub mod solver;

mod numeric;

pub use baselines::{Scheme, SchemeResult, SchemeStatus};
pub use channel::{noise_power, sample_channel, ChannelRealization, Scenario};
pub use error::{Error, Result};
pub use model::{Allocation, FeasibilityReport};
pub use sca::{sca_solve, ScaOptions, ScaOutcome, ScaStatus, ScaTrace, SlackPoint, TaylorTerms};
pub use solver::{ConvexSubproblem, SolveOutcome, SolveStatus};
