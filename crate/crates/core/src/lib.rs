//! Finite-key secret-key rates for decoy-state QKD whose transmitter leaks
//! information about its settings, for example through Trojan-horse light.
//!
//! The leakage enters through a single number `δ`, a lower bound on the
//! overlap between the actual emitted states and leak-free Poissonian
//! reference states. Statistics of the reference states are bounded from
//! the observed ones through the Cauchy–Schwarz inequality
//! ([`cs_bounds`]), fluctuations through Kato's inequality
//! ([`concentration`]), and single-photon quantities through decoy-state
//! linear programs ([`decoy_lp`]).

pub mod channel;
pub mod concentration;
pub mod config;
pub mod cs_bounds;
pub mod decoy_lp;
pub mod error;
pub mod intensity_attack;
pub mod keyrate_bb84;
pub mod keyrate_lt;
pub mod optimizer;
pub mod rate;

pub use channel::{
    expected_statistics, sampled_statistics, Basis, ChannelParams, ObservedStatistics, Outcome, Setting,
};
pub use concentration::{BoundKind, BoundLedger, BoundQuery, FiniteSize, KatoParams};
pub use config::{DecoyEstimation, EpsilonBudget, ExperimentConfig, Leakage, Protocol, BB84_APPLICATIONS};
pub use cs_bounds::{Delta, ThaModel};
pub use decoy_lp::{GainBounds, LinearProgram, PoissonSource, Sense};
pub use error::{Error, Result};
pub use keyrate_bb84::{bb84_rate, KeyRateResult, LpDiagnostics};
pub use keyrate_lt::{lt_rate, LtStates};
pub use optimizer::{optimize, optimize_from, sweep, FreeParams, OptimizerSettings, Optimum, Pipeline};
pub use rate::{applications, key_rate};
