//! Protocol dispatch for the key-rate pipelines.

use crate::channel::{expected_statistics, ObservedStatistics};
use crate::config::{ExperimentConfig, Protocol, BB84_APPLICATIONS};
use crate::cs_bounds::Delta;
use crate::error::Result;
use crate::keyrate_bb84::{bb84_evaluate, KeyRateResult};
use crate::keyrate_lt::{lt_applications, lt_evaluate, phase_error_weights};

/// Runs the configured protocol's pipeline against `obs`, with
/// concentration bounds tuned to `predicted`.
pub fn evaluate(
    cfg: &ExperimentConfig,
    delta: Delta,
    obs: &ObservedStatistics,
    predicted: &ObservedStatistics,
) -> Result<KeyRateResult> {
    match cfg.protocol {
        Protocol::Bb84 => bb84_evaluate(cfg, delta, obs, predicted),
        Protocol::LossTolerant => lt_evaluate(cfg, delta, obs, predicted),
    }
}

/// Key rate of the configured protocol on expected statistics.
pub fn key_rate(cfg: &ExperimentConfig) -> Result<KeyRateResult> {
    let obs = expected_statistics(cfg)?;
    evaluate(cfg, cfg.delta()?, &obs, &obs)
}

/// Concentration-bound applications in one evaluation of `cfg`, the count
/// its per-application failure probability is split over.
pub fn applications(cfg: &ExperimentConfig) -> Result<usize> {
    match cfg.protocol {
        Protocol::Bb84 => Ok(BB84_APPLICATIONS),
        Protocol::LossTolerant => {
            let p = cfg.p_z_a / 2.0;
            Ok(lt_applications(&phase_error_weights(&cfg.lt_states, p, p, cfg.p_z_b)?))
        }
    }
}
