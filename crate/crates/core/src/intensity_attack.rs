//! Trojan-horse light that also raises the source intensities to anywhere
//! in `[μ, κμ]`.
//!
//! The round-dependent analysis takes the overlap over the full range at
//! once. The sub-interval analysis splits `[μ, κμ]` into `n_it` pieces
//! `[μ_k, κ_k μ_k]` with `μ_k = μ(1 + k(κ − 1)/n_it)`; for each piece the
//! decoy analysis uses the shifted intensities and the smaller factor
//! `κ_k`, and the reported key is the smallest over pieces.

use rayon::prelude::*;

use crate::channel::expected_statistics;
use crate::config::{ExperimentConfig, Leakage};
use crate::cs_bounds::{delta_intensity_tha, Delta};
use crate::error::{domain, Error, Result};
use crate::keyrate_bb84::KeyRateResult;
use crate::rate::evaluate;

pub const DEFAULT_N_IT: usize = 16;

/// Which statistics the per-piece analysis is run against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Observations {
    /// The honest run at the nominal intensities.
    #[default]
    Nominal,
    /// A run whose intensities were actually shifted to the piece's `μ_k`.
    Resimulated,
}

fn check_kappa(kappa: f64) -> Result<()> {
    if !(kappa >= 1.0 && kappa.is_finite()) {
        return domain(format!("kappa must be at least 1, got {kappa}"));
    }
    Ok(())
}

fn i_max(cfg: &ExperimentConfig) -> Result<f64> {
    match cfg.leakage {
        Leakage::Coherent { i_max } => Ok(i_max),
        Leakage::Overlap(_) => Err(Error::Config("intensity-modulation analysis needs leakage given as i_max".into())),
    }
}

/// `μ_k / μ = 1 + k(κ − 1)/n_it`.
pub fn subinterval_scale(kappa: f64, n_it: usize, k: usize) -> f64 {
    1.0 + k as f64 * (kappa - 1.0) / n_it as f64
}

/// `κ_k = (n_it + (k + 1)(κ − 1)) / (n_it + k(κ − 1))`.
pub fn kappa_k(kappa: f64, n_it: usize, k: usize) -> f64 {
    let (n, d) = (n_it as f64, kappa - 1.0);
    (n + (k + 1) as f64 * d) / (n + k as f64 * d)
}

/// Key rate with `δ` taken over the full intensity range `[μ, κμ]`.
pub fn rate_round_dependent(cfg: &ExperimentConfig, kappa: f64) -> Result<KeyRateResult> {
    check_kappa(kappa)?;
    let model = cfg.tha_model(i_max(cfg)?, kappa)?;
    let delta = delta_intensity_tha(&model, 1.0, kappa)?;
    let obs = expected_statistics(cfg)?;
    evaluate(cfg, delta, &obs, &obs)
}

/// Worst case over `n_it` sub-intervals, against nominal observations.
pub fn rate_worst_case_subintervals(cfg: &ExperimentConfig, kappa: f64, n_it: usize) -> Result<KeyRateResult> {
    rate_worst_case_subintervals_with(cfg, kappa, n_it, Observations::Nominal)
}

pub fn rate_worst_case_subintervals_with(
    cfg: &ExperimentConfig,
    kappa: f64,
    n_it: usize,
    observations: Observations,
) -> Result<KeyRateResult> {
    check_kappa(kappa)?;
    if n_it == 0 {
        return domain("n_it must be at least 1");
    }
    let model = cfg.tha_model(i_max(cfg)?, kappa)?;
    let nominal = expected_statistics(cfg)?;
    let pieces: Vec<Result<KeyRateResult>> = (0..n_it)
        .into_par_iter()
        .map(|k| {
            let scale = subinterval_scale(kappa, n_it, k);
            let delta: Delta = delta_intensity_tha(&model, scale, kappa_k(kappa, n_it, k))?;
            let mut shifted = cfg.clone();
            shifted.source = cfg.source.scaled(scale)?;
            let outcome = match observations {
                Observations::Nominal => evaluate(&shifted, delta, &nominal, &nominal),
                Observations::Resimulated => {
                    let obs = expected_statistics(&shifted)?;
                    evaluate(&shifted, delta, &obs, &obs)
                }
            };
            match outcome {
                // Nominal statistics can contradict a shifted intensity set;
                // no key is certified for that piece.
                Err(Error::Infeasible | Error::InfeasibleConstruction(_)) => Ok(KeyRateResult::zero()),
                other => other,
            }
        })
        .collect();
    let mut worst: Option<KeyRateResult> = None;
    for r in pieces {
        let r = r?;
        if worst.as_ref().is_none_or(|w| r.l < w.l) {
            worst = Some(r);
        }
    }
    Ok(worst.expect("n_it >= 1"))
}
