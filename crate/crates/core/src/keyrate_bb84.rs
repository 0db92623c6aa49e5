//! Finite-key BB84 pipeline: decoy-state bounds on the single-photon
//! Z-basis detections `M₁` and phase errors `M_ph,1`, then the secret key
//! length.

use crate::channel::{expected_statistics, photon_error, photon_yield, ObservedStatistics};
use crate::concentration::{BoundKind, BoundLedger};
use crate::config::{DecoyEstimation, EpsilonBudget, ExperimentConfig, Protocol, BB84_APPLICATIONS};
use crate::cs_bounds::{check_prob, g_lower, g_upper, Delta};
use crate::decoy_lp::{build_error_lp, build_yield_lp, p_n, solve_lp, GainBounds};
use crate::error::{Error, Result};

/// `h(x) = −x log₂x − (1 − x) log₂(1 − x)`, with `h(0) = h(1) = 0`.
pub fn binary_entropy(x: f64) -> Result<f64> {
    let x = check_prob(x, "entropy argument")?;
    if x == 0.0 || x == 1.0 {
        return Ok(0.0);
    }
    Ok(-x * x.log2() - (1.0 - x) * (1.0 - x).log2())
}

/// Intermediate values of one pipeline evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct LpDiagnostics {
    /// `δ` used by the CS bounds.
    pub delta: f64,
    /// Lower bound on the averaged single-photon Z-basis yield.
    pub yield_lower: f64,
    /// Upper bound on the averaged single-photon phase-error probability,
    /// already weighted by the basis and photon-number probabilities.
    pub phase_error_upper: f64,
    pub bound_applications: usize,
    pub budget: EpsilonBudget,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeyRateResult {
    /// Secret key length in bits.
    pub l: u64,
    pub rate: f64,
    pub m1_lower: f64,
    pub mph1_upper: f64,
    pub eph_upper: f64,
    /// Key-length expression before flooring and clamping; negative when no
    /// key can be extracted.
    pub raw_length: f64,
    pub diagnostics: Option<LpDiagnostics>,
}

impl KeyRateResult {
    pub fn zero() -> Self {
        Self {
            l: 0,
            rate: 0.0,
            m1_lower: 0.0,
            mph1_upper: 0.0,
            eph_upper: 1.0,
            raw_length: f64::NEG_INFINITY,
            diagnostics: None,
        }
    }
}

/// Probability that a pulse carries exactly one photon.
pub(crate) fn p_single(cfg: &ExperimentConfig) -> Result<f64> {
    p_n(&cfg.source, 1)
}

/// Sum bounds on observed counts followed by the CS bounds, per intensity.
pub(crate) fn count_gain_bounds(
    counts: &[f64],
    predictions: &[f64],
    n: f64,
    delta: Delta,
    ledger: &mut BoundLedger,
) -> Result<GainBounds> {
    let mut lower = Vec::with_capacity(counts.len());
    let mut upper = Vec::with_capacity(counts.len());
    for (&count, &pred) in counts.iter().zip(predictions) {
        let lo = ledger.apply(BoundKind::SumLower, pred, count)? / n;
        let hi = ledger.apply(BoundKind::SumUpper, pred, count)? / n;
        lower.push(g_lower(delta, lo)?);
        upper.push(g_upper(delta, hi)?);
    }
    GainBounds::new(lower, upper)
}

/// Lower bound on `M₁` and the LP value it came from.
pub(crate) fn m1_lower_with(
    cfg: &ExperimentConfig,
    delta: Delta,
    obs: &ObservedStatistics,
    predicted: &ObservedStatistics,
    ledger: &mut BoundLedger,
) -> Result<(f64, f64)> {
    let n = cfg.n_total as f64;
    let gains = count_gain_bounds(&obs.m_z_mu, &predicted.m_z_mu, n, delta, ledger)?;
    let y1 = match cfg.decoy {
        DecoyEstimation::LinearProgram => {
            let lp = build_yield_lp(&cfg.source, &gains, (cfg.p_z_a, cfg.p_z_b))?;
            solve_lp(&lp)?.value.clamp(0.0, 1.0)
        }
        DecoyEstimation::InfiniteDecoy => photon_yield(&cfg.channel, 1),
    };
    let basis = cfg.p_z_a * cfg.p_z_b;
    let p1 = p_single(cfg)?;
    let x = (p1 * basis * y1).clamp(0.0, 1.0);
    let prediction = n * p1 * basis * photon_yield(&cfg.channel, 1);
    let m1 = ledger.apply(BoundKind::CountLower, prediction, n * g_lower(delta, x)?)?;
    Ok((m1, y1))
}

/// Upper bound on the BB84 `M_ph,1` and the phase-error probability bound.
fn mph1_upper_with(
    cfg: &ExperimentConfig,
    delta: Delta,
    obs: &ObservedStatistics,
    predicted: &ObservedStatistics,
    ledger: &mut BoundLedger,
) -> Result<(f64, f64)> {
    let n = cfg.n_total as f64;
    let gains = count_gain_bounds(&obs.e_x_mu, &predicted.e_x_mu, n, delta, ledger)?;
    let gamma_x1 = match cfg.decoy {
        DecoyEstimation::LinearProgram => {
            let lp = build_error_lp(&cfg.source, &gains, (cfg.p_x_a(), cfg.p_x_b()))?;
            solve_lp(&lp)?.value.clamp(0.0, 1.0)
        }
        DecoyEstimation::InfiniteDecoy => photon_error(&cfg.channel, 1, crate::channel::Basis::X),
    };
    let p1 = p_single(cfg)?;
    // Phase errors of Z-basis single photons follow from X-basis errors by
    // symmetry of the four states, rescaled to Z-basis selection probabilities.
    let z_basis = cfg.p_z_a * cfg.p_z_b;
    let x = (p1 * z_basis * gamma_x1).clamp(0.0, 1.0);
    let prediction = n * p1 * z_basis * photon_error(&cfg.channel, 1, crate::channel::Basis::X);
    let mph = ledger.apply(BoundKind::CountUpper, prediction, n * g_upper(delta, x)?)?;
    Ok((mph, x))
}

fn ledger_for(cfg: &ExperimentConfig, budget: &EpsilonBudget) -> BoundLedger {
    BoundLedger::new(cfg.n_total, budget.eps_kato, cfg.finite_size)
}

/// `M₁^{Z,L}` for the configured `δ`, with its own concentration ledger.
pub fn estimate_m1_lower(cfg: &ExperimentConfig, obs: &ObservedStatistics) -> Result<f64> {
    if cfg.n_total == 0 {
        return Ok(0.0);
    }
    let predicted = expected_statistics(cfg)?;
    let budget = cfg.budget.with_applications(BB84_APPLICATIONS);
    let mut ledger = ledger_for(cfg, &budget);
    Ok(m1_lower_with(cfg, cfg.delta()?, obs, &predicted, &mut ledger)?.0)
}

/// `M_ph,1^U` for the configured `δ`, with its own concentration ledger.
pub fn estimate_mph1_upper(cfg: &ExperimentConfig, obs: &ObservedStatistics) -> Result<f64> {
    if cfg.n_total == 0 {
        return Ok(0.0);
    }
    let predicted = expected_statistics(cfg)?;
    let budget = cfg.budget.with_applications(BB84_APPLICATIONS);
    let mut ledger = ledger_for(cfg, &budget);
    Ok(mph1_upper_with(cfg, cfg.delta()?, obs, &predicted, &mut ledger)?.0)
}

/// Key length
/// `l = M₁(1 − h(e_ph)) − λ_EC − log₂(1/ε_c) − 2 log₂(1/ε₂) − 1 − log₂(1/(4ε_PA))`
/// with `λ_EC = M_Z f_e h(e_Z)`, floored to an integer and clamped at zero.
pub fn key_length(cfg: &ExperimentConfig, m1_lower: f64, mph1_upper: f64, obs: &ObservedStatistics) -> KeyRateResult {
    key_length_with_budget(cfg, &cfg.budget, m1_lower, mph1_upper, obs)
}

pub(crate) fn key_length_with_budget(
    cfg: &ExperimentConfig,
    budget: &EpsilonBudget,
    m1_lower: f64,
    mph1_upper: f64,
    obs: &ObservedStatistics,
) -> KeyRateResult {
    if cfg.n_total == 0 {
        return KeyRateResult::zero();
    }
    let m1_lower = m1_lower.max(0.0);
    let mph1_upper = mph1_upper.max(0.0);
    let eph = if m1_lower > 0.0 { (mph1_upper / m1_lower).clamp(0.0, 1.0) } else { 1.0 };
    let h_ph = binary_entropy(eph.min(0.5)).unwrap_or(1.0);
    let h_z = binary_entropy(obs.e_z_rate.clamp(0.0, 1.0)).unwrap_or(1.0);
    let lambda_ec = obs.m_z * cfg.f_e * h_z;
    let l = m1_lower * (1.0 - h_ph)
        - lambda_ec
        - (1.0 / budget.eps_c).log2()
        - 2.0 * (1.0 / budget.eps_2).log2()
        - 1.0
        - (1.0 / (4.0 * budget.eps_pa)).log2();
    let raw_length = l;
    let l = if l > 0.0 { l.floor() as u64 } else { 0 };
    KeyRateResult {
        l,
        raw_length,
        rate: l as f64 / cfg.n_total as f64,
        m1_lower,
        mph1_upper,
        eph_upper: eph,
        diagnostics: None,
    }
}

/// BB84 pipeline against given observations. `predicted` supplies the
/// pre-run expectations that tune the concentration bounds.
pub fn bb84_evaluate(
    cfg: &ExperimentConfig,
    delta: Delta,
    obs: &ObservedStatistics,
    predicted: &ObservedStatistics,
) -> Result<KeyRateResult> {
    if cfg.n_total == 0 {
        return Ok(KeyRateResult::zero());
    }
    let budget = cfg.budget.with_applications(BB84_APPLICATIONS);
    let mut ledger = ledger_for(cfg, &budget);
    let (m1, y1) = m1_lower_with(cfg, delta, obs, predicted, &mut ledger)?;
    let (mph, ph) = mph1_upper_with(cfg, delta, obs, predicted, &mut ledger)?;
    assert_eq!(ledger.applications(), BB84_APPLICATIONS, "BB84 evaluation must use its whole concentration budget");
    let mut r = key_length_with_budget(cfg, &budget, m1, mph, obs);
    r.diagnostics = Some(LpDiagnostics {
        delta: delta.value(),
        yield_lower: y1,
        phase_error_upper: ph,
        bound_applications: ledger.applications(),
        budget,
    });
    Ok(r)
}

/// Full BB84 pipeline on the channel model's expected statistics.
pub fn bb84_rate(cfg: &ExperimentConfig) -> Result<KeyRateResult> {
    if cfg.protocol != Protocol::Bb84 {
        return Err(Error::Config("bb84_rate needs protocol = bb84".into()));
    }
    let obs = expected_statistics(cfg)?;
    bb84_evaluate(cfg, cfg.delta()?, &obs, &obs)
}
