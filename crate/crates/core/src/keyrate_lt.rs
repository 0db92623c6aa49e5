//! Loss-tolerant three-state protocol.
//!
//! Alice sends `0_Z`, `1_Z` (each with probability `p_Z/2`) or `0_X`. In the
//! entanglement-based picture her X-basis measurement of the key ancilla
//! prepares one of two virtual single-photon states `v_j` with probability
//! `p_j^vir`, and a phase error is Bob seeing `1_X` after `v₀` or `0_X` after
//! `v₁`. Single-photon yields are linear in the Bloch vector of the sent
//! state, so each virtual yield is a signed combination of the yields of the
//! three real states, which are bounded by decoy LPs.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use crate::channel::{expected_statistics, photon_outcome_prob, Basis, ObservedStatistics, Outcome};
use crate::concentration::{BoundKind, BoundLedger};
use crate::config::{DecoyEstimation, ExperimentConfig, Protocol};
use crate::cs_bounds::{g_upper, Delta};
use crate::decoy_lp::{build_lt_yield_lp, solve_lp, Sense};
use crate::error::{domain, Error, Result};
use crate::keyrate_bb84::{
    count_gain_bounds, key_length_with_budget, m1_lower_with, p_single, KeyRateResult, LpDiagnostics,
};

/// Concentration applications outside the per-yield estimates: three pairs of
/// sum bounds on Z-basis counts plus the two count bounds on `M₁` and `M_ph,1`.
const FIXED_APPLICATIONS: usize = 8;

/// Weights below this are treated as zero when selecting yields to estimate.
const WEIGHT_TOL: f64 = 1e-12;

/// Polarization angles of the three sent states `0_Z, 1_Z, 0_X`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LtStates {
    pub angles: [f64; 3],
}

impl LtStates {
    pub fn ideal() -> Self {
        Self { angles: [0.0, FRAC_PI_2, FRAC_PI_4] }
    }
}

impl Default for LtStates {
    fn default() -> Self {
        Self::ideal()
    }
}

/// Bounds on the averaged single-photon yields `Ỹ_{a,b,1}`, indexed
/// `[a][b]` with `a ∈ {0_Z, 1_Z, 0_X}` and `b ∈ {0_X, 1_X}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LtYieldEstimate {
    pub lower: [[f64; 2]; 3],
    pub upper: [[f64; 2]; 3],
}

impl LtYieldEstimate {
    pub fn vacuous() -> Self {
        Self { lower: [[0.0; 2]; 3], upper: [[1.0; 2]; 3] }
    }

    pub fn exact(yields: [[f64; 2]; 3]) -> Self {
        Self { lower: yields, upper: yields }
    }
}

/// Signed weights `w_{a,b}` with
/// `Γ₁ = p_Z^B Σ_{a,b} w_{a,b} Ỹ_{a,b,1}` for the single-photon phase-error probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseErrorWeights {
    pub w: [[f64; 2]; 3],
    pub p_z_b: f64,
}

impl PhaseErrorWeights {
    /// `(a, b)` pairs that need a yield estimate.
    pub fn active(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for a in 0..3 {
            for b in 0..2 {
                if self.w[a][b].abs() > WEIGHT_TOL {
                    out.push((a, b));
                }
            }
        }
        out
    }
}

fn bloch(angle: f64) -> (f64, f64) {
    ((2.0 * angle).sin(), (2.0 * angle).cos())
}

/// Solves `(1, x, z) = Σ_a c_a (1, x_a, z_a)` by Cramer's rule.
fn decompose(target: (f64, f64), states: &[(f64, f64); 3]) -> Result<[f64; 3]> {
    let m = |c: usize, a: usize| match c {
        0 => 1.0,
        1 => states[a].0,
        _ => states[a].1,
    };
    let det3 = |col: &dyn Fn(usize, usize) -> f64| {
        col(0, 0) * (col(1, 1) * col(2, 2) - col(1, 2) * col(2, 1))
            - col(0, 1) * (col(1, 0) * col(2, 2) - col(1, 2) * col(2, 0))
            + col(0, 2) * (col(1, 0) * col(2, 1) - col(1, 1) * col(2, 0))
    };
    let det = det3(&m);
    if det.abs() < 1e-9 {
        return domain("the three sent states must have affinely independent Bloch vectors");
    }
    let rhs = [1.0, target.0, target.1];
    let mut c = [0.0; 3];
    for (k, ck) in c.iter_mut().enumerate() {
        let replaced = |r: usize, a: usize| if a == k { rhs[r] } else { m(r, a) };
        *ck = det3(&replaced) / det;
    }
    Ok(c)
}

/// Phase-error weights for states at `states.angles`, sent with probabilities
/// `p_{0_Z}`, `p_{1_Z}`, and Bob choosing Z with `p_z_b`.
pub fn phase_error_weights(states: &LtStates, p0z: f64, p1z: f64, p_z_b: f64) -> Result<PhaseErrorWeights> {
    if !(p0z > 0.0 && p1z > 0.0 && p0z + p1z <= 1.0 + 1e-12) || !(p_z_b > 0.0 && p_z_b <= 1.0) {
        return domain("malformed setting probabilities for the phase-error bound");
    }
    let blochs = states.angles.map(bloch);
    let (c0, s0) = (states.angles[0].cos(), states.angles[0].sin());
    let (c1, s1) = (states.angles[1].cos(), states.angles[1].sin());
    let mut w = [[0.0; 2]; 3];
    for j in 0..2 {
        let sign = if j == 0 { 1.0 } else { -1.0 };
        let v = (
            (p0z.sqrt() * c0 + sign * p1z.sqrt() * c1) / 2f64.sqrt(),
            (p0z.sqrt() * s0 + sign * p1z.sqrt() * s1) / 2f64.sqrt(),
        );
        let p_vir = v.0 * v.0 + v.1 * v.1;
        if p_vir == 0.0 {
            continue;
        }
        let target = (2.0 * v.0 * v.1 / p_vir, (v.0 * v.0 - v.1 * v.1) / p_vir);
        let c = decompose(target, &blochs)?;
        // v₀ errs on 1_X, v₁ on 0_X.
        let wrong = 1 - j;
        for a in 0..3 {
            w[a][wrong] += p_vir * c[a];
        }
    }
    Ok(PhaseErrorWeights { w, p_z_b })
}

/// Upper bound `p_Z^B Σ w_{a,b} Ỹ_{a,b,1}` using upper yield estimates for
/// positive weights and lower estimates for negative ones, clamped at zero.
pub fn lt_phase_error_bound(est: &LtYieldEstimate, weights: &PhaseErrorWeights) -> f64 {
    let mut s = 0.0;
    for a in 0..3 {
        for b in 0..2 {
            let w = weights.w[a][b];
            s += if w > 0.0 { w * est.upper[a][b] } else { w * est.lower[a][b] };
        }
    }
    (weights.p_z_b * s).max(0.0)
}

fn outcome(b: usize) -> Outcome {
    if b == 0 {
        Outcome::Zero
    } else {
        Outcome::One
    }
}

/// Single-photon yields `Ỹ_{a,b,1}` of the honest channel.
pub fn true_single_photon_yields(cfg: &ExperimentConfig) -> [[f64; 2]; 3] {
    let mut y = [[0.0; 2]; 3];
    for (a, row) in y.iter_mut().enumerate() {
        for (b, v) in row.iter_mut().enumerate() {
            *v = photon_outcome_prob(&cfg.channel, cfg.lt_states.angles[a], 1, Basis::X, outcome(b));
        }
    }
    y
}

fn setting_probs(cfg: &ExperimentConfig) -> [f64; 3] {
    [cfg.p_z_a / 2.0, cfg.p_z_a / 2.0, cfg.p_x_a()]
}

/// Number of concentration-bound applications for `weights`.
pub fn lt_applications(weights: &PhaseErrorWeights) -> usize {
    FIXED_APPLICATIONS + 6 * weights.active().len()
}

/// Loss-tolerant pipeline against given observations.
pub fn lt_evaluate(
    cfg: &ExperimentConfig,
    delta: Delta,
    obs: &ObservedStatistics,
    predicted: &ObservedStatistics,
) -> Result<KeyRateResult> {
    if cfg.n_total == 0 {
        return Ok(KeyRateResult::zero());
    }
    let n = cfg.n_total as f64;
    let probs = setting_probs(cfg);
    let weights = phase_error_weights(&cfg.lt_states, probs[0], probs[1], cfg.p_z_b)?;
    let pairs = weights.active();
    let n_app = lt_applications(&weights);
    let budget = cfg.budget.with_applications(n_app);
    let mut ledger = BoundLedger::new(cfg.n_total, budget.eps_kato, cfg.finite_size);

    let (m1, y1) = m1_lower_with(cfg, delta, obs, predicted, &mut ledger)?;

    let mut est = LtYieldEstimate::vacuous();
    for &(a, b) in &pairs {
        let counts: Vec<f64> = obs.m_abmu.iter().map(|m| m[a][b]).collect();
        let preds: Vec<f64> = predicted.m_abmu.iter().map(|m| m[a][b]).collect();
        let gains = count_gain_bounds(&counts, &preds, n, delta, &mut ledger)?;
        let sense = if weights.w[a][b] > 0.0 { Sense::Maximize } else { Sense::Minimize };
        let v = match cfg.decoy {
            DecoyEstimation::LinearProgram => {
                let lp = build_lt_yield_lp(&cfg.source, &gains, (probs[a], cfg.p_x_b()), sense)?;
                solve_lp(&lp)?.value.clamp(0.0, 1.0)
            }
            DecoyEstimation::InfiniteDecoy => true_single_photon_yields(cfg)[a][b],
        };
        match sense {
            Sense::Maximize => est.upper[a][b] = v,
            Sense::Minimize => est.lower[a][b] = v,
        }
    }

    let p1 = p_single(cfg)?;
    let x = (p1 * lt_phase_error_bound(&est, &weights)).clamp(0.0, 1.0);
    let truth = LtYieldEstimate::exact(true_single_photon_yields(cfg));
    let prediction = n * p1 * lt_phase_error_bound(&truth, &weights);
    let mph = ledger.apply(BoundKind::CountUpper, prediction, n * g_upper(delta, x)?)?;
    assert_eq!(ledger.applications(), n_app, "loss-tolerant evaluation must use its whole concentration budget");

    let mut r = key_length_with_budget(cfg, &budget, m1, mph, obs);
    r.diagnostics = Some(LpDiagnostics {
        delta: delta.value(),
        yield_lower: y1,
        phase_error_upper: x,
        bound_applications: ledger.applications(),
        budget,
    });
    Ok(r)
}

/// Full loss-tolerant pipeline on the channel model's expected statistics.
pub fn lt_rate(cfg: &ExperimentConfig) -> Result<KeyRateResult> {
    if cfg.protocol != Protocol::LossTolerant {
        return Err(Error::Config("lt_rate needs protocol = lt".into()));
    }
    let obs = expected_statistics(cfg)?;
    lt_evaluate(cfg, cfg.delta()?, &obs, &obs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{photon_error, ChannelParams};
    use crate::decoy_lp::PoissonSource;

    fn lt_cfg(distance: f64) -> ExperimentConfig {
        let ch = ChannelParams::new(7.2e-8, 0.65, 0.2, distance, 6f64.to_radians()).unwrap();
        let source = PoissonSource::new(vec![0.5, 0.15, 1e-4], vec![0.8, 0.1, 0.1], 12).unwrap();
        let mut cfg = ExperimentConfig::new(100_000_000_000, ch, source, 0.8).unwrap();
        cfg.protocol = Protocol::LossTolerant;
        cfg
    }

    #[test]
    fn ideal_weights() {
        let w = phase_error_weights(&LtStates::ideal(), 0.4, 0.4, 0.8).unwrap();
        let expect = [[0.4, 0.0], [0.4, 0.0], [-0.4, 0.4]];
        for a in 0..3 {
            for b in 0..2 {
                assert!((w.w[a][b] - expect[a][b]).abs() < 1e-12, "{a} {b}");
            }
        }
        assert_eq!(w.active().len(), 4);
        assert_eq!(lt_applications(&w), 32);
    }

    #[test]
    fn exact_yields_reproduce_phase_errors() {
        for d in [0.0, 40.0, 120.0] {
            let cfg = lt_cfg(d);
            let w = phase_error_weights(&cfg.lt_states, 0.4, 0.4, cfg.p_z_b).unwrap();
            let got = lt_phase_error_bound(&LtYieldEstimate::exact(true_single_photon_yields(&cfg)), &w);
            let want = cfg.p_z_a * cfg.p_z_b * photon_error(&cfg.channel, 1, Basis::X);
            assert!((got - want).abs() < 1e-9 * want.max(1e-300) + 1e-18, "{got} vs {want}");
        }
    }

    #[test]
    fn zero_and_widened_estimates() {
        let w = phase_error_weights(&LtStates::ideal(), 0.4, 0.4, 0.8).unwrap();
        let zero = LtYieldEstimate::exact([[0.0; 2]; 3]);
        assert_eq!(lt_phase_error_bound(&zero, &w), 0.0);
        let base = LtYieldEstimate::exact([[0.2, 0.01], [0.01, 0.2], [0.2, 0.01]]);
        let b0 = lt_phase_error_bound(&base, &w);
        for a in 0..3 {
            for b in 0..2 {
                let mut wide = base;
                wide.lower[a][b] = 0.0;
                wide.upper[a][b] = 1.0;
                assert!(lt_phase_error_bound(&wide, &w) >= b0);
            }
        }
    }

    #[test]
    fn collinear_states_are_rejected() {
        let states = LtStates { angles: [0.0, FRAC_PI_2, 0.0] };
        assert!(phase_error_weights(&states, 0.4, 0.4, 0.8).is_err());
    }

    #[test]
    fn uses_thirty_two_applications() {
        let r = lt_rate(&lt_cfg(10.0)).unwrap();
        assert!(r.l > 0);
        assert_eq!(r.diagnostics.unwrap().bound_applications, 32);
        assert!(lt_rate(&ExperimentConfig { protocol: Protocol::Bb84, ..lt_cfg(0.0) }).is_err());
    }
}
