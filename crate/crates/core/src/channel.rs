//! Honest-channel model for polarization-encoded decoy-state QKD: fiber
//! loss, detector efficiency, a fixed misalignment angle and dark counts in
//! a two-detector receiver, with double clicks assigned to a random bit.
//!
//! For a pulse whose polarization makes angle `φ'` with Bob's reference
//! axis, a fraction `cos²φ'` of the detected light goes to detector 0 and
//! `sin²φ'` to detector 1. With `c_b` the probability that detector `b`
//! clicks and `Q` the probability that at least one clicks,
//!
//! ```text
//! P_b = c_b(1 − c_b̄) + c₀c₁/2 = (Q + c_b − c_b̄)/2
//! ```
//!
//! so `P₀ + P₁ = Q` holds exactly.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use rand::Rng;
use rand_distr::{Binomial, Distribution};

use crate::config::{ExperimentConfig, Protocol};
use crate::error::{domain, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    /// Dark-count probability per detector and pulse.
    pub p_d: f64,
    /// Detector efficiency.
    pub eta_d: f64,
    /// Fiber attenuation in dB/km.
    pub alpha_db: f64,
    pub distance_km: f64,
    /// Misalignment angle in radians.
    pub phi_mis: f64,
}

impl ChannelParams {
    pub fn new(p_d: f64, eta_d: f64, alpha_db: f64, distance_km: f64, phi_mis: f64) -> Result<Self> {
        let ch = Self { p_d, eta_d, alpha_db, distance_km, phi_mis };
        ch.validate()?;
        Ok(ch)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.p_d) {
            return domain(format!("p_d must lie in [0, 1), got {}", self.p_d));
        }
        if !(self.eta_d > 0.0 && self.eta_d <= 1.0) {
            return domain(format!("eta_d must lie in (0, 1], got {}", self.eta_d));
        }
        if !(self.alpha_db >= 0.0 && self.alpha_db.is_finite()) {
            return domain(format!("alpha_db must be non-negative, got {}", self.alpha_db));
        }
        if !(self.distance_km >= 0.0 && self.distance_km.is_finite()) {
            return domain(format!("distance must be non-negative, got {}", self.distance_km));
        }
        if !self.phi_mis.is_finite() {
            return domain("misalignment angle must be finite");
        }
        Ok(())
    }

    pub fn with_distance(&self, distance_km: f64) -> Self {
        Self { distance_km, ..*self }
    }

    /// Overall transmittance `η = η_D · 10^(−αL/10)`.
    pub fn eta(&self) -> f64 {
        self.eta_d * 10f64.powf(-self.alpha_db * self.distance_km / 10.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Basis {
    Z,
    X,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Zero,
    One,
}

impl Outcome {
    pub fn flip(self) -> Self {
        match self {
            Outcome::Zero => Outcome::One,
            Outcome::One => Outcome::Zero,
        }
    }
}

/// The four BB84 polarization states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Setting {
    Z0,
    Z1,
    X0,
    X1,
}

impl Setting {
    pub const ALL: [Setting; 4] = [Setting::Z0, Setting::Z1, Setting::X0, Setting::X1];

    pub fn angle(self) -> f64 {
        match self {
            Setting::Z0 => 0.0,
            Setting::Z1 => FRAC_PI_2,
            Setting::X0 => FRAC_PI_4,
            Setting::X1 => 3.0 * FRAC_PI_4,
        }
    }

    pub fn basis(self) -> Basis {
        match self {
            Setting::Z0 | Setting::Z1 => Basis::Z,
            Setting::X0 | Setting::X1 => Basis::X,
        }
    }

    pub fn bit(self) -> Outcome {
        match self {
            Setting::Z0 | Setting::X0 => Outcome::Zero,
            Setting::Z1 | Setting::X1 => Outcome::One,
        }
    }
}

fn check_mu(mu: f64) -> Result<()> {
    if !(mu >= 0.0 && mu.is_finite()) {
        return domain(format!("intensity must be finite and non-negative, got {mu}"));
    }
    Ok(())
}

/// Angle relative to Bob's measurement axis. Bob's X measurement is the Z
/// measurement rotated by `π/4` in polarization space.
fn relative_angle(ch: &ChannelParams, angle: f64, bob_basis: Basis) -> f64 {
    let a = angle + ch.phi_mis;
    match bob_basis {
        Basis::Z => a,
        Basis::X => a - FRAC_PI_4,
    }
}

/// `1 − (1 − p_d)·e^{x}`, accurate for small results.
fn click(ln_no_dark: f64, x: f64) -> f64 {
    -(ln_no_dark + x).exp_m1()
}

/// Outcome probability from the log-probabilities that no photon reaches
/// detector 0, detector 1, or either.
fn outcome_from_logs(p_d: f64, ln0: f64, ln1: f64, ln_both: f64, b: Outcome) -> f64 {
    let ln_nd = (-p_d).ln_1p();
    let q = click(2.0 * ln_nd, ln_both);
    let c0 = click(ln_nd, ln0);
    let c1 = click(ln_nd, ln1);
    let v = match b {
        Outcome::Zero => (q + c0 - c1) / 2.0,
        Outcome::One => (q + c1 - c0) / 2.0,
    };
    v.clamp(0.0, 1.0)
}

/// `Q_μ = 1 − (1 − p_d)² e^{−μη}`.
pub fn gain(ch: &ChannelParams, mu: f64) -> Result<f64> {
    check_mu(mu)?;
    Ok(click(2.0 * (-ch.p_d).ln_1p(), -mu * ch.eta()))
}

/// Probability that Bob, measuring in `bob_basis`, records outcome `b` for
/// a coherent pulse of intensity `mu` prepared at polarization `angle`.
pub fn outcome_prob_at(ch: &ChannelParams, angle: f64, mu: f64, bob_basis: Basis, b: Outcome) -> Result<f64> {
    check_mu(mu)?;
    let phi = relative_angle(ch, angle, bob_basis);
    let x = ch.eta() * mu;
    let (c2, s2) = (phi.cos().powi(2), phi.sin().powi(2));
    Ok(outcome_from_logs(ch.p_d, -x * c2, -x * s2, -x, b))
}

/// `P_{b|a,μ,β}` for one of the four BB84 settings.
pub fn outcome_prob(ch: &ChannelParams, a: Setting, mu: f64, bob_basis: Basis, b: Outcome) -> Result<f64> {
    outcome_prob_at(ch, a.angle(), mu, bob_basis, b)
}

/// Joint bit-error probability `(P_{1|0} + P_{0|1})/2` when both parties use `basis`.
pub fn error_rate(ch: &ChannelParams, mu: f64, basis: Basis) -> Result<f64> {
    let (s0, s1) = match basis {
        Basis::Z => (Setting::Z0, Setting::Z1),
        Basis::X => (Setting::X0, Setting::X1),
    };
    let e0 = outcome_prob(ch, s0, mu, basis, Outcome::One)?;
    let e1 = outcome_prob(ch, s1, mu, basis, Outcome::Zero)?;
    Ok((e0 + e1) / 2.0)
}

/// Error rate conditioned on a detection, `e_{β,μ} / Q_μ`.
pub fn qber(ch: &ChannelParams, mu: f64, basis: Basis) -> Result<f64> {
    let q = gain(ch, mu)?;
    if q == 0.0 {
        return Ok(0.0);
    }
    Ok(error_rate(ch, mu, basis)? / q)
}

/// Outcome probability for exactly `n` photons prepared at `angle`.
pub fn photon_outcome_prob(ch: &ChannelParams, angle: f64, n: usize, bob_basis: Basis, b: Outcome) -> f64 {
    let phi = relative_angle(ch, angle, bob_basis);
    let eta = ch.eta();
    let nf = n as f64;
    let (c2, s2) = (phi.cos().powi(2), phi.sin().powi(2));
    outcome_from_logs(ch.p_d, nf * (-eta * c2).ln_1p(), nf * (-eta * s2).ln_1p(), nf * (-eta).ln_1p(), b)
}

/// Detection probability given `n` photons, `1 − (1 − p_d)²(1 − η)ⁿ`.
pub fn photon_yield(ch: &ChannelParams, n: usize) -> f64 {
    click(2.0 * (-ch.p_d).ln_1p(), n as f64 * (-ch.eta()).ln_1p())
}

/// Error probability given `n` photons, averaged over the two states of `basis`.
pub fn photon_error(ch: &ChannelParams, n: usize, basis: Basis) -> f64 {
    let (s0, s1) = match basis {
        Basis::Z => (Setting::Z0, Setting::Z1),
        Basis::X => (Setting::X0, Setting::X1),
    };
    (photon_outcome_prob(ch, s0.angle(), n, basis, Outcome::One)
        + photon_outcome_prob(ch, s1.angle(), n, basis, Outcome::Zero))
        / 2.0
}

/// Detection and error counts produced by one run. Per-intensity vectors
/// follow the order of the source's intensities. Counts are real-valued in
/// expected-value mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedStatistics {
    pub n_total: u64,
    /// Z-basis detections (both parties in Z) per intensity.
    pub m_z_mu: Vec<f64>,
    /// Z-basis bit errors per intensity.
    pub e_z_mu: Vec<f64>,
    /// X-basis bit errors (both parties in X) per intensity.
    pub e_x_mu: Vec<f64>,
    /// Detections with Bob in X, indexed `[μ][a][b]` for `a ∈ {0_Z, 1_Z, 0_X}`
    /// and `b ∈ {0_X, 1_X}`.
    pub m_abmu: Vec<[[f64; 2]; 3]>,
    pub m_z: f64,
    /// Z-basis error rate `Σ_μ E_{Z,μ} / M_Z`.
    pub e_z_rate: f64,
}

impl ObservedStatistics {
    fn zeros(n_total: u64, k: usize) -> Self {
        Self {
            n_total,
            m_z_mu: vec![0.0; k],
            e_z_mu: vec![0.0; k],
            e_x_mu: vec![0.0; k],
            m_abmu: vec![[[0.0; 2]; 3]; k],
            m_z: 0.0,
            e_z_rate: 0.0,
        }
    }

    fn finish(mut self) -> Self {
        self.m_z = self.m_z_mu.iter().sum();
        let errors: f64 = self.e_z_mu.iter().sum();
        self.e_z_rate = if self.m_z > 0.0 { errors / self.m_z } else { 0.0 };
        self
    }
}

/// One state Alice may send, with its selection probability.
#[derive(Debug, Clone, Copy)]
struct SentState {
    angle: f64,
    prob: f64,
    basis: Basis,
    bit: Outcome,
    /// Row of `m_abmu` for the three loss-tolerant states.
    lt_row: Option<usize>,
}

fn sent_states(cfg: &ExperimentConfig) -> Vec<SentState> {
    let (pz, px) = (cfg.p_z_a, cfg.p_x_a());
    match cfg.protocol {
        Protocol::Bb84 => Setting::ALL
            .iter()
            .map(|&s| SentState {
                angle: s.angle(),
                prob: if s.basis() == Basis::Z { pz / 2.0 } else { px / 2.0 },
                basis: s.basis(),
                bit: s.bit(),
                lt_row: match s {
                    Setting::Z0 => Some(0),
                    Setting::Z1 => Some(1),
                    Setting::X0 => Some(2),
                    Setting::X1 => None,
                },
            })
            .collect(),
        Protocol::LossTolerant => {
            let th = cfg.lt_states.angles;
            vec![
                SentState { angle: th[0], prob: pz / 2.0, basis: Basis::Z, bit: Outcome::Zero, lt_row: Some(0) },
                SentState { angle: th[1], prob: pz / 2.0, basis: Basis::Z, bit: Outcome::One, lt_row: Some(1) },
                SentState { angle: th[2], prob: px, basis: Basis::X, bit: Outcome::Zero, lt_row: Some(2) },
            ]
        }
    }
}

/// One cell of the run's multinomial: intensity, sent state, Bob's basis and outcome.
struct Cell {
    mu_idx: usize,
    state: SentState,
    bob: Basis,
    outcome: Outcome,
    prob: f64,
}

fn cells(cfg: &ExperimentConfig) -> Result<Vec<Cell>> {
    cfg.validate()?;
    let states = sent_states(cfg);
    let mut out = Vec::new();
    for (i, (&mu, &p_mu)) in cfg.source.intensities.iter().zip(&cfg.source.intensity_probs).enumerate() {
        for st in &states {
            for (bob, p_b) in [(Basis::Z, cfg.p_z_b), (Basis::X, cfg.p_x_b())] {
                for outcome in [Outcome::Zero, Outcome::One] {
                    let p = outcome_prob_at(&cfg.channel, st.angle, mu, bob, outcome)?;
                    out.push(Cell { mu_idx: i, state: *st, bob, outcome, prob: p_mu * st.prob * p_b * p });
                }
            }
        }
    }
    Ok(out)
}

fn tally(stats: &mut ObservedStatistics, cell: &Cell, count: f64) {
    let i = cell.mu_idx;
    let st = &cell.state;
    if st.basis == Basis::Z && cell.bob == Basis::Z {
        stats.m_z_mu[i] += count;
        if cell.outcome != st.bit {
            stats.e_z_mu[i] += count;
        }
    }
    if st.basis == Basis::X && cell.bob == Basis::X && cell.outcome != st.bit {
        stats.e_x_mu[i] += count;
    }
    if let (Some(row), Basis::X) = (st.lt_row, cell.bob) {
        let col = match cell.outcome {
            Outcome::Zero => 0,
            Outcome::One => 1,
        };
        stats.m_abmu[i][row][col] += count;
    }
}

/// Expected counts: every cell contributes `N` times its probability.
pub fn expected_statistics(cfg: &ExperimentConfig) -> Result<ObservedStatistics> {
    let n = cfg.n_total as f64;
    let mut stats = ObservedStatistics::zeros(cfg.n_total, cfg.source.len());
    for cell in cells(cfg)? {
        tally(&mut stats, &cell, n * cell.prob);
    }
    Ok(stats.finish())
}

/// One multinomial draw of the run, sampled through conditional binomials.
pub fn sampled_statistics<R: Rng + ?Sized>(cfg: &ExperimentConfig, rng: &mut R) -> Result<ObservedStatistics> {
    let mut stats = ObservedStatistics::zeros(cfg.n_total, cfg.source.len());
    let mut remaining = cfg.n_total;
    let mut mass_left = 1.0f64;
    for cell in cells(cfg)? {
        if remaining == 0 {
            break;
        }
        let p = if mass_left > 0.0 { (cell.prob / mass_left).clamp(0.0, 1.0) } else { 0.0 };
        let draw = Binomial::new(remaining, p).map_err(|e| crate::error::Error::Domain(e.to_string()))?.sample(rng);
        remaining -= draw;
        mass_left -= cell.prob;
        tally(&mut stats, &cell, draw as f64);
    }
    Ok(stats.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoy_lp::PoissonSource;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn ch(p_d: f64, dist: f64, phi_deg: f64) -> ChannelParams {
        ChannelParams::new(p_d, 0.65, 0.2, dist, phi_deg.to_radians()).unwrap()
    }

    /// Outcome probability in the expanded form with an explicit double-click term.
    fn printed_form(ch: &ChannelParams, angle: f64, mu: f64, basis: Basis, b: Outcome) -> f64 {
        let phi = relative_angle(ch, angle, basis);
        let (s2, c2) = (phi.sin().powi(2), phi.cos().powi(2));
        let x = ch.eta() * mu;
        let pd = ch.p_d;
        let h = (1.0 - (-x * s2).exp()) * (1.0 - (-x * c2).exp())
            + pd * ((-x * s2).exp() + (-x * c2).exp() - 2.0 * (-x).exp())
            + pd * pd * (-x).exp();
        let other = match b {
            Outcome::Zero => s2,
            Outcome::One => c2,
        };
        (1.0 - pd) * ((-x * other).exp() - (1.0 - pd) * (-x).exp()) + h / 2.0
    }

    #[test]
    fn gain_values() {
        assert_eq!(gain(&ch(0.0, 0.0, 0.0), 0.0).unwrap(), 0.0);
        assert!((gain(&ch(0.0, 0.0, 0.0), 1e4).unwrap() - 1.0).abs() < 1e-15);
        let c = ChannelParams::new(7.2e-8, 0.1, 0.0, 0.0, 0.0).unwrap();
        let want = 1.0 - (1.0 - 7.2e-8f64).powi(2) * (-0.05f64).exp();
        assert!((gain(&c, 0.5).unwrap() - want).abs() < 1e-15);
        assert!((gain(&c, 0.5).unwrap() - 0.048_770_712_476_318_19).abs() < 1e-15);
        assert!(gain(&c, -1.0).is_err());
    }

    #[test]
    fn matches_expanded_double_click_form() {
        let c = ch(1e-3, 20.0, 6.0);
        for s in Setting::ALL {
            for basis in [Basis::Z, Basis::X] {
                for b in [Outcome::Zero, Outcome::One] {
                    let got = outcome_prob(&c, s, 0.4, basis, b).unwrap();
                    let want = printed_form(&c, s.angle(), 0.4, basis, b);
                    assert!((got - want).abs() < 1e-14, "{s:?} {basis:?} {b:?}");
                }
            }
        }
    }

    #[test]
    fn no_wrong_clicks_without_noise() {
        let c = ch(0.0, 10.0, 0.0);
        assert!(outcome_prob(&c, Setting::Z0, 0.5, Basis::Z, Outcome::One).unwrap() < 1e-16);
        assert!(outcome_prob(&c, Setting::X1, 0.5, Basis::X, Outcome::Zero).unwrap() < 1e-16);
        assert_eq!(outcome_prob(&c, Setting::Z0, 0.0, Basis::Z, Outcome::Zero).unwrap(), 0.0);
        assert_eq!(error_rate(&c, 0.5, Basis::Z).unwrap(), 0.0);
    }

    #[test]
    fn misalignment_sets_intrinsic_error() {
        let c = ch(1e-12, 0.0, 6.0);
        let e = qber(&c, 0.5, Basis::Z).unwrap();
        assert!((e - 0.01).abs() < 0.003, "{e}");
    }

    #[test]
    fn photon_number_resolved_values_average_to_coherent_ones() {
        let c = ch(7.2e-8, 30.0, 6.0);
        let mu = 0.6f64;
        let mut pmf = (-mu).exp();
        let (mut q, mut e) = (0.0, 0.0);
        for n in 0..60 {
            q += pmf * photon_yield(&c, n);
            e += pmf * photon_error(&c, n, Basis::X);
            pmf *= mu / (n + 1) as f64;
        }
        assert!((q - gain(&c, mu).unwrap()).abs() < 1e-15);
        assert!((e - error_rate(&c, mu, Basis::X).unwrap()).abs() < 1e-15);
    }

    fn cfg(n: u64) -> ExperimentConfig {
        let source = PoissonSource::new(vec![0.5, 0.1, 1e-4], vec![0.6, 0.2, 0.2], 12).unwrap();
        ExperimentConfig::new(n, ch(7.2e-8, 0.0, 6.0), source, 0.7).unwrap()
    }

    #[test]
    fn expected_counts() {
        let c = cfg(10_000_000_000);
        let s = expected_statistics(&c).unwrap();
        let want = 1e10 * 0.49 * 0.6 * gain(&c.channel, 0.5).unwrap();
        assert!(((s.m_z_mu[0] - want) / want).abs() < 1e-12);
        assert!((s.m_z - s.m_z_mu.iter().sum::<f64>()).abs() < 1e-6);
        let zero = expected_statistics(&cfg(0)).unwrap();
        assert!(zero.m_z_mu.iter().chain(&zero.e_x_mu).all(|&v| v == 0.0));
        assert_eq!(zero.m_z, 0.0);
    }

    #[test]
    fn sampled_counts_track_expectations() {
        let c = cfg(1_000_000_000);
        let exp = expected_statistics(&c).unwrap();
        let mut rng = StdRng::seed_from_u64(7);
        let s = sampled_statistics(&c, &mut rng).unwrap();
        for i in 0..3 {
            let sd = exp.m_z_mu[i].sqrt().max(1.0);
            assert!((s.m_z_mu[i] - exp.m_z_mu[i]).abs() < 6.0 * sd);
            assert_eq!(s.m_z_mu[i].fract(), 0.0);
        }
    }
}
