//! Decoy-state linear programs.
//!
//! With Poissonian reference states, the averaged detection probability at
//! intensity `μ` decomposes as `Σₙ p_{n|μ} Ỹₙ`. Truncating at `n_cut` and
//! bounding the remainder by the tail mass `Λ_μ` turns bounds on the gains
//! into two-sided linear constraints on `Ỹ₀..Ỹ_{n_cut}`, from which the
//! single-photon term is bounded by linear programming.

mod simplex;

pub use simplex::{solve_lp, Constraint, LinearProgram, LpSolution, Sense};

use crate::error::{domain, Error, Result};

pub const DEFAULT_N_CUT: usize = 12;

/// A phase-randomized source emitting Poissonian pulses of intensity
/// `intensities[i]` with probability `intensity_probs[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonSource {
    pub intensities: Vec<f64>,
    pub intensity_probs: Vec<f64>,
    pub n_cut: usize,
}

impl PoissonSource {
    pub fn new(intensities: Vec<f64>, intensity_probs: Vec<f64>, n_cut: usize) -> Result<Self> {
        let s = Self { intensities, intensity_probs, n_cut };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.intensities.is_empty() || self.intensities.len() != self.intensity_probs.len() {
            return domain("intensities and their probabilities must be non-empty and of equal length");
        }
        if self.n_cut == 0 {
            return domain("n_cut must be positive");
        }
        if self.intensities.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return domain("intensities must be finite and non-negative");
        }
        if self.intensities.windows(2).any(|w| w[0] <= w[1]) {
            return domain(format!("intensities must be strictly decreasing, got {:?}", self.intensities));
        }
        if self.intensity_probs.iter().any(|p| !(*p > 0.0 && *p <= 1.0)) {
            return domain("intensity probabilities must lie in (0, 1]");
        }
        let total: f64 = self.intensity_probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return domain(format!("intensity probabilities sum to {total}, not 1"));
        }
        Ok(())
    }

    /// The same source with every intensity multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.intensities.iter().map(|m| m * factor).collect(), self.intensity_probs.clone(), self.n_cut)
    }

    pub fn len(&self) -> usize {
        self.intensities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intensities.is_empty()
    }
}

/// `p_{n|μ} = e^{−μ} μⁿ / n!`, evaluated in log space.
pub fn poisson_pnmu(mu: f64, n: usize) -> Result<f64> {
    if !(mu >= 0.0 && mu.is_finite()) {
        return domain(format!("intensity must be finite and non-negative, got {mu}"));
    }
    Ok(pnmu(mu, n))
}

fn pnmu(mu: f64, n: usize) -> f64 {
    if mu == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let nf = n as f64;
    (-mu + nf * mu.ln() - libm::lgamma(nf + 1.0)).exp()
}

/// Poisson tail `Λ_μ = 1 − Σ_{n ≤ n_cut} p_{n|μ}`, clamped to `[0, 1]`.
///
/// When the tail is the small side it is summed directly, which keeps full
/// relative precision down to subnormal values.
pub fn lambda_mu(mu: f64, n_cut: usize) -> Result<f64> {
    if !(mu >= 0.0 && mu.is_finite()) {
        return domain(format!("intensity must be finite and non-negative, got {mu}"));
    }
    if mu == 0.0 {
        return Ok(0.0);
    }
    let v = if mu < (n_cut + 1) as f64 {
        let mut term = pnmu(mu, n_cut + 1);
        let mut sum = 0.0;
        let mut k = n_cut + 1;
        while term > sum * f64::EPSILON * 0.25 && term > 0.0 {
            sum += term;
            k += 1;
            term *= mu / k as f64;
        }
        sum
    } else {
        1.0 - (0..=n_cut).map(|n| pnmu(mu, n)).sum::<f64>()
    };
    Ok(v.clamp(0.0, 1.0))
}

/// Photon-number distribution of the intensity mixture, `p_n = Σ_μ p_μ p_{n|μ}`.
pub fn p_n(source: &PoissonSource, n: usize) -> Result<f64> {
    source.validate()?;
    Ok(source.intensities.iter().zip(&source.intensity_probs).map(|(&mu, &p)| p * pnmu(mu, n)).sum())
}

/// Per-intensity bounds on the averaged joint detection (or error)
/// probability, ordered as the source's intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct GainBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl GainBounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let g = Self { lower, upper };
        g.validate()?;
        Ok(g)
    }

    /// Uninformative `[0, 1]` bounds for `k` intensities.
    pub fn vacuous(k: usize) -> Self {
        Self { lower: vec![0.0; k], upper: vec![1.0; k] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower.len() != self.upper.len() {
            return domain("gain bounds have mismatched lengths");
        }
        for (&l, &u) in self.lower.iter().zip(&self.upper) {
            if !(0.0 <= l && l <= u && u <= 1.0) {
                return domain(format!("gain bounds must satisfy 0 ≤ lower ≤ upper ≤ 1, got [{l}, {u}]"));
            }
        }
        Ok(())
    }
}

/// Relative gap below which a lower side exceeding its upper side is
/// attributed to round-off and snapped.
const SNAP_REL: f64 = 1e-12;

/// Shared builder: variables `n = 0..=n_cut`, objective on `n = 1`, one
/// two-sided row per intensity normalized by `p_μ · norm`.
fn build_decoy_lp(source: &PoissonSource, gains: &GainBounds, norm: f64, sense: Sense) -> Result<LinearProgram> {
    source.validate()?;
    gains.validate()?;
    if gains.lower.len() != source.len() {
        return Err(Error::InfeasibleConstruction(format!(
            "{} gain bounds for {} intensities",
            gains.lower.len(),
            source.len()
        )));
    }
    if !(norm > 0.0 && norm <= 1.0) {
        return domain(format!("basis probability product must lie in (0, 1], got {norm}"));
    }
    let n_vars = source.n_cut + 1;
    let mut objective = vec![0.0; n_vars];
    objective[1] = 1.0;
    let mut lp = LinearProgram::new(objective, sense);
    for (i, (&mu, &p_mu)) in source.intensities.iter().zip(&source.intensity_probs).enumerate() {
        let scale = p_mu * norm;
        let tail = lambda_mu(mu, source.n_cut)?;
        let mut lower = (gains.lower[i] / scale - tail).clamp(0.0, 1.0);
        let upper = (gains.upper[i] / scale).clamp(0.0, 1.0);
        if lower > upper {
            if lower - upper <= SNAP_REL * upper.max(f64::MIN_POSITIVE) {
                lower = upper;
            } else {
                return Err(Error::InfeasibleConstruction(format!(
                    "intensity {mu}: lower side {lower} exceeds upper side {upper}"
                )));
            }
        }
        let coefs = (0..n_vars).map(|n| pnmu(mu, n)).collect();
        lp.add_constraint(coefs, lower, upper)?;
    }
    Ok(lp)
}

/// LP minimizing the averaged single-photon yield `Ỹ₁` given bounds on the
/// Z-basis joint gains; `basis_probs = (p_Z^A, p_Z^B)`.
pub fn build_yield_lp(source: &PoissonSource, gains: &GainBounds, basis_probs: (f64, f64)) -> Result<LinearProgram> {
    build_decoy_lp(source, gains, basis_probs.0 * basis_probs.1, Sense::Minimize)
}

/// LP maximizing the averaged single-photon X-basis error term `Γ̄_{X,1}`
/// given bounds on the joint error probabilities; `basis_probs = (p_X^A, p_X^B)`.
pub fn build_error_lp(
    source: &PoissonSource,
    error_gains: &GainBounds,
    basis_probs: (f64, f64),
) -> Result<LinearProgram> {
    build_decoy_lp(source, error_gains, basis_probs.0 * basis_probs.1, Sense::Maximize)
}

/// LP bounding the single-photon yield `Ỹ_{a,b,1}` of setting `a` and
/// X-basis outcome `b`; `setting_probs = (p_a, p_X^B)`.
pub fn build_lt_yield_lp(
    source: &PoissonSource,
    gains_ab: &GainBounds,
    setting_probs: (f64, f64),
    sense: Sense,
) -> Result<LinearProgram> {
    build_decoy_lp(source, gains_ab, setting_probs.0 * setting_probs.1, sense)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn source3() -> PoissonSource {
        PoissonSource::new(vec![0.5, 0.1, 1e-4], vec![0.5, 0.25, 0.25], DEFAULT_N_CUT).unwrap()
    }

    #[test]
    fn poisson_mass_edge_cases() {
        assert_eq!(poisson_pnmu(0.0, 0).unwrap(), 1.0);
        assert_eq!(poisson_pnmu(0.0, 3).unwrap(), 0.0);
        assert!(poisson_pnmu(-0.1, 0).is_err());
        let total: f64 = (0..=200).map(|n| poisson_pnmu(0.5, n).unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!((poisson_pnmu(0.5, 1).unwrap() - 0.303_265_329_856_316_7).abs() < 1e-15);
        assert!(poisson_pnmu(30.0, 400).unwrap().is_finite());
    }

    #[test]
    fn tail_mass() {
        assert!((lambda_mu(0.3, 0).unwrap() + (-0.3f64).exp_m1()).abs() < 1e-15);
        assert_eq!(lambda_mu(0.0, 5).unwrap(), 0.0);
        // High-precision reference value.
        let v = lambda_mu(0.5, 10).unwrap();
        assert!((v - 7.740_840_739_228_249e-12).abs() < 1e-24);
        // Tail summed with explicit factorial products.
        let mut oracle = 0.0;
        for n in 11..=300u32 {
            let mut t = (-0.5f64).exp();
            for k in 1..=n {
                t *= 0.5 / k as f64;
            }
            oracle += t;
        }
        assert!(((v - oracle) / oracle).abs() < 1e-12);
        // Large intensity takes the complement branch.
        let big = lambda_mu(20.0, 5).unwrap();
        assert!(big > 0.99 && big <= 1.0);
    }

    #[test]
    fn mixture_mass() {
        let s = PoissonSource::new(vec![0.5, 0.1], vec![0.5, 0.5], 12).unwrap();
        let expected = 0.5 * (-0.5f64).exp() + 0.5 * (-0.1f64).exp();
        assert!((p_n(&s, 0).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.755_684_038_874_296_5).abs() < 1e-15);
        let total: f64 = (0..=200).map(|n| p_n(&s, n).unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-12);
        let single = PoissonSource::new(vec![0.3], vec![1.0], 12).unwrap();
        assert_eq!(p_n(&single, 2).unwrap(), poisson_pnmu(0.3, 2).unwrap());
    }

    #[test]
    fn source_validation() {
        assert!(PoissonSource::new(vec![0.1, 0.5], vec![0.5, 0.5], 12).is_err());
        assert!(PoissonSource::new(vec![0.5, 0.1], vec![0.5, 0.4], 12).is_err());
        assert!(PoissonSource::new(vec![0.5], vec![1.0], 0).is_err());
    }

    #[test]
    fn vacuous_gains_give_trivial_bounds() {
        let single = PoissonSource::new(vec![0.5], vec![1.0], 12).unwrap();
        let lp = build_yield_lp(&single, &GainBounds::vacuous(1), (1.0, 1.0)).unwrap();
        assert_eq!(solve_lp(&lp).unwrap().value, 0.0);
        let s = source3();
        for (sense, want) in [(Sense::Minimize, 0.0), (Sense::Maximize, 1.0)] {
            let lp = build_lt_yield_lp(&s, &GainBounds::vacuous(3), (0.25, 0.3), sense).unwrap();
            assert!((solve_lp(&lp).unwrap().value - want).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_error_gains_give_zero_maximum() {
        let s = PoissonSource::new(vec![0.5, 0.1, 0.0], vec![0.5, 0.25, 0.25], 12).unwrap();
        let g = GainBounds::new(vec![0.0; 3], vec![0.0; 3]).unwrap();
        let lp = build_error_lp(&s, &g, (0.3, 0.3)).unwrap();
        assert!(solve_lp(&lp).unwrap().value.abs() < 1e-15);
    }

    #[test]
    fn synthetic_yields_are_sandwiched() {
        let s = source3();
        let norm = 0.49;
        let y = |n: usize| 1.0 - 0.9f64.powi(n as i32);
        let gains: Vec<f64> = s
            .intensities
            .iter()
            .zip(&s.intensity_probs)
            .map(|(&mu, &p)| p * norm * (0..=60).map(|n| pnmu(mu, n) * y(n)).sum::<f64>())
            .collect();
        let g = GainBounds::new(gains.clone(), gains).unwrap();
        let lo = solve_lp(&build_lt_yield_lp(&s, &g, (0.7, 0.7), Sense::Minimize).unwrap()).unwrap();
        let hi = solve_lp(&build_lt_yield_lp(&s, &g, (0.7, 0.7), Sense::Maximize).unwrap()).unwrap();
        assert!(lo.value <= y(1) + 1e-12 && y(1) <= hi.value + 1e-12);
        let min = solve_lp(&build_yield_lp(&s, &g, (0.7, 0.7)).unwrap()).unwrap();
        assert_eq!(min.value, lo.value);
    }

    #[test]
    fn mismatched_gains_are_rejected() {
        assert!(build_yield_lp(&source3(), &GainBounds::vacuous(2), (0.5, 0.5)).is_err());
        assert!(GainBounds::new(vec![0.5], vec![0.4]).is_err());
    }
}
