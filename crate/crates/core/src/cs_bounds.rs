//! Bounds from the inequality `√(p₁p₂) + √((1−p₁)(1−p₂)) ≥ δ`, which ties a
//! probability measured on the actual leaky source to the same probability
//! on a leak-free reference source.
//!
//! `g_upper(δ, p)` is the largest and `g_lower(δ, p)` the smallest `p₁`
//! compatible with a given `p₂ = p`.

use crate::error::{domain, Error, Result};

/// Arguments this close outside `[0, 1]` are treated as round-off and clamped.
const PROB_SLACK: f64 = 1e-12;

/// Lower bound on the overlap between the actual and the reference global state.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Delta(f64);

impl Delta {
    pub const ONE: Delta = Delta(1.0);

    pub fn new(value: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&value) {
            return domain(format!("delta must lie in [0, 1], got {value}"));
        }
        Ok(Delta(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

pub(crate) fn check_prob(p: f64, what: &str) -> Result<f64> {
    if !(-PROB_SLACK..=1.0 + PROB_SLACK).contains(&p) {
        return domain(format!("{what} must lie in [0, 1], got {p}"));
    }
    Ok(p.clamp(0.0, 1.0))
}

/// `g±_δ(p) = p + (1−δ²)(1−2p) ± 2δ√((1−δ²)p(1−p))`.
pub fn g_pm(delta: Delta, p: f64, sign: Sign) -> Result<f64> {
    let p = check_prob(p, "probability")?;
    Ok(g_raw(delta.0, p, sign))
}

fn g_raw(d: f64, p: f64, sign: Sign) -> f64 {
    let leak = 1.0 - d * d;
    let cross = 2.0 * d * (leak * p * (1.0 - p)).sqrt();
    let base = p + leak * (1.0 - 2.0 * p);
    match sign {
        Sign::Plus => base + cross,
        Sign::Minus => base - cross,
    }
}

/// Upper CS bound: `g⁺` below `p = δ²`, else 1.
pub fn g_upper(delta: Delta, p: f64) -> Result<f64> {
    let p = check_prob(p, "probability")?;
    let d = delta.0;
    if p < d * d {
        Ok(g_raw(d, p, Sign::Plus).clamp(0.0, 1.0))
    } else {
        Ok(1.0)
    }
}

/// Lower CS bound: `g⁻` above `p = 1 − δ²`, else 0.
pub fn g_lower(delta: Delta, p: f64) -> Result<f64> {
    let p = check_prob(p, "probability")?;
    let d = delta.0;
    if p > 1.0 - d * d {
        Ok(g_raw(d, p, Sign::Minus).clamp(0.0, 1.0))
    } else {
        Ok(0.0)
    }
}

/// Parameters of a Trojan-horse attack with coherent back-reflections of
/// intensity at most `i_max`, optionally rescaling the source intensities by
/// up to a factor `kappa`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThaModel {
    pub i_max: f64,
    pub kappa: f64,
    pub intensities: Vec<f64>,
    pub intensity_probs: Vec<f64>,
}

impl ThaModel {
    pub fn new(i_max: f64, kappa: f64, intensities: Vec<f64>, intensity_probs: Vec<f64>) -> Result<Self> {
        let m = Self { i_max, kappa, intensities, intensity_probs };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.i_max >= 0.0) || !self.i_max.is_finite() {
            return domain(format!("i_max must be non-negative, got {}", self.i_max));
        }
        if !(self.kappa >= 1.0) {
            return domain(format!("kappa must be at least 1, got {}", self.kappa));
        }
        if self.intensities.len() != self.intensity_probs.len() || self.intensities.is_empty() {
            return Err(Error::Domain(
                "intensities and intensity probabilities must be non-empty and of equal length".into(),
            ));
        }
        if self.intensities.iter().any(|&m| !(m >= 0.0)) {
            return domain("intensities must be non-negative");
        }
        let total: f64 = self.intensity_probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 || self.intensity_probs.iter().any(|&p| !(p >= 0.0)) {
            return domain(format!("intensity probabilities must sum to 1, got {total}"));
        }
        Ok(())
    }
}

/// `δ ≥ e^{−I_max/2}` for coherent back-reflections and a vacuum reference
/// leakage state.
pub fn delta_coherent_tha(model: &ThaModel) -> Result<Delta> {
    model.validate()?;
    Delta::new((-model.i_max / 2.0).exp())
}

/// `δ ≥ Σ_μ p_μ exp(−(I_max + (1 + κ − 2√κ)μ)/2)` when the attack may also
/// raise each intensity to anywhere in `[μ, κμ]`.
///
/// Every intensity in the sum is first multiplied by `intensity_scale`; a
/// sub-interval `[μ_k, κ_k μ_k]` of the full range is analysed by passing
/// `μ_k/μ` and `κ_k`. At `κ_k = 1` the result is exactly the coherent bound.
pub fn delta_intensity_tha(model: &ThaModel, intensity_scale: f64, kappa_local: f64) -> Result<Delta> {
    model.validate()?;
    if !(kappa_local >= 1.0) {
        return domain(format!("kappa must be at least 1, got {kappa_local}"));
    }
    if !(intensity_scale > 0.0) {
        return domain(format!("intensity scale must be positive, got {intensity_scale}"));
    }
    if kappa_local == 1.0 {
        return delta_coherent_tha(model);
    }
    let shift = 1.0 + kappa_local - 2.0 * kappa_local.sqrt();
    let value: f64 = model
        .intensities
        .iter()
        .zip(&model.intensity_probs)
        .map(|(&mu, &p)| p * (-(model.i_max + shift * mu * intensity_scale) / 2.0).exp())
        .sum();
    Delta::new(value.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(x: f64) -> Delta {
        Delta::new(x).unwrap()
    }

    #[test]
    fn delta_one_collapses_to_identity() {
        for sign in [Sign::Plus, Sign::Minus] {
            assert!((g_pm(Delta::ONE, 0.3, sign).unwrap() - 0.3).abs() < 1e-15);
        }
        assert!((g_upper(Delta::ONE, 0.42).unwrap() - 0.42).abs() < 1e-15);
        assert!((g_lower(Delta::ONE, 0.42).unwrap() - 0.42).abs() < 1e-15);
    }

    #[test]
    fn delta_zero_plus_is_complement() {
        assert!((g_pm(d(0.0), 0.3, Sign::Plus).unwrap() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn case_boundaries() {
        assert_eq!(g_upper(d(0.5), 0.25).unwrap(), 1.0);
        assert_eq!(g_lower(d(0.5), 0.75).unwrap(), 0.0);
    }

    #[test]
    fn rejects_out_of_range_probabilities() {
        assert!(g_upper(d(0.9), 1.1).is_err());
        assert!(g_lower(d(0.9), -0.01).is_err());
        assert!(g_pm(d(0.9), f64::NAN, Sign::Plus).is_err());
        // Round-off sized excursions are clamped.
        assert_eq!(g_lower(d(0.9), -1e-13).unwrap(), 0.0);
        assert!(Delta::new(1.5).is_err());
    }

    #[test]
    fn coherent_delta_values() {
        let model = |i| ThaModel::new(i, 1.0, vec![0.5, 0.1], vec![0.5, 0.5]).unwrap();
        assert_eq!(delta_coherent_tha(&model(0.0)).unwrap().value(), 1.0);
        assert_eq!(delta_coherent_tha(&model(1e-7)).unwrap().value(), (-5e-8f64).exp());
        let v = delta_coherent_tha(&model(1e-3)).unwrap().value();
        assert!((v - 0.999_500_124_979_169_3).abs() < 1e-15);
    }

    #[test]
    fn intensity_delta_reduces_to_coherent_at_kappa_one() {
        let model = ThaModel::new(1e-5, 1.0, vec![0.5, 0.1, 1e-4], vec![0.5, 0.25, 0.25]).unwrap();
        let a = delta_intensity_tha(&model, 1.0, 1.0).unwrap().value();
        let b = delta_coherent_tha(&model).unwrap().value();
        assert!((a - b).abs() < 1e-15);
        let free = ThaModel::new(0.0, 1.0, vec![0.5], vec![1.0]).unwrap();
        assert_eq!(delta_intensity_tha(&free, 1.0, 1.0).unwrap().value(), 1.0);
        assert!(delta_intensity_tha(&model, 1.0, 0.99).is_err());
    }

    #[test]
    fn intensity_delta_matches_high_precision_sum() {
        // Reference from a 40-digit term-by-term evaluation.
        let model = ThaModel::new(1e-5, 1.01, vec![0.5, 0.1, 1e-4], vec![0.5, 0.25, 0.25]).unwrap();
        let v = delta_intensity_tha(&model, 1.0, 1.01).unwrap().value();
        assert!((v - 0.999_991_579_309_343).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_models() {
        assert!(ThaModel::new(-1.0, 1.0, vec![0.5], vec![1.0]).is_err());
        assert!(ThaModel::new(0.0, 0.5, vec![0.5], vec![1.0]).is_err());
        assert!(ThaModel::new(0.0, 1.0, vec![0.5, 0.1], vec![0.5, 0.4]).is_err());
    }
}
