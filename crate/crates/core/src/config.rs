use crate::channel::ChannelParams;
use crate::concentration::FiniteSize;
use crate::cs_bounds::{delta_coherent_tha, Delta, ThaModel};
use crate::decoy_lp::PoissonSource;
use crate::error::{Error, Result};
use crate::keyrate_lt::LtStates;

/// Concentration-bound applications in one BB84 evaluation.
pub const BB84_APPLICATIONS: usize = 14;

/// Split of the secrecy parameter between privacy amplification, the chain
/// rule and phase-error estimation, plus the per-application failure
/// probability of the concentration bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonBudget {
    pub eps_s: f64,
    pub eps_c: f64,
    pub eps_2: f64,
    pub eps_pa: f64,
    /// Failure probability of the whole phase-error estimate.
    pub varepsilon: f64,
    /// Failure probability of each concentration-bound application.
    pub eps_kato: f64,
    pub n_applications: usize,
}

impl EpsilonBudget {
    /// `ε_PA = ε₂ = ε_s/3` and `ε̄ = (ε_s/6)²`, shared evenly over
    /// `n_applications` concentration bounds.
    pub fn standard(eps_s: f64, eps_c: f64, n_applications: usize) -> Result<Self> {
        if !(eps_s > 0.0 && eps_s < 1.0) || !(eps_c > 0.0 && eps_c < 1.0) {
            return Err(Error::Config(format!(
                "security parameters must lie in (0, 1), got eps_s={eps_s}, eps_c={eps_c}"
            )));
        }
        if n_applications == 0 {
            return Err(Error::Config("at least one concentration application is required".into()));
        }
        let varepsilon = (eps_s / 6.0).powi(2);
        Ok(Self {
            eps_s,
            eps_c,
            eps_2: eps_s / 3.0,
            eps_pa: eps_s / 3.0,
            varepsilon,
            eps_kato: varepsilon / n_applications as f64,
            n_applications,
        })
    }

    /// Re-splits `ε̄` over a different number of applications.
    pub fn with_applications(&self, n_applications: usize) -> Self {
        Self { eps_kato: self.varepsilon / n_applications as f64, n_applications, ..*self }
    }

    /// `ε₂ + ε_PA + 2√ε̄ − ε_s`; zero up to rounding for a consistent budget.
    pub fn composition_residual(&self) -> f64 {
        self.eps_2 + self.eps_pa + 2.0 * self.varepsilon.sqrt() - self.eps_s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Protocol {
    /// Four states, two bases, phase errors from X-basis error counts.
    Bb84,
    /// Three states `{0_Z, 1_Z, 0_X}`, phase errors from loss-tolerant yields.
    LossTolerant,
}

/// How the overlap `δ` between actual and reference states is obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Leakage {
    /// `δ` given directly.
    Overlap(Delta),
    /// Coherent Trojan-horse back-reflections of intensity at most `i_max`.
    Coherent { i_max: f64 },
}

/// Source of the single-photon quantities fed to the key-length formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DecoyEstimation {
    /// Decoy-state linear programs over the configured intensities.
    #[default]
    LinearProgram,
    /// The channel model's exact single-photon yields and errors, i.e. the
    /// limit of infinitely many decoy intensities. Concentration and CS
    /// bounds are still applied on top.
    InfiniteDecoy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n_total: u64,
    pub channel: ChannelParams,
    pub source: PoissonSource,
    pub p_z_a: f64,
    pub p_z_b: f64,
    pub protocol: Protocol,
    pub leakage: Leakage,
    /// Error-correction inefficiency.
    pub f_e: f64,
    pub budget: EpsilonBudget,
    pub finite_size: FiniteSize,
    pub decoy: DecoyEstimation,
    pub lt_states: LtStates,
}

impl ExperimentConfig {
    /// BB84 with no leakage, `f_e = 1.2`, `ε_s = ε_c = 10⁻¹⁰` and equal basis
    /// choice probabilities on both sides.
    pub fn new(n_total: u64, channel: ChannelParams, source: PoissonSource, p_z: f64) -> Result<Self> {
        let cfg = Self {
            n_total,
            channel,
            source,
            p_z_a: p_z,
            p_z_b: p_z,
            protocol: Protocol::Bb84,
            leakage: Leakage::Overlap(Delta::ONE),
            f_e: 1.2,
            budget: EpsilonBudget::standard(1e-10, 1e-10, BB84_APPLICATIONS)?,
            finite_size: FiniteSize::Kato,
            decoy: DecoyEstimation::LinearProgram,
            lt_states: LtStates::ideal(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn p_x_a(&self) -> f64 {
        1.0 - self.p_z_a
    }

    pub fn p_x_b(&self) -> f64 {
        1.0 - self.p_z_b
    }

    pub fn delta(&self) -> Result<Delta> {
        match self.leakage {
            Leakage::Overlap(d) => Ok(d),
            Leakage::Coherent { i_max } => delta_coherent_tha(&self.tha_model(i_max, 1.0)?),
        }
    }

    pub(crate) fn tha_model(&self, i_max: f64, kappa: f64) -> Result<ThaModel> {
        ThaModel::new(i_max, kappa, self.source.intensities.clone(), self.source.intensity_probs.clone())
    }

    pub fn validate(&self) -> Result<()> {
        self.channel.validate()?;
        self.source.validate()?;
        for (name, p) in [("p_z_a", self.p_z_a), ("p_z_b", self.p_z_b)] {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1), got {p}")));
            }
        }
        if !(self.f_e >= 1.0 && self.f_e.is_finite()) {
            return Err(Error::Config(format!("f_e must be at least 1, got {}", self.f_e)));
        }
        if self.source.len() < 2 {
            return Err(Error::Config("decoy estimation needs at least two intensities".into()));
        }
        self.delta()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budget_composes_to_secrecy_parameter() {
        for eps_s in [1e-10, 1e-6, 0.3] {
            let b = EpsilonBudget::standard(eps_s, 1e-10, BB84_APPLICATIONS).unwrap();
            assert!(b.composition_residual().abs() <= 1e-15);
            assert_eq!(b.eps_kato, b.varepsilon / 14.0);
            let lt = b.with_applications(32);
            assert_eq!(lt.eps_kato, b.varepsilon / 32.0);
        }
        assert!(EpsilonBudget::standard(0.0, 1e-10, 14).is_err());
        assert!(EpsilonBudget::standard(1e-10, 1e-10, 0).is_err());
    }
}
