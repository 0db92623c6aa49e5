//! Kato-inequality bounds for sums of dependent Bernoulli random variables.
//!
//! Four directions are provided. With `Λ` the observed number of successes
//! after `N` trials and `S` the sum of the conditional success probabilities:
//!
//! ```text
//! count_lower  K̄ᴸ(S) = N/(√N+2a) · (S/√N + a − b)       ≤ Λ
//! count_upper  K̄ᵁ(S) = N/(√N−2a) · (S/√N − a + b)       ≥ Λ
//! sum_lower    Kᴸ(Λ) = Λ − [b + a(2Λ/N − 1)]√N           ≤ S
//! sum_upper    Kᵁ(Λ) = Λ + [b + a(2Λ/N − 1)]√N           ≥ S
//! ```
//!
//! each holding except with probability `ε`. The pair `(a, b)` is tuned to a
//! prediction of the bounded quantity made before the data is seen, and
//! always satisfies `b ≥ |a|` and
//!
//! ```text
//! exp[−2(b² − a²) / (1 ± 4a/(3√N))²] = ε
//! ```
//!
//! where the sign is `+` for the upper-tail inequality (`count_lower`,
//! `sum_upper`) and `−` for the lower-tail one (`count_upper`, `sum_lower`).
//! When the closed-form optimum is unusable the parameters fall back to
//! `a = 0, b = √(ln(1/ε)/2)`, which is the Hoeffding-style bound.

use crate::error::{Error, Result};

/// Relative tolerance used to accept a closed-form `(a, b)` pair.
const RESUBSTITUTION_TOL: f64 = 1e-9;

/// One concentration-bound question: `n` trials, failure probability
/// `epsilon`, and the pre-run prediction of the bounded quantity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundQuery {
    pub n: u64,
    pub epsilon: f64,
    pub prediction: f64,
}

impl BoundQuery {
    pub fn new(n: u64, epsilon: f64, prediction: f64) -> Result<Self> {
        let q = Self { n, epsilon, prediction };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidQuery("trial count must be positive".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::InvalidQuery(format!("epsilon must lie in (0, 1), got {}", self.epsilon)));
        }
        let n = self.n as f64;
        if !(self.prediction >= 0.0 && self.prediction <= n) {
            return Err(Error::InvalidQuery(format!("prediction {} outside [0, {}]", self.prediction, n)));
        }
        Ok(())
    }

    fn n_f64(&self) -> f64 {
        self.n as f64
    }
}

/// Which of the four bounds is being evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundKind {
    /// Lower bound on the observed count from the sum of probabilities.
    CountLower,
    /// Upper bound on the observed count from the sum of probabilities.
    CountUpper,
    /// Lower bound on the sum of probabilities from the observed count.
    SumLower,
    /// Upper bound on the sum of probabilities from the observed count.
    SumUpper,
}

impl BoundKind {
    pub const ALL: [BoundKind; 4] =
        [BoundKind::CountLower, BoundKind::CountUpper, BoundKind::SumLower, BoundKind::SumUpper];

    /// Sign `s` in the exponent denominator `(1 + s·4a/(3√N))²`.
    pub fn exponent_sign(self) -> f64 {
        match self {
            BoundKind::CountLower | BoundKind::SumUpper => 1.0,
            BoundKind::CountUpper | BoundKind::SumLower => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamOrigin {
    ClosedForm,
    Fallback,
}

/// Parameters of one Kato bound. `gap = b − |a|` is kept separately because
/// for predictions far below `N` the optimal `a` is large and `b − |a|` is
/// many orders of magnitude smaller than either.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KatoParams {
    pub a: f64,
    pub b: f64,
    pub gap: f64,
    pub origin: ParamOrigin,
}

impl KatoParams {
    /// The `a = 0` parameters, valid for any `N`.
    pub fn hoeffding(epsilon: f64) -> Self {
        let b = (-epsilon.ln() / 2.0).sqrt();
        Self { a: 0.0, b, gap: b, origin: ParamOrigin::Fallback }
    }

    /// `exp[−2(b² − a²)/(1 + s·4a/(3√N))²]` for the given exponent sign.
    pub fn failure_probability(&self, n: u64, sign: f64) -> f64 {
        let f = 1.0 + sign * 4.0 * self.a / (3.0 * (n as f64).sqrt());
        let b2_minus_a2 = self.gap * (2.0 * self.a.abs() + self.gap);
        (-2.0 * b2_minus_a2 / (f * f)).exp()
    }
}

/// Closed-form `a` for each direction; `None` when a radicand is negative.
fn closed_form_a(kind: BoundKind, q: &BoundQuery) -> Option<f64> {
    let n = q.n_f64();
    let sn = n.sqrt();
    let s = q.prediction;
    let l = q.epsilon.ln();
    let a = match kind {
        BoundKind::CountLower => {
            let rad = n * l * (n * l - 18.0 * s * (n - s));
            if rad < 0.0 {
                return None;
            }
            let num = -9.0 * (3.0 * n * n - 8.0 * n * s + 8.0 * s * s) * l + 9.0 * (n - 2.0 * s) * rad.sqrt()
                - 4.0 * n * l * l;
            let den = 4.0 * (36.0 * (n * n - 2.0 * n * s + 2.0 * s * s) * l + 81.0 * n * s * (n - s) + 4.0 * n * l * l);
            3.0 * sn * num / den
        }
        BoundKind::CountUpper => {
            let rad = n * l * (n * l + 18.0 * s * (s - n));
            if rad < 0.0 {
                return None;
            }
            let num = 9.0 * (3.0 * n * n - 8.0 * n * s + 8.0 * s * s) * l
                + 9.0 * (n - 2.0 * s) * rad.sqrt()
                + 4.0 * n * l * l;
            let den = 4.0 * (36.0 * l * (n * n - 2.0 * n * s + 2.0 * s * s) + 4.0 * n * l * l + 81.0 * n * s * (n - s));
            3.0 * sn * num / den
        }
        BoundKind::SumLower | BoundKind::SumUpper => {
            let var = 9.0 * s * (n - s) - 2.0 * n * l;
            let rad = -n * n * l * var;
            if rad < 0.0 {
                return None;
            }
            let lead = 72.0 * sn * s * (n - s) * l - 16.0 * n * sn * l * l;
            let lead = if kind == BoundKind::SumLower { -lead } else { lead };
            let num = 3.0 * (lead + 9.0 * std::f64::consts::SQRT_2 * (n - 2.0 * s) * rad.sqrt());
            let den = 4.0 * (9.0 * n - 8.0 * l) * var;
            num / den
        }
    };
    a.is_finite().then_some(a)
}

/// `b − |a|` from the defining equality `b² = a² + D`, `D = −ln ε · f²/2`,
/// written as `D/(|a| + √(a² + D))` to avoid cancellation.
fn gap_from_a(a: f64, n: f64, epsilon: f64, sign: f64) -> f64 {
    let f = 1.0 + sign * 4.0 * a / (3.0 * n.sqrt());
    let d = -epsilon.ln() * f * f / 2.0;
    d / (a.abs() + (a * a + d).sqrt())
}

fn usable(kind: BoundKind, p: &KatoParams, q: &BoundQuery) -> bool {
    let n = q.n_f64();
    let sn = n.sqrt();
    let sign = kind.exponent_sign();
    let f = 1.0 + sign * 4.0 * p.a / (3.0 * sn);
    if !(p.a.is_finite() && p.gap.is_finite()) || p.gap < 0.0 || f <= 0.0 {
        return false;
    }
    // Denominators of the count bounds and slopes of the sum bounds stay positive.
    let ok = match kind {
        BoundKind::CountLower | BoundKind::SumUpper => sn + 2.0 * p.a > 0.0,
        BoundKind::CountUpper | BoundKind::SumLower => sn - 2.0 * p.a > 0.0,
    };
    if !ok {
        return false;
    }
    let achieved = p.failure_probability(q.n, sign);
    ((achieved - q.epsilon) / q.epsilon).abs() <= RESUBSTITUTION_TOL
}

/// Optimal `(a, b)` for the given bound direction, falling back to `a = 0`
/// when the closed form is degenerate.
pub fn optimal_ab(kind: BoundKind, q: &BoundQuery) -> Result<KatoParams> {
    q.validate()?;
    let n = q.n_f64();
    if let Some(a) = closed_form_a(kind, q) {
        let gap = gap_from_a(a, n, q.epsilon, kind.exponent_sign());
        let p = KatoParams { a, b: a.abs() + gap, gap, origin: ParamOrigin::ClosedForm };
        if usable(kind, &p, q) {
            return Ok(p);
        }
    }
    Ok(KatoParams::hoeffding(q.epsilon))
}

pub fn optimal_ab_count_lower(q: &BoundQuery) -> Result<KatoParams> {
    optimal_ab(BoundKind::CountLower, q)
}

pub fn optimal_ab_count_upper(q: &BoundQuery) -> Result<KatoParams> {
    optimal_ab(BoundKind::CountUpper, q)
}

pub fn optimal_ab_sum_lower(q: &BoundQuery) -> Result<KatoParams> {
    optimal_ab(BoundKind::SumLower, q)
}

pub fn optimal_ab_sum_upper(q: &BoundQuery) -> Result<KatoParams> {
    optimal_ab(BoundKind::SumUpper, q)
}

/// Evaluates a bound with explicit parameters, clamped to `[0, N]`.
pub fn evaluate_with(kind: BoundKind, n: u64, p: &KatoParams, x: f64) -> f64 {
    let nf = n as f64;
    let sn = nf.sqrt();
    let a = p.a;
    // b − a and b + a(2x/N − 1), both without cancellation.
    let b_minus_a = if a >= 0.0 { p.gap } else { p.gap - 2.0 * a };
    let width = if a >= 0.0 { p.gap + 2.0 * a * x / nf } else { p.gap - 2.0 * a * (nf - x) / nf };
    let v = match kind {
        BoundKind::CountLower => nf / (sn + 2.0 * a) * (x / sn - b_minus_a),
        BoundKind::CountUpper => nf / (sn - 2.0 * a) * (x / sn + b_minus_a),
        BoundKind::SumLower => x - width * sn,
        BoundKind::SumUpper => x + width * sn,
    };
    v.clamp(0.0, nf)
}

/// Evaluates a bound with parameters tuned to `q.prediction`.
pub fn bound(kind: BoundKind, q: &BoundQuery, x: f64) -> Result<f64> {
    let nf = q.n_f64();
    if !(x >= 0.0 && x <= nf) {
        return Err(Error::InvalidQuery(format!("argument {x} outside [0, {nf}]")));
    }
    let p = optimal_ab(kind, q)?;
    Ok(evaluate_with(kind, q.n, &p, x))
}

/// `K̄ᴸ(S)`: lower bound on the observed count given the sum of probabilities `s`.
pub fn count_lower(q: &BoundQuery, s: f64) -> Result<f64> {
    bound(BoundKind::CountLower, q, s)
}

/// `K̄ᵁ(S)`: upper bound on the observed count given the sum of probabilities `s`.
pub fn count_upper(q: &BoundQuery, s: f64) -> Result<f64> {
    bound(BoundKind::CountUpper, q, s)
}

/// `Kᴸ(Λ)`: lower bound on the sum of probabilities given the observed count.
pub fn sum_lower(q: &BoundQuery, count: f64) -> Result<f64> {
    bound(BoundKind::SumLower, q, count)
}

/// `Kᵁ(Λ)`: upper bound on the sum of probabilities given the observed count.
pub fn sum_upper(q: &BoundQuery, count: f64) -> Result<f64> {
    bound(BoundKind::SumUpper, q, count)
}

/// How finite-size fluctuations are treated by the estimation pipelines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FiniteSize {
    /// Kato bounds at the configured per-application failure probability.
    #[default]
    Kato,
    /// Zero deviation: every bound returns its argument (infinite-key limit).
    Asymptotic,
}

/// Applies concentration bounds for one pipeline evaluation and counts how
/// many were used, so the epsilon budget can be checked afterwards.
#[derive(Debug, Clone)]
pub struct BoundLedger {
    n: u64,
    epsilon: f64,
    mode: FiniteSize,
    applications: usize,
}

impl BoundLedger {
    pub fn new(n: u64, epsilon: f64, mode: FiniteSize) -> Self {
        Self { n, epsilon, mode, applications: 0 }
    }

    pub fn applications(&self) -> usize {
        self.applications
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Applies one bound; `prediction` is clamped into `[0, N]`.
    pub fn apply(&mut self, kind: BoundKind, prediction: f64, x: f64) -> Result<f64> {
        self.applications += 1;
        let nf = self.n as f64;
        let x = x.clamp(0.0, nf);
        match self.mode {
            FiniteSize::Asymptotic => Ok(x),
            FiniteSize::Kato => {
                let q = BoundQuery::new(self.n, self.epsilon, prediction.clamp(0.0, nf))?;
                bound(kind, &q, x)
            }
        }
    }
}
