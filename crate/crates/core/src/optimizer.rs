//! Per-distance search over the free source parameters `μ₀`, `μ₁`, `p_Z`
//! and `p_μ₀`.
//!
//! `μ₂` is held fixed, `p_μ₁ = p_μ₂ = (1 − p_μ₀)/2`, and Alice and Bob use
//! the same Z-basis probability. `μ₁` is searched as the fraction
//! `f = (μ₁ − μ₂)/(μ₀ − μ₂)` so every point of the box is a valid intensity
//! ordering. The search is a coarse grid followed by coordinate-wise
//! golden-section refinement on the unrounded key length, which keeps a
//! useful slope below the point where the floored key length hits zero.

use rayon::prelude::*;

use crate::config::{ExperimentConfig, Protocol};
use crate::decoy_lp::PoissonSource;
use crate::error::{Error, Result};
use crate::intensity_attack::{rate_round_dependent, rate_worst_case_subintervals};
use crate::keyrate_bb84::KeyRateResult;
use crate::rate::key_rate;

/// Which key-rate analysis is being optimized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pipeline {
    Bb84,
    LossTolerant,
    /// Intensity-modifying attack analysed over the full range `[μ, κμ]`,
    /// with the template's protocol.
    RoundDependent {
        kappa: f64,
    },
    /// Intensity-modifying attack, worst case over `n_it` sub-intervals.
    WorstCase {
        kappa: f64,
        n_it: usize,
    },
}

impl Pipeline {
    pub fn evaluate(&self, cfg: &ExperimentConfig) -> Result<KeyRateResult> {
        match *self {
            Pipeline::Bb84 | Pipeline::LossTolerant => key_rate(cfg),
            Pipeline::RoundDependent { kappa } => rate_round_dependent(cfg, kappa),
            Pipeline::WorstCase { kappa, n_it } => rate_worst_case_subintervals(cfg, kappa, n_it),
        }
    }

    fn protocol(&self) -> Option<Protocol> {
        match self {
            Pipeline::Bb84 => Some(Protocol::Bb84),
            Pipeline::LossTolerant => Some(Protocol::LossTolerant),
            _ => None,
        }
    }
}

/// One point of the search space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreeParams {
    pub mu0: f64,
    pub mu1: f64,
    pub p_z: f64,
    pub p_mu0: f64,
}

/// Closed ranges of the searched coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchBox {
    /// Lower end of the `μ₀` range as a multiple of `μ₂`.
    pub mu0_min_factor: f64,
    pub mu0_max: f64,
    /// Range of `(μ₁ − μ₂)/(μ₀ − μ₂)`.
    pub mu1_fraction: (f64, f64),
    pub p_z: (f64, f64),
    pub p_mu0: (f64, f64),
}

impl Default for SearchBox {
    fn default() -> Self {
        Self { mu0_min_factor: 10.0, mu0_max: 1.2, mu1_fraction: (0.02, 0.95), p_z: (0.5, 0.99), p_mu0: (0.1, 0.95) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerSettings {
    pub mu2: f64,
    pub search_box: SearchBox,
    pub grid_points: usize,
    /// Golden-section stopping width, relative to each coordinate's range.
    pub tolerance: f64,
    pub max_passes: usize,
    /// Half-width of the refinement bracket in grid steps.
    pub bracket_steps: f64,
    /// Half-width of the bracket used around a warm start, in grid steps.
    pub warm_bracket_steps: f64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            mu2: 1e-4,
            search_box: SearchBox::default(),
            grid_points: 8,
            tolerance: 1e-3,
            max_passes: 4,
            bracket_steps: 1.0,
            warm_bracket_steps: 2.0,
        }
    }
}

impl OptimizerSettings {
    pub fn validate(&self) -> Result<()> {
        let b = &self.search_box;
        let ok_pair = |(lo, hi): (f64, f64)| lo > 0.0 && lo <= hi && hi < 1.0;
        if !(self.mu2 > 0.0 && b.mu0_min_factor > 1.0 && self.mu2 * b.mu0_min_factor <= b.mu0_max) {
            return Err(Error::Config(format!(
                "invalid intensity range: mu2={}, mu0 in [{}, {}]",
                self.mu2,
                self.mu2 * b.mu0_min_factor,
                b.mu0_max
            )));
        }
        if !(ok_pair(b.mu1_fraction) && ok_pair(b.p_z) && ok_pair(b.p_mu0)) {
            return Err(Error::Config("search ranges must lie inside (0, 1)".into()));
        }
        if self.grid_points < 2 || !(self.tolerance > 0.0) || self.max_passes == 0 {
            return Err(Error::Config("optimizer needs grid_points >= 2, tolerance > 0, max_passes >= 1".into()));
        }
        Ok(())
    }

    fn ranges(&self) -> [(f64, f64); 4] {
        let b = &self.search_box;
        [(self.mu2 * b.mu0_min_factor, b.mu0_max), b.mu1_fraction, b.p_z, b.p_mu0]
    }

    fn params_at(&self, u: [f64; 4]) -> FreeParams {
        FreeParams { mu0: u[0], mu1: self.mu2 + u[1] * (u[0] - self.mu2), p_z: u[2], p_mu0: u[3] }
    }

    fn coords_of(&self, p: &FreeParams) -> [f64; 4] {
        let ranges = self.ranges();
        let raw = [p.mu0, (p.mu1 - self.mu2) / (p.mu0 - self.mu2), p.p_z, p.p_mu0];
        let mut u = [0.0; 4];
        for i in 0..4 {
            u[i] = raw[i].clamp(ranges[i].0, ranges[i].1);
        }
        u
    }
}

/// Best point found, the configuration it induces and its key rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimum {
    pub params: FreeParams,
    pub config: ExperimentConfig,
    pub result: KeyRateResult,
    /// Pipeline evaluations spent.
    pub evaluations: usize,
}

/// The template with its source and basis probabilities replaced by `p`.
pub fn apply_params(
    template: &ExperimentConfig,
    pipeline: Pipeline,
    mu2: f64,
    p: &FreeParams,
) -> Result<ExperimentConfig> {
    let mut cfg = template.clone();
    let rest = (1.0 - p.p_mu0) / 2.0;
    cfg.source = PoissonSource::new(vec![p.mu0, p.mu1, mu2], vec![p.p_mu0, rest, rest], template.source.n_cut)?;
    cfg.p_z_a = p.p_z;
    cfg.p_z_b = p.p_z;
    if let Some(protocol) = pipeline.protocol() {
        cfg.protocol = protocol;
    }
    cfg.validate()?;
    Ok(cfg)
}

struct Scored {
    u: [f64; 4],
    score: f64,
    result: KeyRateResult,
}

struct Search<'a> {
    template: &'a ExperimentConfig,
    pipeline: Pipeline,
    settings: &'a OptimizerSettings,
}

impl Search<'_> {
    fn score(&self, u: [f64; 4]) -> Result<Scored> {
        let p = self.settings.params_at(u);
        let cfg = apply_params(self.template, self.pipeline, self.settings.mu2, &p)?;
        let result = match self.pipeline.evaluate(&cfg) {
            Ok(r) => r,
            Err(Error::Infeasible | Error::InfeasibleConstruction(_)) => KeyRateResult::zero(),
            Err(e) => return Err(e),
        };
        let score = if result.raw_length.is_nan() { f64::NEG_INFINITY } else { result.raw_length };
        Ok(Scored { u, score, result })
    }

    fn grid(&self) -> Result<(Scored, usize)> {
        let n = self.settings.grid_points;
        let ranges = self.settings.ranges();
        let axis = |i: usize, j: usize| {
            let (lo, hi) = ranges[i];
            lo + (hi - lo) * j as f64 / (n - 1) as f64
        };
        let total = n.pow(4);
        let scored: Vec<Result<Scored>> = (0..total)
            .into_par_iter()
            .map(|idx| {
                let (a, b, c, d) = (idx / (n * n * n), (idx / (n * n)) % n, (idx / n) % n, idx % n);
                self.score([axis(0, a), axis(1, b), axis(2, c), axis(3, d)])
            })
            .collect();
        let mut best: Option<Scored> = None;
        for s in scored {
            let s = s?;
            if best.as_ref().is_none_or(|b| s.score > b.score) {
                best = Some(s);
            }
        }
        Ok((best.expect("grid is non-empty"), total))
    }

    /// Coordinate-wise golden section around `start`, never returning a
    /// point worse than `start`.
    fn refine(&self, start: Scored, bracket_steps: f64) -> Result<(Scored, usize)> {
        const INV_PHI: f64 = 0.618_033_988_749_894_8;
        let ranges = self.settings.ranges();
        let steps = (self.settings.grid_points - 1) as f64;
        let mut best = start;
        let mut evals = 0;
        for _ in 0..self.settings.max_passes {
            let before = best.score;
            for i in 0..4 {
                let (lo, hi) = ranges[i];
                let half = bracket_steps * (hi - lo) / steps;
                let tol = self.settings.tolerance * (hi - lo);
                let mut a = (best.u[i] - half).max(lo);
                let mut b = (best.u[i] + half).min(hi);
                let at = |t: f64| {
                    let mut u = best.u;
                    u[i] = t;
                    u
                };
                let mut c = b - INV_PHI * (b - a);
                let mut d = a + INV_PHI * (b - a);
                let mut fc = self.score(at(c))?;
                let mut fd = self.score(at(d))?;
                evals += 2;
                let mut local: Option<Scored> = None;
                while b - a > tol {
                    if fc.score > fd.score {
                        b = d;
                        d = c;
                        let old = std::mem::replace(&mut fd, fc);
                        keep_best(&mut local, old);
                        c = b - INV_PHI * (b - a);
                        fc = self.score(at(c))?;
                    } else {
                        a = c;
                        c = d;
                        let old = std::mem::replace(&mut fc, fd);
                        keep_best(&mut local, old);
                        d = a + INV_PHI * (b - a);
                        fd = self.score(at(d))?;
                    }
                    evals += 1;
                }
                keep_best(&mut local, fc);
                keep_best(&mut local, fd);
                let local = local.expect("bracket evaluated");
                if local.score > best.score {
                    best = local;
                }
            }
            let gain = best.score - before;
            if !(gain > 1e-12 * best.score.abs().max(1.0)) {
                break;
            }
        }
        Ok((best, evals))
    }

    fn finish(&self, best: Scored, evaluations: usize) -> Result<Optimum> {
        let params = self.settings.params_at(best.u);
        let config = apply_params(self.template, self.pipeline, self.settings.mu2, &params)?;
        Ok(Optimum { params, config, result: best.result, evaluations })
    }
}

fn keep_best(slot: &mut Option<Scored>, cand: Scored) {
    if slot.as_ref().is_none_or(|s| cand.score > s.score) {
        *slot = Some(cand);
    }
}

/// Grid search plus refinement from scratch.
pub fn optimize(template: &ExperimentConfig, pipeline: Pipeline, settings: &OptimizerSettings) -> Result<Optimum> {
    settings.validate()?;
    let search = Search { template, pipeline, settings };
    let (seed, n_grid) = search.grid()?;
    let (best, n_ref) = search.refine(seed, settings.bracket_steps)?;
    search.finish(best, n_grid + n_ref)
}

/// Refinement from a previous optimum, typically the neighbouring distance.
/// Falls back to [`optimize`] when the warm start yields no key.
pub fn optimize_from(
    template: &ExperimentConfig,
    pipeline: Pipeline,
    settings: &OptimizerSettings,
    start: &FreeParams,
) -> Result<Optimum> {
    settings.validate()?;
    let search = Search { template, pipeline, settings };
    let seed = search.score(settings.coords_of(start))?;
    let (best, n_ref) = search.refine(seed, settings.warm_bracket_steps)?;
    if best.result.l == 0 {
        let cold = optimize(template, pipeline, settings)?;
        return Ok(Optimum { evaluations: cold.evaluations + n_ref + 1, ..cold });
    }
    search.finish(best, n_ref + 1)
}

/// Optimizes at each distance in order, warm-starting from the previous
/// distance's optimum.
pub fn sweep(
    template: &ExperimentConfig,
    pipeline: Pipeline,
    settings: &OptimizerSettings,
    distances_km: &[f64],
) -> Vec<Result<Optimum>> {
    let mut out = Vec::with_capacity(distances_km.len());
    let mut prev: Option<FreeParams> = None;
    for &d in distances_km {
        let mut cfg = template.clone();
        cfg.channel = cfg.channel.with_distance(d);
        let r = match prev {
            Some(p) => optimize_from(&cfg, pipeline, settings, &p),
            None => optimize(&cfg, pipeline, settings),
        };
        prev = match &r {
            Ok(o) if o.result.l > 0 => Some(o.params),
            _ => None,
        };
        out.push(r);
    }
    out
}

/// Largest distance in `[0, hi_km]` with a positive optimized key, located
/// by bisection to within `tol_km`. Assumes the key vanishes at most once
/// along the range. Returns `None` when even 0 km gives no key.
pub fn max_distance(
    template: &ExperimentConfig,
    pipeline: Pipeline,
    settings: &OptimizerSettings,
    hi_km: f64,
    tol_km: f64,
) -> Result<Option<f64>> {
    let at = |d: f64| {
        let mut cfg = template.clone();
        cfg.channel = cfg.channel.with_distance(d);
        optimize(&cfg, pipeline, settings)
    };
    if at(0.0)?.result.l == 0 {
        return Ok(None);
    }
    if at(hi_km)?.result.l > 0 {
        return Ok(Some(hi_km));
    }
    let (mut lo, mut hi) = (0.0, hi_km);
    while hi - lo > tol_km {
        let mid = 0.5 * (lo + hi);
        if at(mid)?.result.l > 0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(lo))
}
