//! Executes a [`Plan`] and writes its rows as CSV.

use std::io::Write;

use anyhow::Result;
use qkd_tha::optimizer::sweep;
use qkd_tha::{applications, Error, FreeParams, KeyRateResult};
use rayon::prelude::*;

use crate::config::{Plan, Variant};

pub const HEADER: [&str; 12] = [
    "variant",
    "distance_km",
    "rate",
    "l",
    "m1_lower",
    "mph1_upper",
    "eph_upper",
    "mu0",
    "mu1",
    "p_z",
    "p_mu0",
    "error",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub variant: String,
    pub distance_km: f64,
    pub outcome: Result<(KeyRateResult, FreeParams), Error>,
}

fn evaluate_fixed(v: &Variant, d: f64) -> Result<(KeyRateResult, FreeParams), Error> {
    let mut cfg = v.template.clone();
    cfg.channel = cfg.channel.with_distance(d);
    match v.pipeline.evaluate(&cfg) {
        Err(Error::Infeasible | Error::InfeasibleConstruction(_)) => Ok((KeyRateResult::zero(), v.fixed)),
        r => r.map(|r| (r, v.fixed)),
    }
}

/// Rows ordered by variant, then distance. Optimized variants run in
/// parallel, each sweeping its distances in order with warm starts; fixed
/// variants spread every point over the pool.
pub fn execute(plan: &Plan) -> Vec<Row> {
    let row = |v: &Variant, d: f64, outcome| Row { variant: v.label.clone(), distance_km: d, outcome };
    match &plan.optimizer {
        Some(settings) => plan
            .variants
            .par_iter()
            .map(|v| {
                sweep(&v.template, v.pipeline, settings, &plan.distances_km)
                    .into_iter()
                    .zip(&plan.distances_km)
                    .map(|(r, &d)| row(v, d, r.map(|o| (o.result, o.params))))
                    .collect::<Vec<_>>()
            })
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .collect(),
        None => plan
            .variants
            .iter()
            .flat_map(|v| plan.distances_km.iter().map(move |&d| (v, d)))
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|(v, d)| row(v, d, evaluate_fixed(v, d)))
            .collect(),
    }
}

fn sci(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_csv<W: Write>(rows: &[Row], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for r in rows {
        let mut rec = vec![r.variant.clone(), sci(r.distance_km)];
        match &r.outcome {
            Ok((k, p)) => {
                rec.extend([sci(k.rate), k.l.to_string(), sci(k.m1_lower), sci(k.mph1_upper), sci(k.eph_upper)]);
                rec.extend([sci(p.mu0), sci(p.mu1), sci(p.p_z), sci(p.p_mu0), String::new()]);
            }
            Err(e) => {
                rec.extend([sci(0.0), "0".into()]);
                rec.extend(std::iter::repeat_n(String::new(), 7));
                rec.push(e.to_string());
            }
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// One line per variant describing how `ε_s` is split.
pub fn budget_lines(plan: &Plan) -> Vec<String> {
    plan.variants
        .iter()
        .map(|v| {
            let b = &v.template.budget;
            let n = applications(&v.template).unwrap_or(b.n_applications);
            let b = b.with_applications(n);
            format!(
                "{}: eps_s={:e} eps_c={:e} eps_pa={:e} eps_2={:e} varepsilon={:e} applications={} eps_per_bound={:e}",
                v.label, b.eps_s, b.eps_c, b.eps_pa, b.eps_2, b.varepsilon, b.n_applications, b.eps_kato
            )
        })
        .collect()
}
