use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use qkd_tha::concentration::bound;
use qkd_tha::decoy_lp::{build_yield_lp, solve_lp};
use qkd_tha::intensity_attack::rate_worst_case_subintervals;
use qkd_tha::{
    expected_statistics, key_rate, BoundKind, BoundQuery, GainBounds, Leakage, OptimizerSettings, Pipeline, Protocol,
};
use qkd_tha_bench::reference_config;

fn kato(c: &mut Criterion) {
    let q = BoundQuery::new(10_000_000_000, 1e-23, 3e7).unwrap();
    c.bench_function("kato_bound", |b| b.iter(|| bound(BoundKind::CountLower, black_box(&q), black_box(3.1e7))));
}

fn decoy_lp(c: &mut Criterion) {
    let cfg = reference_config(50.0);
    let obs = expected_statistics(&cfg).unwrap();
    let n = cfg.n_total as f64;
    let g: Vec<f64> = obs.m_z_mu.iter().map(|m| m / n).collect();
    let gains = GainBounds::new(g.iter().map(|v| v * 0.999).collect(), g.iter().map(|v| v * 1.001).collect()).unwrap();
    c.bench_function("decoy_lp_build_and_solve", |b| {
        b.iter(|| solve_lp(&build_yield_lp(&cfg.source, black_box(&gains), (0.8, 0.8)).unwrap()).unwrap())
    });
}

fn key_rates(c: &mut Criterion) {
    let bb84 = reference_config(50.0);
    let mut lt = bb84.clone();
    lt.protocol = Protocol::LossTolerant;
    let mut tha = bb84.clone();
    tha.leakage = Leakage::Coherent { i_max: 1e-5 };
    c.bench_function("key_rate_bb84", |b| b.iter(|| key_rate(black_box(&bb84)).unwrap()));
    c.bench_function("key_rate_lt", |b| b.iter(|| key_rate(black_box(&lt)).unwrap()));
    c.bench_function("worst_case_n_it_16", |b| {
        b.iter(|| rate_worst_case_subintervals(black_box(&tha), 1.01, 16).unwrap())
    });
}

fn optimizer(c: &mut Criterion) {
    let cfg = reference_config(50.0);
    let settings = OptimizerSettings::default();
    let mut g = c.benchmark_group("optimizer");
    g.sample_size(10);
    g.bench_function("optimize_bb84", |b| {
        b.iter(|| qkd_tha::optimize(black_box(&cfg), Pipeline::Bb84, &settings).unwrap())
    });
    let prev = qkd_tha::optimize(&cfg, Pipeline::Bb84, &settings).unwrap();
    let mut near = cfg.clone();
    near.channel = near.channel.with_distance(55.0);
    g.bench_function("optimize_from_neighbour", |b| {
        b.iter(|| qkd_tha::optimize_from(black_box(&near), Pipeline::Bb84, &settings, &prev.params).unwrap())
    });
    g.finish();
}

criterion_group!(benches, kato, decoy_lp, key_rates, optimizer);
criterion_main!(benches);
