//! Sequential vs rayon-parallel execution of the embarrassingly parallel
//! workloads: Monte Carlo paths and ε-studies.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use robuststop::exec::Execution;
use robuststop::prelude::*;
use robuststop::verification::simulate_reward_with;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn monte_carlo(c: &mut Criterion) {
    let spec = ProblemSpec::switching_gbm(
        Generator::two_state(1.0, 1.0).unwrap(),
        vec![2.125, 0.875],
        vec![1.0, 1.0],
        5.0,
        0.1,
        1.0,
        (0.0, 6.0),
    )
    .unwrap();
    let sol = solve(&spec, &build_grid(0.0, 6.0, 0.01).unwrap(), &SolverOptions::default()).unwrap();
    let rule = classify_regions(&sol, DEFAULT_TOL_REGION);
    let mut cfg = SimConfig::new(&spec, 1.0, 0, 1);
    cfg.n_paths = 10_000;

    let mut group = c.benchmark_group("simulate_10k_paths");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| simulate_reward_with(&spec, &sol, &rule, black_box(&cfg), exec).unwrap())
        });
    }
    group.finish();
}

fn eps_study(c: &mut Criterion) {
    let fast = Generator::two_state(2.0, 2.0).unwrap();
    let slow = Generator::from_rows(&[
        vec![-1.0, 0.0, 1.0, 0.0],
        vec![0.0, -1.0, 0.0, 1.0],
        vec![1.0, 0.0, -1.0, 0.0],
        vec![0.0, 1.0, 0.0, -1.0],
    ])
    .unwrap();
    let tts = TwoTimeScaleSpec::new(vec![fast.clone(), fast], slow, 1.0).unwrap();
    let template = ProblemSpec::switching_gbm(
        assemble_generator(&tts).unwrap(),
        vec![2.5, 1.75, 1.25, 0.5],
        vec![1.0; 4],
        5.0,
        0.01,
        1.0,
        (0.0, 6.0),
    )
    .unwrap();
    let grid = build_grid(0.0, 6.0, 0.02).unwrap();
    let eps = [1.0, 0.5, 0.1, 0.05, 0.01];

    let mut group = c.benchmark_group("epsilon_study_5_values");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| epsilon_study(&template, &tts, black_box(&eps), &grid, &SolverOptions::default(), exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, monte_carlo, eps_study);
criterion_main!(benches);
