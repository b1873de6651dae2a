use std::hint::black_box;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use landmark_core::model::evaluate_objective;
use landmark_core::optimizer::{fit, grad_r, OptimizerState};
use landmark_core::synth::{plant_params, sample_graph, PlantedSpec, Structure};
use landmark_core::{AttributedGraph, Execution, Hyperparams, ModelParams};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn instance(n: usize) -> (ModelParams, AttributedGraph) {
    let mut spec = PlantedSpec::new(Structure::Comm, n, 1);
    spec.l = 20;
    spec.density = 20.0 / (n - 1) as f64;
    let m = plant_params(&spec).unwrap();
    let g = sample_graph(&m, 2, Execution::Parallel).unwrap();
    (m, g)
}

fn objective_and_gradient(c: &mut Criterion) {
    let mut group = c.benchmark_group("objective");
    for n in [2_000, 8_000] {
        let (m, g) = instance(n);
        for (name, exec) in MODES {
            let h = Hyperparams {
                execution: exec,
                ..Default::default()
            };
            group.bench_with_input(BenchmarkId::new(name, n), &n, |b, _| {
                b.iter(|| evaluate_objective(&g, black_box(&m), &h).unwrap().f)
            });
        }
    }
    group.finish();

    let mut group = c.benchmark_group("grad_r");
    let (m, g) = instance(8_000);
    for (name, exec) in MODES {
        let h = Hyperparams {
            execution: exec,
            ..Default::default()
        };
        let state = OptimizerState::new(&g, &m, exec);
        group.bench_function(name, |b| b.iter(|| grad_r(&g, black_box(&m), &h, &state).unwrap()));
    }
    group.finish();
}

fn fit_iterations(c: &mut Criterion) {
    let mut group = c.benchmark_group("fit_5_iterations");
    group.sample_size(10).measurement_time(Duration::from_secs(20));
    let (_, g) = instance(4_000);
    for (name, exec) in MODES {
        let h = Hyperparams {
            execution: exec,
            max_outer: 5,
            tol: 0.0,
            ..Default::default()
        };
        group.bench_function(name, |b| b.iter(|| fit(&g, 5, &h).unwrap().parts.f));
    }
    group.finish();
}

fn sampling(c: &mut Criterion) {
    let mut group = c.benchmark_group("sample_graph");
    group.sample_size(10);
    let (m, _) = instance(4_000);
    for (name, exec) in MODES {
        group.bench_function(name, |b| b.iter(|| sample_graph(black_box(&m), 7, exec).unwrap().n_edges()));
    }
    group.finish();
}

criterion_group!(benches, objective_and_gradient, fit_iterations, sampling);
criterion_main!(benches);
