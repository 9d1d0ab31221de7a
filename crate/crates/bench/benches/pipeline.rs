use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use tsfd_bench::{fair_config, marginals, samples};
use tsfd_core::diversity::greedy_diverse_ranking;
use tsfd_core::policies::{run_method, PipelineConfig};
use tsfd_core::{decompose, solve_fair, ConcaveFn, MatcherStrategy, Method};

const SAMPLES: usize = 8;

fn bench_solve(c: &mut Criterion) {
    let problems = samples(SAMPLES);
    let config = fair_config();
    c.bench_function("solve_fair", |b| {
        b.iter(|| {
            for p in &problems {
                black_box(solve_fair(p, &config).unwrap());
            }
        })
    });
}

fn bench_decompose(c: &mut Criterion) {
    let problems = samples(SAMPLES);
    let sigmas = marginals(&problems);
    let g = ConcaveFn::shifted_log(0.0001);
    let mut group = c.benchmark_group("decompose");
    for (name, strategy) in [
        ("lsi", MatcherStrategy::LocalSearchInit),
        ("es1", MatcherStrategy::ExhaustiveSearch { level: 1 }),
        ("utility_only", MatcherStrategy::UtilityOnly),
    ] {
        group.bench_with_input(BenchmarkId::from_parameter(name), &strategy, |b, &s| {
            b.iter(|| {
                for (p, sigma) in problems.iter().zip(&sigmas) {
                    black_box(decompose(p, sigma, &g, s).unwrap());
                }
            })
        });
    }
    group.finish();
}

fn bench_greedy(c: &mut Criterion) {
    let problems = samples(SAMPLES);
    let g = ConcaveFn::shifted_log(0.0001);
    c.bench_function("greedy_diverse_ranking", |b| {
        b.iter(|| {
            for p in &problems {
                black_box(greedy_diverse_ranking(p, &g).unwrap());
            }
        })
    });
}

fn bench_pipeline(c: &mut Criterion) {
    let problems = samples(SAMPLES);
    let config = PipelineConfig::default();
    c.bench_function("tsfd_pipeline", |b| {
        b.iter(|| {
            for p in &problems {
                black_box(run_method(p, Method::Tsfd, &config).unwrap());
            }
        })
    });
}

criterion_group!(benches, bench_solve, bench_decompose, bench_greedy, bench_pipeline);
criterion_main!(benches);
