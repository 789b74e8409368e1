use besovmap::forward::{Observation, RepeatedData};
use besovmap::solver::{solve_map, SolverConfig};
use besovmap_bench::{conv_problem, synthetic_data};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn map_deconvolution(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_map");
    for n in [16, 64, 256] {
        let (params, problem) = conv_problem(n, 0.01);
        let (_, ys) = synthetic_data(&params, &problem, 4, 1);
        let obs = Observation::from_repeated_data(&problem, &RepeatedData { ys }).unwrap();
        let cfg = SolverConfig::default();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| solve_map(&obs, &params, &cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, map_deconvolution);
criterion_main!(benches);
