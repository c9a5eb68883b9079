use criterion::{black_box, criterion_group, criterion_main, Criterion};
use heatlab_core::solver::step_solve;
use heatlab_core::{BoxDomain, GridSpec, InitData, Measure, Potential, StepOptions};

fn bench_step_solve_1d(c: &mut Criterion) {
    let grid =
        GridSpec::new(BoxDomain::centered_cube(1, 8.0), 1.0 / 16.0, 0.01, 1.0, 0.75).unwrap();
    let mu = Measure::dirac(vec![0.0], 1.0).unwrap();
    let v = Potential::time_power(1, 1.0, 0.5);
    c.bench_function("step_solve 1-d dirac t in [0.01, 1]", |b| {
        b.iter(|| {
            black_box(
                step_solve(&v, &grid, InitData::Measure(&mu), 0.01, 1.0, &StepOptions::default())
                    .unwrap(),
            )
        })
    });
}

fn bench_step_solve_2d(c: &mut Criterion) {
    let grid =
        GridSpec::new(BoxDomain::centered_cube(2, 4.0), 1.0 / 8.0, 0.05, 0.5, 0.75).unwrap();
    let mu = Measure::dirac(vec![0.0, 0.0], 1.0).unwrap();
    let v = Potential::time_power(2, 1.0, 0.5);
    c.bench_function("step_solve 2-d dirac t in [0.05, 0.5]", |b| {
        b.iter(|| {
            black_box(
                step_solve(&v, &grid, InitData::Measure(&mu), 0.05, 0.5, &StepOptions::default())
                    .unwrap(),
            )
        })
    });
}

criterion_group!(benches, bench_step_solve_1d, bench_step_solve_2d);
criterion_main!(benches);
