use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use sdlab::form::{assemble_with, resolvent_solve_with, CgOptions, DiscreteField, Grid};
use sdlab::model::{parse_matrix, DensityField, DomainGeometry, MatrixField, ProblemSpec, ScalarFn};
use sdlab::par::Exec;
use sdlab::sde::{simulate_batch_with, BatchPlan, SimConfig};

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn gaussian() -> ProblemSpec {
    ProblemSpec::new(
        DomainGeometry::box_domain(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap(),
        MatrixField::Identity,
        DensityField::Gauss,
        4.0,
    )
    .unwrap()
}

fn batch(c: &mut Criterion) {
    let spec = gaussian();
    let cfg = SimConfig::new(1e-3, 0.25, 1);
    let mut g = c.benchmark_group("simulate_batch");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::new(name, 2000), |b| {
            b.iter(|| {
                simulate_batch_with(
                    black_box(&[0.5, 0.5]),
                    2000,
                    &spec,
                    &cfg,
                    &BatchPlan::default(),
                    &[],
                    exec,
                )
                .unwrap()
            })
        });
    }
    g.finish();
}

fn assembly(c: &mut Criterion) {
    let spec = ProblemSpec::new(
        DomainGeometry::box_domain(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap(),
        parse_matrix("smooth2x2:2,1.5,0.5,2", 2).unwrap(),
        DensityField::Gauss,
        4.0,
    )
    .unwrap();
    let grid = Grid::new(&spec, vec![-2.0, -2.0], vec![2.0, 2.0], 1.0 / 64.0).unwrap();
    let mut g = c.benchmark_group("assemble");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::new(name, grid.n_interior()), |b| {
            b.iter(|| assemble_with(&spec, black_box(&grid), exec).unwrap())
        });
    }
    g.finish();
}

fn resolvent(c: &mut Criterion) {
    let spec = gaussian();
    let grid = Grid::new(&spec, vec![-2.0, -2.0], vec![2.0, 2.0], 1.0 / 64.0).unwrap();
    let f = DiscreteField::sample(&grid, &ScalarFn::unit_bump(vec![0.0, 0.0], 1.0));
    let mut g = c.benchmark_group("resolvent_cg");
    g.sample_size(10);
    for (name, exec) in MODES {
        let form = assemble_with(&spec, &grid, exec).unwrap();
        let opts = CgOptions {
            tol: 1e-10,
            exec,
            ..CgOptions::default()
        };
        g.bench_function(BenchmarkId::new(name, grid.n_interior()), |b| {
            b.iter(|| resolvent_solve_with(&form, 1.0, black_box(&f), &opts, None).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, batch, assembly, resolvent);
criterion_main!(benches);
