//! Sequential against parallel execution for the data-parallel kernels.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use wgspec_core::coefficient::Coefficient;
use wgspec_core::cross_section::{solve_inhomogeneous_cs, CsOptions};
use wgspec_core::fem::{centered_square_mesh, unit_square_mesh, Order};
use wgspec_core::geometry::{build_geometry, Profile};
use wgspec_core::homogenization::{homogenize, CellOptions};
use wgspec_core::verification::{direct_tube_oracle, OracleOptions};
use wgspec_core::Execution;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn cell_problems(c: &mut Criterion) {
    let a = Coefficient::expr_y("2 + cos(2*pi*y1) + 0.5*sin(2*pi*(y1 + y2))").unwrap();
    let mut g = c.benchmark_group("cell_problems_32");
    g.sample_size(10);
    for (name, exec) in MODES {
        let opts = CellOptions { resolution: 32, exec, ..Default::default() };
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| homogenize(&a, &opts).unwrap()));
    }
    g.finish();
}

fn cross_section(c: &mut Criterion) {
    let a = Coefficient::expr_x("1 + x1^2 + x2^2").unwrap();
    let mesh = unit_square_mesh(48, Order::P2).unwrap();
    let mut g = c.benchmark_group("cross_section_48");
    g.sample_size(10);
    for (name, exec) in MODES {
        let opts = CsOptions { exec, ..Default::default() };
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| solve_inhomogeneous_cs(&mesh, &a, 2, &opts).unwrap()));
    }
    g.finish();
}

fn tube_oracle(c: &mut Criterion) {
    let geom =
        build_geometry(1.0, Profile::expr("1 + 0.5*sin(pi*s)").unwrap(), Profile::Constant(0.0), Profile::Constant(0.0), 257)
            .unwrap();
    let a = Coefficient::expr_x("1 + x1^2 + x2^2").unwrap();
    let mesh = centered_square_mesh(8, Order::P2).unwrap();
    let mut g = c.benchmark_group("tube_oracle_8x16");
    g.sample_size(10);
    for (name, exec) in MODES {
        let opts = OracleOptions { exec, ..Default::default() };
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| direct_tube_oracle(&geom, &a, 0.2, &mesh, 16, 1, &opts).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, cell_problems, cross_section, tube_oracle);
criterion_main!(benches);
