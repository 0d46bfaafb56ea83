use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use varcurv_bench::disk;
use varcurv_core::barozzi::{barozzi_curvature, lambda_sweep, solve_cp};
use varcurv_core::counterexamples::cusp2d_set;
use varcurv_core::graph_pmc::{minimize_nonparametric, GraphProblem, NodeGrid, SolverOptions};
use varcurv_core::regularity::{dyadic_radii, iterate_exponent, psi_decay_fit, ExponentParams};
use varcurv_core::{
    minimize_massari, perimeter, BinaryMask, CutProblem, GridDomain, LambdaSchedule, PerimeterWeights, ScalarField,
};

fn bench_perimeter(c: &mut Criterion) {
    let w = PerimeterWeights::n16();
    let mut g = c.benchmark_group("perimeter");
    for cells in [128, 512] {
        let set = disk(cells);
        g.bench_with_input(BenchmarkId::from_parameter(cells), &set, |b, s| {
            b.iter(|| perimeter(black_box(s), None, &w).unwrap())
        });
    }
    g.finish();
}

fn bench_massari(c: &mut Criterion) {
    let w = PerimeterWeights::n16();
    let mut g = c.benchmark_group("minimize_massari");
    g.sample_size(10);
    for cells in [64, 256] {
        let set = disk(cells);
        let dom = *set.domain();
        let free = BinaryMask::from_predicate(dom, |x| (0.1..0.9).contains(&x[0]) && (0.1..0.9).contains(&x[1]));
        let h = ScalarField::constant(dom, 1.0 / 0.3, None).unwrap();
        let p = CutProblem::new(h, set, free, w.clone()).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(cells), &p, |b, p| b.iter(|| minimize_massari(p).unwrap()));
    }
    g.finish();
}

fn bench_barozzi(c: &mut Criterion) {
    let w = PerimeterWeights::n16();
    let mut g = c.benchmark_group("barozzi");
    g.sample_size(10);
    let set = disk(128);
    let dom = *set.domain();
    let ones = ScalarField::constant(dom, 1.0, None).unwrap();
    g.bench_function("solve_cp_128", |b| b.iter(|| solve_cp(&set, &ones, 10.0, &w).unwrap()));
    let sched = LambdaSchedule::default_for(&dom).unwrap();
    g.bench_function("sweep_128", |b| {
        b.iter(|| barozzi_curvature(&lambda_sweep(&set, &ones, &sched, &w).unwrap()).unwrap())
    });
    g.finish();
}

fn bench_psi_fit(c: &mut Criterion) {
    let w = PerimeterWeights::n16();
    let dom = GridDomain::cube(2, 256, -1.0, 1.0).unwrap();
    let h = dom.spacing();
    let set = cusp2d_set(0.5, dom).unwrap();
    let radii = dyadic_radii(8.0 * h, 64.0 * h, 1).unwrap();
    let mut g = c.benchmark_group("psi_decay_fit");
    g.sample_size(10);
    g.bench_function("cusp_256", |b| b.iter(|| psi_decay_fit(&set, [0.0; 3], &radii, &w)));
    g.finish();
}

fn bench_exponent(c: &mut Criterion) {
    let p = ExponentParams::new(3, 10.0).unwrap();
    c.bench_function("iterate_exponent", |b| b.iter(|| iterate_exponent(black_box(&p)).unwrap()));
}

fn bench_graph(c: &mut Criterion) {
    let mut g = c.benchmark_group("minimize_nonparametric");
    g.sample_size(10);
    for nodes in [129, 513] {
        let grid = NodeGrid::new(1, nodes, -0.8, 0.8).unwrap();
        let p = GraphProblem::from_fn(grid, 1.0, |_, _| 1.0, |_| 0.0, None).unwrap();
        let opts = SolverOptions { starts: 1, ..Default::default() };
        g.bench_with_input(BenchmarkId::new("arc", nodes), &p, |b, p| {
            b.iter(|| minimize_nonparametric(p, &opts).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, bench_perimeter, bench_massari, bench_barozzi, bench_psi_fit, bench_exponent, bench_graph);
criterion_main!(benches);
