use criterion::{criterion_group, criterion_main, Criterion};
use qchaos_bench::{action, chaotic_state, grid, packet};
use qchaos_core::dynamics::Yoshida4;
use qchaos_core::qaction::BvpSolver;
use qchaos_core::schrodinger::SplitOperator;
use std::hint::black_box;

fn split_operator(c: &mut Criterion) {
    let mut g = c.benchmark_group("split_operator");
    for n in [64, 128] {
        let op = SplitOperator::new(&action(), grid(n), 1e-3).unwrap_or_else(|e| panic!("{e}"));
        let psi = packet(grid(n));
        g.bench_function(format!("{n}x{n}, 10 steps"), |b| {
            b.iter(|| op.evolve(black_box(&psi), 10).unwrap_or_else(|e| panic!("{e}")))
        });
    }
    g.finish();
}

fn bvp(c: &mut Criterion) {
    let p = action();
    let solver = BvpSolver::default();
    c.bench_function("euclidean_bvp T=4.5", |b| {
        b.iter(|| {
            solver
                .solve(&p, black_box([-1.5, 0.9]), black_box([1.2, -0.3]), 4.5)
                .unwrap_or_else(|e| panic!("{e}"))
        })
    });
}

fn yoshida(c: &mut Criterion) {
    let p = action();
    let flow = Yoshida4::new(&p, 1e-3).unwrap_or_else(|e| panic!("{e}"));
    let s0 = chaotic_state(&p);
    let mut g = c.benchmark_group("yoshida4, 1000 steps");
    g.bench_function("state", |b| {
        b.iter(|| {
            let mut s = s0;
            for _ in 0..1000 {
                flow.step(&mut s);
            }
            black_box(s)
        })
    });
    g.bench_function("state + tangent", |b| {
        b.iter(|| {
            let (mut s, mut v) = (s0, [0.5; 4]);
            for _ in 0..1000 {
                flow.step_tangent(&mut s, &mut v);
            }
            black_box((s, v))
        })
    });
    g.finish();
}

criterion_group!(benches, split_operator, bvp, yoshida);
criterion_main!(benches);
