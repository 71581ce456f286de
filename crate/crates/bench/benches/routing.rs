use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use incfl::ina::aggregate_routed;
use incfl::router::{brute_force_optimal, randomized_round, solve_lp};
use incfl::{AggregationMode, Assignment, Protocol};
use incfl_bench::{grid_topology, packets, small_topology, MODEL_BITS};

fn relaxation(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_lp");
    group.sample_size(20);
    for k in [1000, 5000] {
        let topo = grid_topology(k);
        let users: Vec<usize> = (0..k).collect();
        group.bench_with_input(BenchmarkId::from_parameter(k), &k, |b, _| {
            b.iter(|| solve_lp(&topo, &users, MODEL_BITS, Protocol::Inc).unwrap())
        });
    }
    group.finish();
}

fn rounding(c: &mut Criterion) {
    let topo = grid_topology(5000);
    let users: Vec<usize> = (0..5000).collect();
    let lp = solve_lp(&topo, &users, MODEL_BITS, Protocol::Inc).unwrap();
    let mut seed = 0u64;
    c.bench_function("randomized_round/5000", |b| {
        b.iter(|| {
            seed += 1;
            randomized_round(&lp.assignment, seed).unwrap()
        })
    });
}

fn exhaustive(c: &mut Criterion) {
    let topo = small_topology();
    let users: Vec<usize> = (0..8).collect();
    c.bench_function("brute_force/8", |b| {
        b.iter(|| brute_force_optimal(&topo, &users, MODEL_BITS, Protocol::Inc).unwrap())
    });
}

fn aggregation(c: &mut Criterion) {
    let k = 1000;
    let d = 1024;
    let pkts = packets(k, d);
    let prev = vec![0.0; d];
    let assignment = Assignment::from_nodes((0..k).map(|u| u % 10).collect());
    let parts: Vec<usize> = (0..k).map(|u| usize::from(u % 4 == 0)).collect();
    c.bench_function("aggregate_routed/1000x1024", |b| {
        b.iter(|| {
            aggregate_routed(
                &prev,
                &pkts,
                &assignment,
                &parts,
                10,
                AggregationMode::Primal,
            )
            .unwrap()
        })
    });
}

criterion_group!(benches, relaxation, rounding, exhaustive, aggregation);
criterion_main!(benches);
