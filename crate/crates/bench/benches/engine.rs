//! Benchmarks for the hot paths: admittance assembly, Kron reduction,
//! the divider map, equilibrium solving, and short simulator runs.

use criterion::{criterion_group, criterion_main, Criterion};
use kronsim::network::{FullAdmittance, ReducedNetwork};
use kronsim::sim::{find_equilibrium, simulate_reduced, simulate_reference};
use kronsim::timeseries::TimeSeries;
use kronsim::xy::XYPair;
use kronsim_bench::{nine_bus, short_config};
use std::hint::black_box;

fn network_benches(c: &mut Criterion) {
    let case = nine_bus();
    c.bench_function("assemble_nine_bus", |b| {
        b.iter(|| FullAdmittance::assemble(black_box(&case)).unwrap())
    });

    let full = FullAdmittance::assemble(&case).unwrap();
    c.bench_function("kron_reduce_nine_bus", |b| {
        b.iter(|| ReducedNetwork::reduce(black_box(&full)).unwrap())
    });

    let net = ReducedNetwork::reduce(&full).unwrap();
    let e: Vec<XYPair> = (0..full.attachments().len())
        .map(|k| XYPair::new(1.0 - 0.01 * k as f64, 0.02 * k as f64))
        .collect();
    c.bench_function("terminal_voltages_nine_bus", |b| {
        b.iter(|| net.terminal_voltages(black_box(&e)).unwrap())
    });
}

fn sim_benches(c: &mut Criterion) {
    let case = nine_bus();
    c.bench_function("find_equilibrium_nine_bus", |b| {
        b.iter(|| find_equilibrium(black_box(&case)).unwrap())
    });

    // 10 ms at dt = 20 µs: 500 RK4 steps
    let cfg = short_config(&case, 0.01);
    let eq = find_equilibrium(&case).unwrap();
    c.bench_function("reduced_10ms_nine_bus", |b| {
        b.iter(|| simulate_reduced(black_box(&case), &cfg, Some(&eq.state)).unwrap())
    });
    c.bench_function("reference_10ms_nine_bus", |b| {
        b.iter(|| simulate_reference(black_box(&case), &cfg, None).unwrap())
    });
}

fn io_benches(c: &mut Criterion) {
    let case = nine_bus();
    let mut cfg = case.sim.clone();
    cfg.t_end = 0.05;
    cfg.record_stride = 5;
    let ts = simulate_reduced(&case, &cfg, None).unwrap();
    c.bench_function("csv_write_500_rows", |b| {
        b.iter(|| {
            let mut buf = Vec::with_capacity(1 << 20);
            ts.write_csv(&mut buf).unwrap();
            buf
        })
    });
    let mut buf = Vec::new();
    ts.write_csv(&mut buf).unwrap();
    c.bench_function("csv_read_500_rows", |b| {
        b.iter(|| TimeSeries::read_csv(black_box(buf.as_slice())).unwrap())
    });
}

criterion_group!(benches, network_benches, sim_benches, io_benches);
criterion_main!(benches);
