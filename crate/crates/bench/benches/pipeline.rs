use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use meshcrash::engine::{Tape, Tensor};
use meshcrash::groundtruth::{simulate, DesignSpace, OracleConfig};
use meshcrash::rollout::rollout_sample;
use meshcrash::train::loss_and_grads;
use meshcrash::{build_contacts, ContactParams, Family};
use meshcrash_bench::{samples, surrogate};

fn matmul(c: &mut Criterion) {
    let a = Tensor::filled(208, 16, 0.5);
    let b = Tensor::filled(16, 16, 0.25);
    c.bench_function("tape_matmul_208x16x16", |bch| {
        bch.iter(|| {
            let mut t = Tape::new();
            let x = t.constant(a.clone());
            let w = t.constant(b.clone());
            black_box(t.matmul(x, w).unwrap());
        })
    });
}

fn oracle(c: &mut Criterion) {
    let d = DesignSpace::default().nominal(0).unwrap();
    let cfg = OracleConfig::default();
    c.bench_function("oracle_simulate_nominal", |b| {
        b.iter(|| black_box(simulate(&d, &cfg).unwrap()))
    });
}

fn contacts(c: &mut Criterion) {
    let data = samples(1, 15);
    let s = &data[0];
    let x = &s.trajectory.states[15].positions;
    let p = ContactParams {
        radius: Some(15.0),
        k: 8,
        ..ContactParams::default()
    };
    c.bench_function("build_contacts_final_frame", |b| {
        b.iter(|| black_box(build_contacts(x, &s.graph, &p, 15).unwrap()))
    });
}

fn rollouts(c: &mut Criterion) {
    let data = samples(2, 15);
    let mut g = c.benchmark_group("rollout");
    g.sample_size(10);
    for fam in Family::ALL {
        let sur = surrogate(fam, &data);
        g.bench_with_input(BenchmarkId::from_parameter(fam.as_str()), &data[0], |b, s| {
            b.iter(|| black_box(rollout_sample(&sur, s).unwrap()))
        });
    }
    g.finish();
}

fn training_step(c: &mut Criterion) {
    let data = samples(2, 15);
    let mut g = c.benchmark_group("loss_and_grads");
    g.sample_size(10);
    for fam in [
        Family::MeshGraphNet,
        Family::MeshTransolver,
        Family::MeshTransolverContact,
        Family::MeshGeoFlare,
    ] {
        let sur = surrogate(fam, &data);
        g.bench_with_input(BenchmarkId::from_parameter(fam.as_str()), &data[0], |b, s| {
            b.iter(|| black_box(loss_and_grads(&sur, s, None).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, matmul, oracle, contacts, rollouts, training_step);
criterion_main!(benches);
