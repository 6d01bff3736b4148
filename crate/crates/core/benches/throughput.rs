//! Sequential versus rayon execution of the data-parallel hot paths.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hypersic::adaptation::{
    generate_datasets, hypernet_adapt, joint_train, DatasetConfig, HypernetParams, TrainConfig,
};
use hypersic::channel::{BlockGenerator, Constellation, LinkConfig, SnrProfileConfig};
use hypersic::deepsic::{detect_batch, ReceiverParams};
use hypersic::harness::ComplexityLedger;
use hypersic::rng::{stream, Stream};
use hypersic::Exec;

fn link() -> LinkConfig {
    LinkConfig {
        n: 8,
        k_max: 6,
        pilot_len: 200,
        info_len: 2000,
        snr: SnrProfileConfig::constant(10.0),
        ..LinkConfig::default()
    }
}

fn execs() -> [(&'static str, Exec); 2] {
    [
        ("sequential", Exec::Sequential),
        ("parallel", Exec::Parallel),
    ]
}

fn detection(c: &mut Criterion) {
    let gen = BlockGenerator::new(link()).unwrap();
    let block = gen
        .make_block(1, 6, &mut stream(1, Stream::Block, 1))
        .unwrap();
    let params = ReceiverParams::init(8, 6, &mut stream(1, Stream::Init, 0)).unwrap();
    let bpsk = Constellation::bpsk();
    let mut group = c.benchmark_group("detect_batch");
    for (name, exec) in execs() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| detect_batch(&params, black_box(&block.info_y), 3, &bpsk, exec, 256).unwrap())
        });
    }
    group.finish();
}

fn hyper_adaptation(c: &mut Criterion) {
    let gen = BlockGenerator::new(link()).unwrap();
    let block = gen
        .make_block(1, 6, &mut stream(2, Stream::Block, 1))
        .unwrap();
    let params = HypernetParams::init(8, 6, &mut stream(2, Stream::Init, 0)).unwrap();
    c.bench_function("hypernet_adapt", |b| {
        b.iter(|| {
            hypernet_adapt(&params, black_box(&block), &mut ComplexityLedger::default()).unwrap()
        })
    });
}

fn datasets(c: &mut Criterion) {
    let cfg = DatasetConfig {
        symbols_per_k: 4_000,
        block_len: 500,
        ..DatasetConfig::default()
    };
    let mut group = c.benchmark_group("generate_datasets");
    for (name, exec) in execs() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| generate_datasets(&link(), None, black_box(&cfg), 3, exec).unwrap())
        });
    }
    group.finish();
}

fn joint_training(c: &mut Criterion) {
    let data_cfg = DatasetConfig {
        symbols_per_k: 2_000,
        block_len: 500,
        ..DatasetConfig::default()
    };
    let sets = generate_datasets(&link(), None, &data_cfg, 4, Exec::default()).unwrap();
    let train = TrainConfig {
        iterations: 5,
        ..TrainConfig::joint()
    };
    let mut group = c.benchmark_group("joint_train");
    group.sample_size(10);
    for (name, exec) in execs() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                joint_train(black_box(&sets), &Constellation::bpsk(), &train, 4, exec).unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(
    benches,
    detection,
    hyper_adaptation,
    datasets,
    joint_training
);
criterion_main!(benches);
