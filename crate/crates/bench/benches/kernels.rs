//! Throughput of the numerical kernels: the level-set oracle, flow passes in
//! both directions, spectral normalization, curvature and a short training run.

use std::hint::black_box;

use cfbound::autodiff::{spectral_norm, Matrix};
use cfbound::training::burn_in;
use cfbound::{
    ecou_oracle, generate, rng, Arm, DatasetSpec, DatasetTag, Flow, FlowConfig, InverseConfig,
    OracleConfig, Preset, Scm2D, TrainConfig,
};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn oracle(c: &mut Criterion) {
    let mut g = c.benchmark_group("oracle_ecou");
    g.sample_size(20);
    for (name, scm) in [("m1", Scm2D::m1()), ("m2", Scm2D::m2())] {
        for res in [128, 512] {
            let cfg = OracleConfig {
                grid_resolution: res,
                ..OracleConfig::default()
            };
            g.bench_with_input(BenchmarkId::new(name, res), &cfg, |b, cfg| {
                b.iter(|| {
                    ecou_oracle(&scm, Arm::Control, black_box(0.0), Arm::Treated, cfg).unwrap()
                })
            });
        }
    }
    g.finish();
}

fn flow(c: &mut Criterion) {
    let cfg = FlowConfig::default();
    let flow = Flow::random(&cfg, &mut rng::stream(7, 0));
    let inv = InverseConfig::default();
    let points: Vec<[f64; 2]> = (1..=64)
        .map(|k| [k as f64 / 65.0, (k * 37 % 64) as f64 / 65.0 + 0.005])
        .collect();
    let images: Vec<[f64; 2]> = points.iter().map(|u| flow.forward(*u).unwrap().0).collect();

    let mut g = c.benchmark_group("flow");
    g.bench_function("forward_64", |b| {
        b.iter(|| {
            points
                .iter()
                .map(|u| flow.forward(black_box(*u)).unwrap().1)
                .sum::<f64>()
        })
    });
    g.bench_function("inverse_64", |b| {
        b.iter(|| {
            images
                .iter()
                .map(|x| flow.inverse(black_box(*x), &inv).unwrap()[0])
                .sum::<f64>()
        })
    });
    g.bench_function("curvature_64", |b| {
        let model =
            cfbound::ApidModel::new(&cfbound::ApidConfig::default(), &mut rng::stream(7, 1))
                .unwrap();
        b.iter(|| {
            points
                .iter()
                .filter_map(|u| model.curvature_at(Arm::Treated, black_box(*u)).ok())
                .sum::<f64>()
        })
    });
    g.finish();
}

fn spectral(c: &mut Criterion) {
    let mut g = c.benchmark_group("spectral_norm");
    for (rows, cols) in [(5, 2), (2, 5), (64, 64)] {
        let w = Matrix::new(
            rows,
            cols,
            (0..rows * cols).map(|k| (k as f64 * 0.73).sin()).collect(),
        );
        g.bench_with_input(
            BenchmarkId::from_parameter(format!("{rows}x{cols}")),
            &w,
            |b, w| b.iter(|| spectral_norm(black_box(w), 20)),
        );
    }
    g.finish();
}

fn training(c: &mut Criterion) {
    let data = generate(&DatasetSpec {
        tag: DatasetTag::Dataset1,
        n_per_arm: 1000,
        seed: 0,
    })
    .unwrap();
    let cfg = TrainConfig {
        n_burnin: 20,
        ..TrainConfig::preset(Preset::Desk)
    };
    let mut g = c.benchmark_group("training");
    g.sample_size(10);
    g.bench_function("burn_in_20_steps", |b| {
        b.iter(|| burn_in(black_box(&data), &cfg).unwrap().0)
    });
    g.finish();
}

criterion_group!(benches, oracle, flow, spectral, training);
criterion_main!(benches);
