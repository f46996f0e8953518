//! Timing of one joint training step (forward, JVP, backward, Adam) at a
//! few batch sizes.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use nbd::datagen::{LabeledPair, LabeledPairSet};
use nbd::divergence::{DivergenceModel, DivergenceVariant, ModelGenerator};
use nbd::encoder::EncoderParams;
use nbd::icnn::{init_icnn, IcnnConfig};
use nbd::train::{train_regression, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DIM: usize = 20;

fn pairs(n: usize, seed: u64) -> LabeledPairSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = LabeledPairSet::new(DIM);
    for _ in 0..n {
        let a: Vec<f64> = (0..DIM).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let b: Vec<f64> = (0..DIM).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let target: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum();
        set.push(LabeledPair { a, b, target });
    }
    set
}

fn bench_train_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("train_epoch");
    group.sample_size(10);
    for &batch in &[128usize, 1000] {
        let data = pairs(batch, 3);
        group.throughput(Throughput::Elements(batch as u64));
        group.bench_with_input(BenchmarkId::from_parameter(batch), &batch, |b, _| {
            b.iter(|| {
                let icnn =
                    init_icnn(&IcnnConfig::with_widths(DIM, vec![128, 128]), 1).unwrap();
                let mut model = DivergenceModel::new(
                    EncoderParams::identity(DIM),
                    ModelGenerator::Icnn(icnn),
                    DivergenceVariant::Plain,
                )
                .unwrap();
                let config = TrainConfig {
                    epochs: 1,
                    batch_size: batch,
                    learning_rate: 1e-3,
                    margin: 0.2,
                    seed: 5,
                    lr_drop: None,
                };
                train_regression(&mut model, &data, &config).unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench_train_step);
criterion_main!(benches);
