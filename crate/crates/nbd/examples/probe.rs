use nbd::datagen::*;
use nbd::divergence::*;
use nbd::encoder::EncoderParams;
use nbd::icnn::{init_icnn, IcnnConfig};
use nbd::train::*;
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let pairs_n: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(4000);
    let epochs: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(20);
    let width: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(64);
    let lr: f64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(1e-3);
    let batch: usize = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(1000);
    let mseed: u64 = args.get(6).map(|s| s.parse().unwrap()).unwrap_or(8);

    let spec = RegressionSpec {
        pairs: pairs_n + 1000,
        dim: 20,
        informative: 10,
        target: RegressionTarget::SqEuclidean,
        correlation: CorrelationLevel::None,
        seed: 7,
    };
    let all = gen_regression_pairs(&spec).unwrap();
    let mut train = LabeledPairSet::new(20);
    let mut test = LabeledPairSet::new(20);
    for (i, p) in all.pairs.into_iter().enumerate() {
        if i < pairs_n { train.push(p) } else { test.push(p) }
    }
    let icnn = init_icnn(&IcnnConfig { input_dim: 20, hidden_widths: vec![width, width], alpha: 1e-3 }, mseed).unwrap();
    let mut model = DivergenceModel::new(EncoderParams::identity(20), ModelGenerator::Icnn(icnn), DivergenceVariant::Plain).unwrap();
    let config = TrainConfig { epochs, batch_size: batch, learning_rate: lr, margin: 0.2, seed: 9, lr_drop: None };
    let t0 = Instant::now();
    let trace = train_regression(&mut model, &train, &config).unwrap();
    let train_time = t0.elapsed().as_secs_f64();
    let losses = trace.split_losses("train");
    let ev = eval_regression(&model, &test, 4096).unwrap();
    println!("pairs={pairs_n} epochs={epochs} width={width} lr={lr} batch={batch}");
    println!("first-epoch loss {:.4} final {:.4} | test MSE {:.4} MAE {:.4} | {:.1}s ({:.1} ms/epoch)",
        losses[0], losses.last().unwrap(), ev.mse, ev.mae, train_time, 1000.0*train_time/epochs as f64);

    // Mahalanobis baseline on same data
    let mut mah = MahalanobisBaseline::init(20, 11);
    let t1 = Instant::now();
    train_mahalanobis(&mut mah, &train, &config).unwrap();
    let (mmse, mmae) = mah.eval(&test).unwrap();
    println!("mahalanobis: test MSE {:.4} MAE {:.4} | {:.1}s", mmse, mmae, t1.elapsed().as_secs_f64());
}
