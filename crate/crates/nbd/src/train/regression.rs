//! Joint divergence-regression training: per pair, embed both sides,
//! compute the divergence with the inner product as a JVP, and step both
//! parameter sets with Adam on the squared-error loss.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::tape::Tape;
use crate::datagen::LabeledPairSet;
use crate::divergence::{learned_divergence_batch, DivergenceModel, ModelGenerator};
use crate::error::{NbdError, Result};
use crate::train::{
    model_block_names, model_blocks, model_blocks_mut, shuffle_indices, AdamState, LossTrace,
    TrainConfig,
};

/// Train a model against target divergences; returns the per-epoch mean
/// train-loss trace. Aborts on a non-finite loss or gradient.
pub fn train_regression(
    model: &mut DivergenceModel,
    pairs: &LabeledPairSet,
    config: &TrainConfig,
) -> Result<LossTrace> {
    config.validate()?;
    pairs.validate()?;
    model.validate()?;
    if pairs.dim != model.input_dim() {
        return Err(NbdError::DimensionMismatch { expected: model.input_dim(), got: pairs.dim });
    }
    if !matches!(model.generator, ModelGenerator::Icnn(_)) {
        return Err(NbdError::Config("training requires a learned generator".into()));
    }

    // Match phi's output scale to the target magnitude up front; the
    // reparametrized nonnegative weights then only learn shape, not
    // orders of magnitude.
    if let ModelGenerator::Icnn(p) = &mut model.generator {
        if p.output_scale == 1.0 {
            let mean = pairs.pairs.iter().map(|p| p.target.abs()).sum::<f64>()
                / pairs.len() as f64;
            if mean.is_finite() && mean > 1e-9 {
                p.output_scale = mean;
            }
        }
    }

    let names = model_block_names(model);
    let mut adam = AdamState::new(&model_blocks(model), config.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut trace = LossTrace::default();

    for epoch in 0..config.epochs {
        adam.set_learning_rate(config.lr_at_epoch(epoch));
        let order = shuffle_indices(pairs.len(), &mut rng);
        let mut epoch_loss = 0.0;
        let mut steps = 0usize;
        for (step, chunk) in order.chunks(config.batch_size).enumerate() {
            let (a, b, t) = pairs.gather(chunk);
            let mut tape = Tape::new();
            let ai = tape.leaf_mat(&a);
            let bi = tape.leaf_mat(&b);
            let bound = model.bind(&mut tape);
            let d = bound.divergence_batch(&mut tape, ai, bi);
            let ti = tape.leaf(&t, t.len(), 1);
            let diff = tape.sub(d, ti);
            let sq = tape.square(diff);
            let loss_node = tape.mean_all(sq);
            let loss_val = tape.value_scalar(loss_node);
            if !loss_val.is_finite() {
                return Err(NbdError::NonFiniteLoss { epoch, step });
            }
            let grads = tape.backward(loss_node)?;
            let ids = bound.param_ids();
            let grad_slices: Vec<&[f64]> = ids.iter().map(|id| grads.get(*id)).collect();
            adam.step(&mut model_blocks_mut(model), &grad_slices, &names)?;
            epoch_loss += loss_val;
            steps += 1;
        }
        trace.push(epoch, "train", epoch_loss / steps.max(1) as f64);
    }
    Ok(trace)
}

/// Evaluation on a held-out pair set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionEval {
    pub mse: f64,
    pub mae: f64,
}

/// Mean squared and absolute error of the model on a pair set, evaluated
/// in batches.
pub fn eval_regression(
    model: &DivergenceModel,
    pairs: &LabeledPairSet,
    batch_size: usize,
) -> Result<RegressionEval> {
    pairs.validate()?;
    let mut sq = 0.0;
    let mut ab = 0.0;
    let idx: Vec<usize> = (0..pairs.len()).collect();
    for chunk in idx.chunks(batch_size.max(1)) {
        let (a, b, t) = pairs.gather(chunk);
        let d = learned_divergence_batch(model, &a, &b)?;
        for (p, t) in d.iter().zip(&t) {
            sq += (p - t) * (p - t);
            ab += (p - t).abs();
        }
    }
    let n = pairs.len() as f64;
    Ok(RegressionEval { mse: sq / n, mae: ab / n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{LabeledPair, LabeledPairSet};
    use crate::divergence::DivergenceVariant;
    use crate::encoder::EncoderParams;
    use crate::icnn::{init_icnn, IcnnConfig};
    use rand::{Rng, SeedableRng};

    fn tiny_model(d: usize, seed: u64) -> DivergenceModel {
        let icnn = init_icnn(&IcnnConfig::with_widths(d, vec![16, 16]), seed).unwrap();
        DivergenceModel::new(
            EncoderParams::identity(d),
            ModelGenerator::Icnn(icnn),
            DivergenceVariant::Plain,
        )
        .unwrap()
    }

    #[test]
    fn zero_targets_on_identical_points_need_no_learning() {
        // All pairs are (x, x) with target 0; D(x, x) = 0 identically, so
        // the loss is exactly zero from the start.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut pairs = LabeledPairSet::new(4);
        for _ in 0..64 {
            let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            pairs.push(LabeledPair { a: x.clone(), b: x, target: 0.0 });
        }
        let mut model = tiny_model(4, 0);
        let config = TrainConfig { epochs: 3, batch_size: 32, seed: 1, ..Default::default() };
        let trace = train_regression(&mut model, &pairs, &config).unwrap();
        let final_loss = trace.final_loss("train").unwrap();
        assert!(final_loss < 1e-6, "loss {final_loss}");
    }

    #[test]
    fn learns_small_euclidean_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut pairs = LabeledPairSet::new(3);
        for _ in 0..256 {
            let a: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let t: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum();
            pairs.push(LabeledPair { a, b, target: t });
        }
        let mut model = tiny_model(3, 1);
        let config = TrainConfig {
            epochs: 150,
            batch_size: 64,
            learning_rate: 5e-3,
            seed: 2,
            ..Default::default()
        };
        let trace = train_regression(&mut model, &pairs, &config).unwrap();
        let losses = trace.split_losses("train");
        assert!(losses.iter().all(|l| l.is_finite()));
        assert!(
            losses.last().unwrap() < &(losses[0] * 0.1),
            "no learning progress: {} -> {}",
            losses[0],
            losses.last().unwrap()
        );
        let eval = eval_regression(&model, &pairs, 128).unwrap();
        assert!(eval.mae < 0.5, "mae {}", eval.mae);
    }

    #[test]
    fn seeded_training_is_bit_reproducible() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut pairs = LabeledPairSet::new(2);
        for _ in 0..64 {
            let a: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let t: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum();
            pairs.push(LabeledPair { a, b, target: t });
        }
        let run = || {
            let mut model = tiny_model(2, 9);
            let config = TrainConfig { epochs: 5, batch_size: 16, seed: 4, ..Default::default() };
            let trace = train_regression(&mut model, &pairs, &config).unwrap();
            (model, trace)
        };
        let (m1, t1) = run();
        let (m2, t2) = run();
        assert_eq!(m1, m2);
        assert_eq!(t1, t2);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let mut pairs = LabeledPairSet::new(5);
        pairs.push(LabeledPair { a: vec![0.0; 5], b: vec![0.0; 5], target: 0.0 });
        let mut model = tiny_model(4, 0);
        let config = TrainConfig::default();
        assert!(train_regression(&mut model, &pairs, &config).is_err());
    }
}
