//! Trained Mahalanobis baseline: D(a, b) = ||L (a - b)||^2 with an
//! unconstrained square matrix L, fit by Adam on the regression loss.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::tape::Tape;
use crate::datagen::LabeledPairSet;
use crate::error::{NbdError, Result};
use crate::linalg::Mat;
use crate::train::{shuffle_indices, AdamState, LossTrace, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MahalanobisBaseline {
    pub l: Mat,
}

impl MahalanobisBaseline {
    /// Random zero-mean init scaled by 1/sqrt(d).
    pub fn init(dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let scale = 1.0 / (dim as f64).sqrt();
        let mut l = Mat::zeros(dim, dim);
        for v in l.data_mut() {
            *v = normal.sample(&mut rng) * scale;
        }
        MahalanobisBaseline { l }
    }

    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    pub fn divergence(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        if a.len() != self.dim() || b.len() != self.dim() {
            return Err(NbdError::DimensionMismatch { expected: self.dim(), got: a.len() });
        }
        let d = self.dim();
        let mut s = 0.0;
        for i in 0..d {
            let mut h = 0.0;
            for j in 0..d {
                h += self.l[(i, j)] * (a[j] - b[j]);
            }
            s += h * h;
        }
        Ok(s)
    }

    pub fn divergence_batch(&self, a: &Mat, b: &Mat) -> Result<Vec<f64>> {
        if a.rows() != b.rows() || a.cols() != b.cols() {
            return Err(NbdError::DimensionMismatch { expected: a.rows(), got: b.rows() });
        }
        (0..a.rows()).map(|i| self.divergence(a.row(i), b.row(i))).collect()
    }

    /// Mean squared / absolute error on a pair set.
    pub fn eval(&self, pairs: &LabeledPairSet) -> Result<(f64, f64)> {
        pairs.validate()?;
        let (a, b, t) = pairs.as_mats();
        let d = self.divergence_batch(&a, &b)?;
        let n = t.len() as f64;
        let mse = d.iter().zip(&t).map(|(p, q)| (p - q) * (p - q)).sum::<f64>() / n;
        let mae = d.iter().zip(&t).map(|(p, q)| (p - q).abs()).sum::<f64>() / n;
        Ok((mse, mae))
    }
}

/// Fit the baseline with the same protocol as the divergence models.
pub fn train_mahalanobis(
    model: &mut MahalanobisBaseline,
    pairs: &LabeledPairSet,
    config: &TrainConfig,
) -> Result<LossTrace> {
    config.validate()?;
    pairs.validate()?;
    if pairs.dim != model.dim() {
        return Err(NbdError::DimensionMismatch { expected: model.dim(), got: pairs.dim });
    }
    let mut adam = AdamState::new(&[model.l.data()], config.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut trace = LossTrace::default();
    let names = vec!["mahalanobis.l".to_string()];

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
            let li = tape.leaf_mat(&model.l);
            let diff = tape.sub(ai, bi);
            let h = tape.linear(diff, li);
            let d = tape.row_dot(h, h);
            let ti = tape.leaf(&t, t.len(), 1);
            let err = tape.sub(d, ti);
            let sq = tape.square(err);
            let loss_node = tape.mean_all(sq);
            let loss_val = tape.value_scalar(loss_node);
            if !loss_val.is_finite() {
                return Err(NbdError::NonFiniteLoss { epoch, step });
            }
            let grads = tape.backward(loss_node)?;
            adam.step(&mut [model.l.data_mut()], &[grads.get(li)], &names)?;
            epoch_loss += loss_val;
            steps += 1;
        }
        trace.push(epoch, "train", epoch_loss / steps.max(1) as f64);
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::LabeledPair;
    use rand::Rng;

    #[test]
    fn fits_euclidean_target_closely() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut pairs = LabeledPairSet::new(3);
        for _ in 0..512 {
            let a: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.5..1.5)).collect();
            let b: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.5..1.5)).collect();
            let t: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum();
            pairs.push(LabeledPair { a, b, target: t });
        }
        let mut model = MahalanobisBaseline::init(3, 4);
        let config = TrainConfig {
            epochs: 60,
            batch_size: 64,
            learning_rate: 1e-2,
            seed: 3,
            ..Default::default()
        };
        train_mahalanobis(&mut model, &pairs, &config).unwrap();
        let (_, mae) = model.eval(&pairs).unwrap();
        assert!(mae < 0.1, "mae {mae}");
    }

    #[test]
    fn symmetric_by_construction() {
        let model = MahalanobisBaseline::init(4, 0);
        let a = [0.3, -1.0, 0.5, 2.0];
        let b = [1.1, 0.0, -0.7, 0.2];
        let d1 = model.divergence(&a, &b).unwrap();
        let d2 = model.divergence(&b, &a).unwrap();
        assert_eq!(d1.to_bits(), d2.to_bits());
    }
}
