//! Triplet training with batch-all mining: within each minibatch the full
//! pairwise divergence matrix is recorded on the tape, the surviving
//! triples are mined from its values, and their mean hinge loss reduces to
//! a fixed linear form over the matrix entries.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::tape::Tape;
use crate::datagen::LabeledPoints;
use crate::divergence::{DivergenceModel, ModelGenerator};
use crate::error::{NbdError, Result};
use crate::train::{
    loss, model_block_names, model_blocks, model_blocks_mut, shuffle_indices, AdamState,
    LossTrace, TrainConfig,
};

/// Train a model from labeled points with mined triplets. Batches without
/// any surviving triplet contribute zero loss and skip the update.
pub fn train_triplet(
    model: &mut DivergenceModel,
    data: &LabeledPoints,
    config: &TrainConfig,
) -> Result<LossTrace> {
    config.validate()?;
    model.validate()?;
    if data.is_empty() {
        return Err(NbdError::Empty("triplet training set".into()));
    }
    if data.dim() != model.input_dim() {
        return Err(NbdError::DimensionMismatch { expected: model.input_dim(), got: data.dim() });
    }
    if !matches!(model.generator, ModelGenerator::Icnn(_)) {
        return Err(NbdError::Config("training requires a learned generator".into()));
    }

    let names = model_block_names(model);
    let mut adam = AdamState::new(&model_blocks(model), config.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut trace = LossTrace::default();

    for epoch in 0..config.epochs {
        adam.set_learning_rate(config.lr_at_epoch(epoch));
        let order = shuffle_indices(data.len(), &mut rng);
        let mut epoch_loss = 0.0;
        let mut steps = 0usize;
        for (step, chunk) in order.chunks(config.batch_size).enumerate() {
            let pts = data.points.select_rows(chunk);
            let labels: Vec<usize> = chunk.iter().map(|&i| data.labels[i]).collect();
            let mut tape = Tape::new();
            let pi = tape.leaf_mat(&pts);
            let bound = model.bind(&mut tape);
            let dmat = bound.pairwise(&mut tape, pi, pi);
            let dvals = tape.value_mat(dmat);
            let batch = loss::mine_from_matrix(&dvals, &labels, config.margin);
            if batch.is_empty() {
                epoch_loss += 0.0;
                steps += 1;
                continue;
            }
            let coeffs = loss::triplet_coefficients(&batch, chunk.len());
            let lin = tape.weighted_sum(dmat, coeffs);
            let loss_node = tape.add_const(lin, config.margin);
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
