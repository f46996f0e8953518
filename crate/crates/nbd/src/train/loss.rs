//! Regression and triplet losses, plus batch-all triplet mining.

use crate::error::{NbdError, Result};
use crate::linalg::Mat;

/// Mean squared error over aligned scalar batches.
pub fn mse_loss(predicted: &[f64], target: &[f64]) -> Result<f64> {
    if predicted.is_empty() {
        return Err(NbdError::Empty("mse_loss batch".into()));
    }
    if predicted.len() != target.len() {
        return Err(NbdError::DimensionMismatch { expected: predicted.len(), got: target.len() });
    }
    let n = predicted.len() as f64;
    Ok(predicted.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n)
}

/// Mean absolute error over aligned scalar batches.
pub fn mae(predicted: &[f64], target: &[f64]) -> Result<f64> {
    if predicted.is_empty() {
        return Err(NbdError::Empty("mae batch".into()));
    }
    if predicted.len() != target.len() {
        return Err(NbdError::DimensionMismatch { expected: predicted.len(), got: target.len() });
    }
    let n = predicted.len() as f64;
    Ok(predicted.iter().zip(target).map(|(p, t)| (p - t).abs()).sum::<f64>() / n)
}

/// Index triples into a batch, anchor/positive sharing a label and the
/// negative differing, each with strictly positive hinge loss at mining time.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletBatch {
    pub anchors: Vec<usize>,
    pub positives: Vec<usize>,
    pub negatives: Vec<usize>,
    pub margin: f64,
}

impl TripletBatch {
    pub fn empty(margin: f64) -> Self {
        TripletBatch { anchors: Vec::new(), positives: Vec::new(), negatives: Vec::new(), margin }
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    /// The triples as a sorted set, for order-insensitive comparison.
    pub fn as_sorted_triples(&self) -> Vec<(usize, usize, usize)> {
        let mut out: Vec<_> = (0..self.len())
            .map(|i| (self.anchors[i], self.positives[i], self.negatives[i]))
            .collect();
        out.sort_unstable();
        out
    }
}

/// Batch-all mining over a precomputed divergence matrix `d[i][j] = D(i, j)`
/// (anchor in the first argument): keep exactly the triples with
/// `D(a,p) - D(a,n) + margin > 0`.
pub fn mine_from_matrix(d: &Mat, labels: &[usize], margin: f64) -> TripletBatch {
    assert_eq!(d.rows(), labels.len(), "divergence matrix / label mismatch");
    assert_eq!(d.cols(), labels.len());
    let n = labels.len();
    let mut batch = TripletBatch::empty(margin);
    // Group indices by label once; anchors then scan positives/negatives.
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return batch;
    }
    let by_class: Vec<Vec<usize>> = classes
        .iter()
        .map(|c| (0..n).filter(|&i| labels[i] == *c).collect())
        .collect();
    for (ci, members) in by_class.iter().enumerate() {
        for &a in members {
            for &p in members {
                if p == a {
                    continue;
                }
                let dap = d[(a, p)];
                for (cj, others) in by_class.iter().enumerate() {
                    if cj == ci {
                        continue;
                    }
                    for &neg in others {
                        if dap - d[(a, neg)] + margin > 0.0 {
                            batch.anchors.push(a);
                            batch.positives.push(p);
                            batch.negatives.push(neg);
                        }
                    }
                }
            }
        }
    }
    batch
}

/// Batch-all mining: embeds nothing, just evaluates the given divergence on
/// the batch and keeps every triple with non-zero hinge loss. A single-class
/// batch yields an empty set.
pub fn mine_triplets(
    embeddings: &Mat,
    labels: &[usize],
    divergence: impl Fn(&Mat, &Mat) -> Result<Mat>,
    margin: f64,
) -> Result<TripletBatch> {
    if embeddings.rows() != labels.len() {
        return Err(NbdError::DimensionMismatch { expected: embeddings.rows(), got: labels.len() });
    }
    let d = divergence(embeddings, embeddings)?;
    Ok(mine_from_matrix(&d, labels, margin))
}

/// Mean hinge loss of a mined batch given the divergence matrix.
/// An empty batch is defined as zero loss.
pub fn triplet_loss_from_matrix(d: &Mat, batch: &TripletBatch) -> f64 {
    if batch.is_empty() {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..batch.len() {
        let v = d[(batch.anchors[i], batch.positives[i])] - d[(batch.anchors[i], batch.negatives[i])]
            + batch.margin;
        s += v.max(0.0);
    }
    s / batch.len() as f64
}

/// Mean hinge loss over the batch's triples, evaluating the divergence on
/// the given points.
pub fn triplet_loss(
    points: &Mat,
    batch: &TripletBatch,
    divergence: impl Fn(&Mat, &Mat) -> Result<Mat>,
) -> Result<f64> {
    if batch.is_empty() {
        return Ok(0.0);
    }
    let d = divergence(points, points)?;
    Ok(triplet_loss_from_matrix(&d, batch))
}

/// Coefficients of the mined linear form: loss = sum_ij c[i,j] D[i,j] + margin.
/// Used to record the mined loss on the tape with a single weighted sum.
pub fn triplet_coefficients(batch: &TripletBatch, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; n * n];
    if batch.is_empty() {
        return c;
    }
    let inv = 1.0 / batch.len() as f64;
    for i in 0..batch.len() {
        c[batch.anchors[i] * n + batch.positives[i]] += inv;
        c[batch.anchors[i] * n + batch.negatives[i]] -= inv;
    }
    c
}
