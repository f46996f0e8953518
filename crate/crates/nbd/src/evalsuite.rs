//! Generalized Bregman k-means and the ranking/clustering metrics.
//!
//! Clustering assigns each point by minimum divergence to a centroid with
//! the point in the first argument, and updates centroids to arithmetic
//! means, which minimize the total divergence over the right argument for
//! any Bregman divergence.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{NbdError, Result};
use crate::linalg::Mat;

/// Pairwise divergence callback: `(points, centroids) -> n x k` matrix.
pub type PairwiseDiv<'a> = &'a (dyn Fn(&Mat, &Mat) -> Result<Mat> + Sync);

#[derive(Debug, Clone)]
pub struct ClusteringResult {
    pub assignments: Vec<usize>,
    pub centroids: Mat,
    pub iterations: usize,
    /// Sum of divergences of each point to its centroid.
    pub objective: f64,
}

fn mean_update(points: &Mat, assignments: &[usize], k: usize) -> (Mat, Vec<usize>) {
    let d = points.cols();
    let mut centroids = Mat::zeros(k, d);
    let mut counts = vec![0usize; k];
    for (i, &c) in assignments.iter().enumerate() {
        counts[c] += 1;
        for (acc, v) in centroids.row_mut(c).iter_mut().zip(points.row(i)) {
            *acc += v;
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            for v in centroids.row_mut(c) {
                *v /= counts[c] as f64;
            }
        }
    }
    (centroids, counts)
}

fn assign(d: &Mat) -> (Vec<usize>, f64) {
    let n = d.rows();
    let pairs: Vec<(usize, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let row = d.row(i);
            let mut best = 0usize;
            let mut bv = row[0];
            for (c, &v) in row.iter().enumerate().skip(1) {
                if v < bv {
                    bv = v;
                    best = c;
                }
            }
            (best, bv)
        })
        .collect();
    let objective = pairs.iter().map(|p| p.1).sum();
    (pairs.into_iter().map(|p| p.0).collect(), objective)
}

/// Lloyd iterations under an arbitrary divergence, seeded by
/// divergence-weighted sampling. Stops when assignments stop changing, the
/// objective would increase (possible only for non-Bregman callbacks), or
/// `max_iter` is reached. Empty clusters are re-seeded at the point with
/// the largest divergence to its centroid.
pub fn bregman_kmeans(
    points: &Mat,
    k: usize,
    divergence: PairwiseDiv,
    seed: u64,
    max_iter: usize,
) -> Result<ClusteringResult> {
    bregman_kmeans_traced(points, k, divergence, seed, max_iter, |_| {})
}

/// [`bregman_kmeans`] with a per-iteration observer of the accepted
/// assignments, for iteration-by-iteration comparisons.
pub fn bregman_kmeans_traced(
    points: &Mat,
    k: usize,
    divergence: PairwiseDiv,
    seed: u64,
    max_iter: usize,
    mut on_iteration: impl FnMut(&[usize]),
) -> Result<ClusteringResult> {
    let n = points.rows();
    if n < k || k == 0 {
        return Err(NbdError::Config(format!("kmeans needs n >= k >= 1, got n={n}, k={k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Divergence-weighted seeding.
    let mut centers: Vec<usize> = vec![rng.gen_range(0..n)];
    while centers.len() < k {
        let cm = points.select_rows(&centers);
        let d = divergence(points, &cm)?;
        let mut weights: Vec<f64> = (0..n)
            .map(|i| {
                let row = d.row(i);
                row.iter().cloned().fold(f64::INFINITY, f64::min).max(0.0)
            })
            .collect();
        for &c in &centers {
            weights[c] = 0.0;
        }
        let total: f64 = weights.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.gen_range(0.0..total);
            let mut chosen = n - 1;
            for (i, &w) in weights.iter().enumerate() {
                if u < w {
                    chosen = i;
                    break;
                }
                u -= w;
            }
            chosen
        } else {
            // All mass at the chosen centers; fall back to uniform.
            rng.gen_range(0..n)
        };
        if !centers.contains(&pick) {
            centers.push(pick);
        } else {
            let fresh = (0..n).find(|i| !centers.contains(i)).expect("n >= k");
            centers.push(fresh);
        }
    }
    let mut centroids = points.select_rows(&centers);

    let mut assignments: Vec<usize> = Vec::new();
    let mut objective = f64::INFINITY;
    let mut iterations = 0;
    for _ in 0..max_iter.max(1) {
        let d = divergence(points, &centroids)?;
        let (mut new_assign, new_obj) = assign(&d);
        if new_obj > objective {
            // Mean updates are only guaranteed to descend for true Bregman
            // divergences; stop before accepting a regression.
            break;
        }
        iterations += 1;

        // Re-seed empty clusters at the worst-served point before updating.
        loop {
            let (_, counts) = mean_update(points, &new_assign, k);
            let Some(empty) = counts.iter().position(|&c| c == 0) else { break };
            let worst = (0..n)
                .max_by(|&a, &b| d[(a, new_assign[a])].total_cmp(&d[(b, new_assign[b])]))
                .expect("non-empty points");
            new_assign[worst] = empty;
        }

        let unchanged = new_assign == assignments;
        assignments = new_assign;
        objective = new_obj;
        on_iteration(&assignments);
        if unchanged {
            break;
        }
        let (next_centroids, _) = mean_update(points, &assignments, k);
        centroids = next_centroids;
    }
    let (final_centroids, _) = mean_update(points, &assignments, k);
    Ok(ClusteringResult { assignments, centroids: final_centroids, iterations, objective })
}

/// Majority-label fraction per cluster.
pub fn purity(assignments: &[usize], labels: &[usize]) -> f64 {
    assert_eq!(assignments.len(), labels.len());
    let n = assignments.len();
    if n == 0 {
        return 0.0;
    }
    let kc = assignments.iter().max().unwrap() + 1;
    let kl = labels.iter().max().unwrap() + 1;
    let mut table = vec![0usize; kc * kl];
    for (&c, &l) in assignments.iter().zip(labels) {
        table[c * kl + l] += 1;
    }
    let mut s = 0usize;
    for c in 0..kc {
        s += table[c * kl..(c + 1) * kl].iter().max().copied().unwrap_or(0);
    }
    s as f64 / n as f64
}

/// Fraction of point pairs on which the clustering and the labels agree
/// (both together or both apart).
pub fn rand_index(assignments: &[usize], labels: &[usize]) -> f64 {
    assert_eq!(assignments.len(), labels.len());
    let n = assignments.len();
    if n < 2 {
        return 1.0;
    }
    let kc = assignments.iter().max().unwrap() + 1;
    let kl = labels.iter().max().unwrap() + 1;
    let mut table = vec![0u64; kc * kl];
    let mut row = vec![0u64; kc];
    let mut col = vec![0u64; kl];
    for (&c, &l) in assignments.iter().zip(labels) {
        table[c * kl + l] += 1;
        row[c] += 1;
        col[l] += 1;
    }
    let c2 = |x: u64| x * x.saturating_sub(1) / 2;
    let together_both: u64 = table.iter().map(|&x| c2(x)).sum();
    let same_cluster: u64 = row.iter().map(|&x| c2(x)).sum();
    let same_label: u64 = col.iter().map(|&x| c2(x)).sum();
    let total = c2(n as u64);
    // Agreements = pairs together in both + pairs apart in both.
    let apart_both = total - same_cluster - same_label + together_both;
    (together_both + apart_both) as f64 / total as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankingResult {
    pub map: f64,
    pub auc: f64,
    /// Queries skipped because their class is absent from the corpus.
    pub skipped_queries: usize,
}

/// Retrieval scoring: corpus items are sorted by increasing divergence from
/// each query (ties broken by corpus index), relevant means same label.
/// MAP averages per-query average precision; AUC averages the per-query
/// probability that a relevant item outranks an irrelevant one.
pub fn rank_map_auc(
    queries: &Mat,
    query_labels: &[usize],
    corpus: &Mat,
    corpus_labels: &[usize],
    divergence: PairwiseDiv,
) -> Result<RankingResult> {
    if queries.rows() != query_labels.len() || corpus.rows() != corpus_labels.len() {
        return Err(NbdError::DimensionMismatch {
            expected: queries.rows(),
            got: query_labels.len(),
        });
    }
    let d = divergence(queries, corpus)?;
    let mut map_sum = 0.0;
    let mut auc_sum = 0.0;
    let mut used = 0usize;
    let mut skipped = 0usize;
    for (qi, &ql) in query_labels.iter().enumerate() {
        let relevant_total = corpus_labels.iter().filter(|&&l| l == ql).count();
        if relevant_total == 0 {
            skipped += 1;
            continue;
        }
        let irrelevant_total = corpus_labels.len() - relevant_total;
        let mut order: Vec<usize> = (0..corpus_labels.len()).collect();
        let row = d.row(qi);
        order.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));

        let mut hits = 0usize;
        let mut ap = 0.0;
        let mut irrel_seen = 0usize;
        let mut auc_pairs = 0u64;
        for (rank, &item) in order.iter().enumerate() {
            if corpus_labels[item] == ql {
                hits += 1;
                ap += hits as f64 / (rank + 1) as f64;
                auc_pairs += (irrelevant_total - irrel_seen) as u64;
            } else {
                irrel_seen += 1;
            }
        }
        map_sum += ap / relevant_total as f64;
        auc_sum += if irrelevant_total == 0 {
            1.0
        } else {
            auc_pairs as f64 / (relevant_total as f64 * irrelevant_total as f64)
        };
        used += 1;
    }
    if used == 0 {
        return Err(NbdError::Empty("no scorable queries".into()));
    }
    Ok(RankingResult { map: map_sum / used as f64, auc: auc_sum / used as f64, skipped_queries: skipped })
}

/// Plain squared-Euclidean pairwise matrix, the stock divergence for
/// baselines and tests.
pub fn sq_euclidean_pairwise(x: &Mat, y: &Mat) -> Result<Mat> {
    if x.cols() != y.cols() {
        return Err(NbdError::DimensionMismatch { expected: x.cols(), got: y.cols() });
    }
    let mut d = Mat::zeros(x.rows(), y.rows());
    for i in 0..x.rows() {
        for j in 0..y.rows() {
            d[(i, j)] = x.row(i).iter().zip(y.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
        }
    }
    Ok(d)
}
