//! Divergence-regression pairs: standard-normal feature vectors whose
//! first `informative` coordinates determine the target divergence while
//! the rest are distractors, with optional correlation among all features
//! through a unit-diagonal covariance of controlled condition number.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::softplus;
use crate::datagen::{LabeledPair, LabeledPairSet};
use crate::divergence::ClosedFormGenerator;
use crate::error::{NbdError, Result};
use crate::linalg::{cholesky, orthonormalize_rows, sym_eigenvalues, Mat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrelationLevel {
    None,
    Med,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegressionTarget {
    SqEuclidean,
    Mahalanobis,
    XLogX,
    Kl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionSpec {
    pub pairs: usize,
    pub dim: usize,
    pub informative: usize,
    pub target: RegressionTarget,
    pub correlation: CorrelationLevel,
    pub seed: u64,
}

impl RegressionSpec {
    pub fn new(target: RegressionTarget, correlation: CorrelationLevel, seed: u64) -> Self {
        RegressionSpec { pairs: 50_000, dim: 20, informative: 10, target, correlation, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.pairs == 0 {
            return Err(NbdError::Config("pairs must be positive".into()));
        }
        if self.informative == 0 || self.informative > self.dim {
            return Err(NbdError::Config(
                "informative features must be in 1..=dim (the rest are distractors)".into(),
            ));
        }
        Ok(())
    }
}

/// Build a unit-diagonal correlation matrix whose condition number lands in
/// `[lo, hi)`: random orthogonal basis, log-uniform eigenvalues spanning the
/// target ratio, rescale to unit diagonal, re-check, resample until in band.
pub fn correlation_matrix(
    dim: usize,
    target_kappa: f64,
    lo: f64,
    hi: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Mat> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    for _attempt in 0..200 {
        let mut q = Mat::zeros(dim, dim);
        for v in q.data_mut() {
            *v = normal.sample(rng);
        }
        orthonormalize_rows(&mut q);
        // Log-uniform eigenvalues with the extremes pinned to the ratio.
        let mut eig: Vec<f64> = vec![0.0; dim];
        eig[0] = 1.0;
        eig[dim - 1] = target_kappa;
        for e in eig.iter_mut().take(dim - 1).skip(1) {
            *e = (rng.gen_range(0.0..1.0) * target_kappa.ln()).exp();
        }
        // sigma = Q^T diag(eig) Q.
        let mut sigma = Mat::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..dim {
                let mut s = 0.0;
                for (k, e) in eig.iter().enumerate() {
                    s += q[(k, i)] * e * q[(k, j)];
                }
                sigma[(i, j)] = s;
            }
        }
        // Rescale to unit diagonal.
        let d: Vec<f64> = (0..dim).map(|i| sigma[(i, i)].sqrt()).collect();
        for i in 0..dim {
            for j in 0..dim {
                sigma[(i, j)] /= d[i] * d[j];
            }
        }
        // Symmetrize away rounding drift before the eigenvalue check.
        for i in 0..dim {
            for j in (i + 1)..dim {
                let m = 0.5 * (sigma[(i, j)] + sigma[(j, i)]);
                sigma[(i, j)] = m;
                sigma[(j, i)] = m;
            }
        }
        let spec = sym_eigenvalues(&sigma);
        let kappa = spec[dim - 1] / spec[0].max(1e-300);
        if spec[0] > 0.0 && kappa >= lo && kappa < hi {
            return Ok(sigma);
        }
    }
    Err(NbdError::Config(format!(
        "could not reach condition-number band [{lo}, {hi}) for dim {dim}"
    )))
}

fn softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// Generate the pair set. Inputs are the raw (correlated) Gaussian
/// features; log-based targets are computed on positivity-mapped copies of
/// the informative block (softplus for the x-log-x target, softmax for KL),
/// so the stored inputs keep their Gaussian marginals.
pub fn gen_regression_pairs(spec: &RegressionSpec) -> Result<LabeledPairSet> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.dim;
    let normal = Normal::new(0.0, 1.0).expect("unit normal");

    let chol = match spec.correlation {
        CorrelationLevel::None => None,
        CorrelationLevel::Med => {
            Some(cholesky(&correlation_matrix(d, 50.0, 10.0, 100.0, &mut rng)?)?)
        }
        CorrelationLevel::High => {
            Some(cholesky(&correlation_matrix(d, 350.0, 250.0, 500.0, &mut rng)?)?)
        }
    };

    // Fixed random SPD matrix for the Mahalanobis target, scaled to unit
    // mean diagonal so targets stay comparable to the Euclidean case.
    let mahal = if spec.target == RegressionTarget::Mahalanobis {
        let m = spec.informative;
        let mut g = Mat::zeros(m, m);
        for v in g.data_mut() {
            *v = normal.sample(&mut rng);
        }
        let mut a = g.transpose().matmul(&g);
        let trace: f64 = (0..m).map(|i| a[(i, i)]).sum();
        let scale = m as f64 / trace;
        for v in a.data_mut() {
            *v *= scale;
        }
        Some(ClosedFormGenerator::mahalanobis(a)?)
    } else {
        None
    };
    let xlogx = ClosedFormGenerator::xlogx();
    let kl = ClosedFormGenerator::kl_positive();

    let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        let z: Vec<f64> = (0..d).map(|_| normal.sample(rng)).collect();
        match &chol {
            None => z,
            Some(l) => (0..d)
                .map(|i| (0..=i).map(|k| l[(i, k)] * z[k]).sum())
                .collect(),
        }
    };

    let mut out = LabeledPairSet::new(d);
    for _ in 0..spec.pairs {
        let a = draw(&mut rng);
        let b = draw(&mut rng);
        let ai = &a[..spec.informative];
        let bi = &b[..spec.informative];
        let target = match spec.target {
            RegressionTarget::SqEuclidean => {
                ai.iter().zip(bi).map(|(x, y)| (x - y) * (x - y)).sum()
            }
            RegressionTarget::Mahalanobis => mahal.as_ref().unwrap().divergence(ai, bi)?,
            RegressionTarget::XLogX => {
                let ta: Vec<f64> = ai.iter().map(|&v| softplus(v)).collect();
                let tb: Vec<f64> = bi.iter().map(|&v| softplus(v)).collect();
                xlogx.divergence(&ta, &tb)?
            }
            RegressionTarget::Kl => kl.divergence(&softmax(ai), &softmax(bi))?,
        };
        out.push(LabeledPair { a, b, target });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec(target: RegressionTarget, correlation: CorrelationLevel) -> RegressionSpec {
        RegressionSpec { pairs: 2000, dim: 20, informative: 10, target, correlation, seed: 5 }
    }

    #[test]
    fn uncorrelated_features_have_near_identity_correlation() {
        let spec = RegressionSpec {
            pairs: 25_000,
            ..small_spec(RegressionTarget::SqEuclidean, CorrelationLevel::None)
        };
        let data = gen_regression_pairs(&spec).unwrap();
        let n = data.len();
        let d = data.dim;
        // Sample correlations over the `a` side.
        let mut mean = vec![0.0; d];
        for p in &data.pairs {
            for j in 0..d {
                mean[j] += p.a[j];
            }
        }
        for m in &mut mean {
            *m /= n as f64;
        }
        let mut var = vec![0.0; d];
        for p in &data.pairs {
            for j in 0..d {
                var[j] += (p.a[j] - mean[j]).powi(2);
            }
        }
        for v in &mut var {
            *v /= n as f64;
        }
        for j in 0..d {
            assert!((var[j] - 1.0).abs() < 0.05, "marginal variance {j}: {}", var[j]);
        }
        for i in 0..d {
            for j in (i + 1)..d {
                let mut c = 0.0;
                for p in &data.pairs {
                    c += (p.a[i] - mean[i]) * (p.a[j] - mean[j]);
                }
                c /= n as f64 * (var[i] * var[j]).sqrt();
                assert!(c.abs() < 0.05, "off-diagonal ({i},{j}) correlation {c}");
            }
        }
    }

    #[test]
    fn identical_points_give_zero_euclidean_target() {
        let spec = small_spec(RegressionTarget::SqEuclidean, CorrelationLevel::None);
        let data = gen_regression_pairs(&spec).unwrap();
        let p = &data.pairs[0];
        let gen = ClosedFormGenerator::sq_euclidean();
        let same = gen.divergence(&p.a[..10], &p.a[..10]).unwrap();
        assert_eq!(same, 0.0);
    }

    #[test]
    fn condition_number_bands() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let med = correlation_matrix(20, 50.0, 10.0, 100.0, &mut rng).unwrap();
        let eig = sym_eigenvalues(&med);
        let kappa = eig[19] / eig[0];
        assert!((10.0..100.0).contains(&kappa), "med kappa {kappa}");
        for i in 0..20 {
            assert!((med[(i, i)] - 1.0).abs() < 1e-9);
        }
        let high = correlation_matrix(20, 350.0, 250.0, 500.0, &mut rng).unwrap();
        let eig = sym_eigenvalues(&high);
        let kappa = eig[19] / eig[0];
        assert!((250.0..500.0).contains(&kappa), "high kappa {kappa}");
    }

    #[test]
    fn correlated_marginals_stay_unit_variance() {
        let spec = RegressionSpec {
            pairs: 20_000,
            ..small_spec(RegressionTarget::SqEuclidean, CorrelationLevel::High)
        };
        let data = gen_regression_pairs(&spec).unwrap();
        let n = data.len() as f64;
        for j in 0..data.dim {
            let mean: f64 = data.pairs.iter().map(|p| p.a[j]).sum::<f64>() / n;
            let var: f64 = data.pairs.iter().map(|p| (p.a[j] - mean).powi(2)).sum::<f64>() / n;
            assert!((var - 1.0).abs() < 0.05, "dim {j} variance {var}");
        }
    }

    #[test]
    fn kl_targets_finite_nonnegative() {
        let spec = small_spec(RegressionTarget::Kl, CorrelationLevel::None);
        let data = gen_regression_pairs(&spec).unwrap();
        for p in &data.pairs {
            assert!(p.target.is_finite());
            assert!(p.target >= -1e-12);
        }
    }

    #[test]
    fn xlogx_targets_witness_asymmetry() {
        let spec = small_spec(RegressionTarget::XLogX, CorrelationLevel::None);
        let data = gen_regression_pairs(&spec).unwrap();
        // Recompute a few targets with swapped arguments; at least 1% of
        // sampled pairs must differ noticeably.
        let gen = ClosedFormGenerator::xlogx();
        let mut asym = 0usize;
        for p in data.pairs.iter().take(500) {
            let ta: Vec<f64> = p.a[..10].iter().map(|&v| softplus(v)).collect();
            let tb: Vec<f64> = p.b[..10].iter().map(|&v| softplus(v)).collect();
            let rev = gen.divergence(&tb, &ta).unwrap();
            if (rev - p.target).abs() > 0.01 * p.target.abs().max(0.01) {
                asym += 1;
            }
        }
        assert!(asym > 5, "asymmetry witnesses: {asym}");
    }

    #[test]
    fn deterministic_given_seed() {
        let spec = small_spec(RegressionTarget::SqEuclidean, CorrelationLevel::Med);
        let a = gen_regression_pairs(&spec).unwrap();
        let b = gen_regression_pairs(&spec).unwrap();
        assert_eq!(a, b);
    }
}
