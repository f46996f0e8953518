//! Distribution-mixture generators: non-isotropic Gaussians with means in
//! a [-4, 4] hyper-box and covariance `G^T G + 5 I`, per-feature iid
//! exponentials with rates uniform in [0.1, 10], and multinomials of 100
//! counts with Dirichlet(10, ..., 10) cluster probabilities.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::datagen::LabeledPoints;
use crate::error::{NbdError, Result};
use crate::linalg::{cholesky, Mat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MixtureFamily {
    Gaussian,
    Exponential,
    Multinomial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub family: MixtureFamily,
    /// Points to draw.
    pub n: usize,
    /// Feature dimensions.
    pub dim: usize,
    /// Mixture components.
    pub k: usize,
    pub seed: u64,
}

impl MixtureSpec {
    pub fn new(family: MixtureFamily, seed: u64) -> Self {
        MixtureSpec { family, n: 1000, dim: 10, k: 5, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 || self.n < self.k {
            return Err(NbdError::Config("mixture requires n >= k >= 2".into()));
        }
        if self.dim == 0 {
            return Err(NbdError::Config("mixture dim must be positive".into()));
        }
        Ok(())
    }
}

/// Draw a labeled mixture; points are assigned to components uniformly.
pub fn gen_mixture(spec: &MixtureSpec) -> Result<LabeledPoints> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.dim;
    let normal = Normal::new(0.0, 1.0).expect("unit normal");

    enum Component {
        Gaussian { mean: Vec<f64>, chol: Mat },
        Exponential { rates: Vec<f64> },
        Multinomial { probs: Vec<f64> },
    }

    let components: Vec<Component> = (0..spec.k)
        .map(|_| -> Result<Component> {
            Ok(match spec.family {
                MixtureFamily::Gaussian => {
                    let mean: Vec<f64> = (0..d).map(|_| rng.gen_range(-4.0..4.0)).collect();
                    // Random SPD part with eigenvalues in [1, 2] (the
                    // make_spd_matrix recipe: random orthogonal basis,
                    // 1 + uniform eigenvalues), plus 5 I.
                    let mut q = Mat::zeros(d, d);
                    for v in q.data_mut() {
                        *v = normal.sample(&mut rng);
                    }
                    crate::linalg::orthonormalize_rows(&mut q);
                    let eig: Vec<f64> = (0..d).map(|_| 1.0 + rng.gen_range(0.0..1.0)).collect();
                    let mut cov = Mat::zeros(d, d);
                    for i in 0..d {
                        for j in 0..d {
                            let mut s = 0.0;
                            for (k, e) in eig.iter().enumerate() {
                                s += q[(k, i)] * e * q[(k, j)];
                            }
                            cov[(i, j)] = s;
                        }
                    }
                    for i in 0..d {
                        cov[(i, i)] += 5.0;
                    }
                    // Symmetrize away rounding drift for the factorization.
                    for i in 0..d {
                        for j in (i + 1)..d {
                            let m = 0.5 * (cov[(i, j)] + cov[(j, i)]);
                            cov[(i, j)] = m;
                            cov[(j, i)] = m;
                        }
                    }
                    Component::Gaussian { mean, chol: cholesky(&cov)? }
                }
                MixtureFamily::Exponential => {
                    let rates: Vec<f64> = (0..d).map(|_| rng.gen_range(0.1..10.0)).collect();
                    Component::Exponential { rates }
                }
                MixtureFamily::Multinomial => {
                    // Dirichlet(10, ..., 10) via normalized Gamma draws.
                    let gamma = Gamma::new(10.0, 1.0).expect("gamma");
                    let raw: Vec<f64> = (0..d).map(|_| gamma.sample(&mut rng)).collect();
                    let s: f64 = raw.iter().sum();
                    Component::Multinomial { probs: raw.iter().map(|v| v / s).collect() }
                }
            })
        })
        .collect::<Result<_>>()?;

    let mut points = Mat::zeros(spec.n, d);
    let mut labels = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let c = rng.gen_range(0..spec.k);
        labels.push(c);
        let row = points.row_mut(i);
        match &components[c] {
            Component::Gaussian { mean, chol } => {
                let z: Vec<f64> = (0..d).map(|_| normal.sample(&mut rng)).collect();
                for (j, r) in row.iter_mut().enumerate() {
                    let mut v = mean[j];
                    for (k, zk) in z.iter().enumerate().take(j + 1) {
                        v += chol[(j, k)] * zk;
                    }
                    *r = v;
                }
            }
            Component::Exponential { rates } => {
                for (j, r) in row.iter_mut().enumerate() {
                    let e = Exp::new(rates[j]).expect("positive rate");
                    *r = e.sample(&mut rng);
                }
            }
            Component::Multinomial { probs } => {
                // 100 category draws accumulated into counts.
                for _ in 0..100 {
                    let u: f64 = rng.gen_range(0.0..1.0);
                    let mut acc = 0.0;
                    let mut cat = d - 1;
                    for (j, p) in probs.iter().enumerate() {
                        acc += p;
                        if u < acc {
                            cat = j;
                            break;
                        }
                    }
                    row[cat] += 1.0;
                }
            }
        }
    }
    Ok(LabeledPoints { points, labels })
}
