//! Vector-valued analogue of the digit-divergence co-learning task: each
//! class is a fixed Gaussian prototype in feature space, pairs are labeled
//! with a scalar Bregman divergence between the classes' digit values, and
//! the class-to-digit mapping is an arbitrary permutation so the geometry
//! of the prototypes carries no ordinal signal.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::datagen::{LabeledPair, LabeledPairSet, LabeledPoints};
use crate::divergence::ClosedFormGenerator;
use crate::error::{NbdError, Result};
use crate::linalg::Mat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ColearnTarget {
    /// Asymmetric: generator (t + 1) log (t + 1), defined on every digit.
    ShiftedXLogX,
    /// Asymmetric: generator t log t; pairs touching digit 0 are resampled
    /// because the divergence is undefined there.
    XLogX,
    /// Symmetric: squared digit difference.
    Squared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColearnSpec {
    pub classes: usize,
    pub samples_per_class: usize,
    pub input_dim: usize,
    pub noise_sigma: f64,
    pub train_pairs: usize,
    pub test_pairs: usize,
    pub target: ColearnTarget,
    pub seed: u64,
}

impl ColearnSpec {
    pub fn desk(target: ColearnTarget, seed: u64) -> Self {
        ColearnSpec {
            classes: 10,
            samples_per_class: 200,
            input_dim: 32,
            noise_sigma: 0.5,
            train_pairs: 20_000,
            test_pairs: 4_000,
            target,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(NbdError::Config("co-learning needs at least 2 classes".into()));
        }
        if self.samples_per_class == 0 || self.input_dim == 0 {
            return Err(NbdError::Config("samples and input_dim must be positive".into()));
        }
        Ok(())
    }
}

pub struct ColearnData {
    pub train: LabeledPairSet,
    pub test: LabeledPairSet,
    /// All samples, labeled with their digit value.
    pub points: LabeledPoints,
    /// digit_of_class[c] is the digit assigned to prototype class c.
    pub digit_of_class: Vec<usize>,
}

/// Scalar divergence between two digit values under the chosen target.
pub fn digit_divergence(target: ColearnTarget, da: usize, db: usize) -> Result<f64> {
    match target {
        ColearnTarget::ShiftedXLogX => {
            ClosedFormGenerator::shifted_xlogx().divergence(&[da as f64], &[db as f64])
        }
        ColearnTarget::XLogX => {
            ClosedFormGenerator::xlogx().divergence(&[da as f64], &[db as f64])
        }
        ColearnTarget::Squared => {
            let d = da as f64 - db as f64;
            Ok(d * d)
        }
    }
}

pub fn gen_colearn(spec: &ColearnSpec) -> Result<ColearnData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let k = spec.classes;
    let d = spec.input_dim;

    // Arbitrary class-to-digit permutation.
    let mut digit_of_class: Vec<usize> = (0..k).collect();
    for i in (1..k).rev() {
        let j = rng.gen_range(0..=i);
        digit_of_class.swap(i, j);
    }

    let prototypes: Vec<Vec<f64>> =
        (0..k).map(|_| (0..d).map(|_| normal.sample(&mut rng)).collect()).collect();

    let n = k * spec.samples_per_class;
    let mut points = Mat::zeros(n, d);
    let mut labels = Vec::with_capacity(n);
    for c in 0..k {
        for s in 0..spec.samples_per_class {
            let i = c * spec.samples_per_class + s;
            for j in 0..d {
                points[(i, j)] = prototypes[c][j] + spec.noise_sigma * normal.sample(&mut rng);
            }
            labels.push(digit_of_class[c]);
        }
    }

    let sample_pair = |rng: &mut ChaCha8Rng| -> Result<(usize, usize, f64)> {
        loop {
            let i = rng.gen_range(0..n);
            let j = rng.gen_range(0..n);
            if i == j {
                continue;
            }
            let (da, db) = (labels[i], labels[j]);
            if spec.target == ColearnTarget::XLogX && (da == 0 || db == 0) {
                continue;
            }
            return Ok((i, j, digit_divergence(spec.target, da, db)?));
        }
    };

    let mut train = LabeledPairSet::new(d);
    let mut test = LabeledPairSet::new(d);
    for t in 0..spec.train_pairs + spec.test_pairs {
        let (i, j, target) = sample_pair(&mut rng)?;
        let rec =
            LabeledPair { a: points.row(i).to_vec(), b: points.row(j).to_vec(), target };
        if t < spec.train_pairs {
            train.push(rec);
        } else {
            test.push(rec);
        }
    }
    Ok(ColearnData { train, test, points: LabeledPoints { points, labels }, digit_of_class })
}
