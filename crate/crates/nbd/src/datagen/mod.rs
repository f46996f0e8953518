//! Seeded synthetic dataset generators. Every generator is a pure function
//! of its spec and seed: reruns are byte-identical.

pub mod colearn;
pub mod graph;
pub mod io;
pub mod mixture;
pub mod regression;

use serde::{Deserialize, Serialize};

use crate::error::{NbdError, Result};
use crate::linalg::Mat;

pub use colearn::{gen_colearn, ColearnData, ColearnSpec, ColearnTarget};
pub use graph::{gen_graph_task, GraphDataset, GraphOracle, GraphSpec, GraphTask};
pub use io::{
    read_manifest, read_pairs, read_points, write_manifest, write_pairs, write_points, Manifest,
};
pub use mixture::{gen_mixture, MixtureFamily, MixtureSpec};
pub use regression::{gen_regression_pairs, CorrelationLevel, RegressionSpec, RegressionTarget};

/// One supervision record: a pair of raw vectors and a target divergence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub target: f64,
}

/// A set of pair records sharing one feature dimension.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabeledPairSet {
    pub dim: usize,
    pub pairs: Vec<LabeledPair>,
}

impl LabeledPairSet {
    pub fn new(dim: usize) -> Self {
        LabeledPairSet { dim, pairs: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn push(&mut self, pair: LabeledPair) {
        debug_assert_eq!(pair.a.len(), self.dim);
        debug_assert_eq!(pair.b.len(), self.dim);
        self.pairs.push(pair);
    }

    /// Stack the selected pairs into `(A, B, targets)` matrices.
    pub fn gather(&self, idx: &[usize]) -> (Mat, Mat, Vec<f64>) {
        let mut a = Mat::zeros(idx.len(), self.dim);
        let mut b = Mat::zeros(idx.len(), self.dim);
        let mut t = Vec::with_capacity(idx.len());
        for (r, &i) in idx.iter().enumerate() {
            a.row_mut(r).copy_from_slice(&self.pairs[i].a);
            b.row_mut(r).copy_from_slice(&self.pairs[i].b);
            t.push(self.pairs[i].target);
        }
        (a, b, t)
    }

    /// Stack every pair in order.
    pub fn as_mats(&self) -> (Mat, Mat, Vec<f64>) {
        let idx: Vec<usize> = (0..self.len()).collect();
        self.gather(&idx)
    }

    pub fn validate(&self) -> Result<()> {
        if self.pairs.is_empty() {
            return Err(NbdError::Empty("pair set".into()));
        }
        for p in &self.pairs {
            if p.a.len() != self.dim || p.b.len() != self.dim {
                return Err(NbdError::DimensionMismatch { expected: self.dim, got: p.a.len() });
            }
        }
        Ok(())
    }
}

/// One point record with a class label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPoint {
    pub x: Vec<f64>,
    pub label: usize,
}

/// Points with class labels, stacked row-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPoints {
    pub points: Mat,
    pub labels: Vec<usize>,
}

impl LabeledPoints {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.cols()
    }

    pub fn records(&self) -> Vec<LabeledPoint> {
        (0..self.len())
            .map(|i| LabeledPoint { x: self.points.row(i).to_vec(), label: self.labels[i] })
            .collect()
    }

    pub fn from_records(records: &[LabeledPoint]) -> Result<Self> {
        if records.is_empty() {
            return Err(NbdError::Empty("point set".into()));
        }
        let dim = records[0].x.len();
        let mut points = Mat::zeros(records.len(), dim);
        let mut labels = Vec::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if r.x.len() != dim {
                return Err(NbdError::DimensionMismatch { expected: dim, got: r.x.len() });
            }
            points.row_mut(i).copy_from_slice(&r.x);
            labels.push(r.label);
        }
        Ok(LabeledPoints { points, labels })
    }
}
