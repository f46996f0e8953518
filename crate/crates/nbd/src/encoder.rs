//! The feature extractor f_theta learned jointly with phi: a plain MLP
//! with Softplus hidden activations and a linear output layer, or an
//! identity pass-through for tasks that fit the divergence on raw features.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::tape::{Tape, TensorId};
use crate::error::{NbdError, Result};
use crate::linalg::Mat;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden_widths: Vec<usize>,
    pub embed_dim: usize,
}

impl MlpConfig {
    pub fn new(input_dim: usize) -> Self {
        MlpConfig { input_dim, hidden_widths: vec![256, 256], embed_dim: 128 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    /// `out_dim x in_dim`.
    pub weight: Mat,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub config: MlpConfig,
    pub layers: Vec<DenseLayer>,
}

/// Encoder parameters: either a bypass or a trainable MLP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EncoderParams {
    /// Pass raw features through unchanged.
    Identity { dim: usize },
    Mlp(MlpParams),
}

/// Deterministic MLP initialization: zero-mean weights scaled by
/// 1/sqrt(fan_in), zero biases.
pub fn init_encoder(config: &MlpConfig, seed: u64) -> Result<EncoderParams> {
    if config.input_dim == 0 || config.embed_dim == 0 {
        return Err(NbdError::Config("encoder dims must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut dims = vec![config.input_dim];
    dims.extend_from_slice(&config.hidden_widths);
    dims.push(config.embed_dim);
    let mut layers = Vec::new();
    for win in dims.windows(2) {
        let (fan_in, fan_out) = (win[0], win[1]);
        let scale = 1.0 / (fan_in as f64).sqrt();
        let mut w = Mat::zeros(fan_out, fan_in);
        for v in w.data_mut() {
            *v = normal.sample(&mut rng) * scale;
        }
        layers.push(DenseLayer { weight: w, bias: vec![0.0; fan_out] });
    }
    Ok(EncoderParams::Mlp(MlpParams { config: config.clone(), layers }))
}

impl EncoderParams {
    pub fn identity(dim: usize) -> Self {
        EncoderParams::Identity { dim }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            EncoderParams::Identity { dim } => *dim,
            EncoderParams::Mlp(m) => m.config.input_dim,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            EncoderParams::Identity { dim } => *dim,
            EncoderParams::Mlp(m) => m.config.embed_dim,
        }
    }

    pub fn block_names(&self) -> Vec<String> {
        match self {
            EncoderParams::Identity { .. } => Vec::new(),
            EncoderParams::Mlp(m) => {
                let mut names = Vec::new();
                for j in 0..m.layers.len() {
                    names.push(format!("encoder.w{j}"));
                    names.push(format!("encoder.b{j}"));
                }
                names
            }
        }
    }

    pub fn blocks(&self) -> Vec<&[f64]> {
        match self {
            EncoderParams::Identity { .. } => Vec::new(),
            EncoderParams::Mlp(m) => {
                let mut out = Vec::new();
                for l in &m.layers {
                    out.push(l.weight.data());
                    out.push(l.bias.as_slice());
                }
                out
            }
        }
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            EncoderParams::Identity { .. } => Vec::new(),
            EncoderParams::Mlp(m) => {
                let mut out = Vec::new();
                for l in &mut m.layers {
                    out.push(l.weight.data_mut());
                    out.push(l.bias.as_mut_slice());
                }
                out
            }
        }
    }

    pub fn bind(&self, tape: &mut Tape) -> TapedEncoder {
        match self {
            EncoderParams::Identity { dim } => {
                TapedEncoder { layers: Vec::new(), param_ids: Vec::new(), input_dim: *dim }
            }
            EncoderParams::Mlp(m) => {
                let mut layers = Vec::new();
                let mut param_ids = Vec::new();
                for l in &m.layers {
                    let w = tape.leaf_mat(&l.weight);
                    let b = tape.leaf(&l.bias, 1, l.bias.len());
                    param_ids.push(w);
                    param_ids.push(b);
                    layers.push((w, b));
                }
                TapedEncoder { layers, param_ids, input_dim: m.config.input_dim }
            }
        }
    }

    /// Encode a single raw vector on a scratch tape.
    pub fn encode_value(&self, a: &[f64]) -> Result<Vec<f64>> {
        if a.len() != self.input_dim() {
            return Err(NbdError::DimensionMismatch { expected: self.input_dim(), got: a.len() });
        }
        let mut tape = Tape::new();
        let ai = tape.leaf(a, 1, a.len());
        let bound = self.bind(&mut tape);
        let e = bound.encode(&mut tape, ai);
        Ok(tape.value(e).to_vec())
    }

    /// Encode every row of `a` on a scratch tape.
    pub fn encode_batch(&self, a: &Mat) -> Result<Mat> {
        if a.cols() != self.input_dim() {
            return Err(NbdError::DimensionMismatch { expected: self.input_dim(), got: a.cols() });
        }
        let mut tape = Tape::new();
        let ai = tape.leaf_mat(a);
        let bound = self.bind(&mut tape);
        let e = bound.encode(&mut tape, ai);
        Ok(tape.value_mat(e))
    }
}

/// Encoder bound to one tape.
pub struct TapedEncoder {
    layers: Vec<(TensorId, TensorId)>,
    param_ids: Vec<TensorId>,
    input_dim: usize,
}

impl TapedEncoder {
    pub fn param_ids(&self) -> &[TensorId] {
        &self.param_ids
    }

    /// Forward pass over a batch: `a: r x input_dim` -> `r x embed_dim`.
    /// Hidden layers are Softplus, the final layer is linear; the identity
    /// encoder returns its input node unchanged.
    pub fn encode(&self, tape: &mut Tape, a: TensorId) -> TensorId {
        assert_eq!(tape.shape(a).1, self.input_dim, "encoder input dim mismatch");
        if self.layers.is_empty() {
            return a;
        }
        let mut z = a;
        let last = self.layers.len() - 1;
        for (j, (w, b)) in self.layers.iter().enumerate() {
            let h = tape.linear(z, *w);
            let h = tape.add_row(h, *b);
            z = if j == last { h } else { tape.softplus(h) };
        }
        z
    }
}
