//! The generating function phi as a fully input-convex neural network.
//!
//! Hidden layers use Softplus activations; weights acting on hidden
//! activations are kept strictly positive through a softplus
//! reparametrization of raw unconstrained parameters, and unconstrained
//! skip connections feed the raw input into every layer. The first layer
//! is affine-only in the input. Composition of nonnegative-weight affine
//! maps with a convex nondecreasing activation makes the network convex in
//! its input; an optional `alpha * ||x||^2` term makes it strictly convex.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::dual::{
    d_add, d_add_row, d_linear, d_row_dot, d_scale, d_softplus, Dual, TapeFn,
};
use crate::autodiff::tape::{softplus_inverse, Tape, TensorId};
use crate::error::{NbdError, Result};
use crate::linalg::Mat;

/// Architecture of the generating function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcnnConfig {
    pub input_dim: usize,
    /// Widths of the hidden layers (the output layer is always scalar).
    pub hidden_widths: Vec<usize>,
    /// Coefficient of the added `alpha * ||x||^2` strict-convexity term.
    pub alpha: f64,
}

impl IcnnConfig {
    pub fn new(input_dim: usize) -> Self {
        IcnnConfig { input_dim, hidden_widths: vec![128, 128], alpha: 1e-3 }
    }

    pub fn with_widths(input_dim: usize, hidden_widths: Vec<usize>) -> Self {
        IcnnConfig { input_dim, hidden_widths, alpha: 1e-3 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(NbdError::Config("input_dim must be positive".into()));
        }
        if self.hidden_widths.is_empty() || self.hidden_widths.contains(&0) {
            return Err(NbdError::Config("hidden_widths must be non-empty and positive".into()));
        }
        if self.alpha < 0.0 {
            return Err(NbdError::Config("alpha must be non-negative".into()));
        }
        Ok(())
    }
}

/// One layer: an unconstrained skip from the input, an optional
/// reparametrized nonnegative weight on the previous activation, and a bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcnnStage {
    /// Skip weights applied to the raw input, `width x input_dim`.
    pub skip: Mat,
    /// Raw parameters of the nonnegative weights, `width x prev_width`;
    /// the effective weight is `softplus(raw)`. Absent for the first layer.
    pub nonneg_raw: Option<Mat>,
    /// Bias, length `width`.
    pub bias: Vec<f64>,
}

/// Parameters of the generating function phi.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcnnParams {
    pub config: IcnnConfig,
    /// Hidden stages followed by the scalar output stage.
    pub stages: Vec<IcnnStage>,
    /// Fixed positive multiplier applied to phi. Scaling a convex generator
    /// scales its divergence, so training loops set this to the target
    /// magnitude instead of pushing the reparametrized weights through
    /// orders of magnitude.
    #[serde(default = "one")]
    pub output_scale: f64,
}

fn one() -> f64 {
    1.0
}

/// Deterministic initialization: effective nonnegative weights start with
/// mean ~ 1/fan_in, skip weights are zero-mean with 1/sqrt(fan_in) scale,
/// biases are zero.
pub fn init_icnn(config: &IcnnConfig, seed: u64) -> Result<IcnnParams> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = config.input_dim;
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut stages = Vec::new();
    let mut widths = config.hidden_widths.clone();
    widths.push(1);
    let mut prev = 0usize;
    for (j, &w) in widths.iter().enumerate() {
        let skip_scale = 1.0 / (d as f64).sqrt();
        let mut skip = Mat::zeros(w, d);
        for v in skip.data_mut() {
            *v = normal.sample(&mut rng) * skip_scale;
        }
        let nonneg_raw = if j == 0 {
            None
        } else {
            let fan_in = prev as f64;
            let mut raw = Mat::zeros(w, prev);
            for v in raw.data_mut() {
                let target = rng.gen_range(0.5..1.5) / fan_in;
                *v = softplus_inverse(target);
            }
            Some(raw)
        };
        stages.push(IcnnStage { skip, nonneg_raw, bias: vec![0.0; w] });
        prev = w;
    }
    Ok(IcnnParams { config: config.clone(), stages, output_scale: 1.0 })
}

impl IcnnParams {
    pub fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    /// Named flat views of every trainable block, in a fixed order shared
    /// with [`IcnnParams::bind`].
    pub fn block_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (j, st) in self.stages.iter().enumerate() {
            names.push(format!("icnn.skip{j}"));
            if st.nonneg_raw.is_some() {
                names.push(format!("icnn.w{j}"));
            }
            names.push(format!("icnn.b{j}"));
        }
        names
    }

    pub fn blocks(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for st in &self.stages {
            out.push(st.skip.data());
            if let Some(w) = &st.nonneg_raw {
                out.push(w.data());
            }
            out.push(st.bias.as_slice());
        }
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for st in &mut self.stages {
            out.push(st.skip.data_mut());
            if let Some(w) = &mut st.nonneg_raw {
                out.push(w.data_mut());
            }
            out.push(st.bias.as_mut_slice());
        }
        out
    }

    /// Register every parameter on a tape and precompute the softplus
    /// reparametrization once; the returned handle evaluates phi.
    pub fn bind(&self, tape: &mut Tape) -> TapedIcnn {
        let mut param_ids = Vec::new();
        let mut stages = Vec::new();
        for st in &self.stages {
            let skip = tape.leaf_mat(&st.skip);
            param_ids.push(skip);
            let w_pos = st.nonneg_raw.as_ref().map(|raw| {
                let raw_id = tape.leaf_mat(raw);
                param_ids.push(raw_id);
                tape.softplus(raw_id)
            });
            let bias = tape.leaf(&st.bias, 1, st.bias.len());
            param_ids.push(bias);
            stages.push(TapedStage { skip, w_pos, bias });
        }
        TapedIcnn {
            stages,
            param_ids,
            alpha: self.config.alpha,
            input_dim: self.config.input_dim,
            output_scale: self.output_scale,
        }
    }

    /// Evaluate phi at a single point on a scratch tape.
    pub fn phi_value(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.config.input_dim {
            return Err(NbdError::DimensionMismatch { expected: self.config.input_dim, got: x.len() });
        }
        let mut tape = Tape::new();
        let xi = tape.leaf(x, 1, x.len());
        let bound = self.bind(&mut tape);
        let out = bound.phi(&mut tape, xi);
        Ok(tape.value_scalar(out))
    }

    /// Evaluate phi on every row of `x` on a scratch tape.
    pub fn phi_batch(&self, x: &Mat) -> Result<Vec<f64>> {
        if x.cols() != self.config.input_dim {
            return Err(NbdError::DimensionMismatch { expected: self.config.input_dim, got: x.cols() });
        }
        let mut tape = Tape::new();
        let xi = tape.leaf_mat(x);
        let bound = self.bind(&mut tape);
        let out = bound.phi(&mut tape, xi);
        Ok(tape.value(out).to_vec())
    }

    /// Analytic input gradient of phi on every row of `x`, evaluated via the
    /// taped gradient expression.
    pub fn grad_batch(&self, x: &Mat) -> Result<Mat> {
        if x.cols() != self.config.input_dim {
            return Err(NbdError::DimensionMismatch { expected: self.config.input_dim, got: x.cols() });
        }
        let mut tape = Tape::new();
        let xi = tape.leaf_mat(x);
        let bound = self.bind(&mut tape);
        let g = bound.grad_input(&mut tape, xi);
        Ok(tape.value_mat(g))
    }
}

struct TapedStage {
    skip: TensorId,
    w_pos: Option<TensorId>,
    bias: TensorId,
}

/// phi bound to one tape. All evaluation paths (plain, dual, input
/// gradient) are recorded on the tape and therefore differentiable with
/// respect to the registered parameters.
pub struct TapedIcnn {
    stages: Vec<TapedStage>,
    param_ids: Vec<TensorId>,
    alpha: f64,
    input_dim: usize,
    output_scale: f64,
}

impl TapedIcnn {
    /// Tape ids of the raw parameter leaves, aligned with
    /// [`IcnnParams::blocks`].
    pub fn param_ids(&self) -> &[TensorId] {
        &self.param_ids
    }

    /// phi over a batch: `x: r x d` -> `r x 1`.
    pub fn phi(&self, tape: &mut Tape, x: TensorId) -> TensorId {
        assert_eq!(tape.shape(x).1, self.input_dim, "phi input dim mismatch");
        let mut z: Option<TensorId> = None;
        let last = self.stages.len() - 1;
        for (j, st) in self.stages.iter().enumerate() {
            let mut a = tape.linear(x, st.skip);
            if let (Some(w), Some(prev)) = (st.w_pos, z) {
                let h = tape.linear(prev, w);
                a = tape.add(h, a);
            }
            a = tape.add_row(a, st.bias);
            z = Some(if j == last { a } else { tape.softplus(a) });
        }
        let mut out = z.expect("at least one stage");
        if self.output_scale != 1.0 {
            out = tape.scale(out, self.output_scale);
        }
        if self.alpha != 0.0 {
            let sq = tape.row_dot(x, x);
            let reg = tape.scale(sq, self.alpha);
            out = tape.add(out, reg);
        }
        out
    }

    /// phi on a dual input; the tangent output is the directional
    /// derivative `<grad phi(primal), tangent>` per batch row.
    pub fn phi_dual(&self, tape: &mut Tape, x: Dual) -> Dual {
        assert_eq!(tape.shape(x.primal).1, self.input_dim, "phi input dim mismatch");
        let mut z: Option<Dual> = None;
        let last = self.stages.len() - 1;
        for (j, st) in self.stages.iter().enumerate() {
            let mut a = d_linear(tape, x, st.skip);
            if let (Some(w), Some(prev)) = (st.w_pos, z) {
                let h = d_linear(tape, prev, w);
                a = d_add(tape, h, a);
            }
            a = d_add_row(tape, a, st.bias);
            z = Some(if j == last { a } else { d_softplus(tape, a) });
        }
        let mut out = z.expect("at least one stage");
        if self.output_scale != 1.0 {
            out = d_scale(tape, out, self.output_scale);
        }
        if self.alpha != 0.0 {
            let sq = d_row_dot(tape, x, x);
            let reg = d_scale(tape, sq, self.alpha);
            out = d_add(tape, out, reg);
        }
        out
    }

    /// Input gradient of phi on every batch row, `x: r x d` -> `r x d`,
    /// built from the layer chain rule so it remains differentiable in the
    /// parameters (needed by the generalized symmetrized divergence).
    pub fn grad_input(&self, tape: &mut Tape, x: TensorId) -> TensorId {
        let (r, d) = tape.shape(x);
        assert_eq!(d, self.input_dim, "phi input dim mismatch");
        // Forward, caching pre-activation sigmoids of the hidden stages.
        let mut z: Option<TensorId> = None;
        let mut gates: Vec<TensorId> = Vec::new();
        let last = self.stages.len() - 1;
        for st in self.stages.iter().take(last) {
            let mut a = tape.linear(x, st.skip);
            if let (Some(w), Some(prev)) = (st.w_pos, z) {
                let h = tape.linear(prev, w);
                a = tape.add(h, a);
            }
            a = tape.add_row(a, st.bias);
            gates.push(tape.sigmoid(a));
            z = Some(tape.softplus(a));
        }
        // Sensitivity of the scalar output with respect to the last hidden
        // activation is the output weight row, broadcast over the batch.
        let out_stage = &self.stages[last];
        let w_out = out_stage.w_pos.expect("output stage has nonneg weights");
        let (_, h_last) = tape.shape(gates[last - 1]);
        let zeros = tape.zeros(r, h_last);
        let mut dz = tape.add_row(zeros, w_out);

        // Skip contribution of the output stage.
        let g0 = tape.zeros(r, d);
        let mut grad = tape.add_row(g0, out_stage.skip);

        // Walk the hidden stages backwards.
        for j in (0..last).rev() {
            let da = tape.mul(gates[j], dz);
            let skip_part = tape.linear_t(da, self.stages[j].skip);
            grad = tape.add(grad, skip_part);
            if j > 0 {
                let w = self.stages[j].w_pos.expect("hidden stage beyond the first has weights");
                dz = tape.linear_t(da, w);
            }
        }
        if self.output_scale != 1.0 {
            grad = tape.scale(grad, self.output_scale);
        }
        if self.alpha != 0.0 {
            let sx = tape.scale(x, 2.0 * self.alpha);
            grad = tape.add(grad, sx);
        }
        grad
    }
}

impl TapeFn for TapedIcnn {
    fn eval(&self, tape: &mut Tape, x: TensorId) -> TensorId {
        self.phi(tape, x)
    }
    fn eval_dual(&self, tape: &mut Tape, x: Dual) -> Dual {
        self.phi_dual(tape, x)
    }
}
