//! Bregman divergences: D(x, y) = phi(x) - phi(y) - <grad phi(y), x - y>.
//!
//! The inner-product term of the single-pair path is computed as a
//! Jacobian-vector product (the tangent output of phi evaluated on a dual
//! input), which costs about one extra phi evaluation and stays on the
//! tape so that losses built on top of it differentiate through it. The
//! pairwise path evaluates phi and grad phi in batch and assembles the
//! divergence matrix from inner products.

use serde::{Deserialize, Serialize};

use crate::autodiff::dual::{
    d_add_const, d_linear, d_log, d_mul, d_row_dot, d_row_sum, Dual, TapeFn,
};
use crate::autodiff::tape::{Tape, TensorId};
use crate::encoder::{EncoderParams, TapedEncoder};
use crate::error::{NbdError, Result};
use crate::icnn::{IcnnParams, TapedIcnn};
use crate::linalg::{cholesky, Mat};

/// Entries at or below this are rejected by log-based generator domains.
pub const DOMAIN_EPS: f64 = 1e-12;
/// Added inside square roots to keep the gradient finite at zero divergence.
pub const SQRT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClosedFormKind {
    SqEuclidean,
    Mahalanobis,
    XLogX,
    ShiftedXLogX,
    KlPositive,
}

/// A generator with an analytic gradient and hand-derived divergence,
/// usable both as a reference oracle and on the tape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedFormGenerator {
    pub kind: ClosedFormKind,
    /// Symmetric positive definite matrix for the Mahalanobis generator.
    pub a: Option<Mat>,
}

impl ClosedFormGenerator {
    pub fn sq_euclidean() -> Self {
        ClosedFormGenerator { kind: ClosedFormKind::SqEuclidean, a: None }
    }

    pub fn mahalanobis(a: Mat) -> Result<Self> {
        let n = a.rows();
        if n != a.cols() {
            return Err(NbdError::NotSpd);
        }
        for i in 0..n {
            for j in 0..n {
                if (a[(i, j)] - a[(j, i)]).abs() > 1e-9 * (1.0 + a[(i, j)].abs()) {
                    return Err(NbdError::NotSpd);
                }
            }
        }
        cholesky(&a)?;
        Ok(ClosedFormGenerator { kind: ClosedFormKind::Mahalanobis, a: Some(a) })
    }

    /// phi(x) = sum_i x_i log x_i on the positive orthant.
    pub fn xlogx() -> Self {
        ClosedFormGenerator { kind: ClosedFormKind::XLogX, a: None }
    }

    /// phi(x) = sum_i (x_i + 1) log (x_i + 1).
    pub fn shifted_xlogx() -> Self {
        ClosedFormGenerator { kind: ClosedFormKind::ShiftedXLogX, a: None }
    }

    /// phi(x) = <x, log x>; yields the KL divergence on the simplex.
    pub fn kl_positive() -> Self {
        ClosedFormGenerator { kind: ClosedFormKind::KlPositive, a: None }
    }

    fn log_shift(&self) -> Option<f64> {
        match self.kind {
            ClosedFormKind::XLogX | ClosedFormKind::KlPositive => Some(0.0),
            ClosedFormKind::ShiftedXLogX => Some(1.0),
            _ => None,
        }
    }

    pub fn check_domain(&self, x: &[f64]) -> Result<()> {
        if let Some(shift) = self.log_shift() {
            for &v in x {
                if v + shift <= DOMAIN_EPS {
                    return Err(NbdError::Domain(format!(
                        "entry {v} outside the generator domain (log argument <= {DOMAIN_EPS})"
                    )));
                }
            }
        }
        Ok(())
    }

    fn expect_dim(&self, d: usize) -> Result<()> {
        if let Some(a) = &self.a {
            if a.rows() != d {
                return Err(NbdError::DimensionMismatch { expected: a.rows(), got: d });
            }
        }
        Ok(())
    }

    pub fn phi(&self, x: &[f64]) -> Result<f64> {
        self.expect_dim(x.len())?;
        self.check_domain(x)?;
        Ok(match self.kind {
            ClosedFormKind::SqEuclidean => x.iter().map(|v| v * v).sum(),
            ClosedFormKind::Mahalanobis => {
                let a = self.a.as_ref().unwrap();
                let mut s = 0.0;
                for i in 0..x.len() {
                    for j in 0..x.len() {
                        s += x[i] * a[(i, j)] * x[j];
                    }
                }
                s
            }
            ClosedFormKind::XLogX | ClosedFormKind::KlPositive => {
                x.iter().map(|&v| v * v.ln()).sum()
            }
            ClosedFormKind::ShiftedXLogX => x.iter().map(|&v| (v + 1.0) * (v + 1.0).ln()).sum(),
        })
    }

    /// Analytic gradient of phi.
    pub fn grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.expect_dim(x.len())?;
        self.check_domain(x)?;
        Ok(match self.kind {
            ClosedFormKind::SqEuclidean => x.iter().map(|v| 2.0 * v).collect(),
            ClosedFormKind::Mahalanobis => {
                let a = self.a.as_ref().unwrap();
                (0..x.len())
                    .map(|i| 2.0 * (0..x.len()).map(|j| a[(i, j)] * x[j]).sum::<f64>())
                    .collect()
            }
            ClosedFormKind::XLogX | ClosedFormKind::KlPositive => {
                x.iter().map(|&v| 1.0 + v.ln()).collect()
            }
            ClosedFormKind::ShiftedXLogX => x.iter().map(|&v| 1.0 + (v + 1.0).ln()).collect(),
        })
    }

    /// Hand-derived closed-form divergence; the independent route against
    /// which the JVP evaluation is checked.
    pub fn divergence(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != y.len() {
            return Err(NbdError::DimensionMismatch { expected: x.len(), got: y.len() });
        }
        self.expect_dim(x.len())?;
        self.check_domain(x)?;
        self.check_domain(y)?;
        Ok(match self.kind {
            ClosedFormKind::SqEuclidean => {
                x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
            }
            ClosedFormKind::Mahalanobis => {
                let a = self.a.as_ref().unwrap();
                let diff: Vec<f64> = x.iter().zip(y).map(|(p, q)| p - q).collect();
                let mut s = 0.0;
                for i in 0..diff.len() {
                    for j in 0..diff.len() {
                        s += diff[i] * a[(i, j)] * diff[j];
                    }
                }
                s
            }
            ClosedFormKind::XLogX | ClosedFormKind::KlPositive => x
                .iter()
                .zip(y)
                .map(|(&p, &q)| p * (p / q).ln() - (p - q))
                .sum(),
            ClosedFormKind::ShiftedXLogX => x
                .iter()
                .zip(y)
                .map(|(&p, &q)| {
                    let (u, v) = (p + 1.0, q + 1.0);
                    u * (u / v).ln() - (u - v)
                })
                .sum(),
        })
    }
}

/// A generating function usable in [`bregman`]: closed-form or learned.
#[derive(Debug, Clone, Copy)]
pub enum GeneratorFn<'a> {
    Closed(&'a ClosedFormGenerator),
    Icnn(&'a IcnnParams),
}

impl<'a> GeneratorFn<'a> {
    pub fn input_dim(&self) -> Option<usize> {
        match self {
            GeneratorFn::Closed(g) => g.a.as_ref().map(|a| a.rows()),
            GeneratorFn::Icnn(p) => Some(p.input_dim()),
        }
    }

    pub fn check_domain_rows(&self, x: &Mat) -> Result<()> {
        if let GeneratorFn::Closed(g) = self {
            for i in 0..x.rows() {
                g.check_domain(x.row(i))?;
            }
        }
        Ok(())
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        if let Some(want) = self.input_dim() {
            if want != d {
                return Err(NbdError::DimensionMismatch { expected: want, got: d });
            }
        }
        Ok(())
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundGenerator {
        match self {
            GeneratorFn::Closed(g) => {
                let a = g.a.as_ref().map(|m| tape.leaf_mat(m));
                BoundGenerator::Closed { kind: g.kind, a }
            }
            GeneratorFn::Icnn(p) => BoundGenerator::Icnn(p.bind(tape)),
        }
    }
}

/// A generator bound to one tape.
pub enum BoundGenerator {
    Closed { kind: ClosedFormKind, a: Option<TensorId> },
    Icnn(TapedIcnn),
}

impl BoundGenerator {
    /// phi on every batch row: `r x d` -> `r x 1`.
    pub fn phi(&self, tape: &mut Tape, x: TensorId) -> TensorId {
        match self {
            BoundGenerator::Icnn(p) => p.phi(tape, x),
            BoundGenerator::Closed { kind, a } => match kind {
                ClosedFormKind::SqEuclidean => tape.row_dot(x, x),
                ClosedFormKind::Mahalanobis => {
                    let ax = tape.linear(x, a.unwrap());
                    tape.row_dot(x, ax)
                }
                ClosedFormKind::XLogX | ClosedFormKind::KlPositive => {
                    let l = tape.log(x);
                    let xl = tape.mul(x, l);
                    tape.row_sum(xl)
                }
                ClosedFormKind::ShiftedXLogX => {
                    let u = tape.add_const(x, 1.0);
                    let l = tape.log(u);
                    let ul = tape.mul(u, l);
                    tape.row_sum(ul)
                }
            },
        }
    }

    /// phi on a dual input; the tangent output is the rowwise JVP.
    pub fn phi_dual(&self, tape: &mut Tape, x: Dual) -> Dual {
        match self {
            BoundGenerator::Icnn(p) => p.phi_dual(tape, x),
            BoundGenerator::Closed { kind, a } => match kind {
                ClosedFormKind::SqEuclidean => d_row_dot(tape, x, x),
                ClosedFormKind::Mahalanobis => {
                    let ax = d_linear(tape, x, a.unwrap());
                    d_row_dot(tape, x, ax)
                }
                ClosedFormKind::XLogX | ClosedFormKind::KlPositive => {
                    let l = d_log(tape, x);
                    let xl = d_mul(tape, x, l);
                    d_row_sum(tape, xl)
                }
                ClosedFormKind::ShiftedXLogX => {
                    let u = d_add_const(tape, x, 1.0);
                    let l = d_log(tape, u);
                    let ul = d_mul(tape, u, l);
                    d_row_sum(tape, ul)
                }
            },
        }
    }

    /// grad phi on every batch row: `r x d` -> `r x d`.
    pub fn grad(&self, tape: &mut Tape, x: TensorId) -> TensorId {
        match self {
            BoundGenerator::Icnn(p) => p.grad_input(tape, x),
            BoundGenerator::Closed { kind, a } => match kind {
                ClosedFormKind::SqEuclidean => tape.scale(x, 2.0),
                ClosedFormKind::Mahalanobis => {
                    let ax = tape.linear(x, a.unwrap());
                    tape.scale(ax, 2.0)
                }
                ClosedFormKind::XLogX | ClosedFormKind::KlPositive => {
                    let l = tape.log(x);
                    tape.add_const(l, 1.0)
                }
                ClosedFormKind::ShiftedXLogX => {
                    let u = tape.add_const(x, 1.0);
                    let l = tape.log(u);
                    tape.add_const(l, 1.0)
                }
            },
        }
    }
}

impl TapeFn for BoundGenerator {
    fn eval(&self, tape: &mut Tape, x: TensorId) -> TensorId {
        self.phi(tape, x)
    }
    fn eval_dual(&self, tape: &mut Tape, x: Dual) -> Dual {
        self.phi_dual(tape, x)
    }
}

/// Record `D(x, y)` rowwise on the tape with the inner product computed as
/// a JVP: `r x d` pairs -> `r x 1` divergences.
pub fn record_bregman_batch(
    tape: &mut Tape,
    gen: &BoundGenerator,
    x: TensorId,
    y: TensorId,
) -> TensorId {
    let v = tape.sub(x, y);
    let phix = gen.phi(tape, x);
    let dual = gen.phi_dual(tape, Dual { primal: y, tangent: v });
    let head = tape.sub(phix, dual.primal);
    tape.sub(head, dual.tangent)
}

/// Record the full pairwise divergence matrix `D(x_i, y_j)` on the tape
/// from batched phi and grad-phi evaluations: `n x d`, `m x d` -> `n x m`.
pub fn record_bregman_pairwise(
    tape: &mut Tape,
    gen: &BoundGenerator,
    x: TensorId,
    y: TensorId,
) -> TensorId {
    let phix = gen.phi(tape, x);
    let phiy = gen.phi(tape, y);
    let g = gen.grad(tape, y);
    let xg = tape.linear(x, g);
    let rd = tape.row_dot(g, y);
    let t = tape.neg(xg);
    let t = tape.add_col(t, phix);
    let rv = tape.sub(rd, phiy);
    let rvt = tape.transpose(rv);
    tape.add_row(t, rvt)
}

fn check_same_dim(x: &Mat, y: &Mat) -> Result<()> {
    if x.cols() != y.cols() {
        return Err(NbdError::DimensionMismatch { expected: x.cols(), got: y.cols() });
    }
    Ok(())
}

/// Bregman divergence of a single pair via Eq-style JVP evaluation.
pub fn bregman(gen: &GeneratorFn, x: &[f64], y: &[f64]) -> Result<f64> {
    let xm = Mat::from_vec(1, x.len(), x.to_vec());
    let ym = Mat::from_vec(1, y.len(), y.to_vec());
    Ok(bregman_batch(gen, &xm, &ym)?[0])
}

/// Rowwise divergences for aligned batches.
pub fn bregman_batch(gen: &GeneratorFn, x: &Mat, y: &Mat) -> Result<Vec<f64>> {
    check_same_dim(x, y)?;
    if x.rows() != y.rows() {
        return Err(NbdError::DimensionMismatch { expected: x.rows(), got: y.rows() });
    }
    gen.check_dim(x.cols())?;
    gen.check_domain_rows(x)?;
    gen.check_domain_rows(y)?;
    let mut tape = Tape::new();
    let xi = tape.leaf_mat(x);
    let yi = tape.leaf_mat(y);
    let bound = gen.bind(&mut tape);
    let d = record_bregman_batch(&mut tape, &bound, xi, yi);
    Ok(tape.value(d).to_vec())
}

/// Full `n x m` divergence matrix between the rows of `x` and of `y`.
pub fn bregman_pairwise(gen: &GeneratorFn, x: &Mat, y: &Mat) -> Result<Mat> {
    check_same_dim(x, y)?;
    gen.check_dim(x.cols())?;
    gen.check_domain_rows(x)?;
    gen.check_domain_rows(y)?;
    let mut tape = Tape::new();
    let xi = tape.leaf_mat(x);
    let yi = tape.leaf_mat(y);
    let bound = gen.bind(&mut tape);
    let d = record_bregman_pairwise(&mut tape, &bound, xi, yi);
    Ok(tape.value_mat(d))
}

// ---------------------------------------------------------------------------
// Learned divergence models
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DivergenceVariant {
    Plain,
    Sqrt,
    Gsb,
}

/// The generating function inside a divergence model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ModelGenerator {
    Icnn(IcnnParams),
    Closed(ClosedFormGenerator),
}

/// The trainable unit: encoder plus generating function plus variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceModel {
    pub encoder: EncoderParams,
    pub generator: ModelGenerator,
    pub variant: DivergenceVariant,
}

impl DivergenceModel {
    pub fn new(
        encoder: EncoderParams,
        generator: ModelGenerator,
        variant: DivergenceVariant,
    ) -> Result<Self> {
        let model = DivergenceModel { encoder, generator, variant };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if let ModelGenerator::Icnn(p) = &self.generator {
            if p.input_dim() != self.encoder.output_dim() {
                return Err(NbdError::Config(format!(
                    "encoder output dim {} does not match generator input dim {}",
                    self.encoder.output_dim(),
                    p.input_dim()
                )));
            }
        }
        if self.variant == DivergenceVariant::Gsb {
            if !matches!(self.generator, ModelGenerator::Icnn(_)) {
                return Err(NbdError::Config(
                    "the generalized symmetrized variant requires a learned generator".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    fn generator_fn(&self) -> GeneratorFn<'_> {
        match &self.generator {
            ModelGenerator::Icnn(p) => GeneratorFn::Icnn(p),
            ModelGenerator::Closed(c) => GeneratorFn::Closed(c),
        }
    }

    /// Bind encoder and generator to a tape for evaluation or training.
    pub fn bind(&self, tape: &mut Tape) -> BoundModel {
        BoundModel {
            encoder: self.encoder.bind(tape),
            generator: self.generator_fn().bind(tape),
            variant: self.variant,
        }
    }
}

/// A divergence model bound to one tape.
pub struct BoundModel {
    pub encoder: TapedEncoder,
    pub generator: BoundGenerator,
    pub variant: DivergenceVariant,
}

impl BoundModel {
    /// All trainable parameter leaves, encoder first then generator,
    /// aligned with [`crate::train::model_blocks`].
    pub fn param_ids(&self) -> Vec<TensorId> {
        let mut ids = self.encoder.param_ids().to_vec();
        if let BoundGenerator::Icnn(p) = &self.generator {
            ids.extend_from_slice(p.param_ids());
        }
        ids
    }

    /// Record the rowwise learned divergence for aligned raw batches.
    pub fn divergence_batch(&self, tape: &mut Tape, a: TensorId, b: TensorId) -> TensorId {
        let x = self.encoder.encode(tape, a);
        let y = self.encoder.encode(tape, b);
        match self.variant {
            DivergenceVariant::Plain => record_bregman_batch(tape, &self.generator, x, y),
            DivergenceVariant::Sqrt => {
                let d = record_bregman_batch(tape, &self.generator, x, y);
                clamp_sqrt(tape, d)
            }
            DivergenceVariant::Gsb => self.record_gsb_batch(tape, x, y),
        }
    }

    /// sqrt(D(x,y) + D(y,x) + 0.5 ||x-y||^2 + 0.5 ||grad phi(x) - grad phi(y)||^2)
    /// per row; exactly symmetric in its two arguments.
    fn record_gsb_batch(&self, tape: &mut Tape, x: TensorId, y: TensorId) -> TensorId {
        let v = tape.sub(x, y);
        let gx = self.generator.grad(tape, x);
        let gy = self.generator.grad(tape, y);
        let phix = self.generator.phi(tape, x);
        let phiy = self.generator.phi(tape, y);

        let rd_gy_v = tape.row_dot(gy, v);
        let t = tape.sub(phix, phiy);
        let d_xy = tape.sub(t, rd_gy_v);

        let vneg = tape.neg(v);
        let rd_gx_vn = tape.row_dot(gx, vneg);
        let t = tape.sub(phiy, phix);
        let d_yx = tape.sub(t, rd_gx_vn);

        let both = tape.add(d_xy, d_yx);
        let vv = tape.row_dot(v, v);
        let h1 = tape.scale(vv, 0.5);
        let gd = tape.sub(gx, gy);
        let gg = tape.row_dot(gd, gd);
        let h2 = tape.scale(gg, 0.5);
        let s = tape.add(both, h1);
        let s = tape.add(s, h2);
        clamp_sqrt(tape, s)
    }

    /// Record the `n x m` pairwise learned divergence matrix.
    pub fn pairwise(&self, tape: &mut Tape, a: TensorId, b: TensorId) -> TensorId {
        let x = self.encoder.encode(tape, a);
        let y = self.encoder.encode(tape, b);
        match self.variant {
            DivergenceVariant::Plain => record_bregman_pairwise(tape, &self.generator, x, y),
            DivergenceVariant::Sqrt => {
                let d = record_bregman_pairwise(tape, &self.generator, x, y);
                clamp_sqrt(tape, d)
            }
            DivergenceVariant::Gsb => {
                let gx = self.generator.grad(tape, x);
                let gy = self.generator.grad(tape, y);
                // D(x_i,y_j) + D(y_j,x_i) = <gx_i - gy_j, x_i - y_j>.
                let rxx = tape.row_dot(gx, x);
                let ryy = tape.row_dot(gy, y);
                let cross_a = tape.linear(gx, y);
                let cross_b = tape.linear(x, gy);
                let t = tape.add(cross_a, cross_b);
                let t = tape.neg(t);
                let t = tape.add_col(t, rxx);
                let ryyt = tape.transpose(ryy);
                let both = tape.add_row(t, ryyt);

                let h1 = pairwise_half_sq(tape, x, y);
                let h2 = pairwise_half_sq(tape, gx, gy);
                let s = tape.add(both, h1);
                let s = tape.add(s, h2);
                clamp_sqrt(tape, s)
            }
        }
    }
}

/// 0.5 ||u_i - w_j||^2 as an `n x m` matrix of tape nodes.
fn pairwise_half_sq(tape: &mut Tape, u: TensorId, w: TensorId) -> TensorId {
    let uu = tape.row_dot(u, u);
    let ww = tape.row_dot(w, w);
    let uw = tape.linear(u, w);
    let t = tape.neg(uw);
    let huu = tape.scale(uu, 0.5);
    let hww = tape.scale(ww, 0.5);
    let t = tape.add_col(t, huu);
    let hwt = tape.transpose(hww);
    tape.add_row(t, hwt)
}

/// sqrt(max(d, 0) + eps): the clamp only engages on negative floating-point
/// noise, and the epsilon keeps the gradient finite at zero.
fn clamp_sqrt(tape: &mut Tape, d: TensorId) -> TensorId {
    let c = tape.max_const(d, 0.0);
    let c = tape.add_const(c, SQRT_EPS);
    tape.sqrt_positive(c)
}

fn model_check_inputs(model: &DivergenceModel, a: &Mat, b: &Mat) -> Result<()> {
    if a.cols() != model.input_dim() {
        return Err(NbdError::DimensionMismatch { expected: model.input_dim(), got: a.cols() });
    }
    if b.cols() != model.input_dim() {
        return Err(NbdError::DimensionMismatch { expected: model.input_dim(), got: b.cols() });
    }
    Ok(())
}

/// The learned divergence of a single raw pair.
pub fn learned_divergence(model: &DivergenceModel, a: &[f64], b: &[f64]) -> Result<f64> {
    let am = Mat::from_vec(1, a.len(), a.to_vec());
    let bm = Mat::from_vec(1, b.len(), b.to_vec());
    Ok(learned_divergence_batch(model, &am, &bm)?[0])
}

/// Rowwise learned divergences for aligned raw batches.
pub fn learned_divergence_batch(model: &DivergenceModel, a: &Mat, b: &Mat) -> Result<Vec<f64>> {
    model_check_inputs(model, a, b)?;
    if a.rows() != b.rows() {
        return Err(NbdError::DimensionMismatch { expected: a.rows(), got: b.rows() });
    }
    let mut tape = Tape::new();
    let ai = tape.leaf_mat(a);
    let bi = tape.leaf_mat(b);
    let bound = model.bind(&mut tape);
    let d = bound.divergence_batch(&mut tape, ai, bi);
    Ok(tape.value(d).to_vec())
}

/// Full pairwise learned divergence matrix between the rows of `a` and `b`.
pub fn learned_pairwise(model: &DivergenceModel, a: &Mat, b: &Mat) -> Result<Mat> {
    model_check_inputs(model, a, b)?;
    let mut tape = Tape::new();
    let ai = tape.leaf_mat(a);
    let bi = tape.leaf_mat(b);
    let bound = model.bind(&mut tape);
    let d = bound.pairwise(&mut tape, ai, bi);
    Ok(tape.value_mat(d))
}
