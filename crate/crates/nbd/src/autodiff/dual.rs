//! Forward-mode tangents propagated through the reverse-mode tape.
//!
//! A [`Dual`] carries a primal and a tangent, each of which is itself a
//! tape node. Running a function on a dual input therefore records both
//! the function value and its directional derivative on the same graph,
//! so the directional derivative can appear inside a loss and still get
//! exact parameter gradients from one reverse sweep (double backprop).
//! The tangent of every primitive follows the analytic rule
//! `tangent_out = g'(primal_in) * tangent_in`.

use crate::autodiff::tape::{Tape, TensorId};
use crate::error::{NbdError, Result};

/// A primal/tangent pair of same-shape tape nodes.
#[derive(Debug, Clone, Copy)]
pub struct Dual {
    pub primal: TensorId,
    pub tangent: TensorId,
}

impl Dual {
    pub fn new(tape: &Tape, primal: TensorId, tangent: TensorId) -> Self {
        assert_eq!(tape.shape(primal), tape.shape(tangent), "dual shape mismatch");
        Dual { primal, tangent }
    }

    /// Lift a node to a dual with zero tangent (a constant direction).
    pub fn constant(tape: &mut Tape, primal: TensorId) -> Self {
        let (r, c) = tape.shape(primal);
        let tangent = tape.zeros(r, c);
        Dual { primal, tangent }
    }
}

/// A scalar-valued function of one vector (or batched) input that can be
/// recorded either plainly or with a dual-number tangent.
pub trait TapeFn {
    /// Record `f(x)`; for a batched `r x d` input the result is `r x 1`.
    fn eval(&self, tape: &mut Tape, x: TensorId) -> TensorId;

    /// Record `f` on a dual input, returning the dual output whose tangent
    /// is the directional derivative along the input tangent.
    fn eval_dual(&self, tape: &mut Tape, x: Dual) -> Dual;
}

/// Directional derivative `<grad f(point), direction>`, recorded on the tape
/// at the cost of roughly one extra evaluation of `f`. The returned node may
/// be used inside further expressions; its own parameter gradients flow
/// through the usual reverse sweep.
pub fn directional_derivative(
    tape: &mut Tape,
    f: &dyn TapeFn,
    point: TensorId,
    direction: TensorId,
) -> Result<TensorId> {
    let (pr, pc) = tape.shape(point);
    let (dr, dc) = tape.shape(direction);
    if (pr, pc) != (dr, dc) {
        return Err(NbdError::DimensionMismatch { expected: pr * pc, got: dr * dc });
    }
    let out = f.eval_dual(tape, Dual { primal: point, tangent: direction });
    Ok(out.tangent)
}

// Per-primitive dual rules. Each returns (g(p), g'(p) . t) with both halves
// recorded as ordinary tape nodes.

pub fn d_add(tape: &mut Tape, a: Dual, b: Dual) -> Dual {
    Dual { primal: tape.add(a.primal, b.primal), tangent: tape.add(a.tangent, b.tangent) }
}

pub fn d_sub(tape: &mut Tape, a: Dual, b: Dual) -> Dual {
    Dual { primal: tape.sub(a.primal, b.primal), tangent: tape.sub(a.tangent, b.tangent) }
}

pub fn d_mul(tape: &mut Tape, a: Dual, b: Dual) -> Dual {
    let primal = tape.mul(a.primal, b.primal);
    let ta = tape.mul(a.tangent, b.primal);
    let tb = tape.mul(a.primal, b.tangent);
    Dual { primal, tangent: tape.add(ta, tb) }
}

pub fn d_neg(tape: &mut Tape, x: Dual) -> Dual {
    Dual { primal: tape.neg(x.primal), tangent: tape.neg(x.tangent) }
}

pub fn d_square(tape: &mut Tape, x: Dual) -> Dual {
    let primal = tape.square(x.primal);
    let pt = tape.mul(x.primal, x.tangent);
    Dual { primal, tangent: tape.scale(pt, 2.0) }
}

pub fn d_exp(tape: &mut Tape, x: Dual) -> Dual {
    let primal = tape.exp(x.primal);
    Dual { primal, tangent: tape.mul(primal, x.tangent) }
}

pub fn d_log(tape: &mut Tape, x: Dual) -> Dual {
    let primal = tape.log(x.primal);
    Dual { primal, tangent: tape.div(x.tangent, x.primal) }
}

pub fn d_softplus(tape: &mut Tape, x: Dual) -> Dual {
    let primal = tape.softplus(x.primal);
    let s = tape.sigmoid(x.primal);
    Dual { primal, tangent: tape.mul(s, x.tangent) }
}

pub fn d_add_const(tape: &mut Tape, x: Dual, c: f64) -> Dual {
    Dual { primal: tape.add_const(x.primal, c), tangent: x.tangent }
}

pub fn d_scale(tape: &mut Tape, x: Dual, c: f64) -> Dual {
    Dual { primal: tape.scale(x.primal, c), tangent: tape.scale(x.tangent, c) }
}

/// Linear map with a tangent-free weight: the direction lives on the input.
pub fn d_linear(tape: &mut Tape, x: Dual, w: TensorId) -> Dual {
    Dual { primal: tape.linear(x.primal, w), tangent: tape.linear(x.tangent, w) }
}

/// Bias add (row broadcast); the bias carries no tangent.
pub fn d_add_row(tape: &mut Tape, x: Dual, row: TensorId) -> Dual {
    Dual { primal: tape.add_row(x.primal, row), tangent: x.tangent }
}

pub fn d_row_dot(tape: &mut Tape, a: Dual, b: Dual) -> Dual {
    let primal = tape.row_dot(a.primal, b.primal);
    let ta = tape.row_dot(a.tangent, b.primal);
    let tb = tape.row_dot(a.primal, b.tangent);
    Dual { primal, tangent: tape.add(ta, tb) }
}

pub fn d_row_sum(tape: &mut Tape, x: Dual) -> Dual {
    Dual { primal: tape.row_sum(x.primal), tangent: tape.row_sum(x.tangent) }
}
