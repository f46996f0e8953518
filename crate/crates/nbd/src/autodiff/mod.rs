//! Scalar-and-vector reverse-mode automatic differentiation with nested
//! (forward-over-reverse) directional derivatives.

pub mod dual;
pub mod tape;

pub use dual::{directional_derivative, Dual, TapeFn};
pub use tape::{sigmoid, softplus, softplus_inverse, Gradients, Tape, TensorId};
