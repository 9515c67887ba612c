//! Dense matrices with tape-based reverse-mode differentiation.

mod check;
mod tape;
mod tensor;

pub use check::{gradient_check, DEFAULT_EPS};
pub use tape::{Activation, Tape, Var};
pub use tensor::Tensor;
