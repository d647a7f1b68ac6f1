//! Dense tensors and a tape-based reverse-mode differentiator.
//!
//! Every forward computation in the crate is recorded on a [`Tape`]; calling
//! [`Tape::grad`] on a scalar replays the tape backwards. Frozen weights are
//! recorded as leaves without `requires_grad`, so no adjoint work is spent on
//! them. Values are checked for NaN/Inf after each op in debug builds.

mod tape;
mod tensor;

pub use tape::{Grads, Tape, Var};
pub use tensor::{Scalar, Tensor};
