//! Dense `f64` tensors with a define-by-run reverse-mode tape.

mod gemm;
mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, grad_check_many};
pub use tape::{sigmoid, softmax_in_place, OpKind, Tape, TapeNode, Var};
pub use tensor::Tensor;
